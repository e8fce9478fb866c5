//! Barotropic pressure laws and the associated internal energy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PressureLaw {
    /// `p = kappa * rho^gamma`.
    Gamma { kappa: f64, gamma: f64 },
    /// Monotone piecewise-cubic interpolation through `(rho, p)` nodes.
    Tabulated { rho: Vec<f64>, p: Vec<f64> },
}

impl PressureLaw {
    pub fn gamma(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(gamma > 0.0) {
            return Err(Error::PressureRange(format!(
                "gamma law needs kappa > 0 and gamma > 0, got {kappa}, {gamma}"
            )));
        }
        Ok(Self::Gamma { kappa, gamma })
    }

    /// `p(rho) = rho`.
    pub fn identity() -> Self {
        Self::Gamma {
            kappa: 1.0,
            gamma: 1.0,
        }
    }

    pub fn tabulated(rho: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if rho.len() != p.len() || rho.len() < 2 {
            return Err(Error::PressureRange("table needs at least two (rho, p) pairs".into()));
        }
        if rho[0] <= 0.0 {
            return Err(Error::PressureRange("table densities must be positive".into()));
        }
        for w in 0..rho.len() - 1 {
            if !(rho[w + 1] > rho[w]) || !(p[w + 1] > p[w]) {
                return Err(Error::PressureRange(format!(
                    "table must be strictly increasing in rho and p (row {w})"
                )));
            }
        }
        Ok(Self::Tabulated { rho, p })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gamma { kappa, gamma } => Self::gamma(*kappa, *gamma).map(|_| ()),
            Self::Tabulated { rho, p } => Self::tabulated(rho.clone(), p.clone()).map(|_| ()),
        }
    }

    /// Density interval on which the law is defined.
    pub fn range(&self) -> (f64, f64) {
        match self {
            Self::Gamma { .. } => (0.0, f64::INFINITY),
            Self::Tabulated { rho, .. } => (rho[0], rho[rho.len() - 1]),
        }
    }

    fn check_rho(&self, r: f64) -> Result<()> {
        let (lo, hi) = self.range();
        let ok = match self {
            Self::Gamma { .. } => r > lo && r.is_finite(),
            Self::Tabulated { .. } => r >= lo && r <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::PressureRange(format!(
                "density {r} outside the law's range ({lo}, {hi})"
            )))
        }
    }

    pub fn p(&self, r: f64) -> Result<f64> {
        self.check_rho(r)?;
        Ok(match self {
            Self::Gamma { kappa, gamma } => kappa * r.powf(*gamma),
            Self::Tabulated { rho, p } => hermite(rho, p, r).0,
        })
    }

    pub fn dp(&self, r: f64) -> Result<f64> {
        self.check_rho(r)?;
        Ok(match self {
            Self::Gamma { kappa, gamma } => kappa * gamma * r.powf(gamma - 1.0),
            Self::Tabulated { rho, p } => hermite(rho, p, r).1,
        })
    }

    /// Solves `p(rho) = target`.
    pub fn inverse(&self, target: f64) -> Result<f64> {
        match self {
            Self::Gamma { kappa, gamma } => {
                if !(target > 0.0) {
                    return Err(Error::PressureRange(format!(
                        "pressure {target} is not attained by a positive density"
                    )));
                }
                Ok((target / kappa).powf(1.0 / gamma))
            }
            Self::Tabulated { rho, p } => {
                let (p0, p1) = (p[0], p[p.len() - 1]);
                if target < p0 || target > p1 {
                    return Err(Error::PressureRange(format!(
                        "pressure {target} outside the table range [{p0}, {p1}]"
                    )));
                }
                let (mut lo, mut hi) = (rho[0], rho[rho.len() - 1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if hermite(rho, p, mid).0 < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }

    /// Internal energy `e(rho) = int_{rho_ref}^{rho} p(s)/s^2 ds`.
    pub fn internal_energy(&self, rho_ref: f64) -> Result<InternalEnergy> {
        self.check_rho(rho_ref)?;
        Ok(InternalEnergy {
            law: self.clone(),
            rho_ref,
        })
    }
}

/// Fritsch–Carlson monotone cubic: value and derivative.
fn hermite(x: &[f64], y: &[f64], t: f64) -> (f64, f64) {
    let n = x.len();
    let i = match x.partition_point(|&v| v <= t) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let slope = |k: usize| (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
    let tangent = |k: usize| -> f64 {
        if k == 0 {
            slope(0)
        } else if k == n - 1 {
            slope(n - 2)
        } else {
            let (a, b) = (slope(k - 1), slope(k));
            let (ha, hb) = (x[k] - x[k - 1], x[k + 1] - x[k]);
            let (wa, wb) = (2.0 * hb + ha, hb + 2.0 * ha);
            (wa + wb) / (wa / a + wb / b)
        }
    };
    let h = x[i + 1] - x[i];
    let s = (t - x[i]) / h;
    let (m0, m1) = (tangent(i), tangent(i + 1));
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let v = h00 * y[i] + h10 * h * m0 + h01 * y[i + 1] + h11 * h * m1;
    let d00 = 6.0 * s * s - 6.0 * s;
    let d10 = 3.0 * s * s - 4.0 * s + 1.0;
    let d01 = -d00;
    let d11 = 3.0 * s * s - 2.0 * s;
    let d = (d00 * y[i] + d01 * y[i + 1]) / h + d10 * m0 + d11 * m1;
    (v, d)
}

#[derive(Clone, Debug)]
pub struct InternalEnergy {
    law: PressureLaw,
    rho_ref: f64,
}

impl InternalEnergy {
    pub fn rho_ref(&self) -> f64 {
        self.rho_ref
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        self.law.check_rho(r)?;
        let r0 = self.rho_ref;
        Ok(match &self.law {
            PressureLaw::Gamma { kappa, gamma } => {
                if (gamma - 1.0).abs() < 1e-12 {
                    kappa * (r / r0).ln()
                } else {
                    kappa * (r.powf(gamma - 1.0) - r0.powf(gamma - 1.0)) / (gamma - 1.0)
                }
            }
            PressureLaw::Tabulated { .. } => self.by_quadrature(r),
        })
    }

    /// Same integral by composite Gauss–Legendre, independent of the law kind.
    pub fn by_quadrature(&self, r: f64) -> f64 {
        let law = &self.law;
        quadrature::integrate(|s| law.p(s).unwrap_or(f64::NAN) / (s * s), self.rho_ref, r, 64)
    }

    /// `e(rho) + p(rho)/rho`, the quantity whose gradient enters the
    /// admissibility bound.
    pub fn enthalpy(&self, r: f64) -> Result<f64> {
        Ok(self.eval(r)? + self.law.p(r)? / r)
    }
}
