//! Energy gauges `chi(t)`: constants and solutions of
//! `chi' = -C1 chi^(1/2) - C2 chi^(3/2)` in closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChiProfile {
    Constant { value: f64 },
    /// Solution of `chi' = -c1 sqrt(chi) - c2 chi^(3/2)`, `chi(0) = chi0`,
    /// continued by 0 past its positivity horizon.
    Ode { chi0: f64, c1: f64, c2: f64 },
}

impl ChiProfile {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) {
            return Err(Error::Domain(format!("chi must be positive, got {value}")));
        }
        Ok(ChiProfile::Constant { value })
    }

    pub fn ode(chi0: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(chi0 > 0.0) || !(c1 >= 0.0) || !(c2 >= 0.0) {
            return Err(Error::Domain(format!("need chi0 > 0, c1, c2 >= 0; got ({chi0}, {c1}, {c2})")));
        }
        Ok(ChiProfile::Ode { chi0, c1, c2 })
    }

    /// First time at which `chi` vanishes (infinite if never).
    pub fn positivity_horizon(&self) -> f64 {
        match *self {
            ChiProfile::Constant { .. } => f64::INFINITY,
            ChiProfile::Ode { chi0, c1, c2 } => {
                let w0 = chi0.sqrt();
                if c1 > 0.0 && c2 > 0.0 {
                    let a = (c1 / c2).sqrt();
                    2.0 * (w0 / a).atan() / (c1 * c2).sqrt()
                } else if c1 > 0.0 {
                    2.0 * w0 / c1
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `w = sqrt(chi)`.
    fn root(&self, t: f64) -> f64 {
        match *self {
            ChiProfile::Constant { value } => value.sqrt(),
            ChiProfile::Ode { chi0, c1, c2 } => {
                if t >= self.positivity_horizon() {
                    return 0.0;
                }
                let w0 = chi0.sqrt();
                let w = if c1 > 0.0 && c2 > 0.0 {
                    let a = (c1 / c2).sqrt();
                    a * ((w0 / a).atan() - 0.5 * (c1 * c2).sqrt() * t).tan()
                } else if c1 > 0.0 {
                    w0 - 0.5 * c1 * t
                } else if c2 > 0.0 {
                    w0 / (1.0 + 0.5 * c2 * w0 * t)
                } else {
                    w0
                };
                w.max(0.0)
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if let ChiProfile::Constant { value } = *self {
            return value;
        }
        self.root(t).powi(2)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            ChiProfile::Constant { .. } => 0.0,
            ChiProfile::Ode { c1, c2, .. } => {
                let w = self.root(t);
                -c1 * w - c2 * w * w * w
            }
        }
    }

    pub fn initial(&self) -> f64 {
        self.value(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let c = ChiProfile::ode(1.0, 2.0, 2.0).unwrap();
        for &t in &[0.0, 0.1, 0.25, 0.5, 0.7] {
            let exact = (std::f64::consts::FRAC_PI_4 - t).tan().powi(2);
            assert!((c.value(t) - exact).abs() <= 1e-14 * (1.0 + exact));
        }
        assert!((c.value(0.25) - 0.351_876_081_5).abs() < 1e-9);
        assert!((c.positivity_horizon() - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(c.value(1.0), 0.0);
    }

    #[test]
    fn degenerate_forms() {
        let c = ChiProfile::ode(4.0, 1.0, 0.0).unwrap();
        assert!((c.value(1.0) - 2.25).abs() < 1e-15);
        assert_eq!(c.positivity_horizon(), 4.0);
        let c = ChiProfile::ode(3.0, 0.0, 0.0).unwrap();
        assert!((c.value(10.0) - 3.0).abs() < 1e-15);
        assert_eq!(c.derivative(1.0), 0.0);
        let c = ChiProfile::ode(1.0, 0.0, 2.0).unwrap();
        assert!((c.value(1.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_difference() {
        let c = ChiProfile::ode(2.0, 0.7, 0.3).unwrap();
        let h = 1e-6;
        for &t in &[0.0, 0.3, 0.9] {
            let fd = (c.value(t + h) - c.value((t - h).max(0.0))) / (t + h - (t - h).max(0.0));
            assert!((fd - c.derivative(t)).abs() < 1e-6);
        }
    }
}
