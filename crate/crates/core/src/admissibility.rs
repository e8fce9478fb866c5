//! Energy admissibility: the constants bounding the transport of internal
//! energy, the gauge ODE and its maximal time, the pointwise inequality on
//! the grid, and weak-form residuals of the balance laws.

use serde::Serialize;

use crate::chi::ChiProfile;
use crate::error::{Error, Result};
use crate::field::{spectral_gradient, Ball, Field, ScalarField, VectorField};
use crate::pressure::PressureLaw;
use crate::subsolution::Subsolution;
use crate::weak::{Balance, TestFamily, TimeQuadrature, WeakReport, WeakSystem, Windows};

/// Inflation applied to grid suprema.
pub const SAFETY: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct AdmissibilityConstants {
    /// `C0^2 >= sup rho0`.
    pub c0: f64,
    /// `>= sup |grad(e(rho0) + p(rho0)/rho0)|`.
    pub c1: f64,
    /// `>= sup |grad(1/rho0)|`.
    pub c2: f64,
    /// `2 c1 C0`.
    pub big_c1: f64,
    /// `c2 C0`.
    pub big_c2: f64,
}

/// `|grad f|` pointwise, from spectral derivatives.
fn grad_norm(g: &VectorField) -> Vec<f64> {
    (0..g.grid().len())
        .map(|q| g.components().iter().map(|c| c[q] * c[q]).sum::<f64>().sqrt())
        .collect()
}

fn transport_gradients(rho0: &ScalarField, law: &PressureLaw, rho_ref: f64) -> Result<(VectorField, VectorField)> {
    let energy = law.internal_energy(rho_ref)?;
    let mut f1 = Vec::with_capacity(rho0.values().len());
    let mut f2 = Vec::with_capacity(rho0.values().len());
    for &r in rho0.values() {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("density {r} is not positive")));
        }
        f1.push(energy.enthalpy(r)?);
        f2.push(1.0 / r);
    }
    let grid = rho0.grid().clone();
    Ok((
        spectral_gradient(&ScalarField::new(grid.clone(), f1)?),
        spectral_gradient(&ScalarField::new(grid, f2)?),
    ))
}

/// Grid suprema inflated by [`SAFETY`]. `rho_ref` normalizes the internal
/// energy; only its gradient enters.
pub fn admissibility_constants(rho0: &ScalarField, law: &PressureLaw, rho_ref: f64) -> Result<AdmissibilityConstants> {
    let (g1, g2) = transport_gradients(rho0, law, rho_ref)?;
    let sup = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    let c0 = SAFETY * rho0.max_abs().sqrt();
    let c1 = SAFETY * sup(grad_norm(&g1));
    let c2 = SAFETY * sup(grad_norm(&g2));
    Ok(AdmissibilityConstants {
        c0,
        c1,
        c2,
        big_c1: 2.0 * c1 * c0,
        big_c2: c2 * c0,
    })
}

/// One adaptive Dormand–Prince 5(4) integration of a scalar ODE, reporting
/// the solution at the requested (increasing) output times. Integration
/// stops once `y` reaches 0; later outputs are 0.
pub fn dormand_prince(
    f: impl Fn(f64, f64) -> f64,
    y0: f64,
    outputs: &[f64],
    rtol: f64,
    atol: f64,
) -> Vec<f64> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut out = Vec::with_capacity(outputs.len());
    let mut t = 0.0;
    let mut y = y0;
    let mut h: f64 = 1e-3;
    let mut dead = false;
    for &target in outputs {
        while !dead && t < target {
            let step = h.min(target - t);
            let mut k = [0.0; 7];
            for s in 0..7 {
                let ys = y + step * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
                k[s] = f(t + C[s] * step, ys.max(0.0));
            }
            let y5 = y + step * (0..7).map(|j| B5[j] * k[j]).sum::<f64>();
            let y4 = y + step * (0..7).map(|j| B4[j] * k[j]).sum::<f64>();
            let sc = atol + rtol * y.abs().max(y5.abs());
            let err = (y5 - y4).abs() / sc;
            if err <= 1.0 || step < 1e-14 {
                t += step;
                if y5 <= 0.0 {
                    y = 0.0;
                    dead = true;
                } else {
                    y = y5;
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (step * fac).max(1e-14);
        }
        out.push(if dead { 0.0 } else { y });
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ChiOdeSolution {
    pub profile: ChiProfile,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Largest relative difference over samples with `chi >= 1e-4 chi0`.
    pub max_relative_difference: f64,
}

/// Solves `chi' = -C1 sqrt(chi) - C2 chi^(3/2)` in closed form and by
/// adaptive integration on `samples` uniform points of `[0, t_end]`.
pub fn chi_ode_solve(chi0: f64, c: &AdmissibilityConstants, t_end: f64, samples: usize) -> Result<ChiOdeSolution> {
    chi_ode_solve_raw(chi0, c.big_c1, c.big_c2, t_end, samples)
}

pub fn chi_ode_solve_raw(chi0: f64, c1: f64, c2: f64, t_end: f64, samples: usize) -> Result<ChiOdeSolution> {
    let profile = ChiProfile::ode(chi0, c1, c2)?;
    let horizon = profile.positivity_horizon();
    let times = crate::subsolution::uniform_times(t_end, samples.max(2));
    let closed: Vec<f64> = times.iter().map(|&t| profile.value(t)).collect();
    let numeric = dormand_prince(
        |_, y| -c1 * y.sqrt() - c2 * y * y.sqrt(),
        chi0,
        &times,
        1e-13,
        1e-15 * chi0,
    );
    let max_relative_difference = closed
        .iter()
        .zip(&numeric)
        .filter(|(c, _)| **c >= 1e-4 * chi0)
        .map(|(c, n)| (c - n).abs() / c)
        .fold(0.0, f64::max);
    Ok(ChiOdeSolution {
        profile,
        horizon,
        times,
        closed_form: closed,
        numeric,
        max_relative_difference,
    })
}

/// `sup {t : chi(s) > n lambda(s) for s <= t}`, with `lambda` interpolated
/// linearly between samples and held at its last value beyond them.
pub fn maximal_time(chi: &ChiProfile, times: &[f64], lambda: &[f64], n: usize) -> Result<f64> {
    if times.is_empty() || times.len() != lambda.len() {
        return Err(Error::Domain("lambda samples do not match their times".into()));
    }
    let nf = n as f64;
    let lam = |t: f64| -> f64 {
        if t <= times[0] {
            return lambda[0];
        }
        for i in 1..times.len() {
            if t <= times[i] {
                let s = (t - times[i - 1]) / (times[i] - times[i - 1]);
                return lambda[i - 1] + s * (lambda[i] - lambda[i - 1]);
            }
        }
        lambda[lambda.len() - 1]
    };
    let gap = |t: f64| chi.value(t) - nf * lam(t);
    if !(gap(times[0]) > 0.0) {
        return Err(Error::ChiTooSmall {
            chi0: chi.value(times[0]),
            required: nf * lambda[0],
        });
    }
    let bisect = |mut lo: f64, mut hi: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    for i in 1..times.len() {
        if !(gap(times[i]) > 0.0) {
            return Ok(bisect(times[i - 1], times[i]));
        }
    }
    let last = times[times.len() - 1];
    let h = chi.positivity_horizon();
    if h.is_finite() {
        return Ok(bisect(last, h.max(last)));
    }
    // chi never vanishes: look for a crossing by doubling.
    let mut hi = last.max(1.0);
    for _ in 0..64 {
        hi *= 2.0;
        if !(gap(hi) > 0.0) {
            return Ok(bisect(hi / 2.0, hi));
        }
    }
    Ok(f64::INFINITY)
}

/// Left side of the pointwise admissibility inequality
/// `chi'/2 + m . grad f1 + chi/2 m . grad f2` on grid and time samples.
#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityField {
    pub times: Vec<f64>,
    /// Per time, max over the grid with `|m| = sqrt(rho0 chi)` aligned with
    /// the gradients.
    pub worst_case: Vec<f64>,
    /// Per time, max over the grid with the actual momentum.
    pub actual: Vec<f64>,
    /// Largest pointwise `actual - worst_case`.
    pub dominance_defect: f64,
}

impl AdmissibilityField {
    pub fn max_worst_case(&self) -> f64 {
        self.worst_case.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_actual(&self) -> f64 {
        self.actual.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn pointwise_admissibility(sub: &Subsolution, rho_ref: f64) -> Result<AdmissibilityField> {
    let (g1, g2) = transport_gradients(&sub.rho0, &sub.law, rho_ref)?;
    let n1 = grad_norm(&g1);
    let n2 = grad_norm(&g2);
    let rho = sub.rho0.values();
    let n = sub.dim();
    let mut worst_case = Vec::new();
    let mut actual = Vec::new();
    let mut defect = f64::NEG_INFINITY;
    for &t in &sub.times {
        let chi = sub.chi.value(t);
        let half_d = 0.5 * sub.chi.derivative(t);
        let m = sub.momentum_at(t);
        let (mut w, mut a) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for q in 0..rho.len() {
            let mabs = (rho[q] * chi).sqrt();
            let wv = half_d + mabs * (n1[q] + 0.5 * chi * n2[q]);
            let mq = m.at(q);
            let (mut d1, mut d2) = (0.0, 0.0);
            for i in 0..n {
                d1 += mq[i] * g1.component(i)[q];
                d2 += mq[i] * g2.component(i)[q];
            }
            let av = half_d + d1 + 0.5 * chi * d2;
            w = w.max(wv);
            a = a.max(av);
            defect = defect.max(av - wv);
        }
        worst_case.push(w);
        actual.push(a);
    }
    Ok(AdmissibilityField {
        times: sub.times.clone(),
        worst_case,
        actual,
        dominance_defect: defect,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakKind {
    /// `d_t rho0 + div m = 0`.
    Mass,
    /// `d_t m + div(m (x) m / rho0) + grad p(rho0) = 0`.
    Momentum,
    /// `d_t E + div F <= 0`, an inequality.
    Energy,
    /// The linear relaxation: `div m = 0`, `d_t m + div U + grad q0 = 0`.
    Linear,
}

/// Weak residuals of `sub` over the standard family on the outer domain.
pub fn weak_residual(kind: WeakKind, sub: &Subsolution, family: &TestFamily) -> Result<WeakReport> {
    let grid = sub.grid().clone();
    let n = grid.dim();
    let quad = TimeQuadrature::for_family(family, family.horizon);
    let rho = sub.rho0.values().to_vec();
    let pressure: Vec<f64> = rho.iter().map(|&r| sub.law.p(r)).collect::<Result<_>>()?;
    let len = grid.len();
    match kind {
        WeakKind::Mass => WeakSystem::new(1, n).residuals(&grid, family, &quad, None, |t| {
            let m = sub.momentum_at(t);
            (vec![rho.clone()], vec![m.into_components()])
        }),
        WeakKind::Momentum => WeakSystem::new(n, n).residuals(&grid, family, &quad, None, |t| {
            let m = sub.momentum_at(t);
            let mut flux = vec![vec![vec![0.0; len]; n]; n];
            for q in 0..len {
                let mq = m.at(q);
                for i in 0..n {
                    for j in 0..n {
                        flux[i][j][q] = mq[i] * mq[j] / rho[q] + if i == j { pressure[q] } else { 0.0 };
                    }
                }
            }
            (m.into_components(), flux)
        }),
        WeakKind::Energy => {
            let energy = sub.law.internal_energy(sub.rho_bar)?;
            let eps: Vec<f64> = rho.iter().map(|&r| energy.eval(r)).collect::<Result<_>>()?;
            WeakSystem::new(1, n).residuals(&grid, family, &quad, None, |t| {
                let m = sub.momentum_at(t);
                let mut dens = vec![0.0; len];
                let mut flux = vec![vec![0.0; len]; n];
                for q in 0..len {
                    let mq = m.at(q);
                    let m2: f64 = mq.iter().map(|v| v * v).sum();
                    dens[q] = rho[q] * eps[q] + 0.5 * m2 / rho[q];
                    let coef = eps[q] + 0.5 * m2 / (rho[q] * rho[q]) + pressure[q] / rho[q];
                    for j in 0..n {
                        flux[j][q] = coef * mq[j];
                    }
                }
                (vec![dens], vec![flux])
            })
        }
        WeakKind::Linear => {
            let nf = n as f64;
            WeakSystem::new(n + 1, n).residuals(&grid, family, &quad, None, |t| {
                let s = sub.snapshot(t);
                let c = sub.chi.value(t) / nf;
                let mut dens: Vec<Vec<f64>> = s.m.components().to_vec();
                dens.push(vec![0.0; len]);
                let mut flux = Vec::with_capacity(n + 1);
                for i in 0..n {
                    let rows: Vec<Vec<f64>> = (0..n)
                        .map(|j| {
                            let e = s.u.entry(i, j);
                            (0..len)
                                .map(|q| e[q] + if i == j { pressure[q] + c } else { 0.0 })
                                .collect()
                        })
                        .collect();
                    flux.push(rows);
                }
                flux.push(s.m.components().to_vec());
                (dens, flux) as Balance
            })
        }
    }
}

/// The standard family over the outer domain of `sub`; nonnegative members
/// for the energy inequality.
pub fn family_for(sub: &Subsolution, kind: WeakKind) -> Result<TestFamily> {
    let region = Ball {
        center: sub.domain.outer.center,
        radius: sub.domain.outer.radius,
    };
    TestFamily::standard(&region, sub.dim(), sub.horizon, Windows::Both, kind == WeakKind::Energy)
}
