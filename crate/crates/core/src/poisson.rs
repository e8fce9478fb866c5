//! Compactly supported solutions of `Delta u = p1 - p1 * omega_eps`.
//!
//! On the Fourier side `u_hat = p1_hat (omega_hat - 1) / |xi|^2`. Because
//! `omega_hat` is entire of exponential type `eps` and `omega_hat(0) = 1`,
//! the factor is entire too and `u` inherits compact support in the
//! `eps`-neighbourhood of `supp p1`.

use num_complex::Complex64;
use serde::Serialize;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{
    convolve, mollifier, spectral_laplacian, support_excess, Ball, Field, Grid, ScalarField,
    Spectrum,
};
use crate::pressure::PressureLaw;

/// Relative mean tolerance for `p(rho0) - p(rho_bar)`.
pub const MEAN_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CompactPoissonSolution {
    pub u: ScalarField,
    pub p_eps: ScalarField,
    /// `p1 * omega_eps`, the smooth remainder handed to the divergence solver.
    pub p_smooth: ScalarField,
    pub epsilon: f64,
    pub residual_linf: f64,
    pub support_excess: f64,
    pub mean_u: f64,
}

/// `p(rho0) - p(rho_bar)`, with the zero-mean hypothesis checked.
pub fn pressure_deviation(
    rho0: &ScalarField,
    law: &PressureLaw,
    rho_bar: f64,
) -> Result<ScalarField> {
    let pbar = law.p(rho_bar)?;
    let mut out = Vec::with_capacity(rho0.values().len());
    for &r in rho0.values() {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("density {r} is not positive")));
        }
        out.push(law.p(r)? - pbar);
    }
    let p1 = ScalarField::new(rho0.grid().clone(), out)?;
    let limit = MEAN_TOL * p1.max_abs();
    let mean = p1.mean();
    if mean.abs() > limit {
        return Err(Error::IncompatibleDensity { mean, limit });
    }
    Ok(p1)
}

/// Continuous transform `sum_y k(y) e^{-i xi . y} h^n` of a kernel sampled at
/// physical coordinates, in FFT order.
pub fn kernel_transform(k: &ScalarField) -> Vec<Complex64> {
    let grid = k.grid();
    let s = Spectrum::of(k);
    let vol = grid.cell_volume();
    let lower = grid.bbox().lower();
    s.coeffs()
        .iter()
        .enumerate()
        .map(|(flat, c)| {
            let idx = grid.multi_index(flat);
            let phase: f64 = (0..grid.dim())
                .map(|a| grid.wavenumbers(a)[idx[a]] * lower[a])
                .sum();
            c * vol * Complex64::from_polar(1.0, -phase)
        })
        .collect()
}

fn wavenumber_sq(grid: &Grid, flat: usize) -> f64 {
    let idx = grid.multi_index(flat);
    (0..grid.dim())
        .map(|a| grid.wavenumbers(a)[idx[a]].powi(2))
        .sum()
}

/// The construction without tolerance checks; every diagnostic is filled in.
pub fn compact_poisson(p1: &ScalarField, epsilon: f64, omega: &Ball) -> Result<CompactPoissonSolution> {
    let grid = p1.grid();
    let omega_eps = mollifier(epsilon, grid)?;
    let w_hat = kernel_transform(&omega_eps);
    let p_hat = Spectrum::of(p1);
    let mult: Vec<Complex64> = (0..grid.len())
        .map(|flat| {
            let k2 = wavenumber_sq(grid, flat);
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                (w_hat[flat] - 1.0) / k2
            }
        })
        .collect();
    let u = p_hat.multiplied(&mult);
    let p_smooth = convolve(p1, &omega_eps)?;
    let p_eps = p1.sub(&p_smooth)?;
    let lap = spectral_laplacian(&u);
    let scale = p_eps.max_abs();
    let residual_linf = if scale == 0.0 {
        lap.max_abs()
    } else {
        lap.sub(&p_eps)?.max_abs() / scale
    };
    let region = omega.grown(epsilon);
    let support_excess = support_excess(&u, |x| region.contains(x));
    let mean_u = u.mean();
    Ok(CompactPoissonSolution {
        u,
        p_eps,
        p_smooth,
        epsilon,
        residual_linf,
        support_excess,
        mean_u,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PoissonTolerances {
    pub residual: f64,
    pub support: f64,
}

impl Default for PoissonTolerances {
    fn default() -> Self {
        Self {
            residual: 1e-8,
            support: 1e-6,
        }
    }
}

/// Checked construction: rejects nonzero-mean sources and reports residual or
/// support failures as verification errors.
pub fn solve_compact(
    p1: &ScalarField,
    domain: &Domain,
    tol: &PoissonTolerances,
) -> Result<CompactPoissonSolution> {
    let limit = MEAN_TOL * p1.max_abs();
    let mean = p1.mean();
    if mean.abs() > limit {
        return Err(Error::CompatibilityViolated { mean, limit });
    }
    domain.validate(p1.grid().bbox())?;
    let sol = compact_poisson(p1, domain.epsilon, &domain.omega)?;
    if !(sol.residual_linf <= tol.residual) {
        return Err(Error::verification(
            "compact poisson",
            format!("residual {:e} exceeds {:e}", sol.residual_linf, tol.residual),
        ));
    }
    if !(sol.support_excess <= tol.support) {
        return Err(Error::verification(
            "compact poisson",
            format!(
                "support excess {:e} outside omega^eps exceeds {:e}; refine the grid or enlarge the box",
                sol.support_excess, tol.support
            ),
        ));
    }
    Ok(sol)
}

/// Real-axis properties of the mollifier transform.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub value_at_zero: f64,
    pub max_modulus: f64,
    /// `|omega_hat|` at the largest resolved frequency along axis 0, relative
    /// to the zero mode.
    pub highest_mode_ratio: f64,
    /// Power-law exponents fitted to the upper envelope on the lower and upper
    /// halves of the resolved band. Growth from the first to the second
    /// indicates faster-than-polynomial decay.
    pub exponent_low: f64,
    pub exponent_high: f64,
}

pub fn verify_pws_decay(omega_eps: &ScalarField) -> DecayReport {
    let grid = omega_eps.grid();
    let w = kernel_transform(omega_eps);
    let value_at_zero = w[0].re;
    let max_modulus = w.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let n0 = grid.dims()[0];
    let stride: usize = grid.dims()[1..].iter().product();
    let half = n0 / 2;
    let along: Vec<f64> = (0..=half).map(|j| w[j * stride].norm()).collect();
    let mut env = along.clone();
    for j in (0..half).rev() {
        env[j] = env[j].max(env[j + 1]);
    }
    let fit = |lo: usize, hi: usize| -> f64 {
        let pts: Vec<(f64, f64)> = (lo..=hi)
            .filter(|&j| env[j] > 0.0)
            .map(|j| ((j as f64).ln(), env[j].ln()))
            .collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / m, sy / m);
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
            (a + (p.0 - mx) * (p.1 - my), b + (p.0 - mx).powi(2))
        });
        -num / den
    };
    DecayReport {
        value_at_zero,
        max_modulus,
        highest_mode_ratio: along[half] / value_at_zero,
        exponent_low: fit(2.max(half / 8), half / 4),
        exponent_high: fit(half / 4, half),
    }
}
