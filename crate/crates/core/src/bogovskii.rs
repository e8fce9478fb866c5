//! Compactly supported solutions of `div phi = p` on a star-shaped domain and
//! the antisymmetric lift that turns them into a traceless flux.
//!
//! With `w` a unit-mass bump on the star ball, the Bogovskii field
//! `phi(x) = int p(y) (x-y)/|x-y|^n int_{|x-y|}^inf w(y + s (x-y)/|x-y|) s^{n-1} ds dy`
//! is rewritten in polar coordinates around the target `x`. Writing `y = x - r theta`
//! and `s = r + rho` gives
//! `phi(x) = int_{S^{n-1}} theta int_0^inf int_0^inf p(x - r theta) w(x + rho theta) (r + rho)^{n-1} dr drho dtheta`,
//! which has no singularity and factorizes into one-dimensional ray integrals
//! after expanding the binomial. The field vanishes outside the convex hull of
//! `supp p` and the star ball.

use rayon::prelude::*;
use serde::Serialize;

use crate::bump;
use crate::domain::StarDomain;
use crate::error::{Error, Result};
use crate::field::{
    spectral_divergence, spectral_divergence_matrix, spectral_divergence_rows,
    spectral_gradient, support_excess, Field, MatrixField, ScalarField, Spectrum,
    SymTensorField, VectorField,
};
use crate::quadrature;

/// Relative tolerance of the compatibility condition.
pub const COMPAT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BogovskiiParams {
    /// Directions on the circle (2D) or azimuths (3D; half as many polar nodes).
    pub directions: usize,
    /// Gauss nodes for the weight integrals along a chord of the star ball.
    pub weight_nodes: usize,
    /// Maximal panel length and Gauss nodes per panel for source integrals.
    pub panel: f64,
    pub panel_nodes: usize,
    /// Spectral refinement factor of the source before local interpolation.
    pub upsample: usize,
    /// Points of the local Lagrange stencil per axis (even).
    pub stencil: usize,
    /// Radius (about the domain center) outside which the source is treated
    /// as zero; inferred from the data when absent.
    pub source_radius: Option<f64>,
}

impl Default for BogovskiiParams {
    fn default() -> Self {
        Self {
            directions: 128,
            weight_nodes: 32,
            panel: 0.12,
            panel_nodes: 8,
            upsample: 4,
            stencil: 6,
            source_radius: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DivergenceSolution {
    pub phi: VectorField,
    pub p: ScalarField,
    pub domain: StarDomain,
    pub residual_linf: f64,
    pub support_excess: f64,
}

/// Band-limited source refined spectrally and evaluated by local Lagrange
/// interpolation.
struct Interpolant {
    dim: usize,
    dims: Vec<usize>,
    lower: Vec<f64>,
    spacing: Vec<f64>,
    values: Vec<f64>,
    stencil: usize,
    denom: Vec<f64>,
}

impl Interpolant {
    fn new(f: &ScalarField, factor: usize, stencil: usize) -> Self {
        let grid = f.grid();
        let dim = grid.dim();
        let coarse = grid.dims();
        let fine: Vec<usize> = coarse.iter().map(|d| d * factor).collect();
        let total: usize = fine.iter().product();
        let spec = Spectrum::of(f);
        let mut data = vec![num_complex::Complex64::default(); total];
        let scale = (total as f64) / (grid.len() as f64);
        for (flat, c) in spec.coeffs().iter().enumerate() {
            let idx = grid.multi_index(flat);
            // each coarse mode maps to one fine mode, or two halves at Nyquist
            let mut targets: Vec<(usize, f64)> = vec![(0, scale)];
            for a in 0..dim {
                let (n, m, j) = (coarse[a], fine[a], idx[a]);
                let mut next = Vec::with_capacity(targets.len() * 2);
                for &(t, w) in &targets {
                    if 2 * j < n {
                        next.push((t * m + j, w));
                    } else if 2 * j > n {
                        next.push((t * m + m - (n - j), w));
                    } else {
                        next.push((t * m + j, 0.5 * w));
                        next.push((t * m + m - j, 0.5 * w));
                    }
                }
                targets = next;
            }
            for (t, w) in targets {
                data[t] += c * w;
            }
        }
        crate::field::fft_inverse(&mut data, &fine);
        let inv = 1.0 / total as f64;
        let values = data.iter().map(|c| c.re * inv).collect();
        let denom = (0..stencil)
            .map(|m| {
                (0..stencil)
                    .filter(|&l| l != m)
                    .map(|l| m as f64 - l as f64)
                    .product()
            })
            .collect();
        Self {
            dim,
            lower: grid.bbox().lower().to_vec(),
            spacing: grid.spacing().iter().map(|h| h / factor as f64).collect(),
            dims: fine,
            values,
            stencil,
            denom,
        }
    }

    fn weights(&self, s: f64, out: &mut [f64]) -> isize {
        let half = (self.stencil / 2) as isize;
        let base = s.floor() as isize - (half - 1);
        let t = s - base as f64;
        for m in 0..self.stencil {
            let mut num = 1.0;
            for l in 0..self.stencil {
                if l != m {
                    num *= t - l as f64;
                }
            }
            out[m] = num / self.denom[m];
        }
        base
    }

    fn eval(&self, y: &[f64; 3]) -> f64 {
        let mut w = [[0.0; 8]; 3];
        let mut base = [0isize; 3];
        for a in 0..self.dim {
            let s = (y[a] - self.lower[a]) / self.spacing[a];
            base[a] = self.weights(s, &mut w[a]);
        }
        let st = self.stencil;
        let wrap = |b: isize, i: usize, n: usize| -> usize { (b + i as isize).rem_euclid(n as isize) as usize };
        match self.dim {
            2 => {
                let (n0, n1) = (self.dims[0], self.dims[1]);
                let mut acc = 0.0;
                for i in 0..st {
                    let row = wrap(base[0], i, n0) * n1;
                    let mut r = 0.0;
                    for j in 0..st {
                        r += w[1][j] * self.values[row + wrap(base[1], j, n1)];
                    }
                    acc += w[0][i] * r;
                }
                acc
            }
            _ => {
                let (n0, n1, n2) = (self.dims[0], self.dims[1], self.dims[2]);
                let mut acc = 0.0;
                for i in 0..st {
                    let pi = wrap(base[0], i, n0) * n1;
                    for j in 0..st {
                        let pj = (pi + wrap(base[1], j, n1)) * n2;
                        let mut r = 0.0;
                        for k in 0..st {
                            r += w[2][k] * self.values[pj + wrap(base[2], k, n2)];
                        }
                        acc += w[0][i] * w[1][j] * r;
                    }
                }
                acc
            }
        }
    }
}

/// Quadrature directions on the unit sphere with weights summing to its area.
fn directions(dim: usize, count: usize) -> Vec<([f64; 3], f64)> {
    let tau = 2.0 * std::f64::consts::PI;
    if dim == 2 {
        return (0..count)
            .map(|j| {
                let a = tau * j as f64 / count as f64;
                ([a.cos(), a.sin(), 0.0], tau / count as f64)
            })
            .collect();
    }
    let (z, wz) = quadrature::gauss_legendre((count / 2).max(2));
    let mut out = Vec::with_capacity(z.len() * count);
    for (zi, wi) in z.iter().zip(&wz) {
        let s = (1.0 - zi * zi).sqrt();
        for j in 0..count {
            let a = tau * j as f64 / count as f64;
            out.push(([s * a.cos(), s * a.sin(), *zi], wi * tau / count as f64));
        }
    }
    out
}

/// Parameter interval `{t >= 0 : |x + t dir - c| < r}`.
fn chord(x: &[f64; 3], dir: &[f64; 3], c: &[f64; 3], r: f64, dim: usize) -> Option<(f64, f64)> {
    let mut b = 0.0;
    let mut d2 = 0.0;
    for a in 0..dim {
        let d = x[a] - c[a];
        b += d * dir[a];
        d2 += d * d;
    }
    let disc = b * b - (d2 - r * r);
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let hi = -b + s;
    if hi <= 0.0 {
        return None;
    }
    Some(((-b - s).max(0.0), hi))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Mass of the unnormalized star-ball bump.
fn bump_mass(radius: f64, dim: usize) -> f64 {
    let sphere = if dim == 2 {
        2.0 * std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI
    };
    sphere
        * quadrature::integrate(
            |r| bump::value(r * r / (radius * radius), bump::POWER) * r.powi(dim as i32 - 1),
            0.0,
            radius,
            64,
        )
}

/// Radius about `center` containing every sample with `|p| > 1e-14 max|p|`,
/// padded by two cells.
fn inferred_source_radius(p: &ScalarField, center: &[f64; 3]) -> f64 {
    let grid = p.grid();
    let thresh = 1e-14 * p.max_abs();
    let dim = grid.dim();
    let mut r2: f64 = 0.0;
    for (flat, v) in p.values().iter().enumerate() {
        if v.abs() > thresh {
            let x = grid.position(flat);
            r2 = r2.max((0..dim).map(|a| (x[a] - center[a]).powi(2)).sum());
        }
    }
    r2.sqrt() + 2.0 * grid.max_spacing()
}

/// Mean of `p` over the grid points of the domain.
pub fn domain_mean(p: &ScalarField, domain: &StarDomain) -> f64 {
    let grid = p.grid();
    let (mut s, mut n) = (0.0, 0usize);
    for (flat, v) in p.values().iter().enumerate() {
        if domain.contains(&grid.position(flat)) {
            s += v;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Bogovskii field without postcondition checks (the compatibility
/// precondition is still enforced).
pub fn bogovskii_field(p: &ScalarField, domain: &StarDomain, params: &BogovskiiParams) -> Result<VectorField> {
    let grid = p.grid();
    let dim = grid.dim();
    let scale = p.max_abs();
    if scale == 0.0 {
        return Ok(VectorField::zeros(grid));
    }
    let mean = domain_mean(p, domain);
    let limit = COMPAT_TOL * scale;
    if mean.abs() > limit {
        return Err(Error::CompatibilityViolated { mean, limit });
    }
    let src_r = params
        .source_radius
        .unwrap_or_else(|| inferred_source_radius(p, &domain.center));
    if src_r >= domain.radius {
        return Err(Error::Domain(format!(
            "source extends to radius {src_r:.4}, not inside the outer domain (radius {})",
            domain.radius
        )));
    }
    if params.stencil < 2 || params.stencil > 8 || params.stencil % 2 != 0 {
        return Err(Error::Domain("stencil must be even and in [2, 8]".into()));
    }
    let interp = Interpolant::new(p, params.upsample.max(1), params.stencil);
    let dirs = directions(dim, params.directions);
    let star = domain.star_ball();
    let w_norm = 1.0 / bump_mass(star.radius, dim);
    let (gw_x, gw_w) = quadrature::gauss_legendre(params.weight_nodes);
    let (gp_x, gp_w) = quadrature::gauss_legendre(params.panel_nodes);
    let reach = src_r.max(star.radius);
    let targets: Vec<usize> = (0..grid.len())
        .filter(|&flat| {
            let x = grid.position(flat);
            (0..dim).map(|a| (x[a] - domain.center[a]).powi(2)).sum::<f64>() < reach * reach
        })
        .collect();
    let values: Vec<[f64; 3]> = targets
        .par_iter()
        .map(|&flat| {
            let x = grid.position(flat);
            let mut acc = [0.0; 3];
            let mut wk = [0.0; 3];
            let mut fk = [0.0; 3];
            for (theta, dw) in &dirs {
                let Some((a, b)) = chord(&x, theta, &star.center, star.radius, dim) else {
                    continue;
                };
                let neg = [-theta[0], -theta[1], -theta[2]];
                let Some((c, d)) = chord(&x, &neg, &domain.center, src_r, dim) else {
                    continue;
                };
                wk[..dim].iter_mut().for_each(|v| *v = 0.0);
                let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
                for (t, w) in gw_x.iter().zip(&gw_w) {
                    let rho = mid + half * t;
                    let mut u = 0.0;
                    for ax in 0..dim {
                        u += (x[ax] + rho * theta[ax] - star.center[ax]).powi(2);
                    }
                    let val = w * half * bump::value(u / (star.radius * star.radius), bump::POWER);
                    let mut pow = 1.0;
                    for k in 0..dim {
                        wk[k] += val * pow;
                        pow *= rho;
                    }
                }
                fk[..dim].iter_mut().for_each(|v| *v = 0.0);
                let panels = ((d - c) / params.panel).ceil().max(1.0) as usize;
                let h = (d - c) / panels as f64;
                for k in 0..panels {
                    let pm = c + (k as f64 + 0.5) * h;
                    for (t, w) in gp_x.iter().zip(&gp_w) {
                        let r = pm + 0.5 * h * t;
                        let y = [x[0] - r * theta[0], x[1] - r * theta[1], x[2] - r * theta[2]];
                        let val = w * 0.5 * h * interp.eval(&y);
                        let mut pow = 1.0;
                        for j in 0..dim {
                            fk[j] += val * pow;
                            pow *= r;
                        }
                    }
                }
                let mut s = 0.0;
                for k in 0..dim {
                    s += binomial(dim - 1, k) * wk[k] * fk[dim - 1 - k];
                }
                for ax in 0..dim {
                    acc[ax] += dw * s * theta[ax];
                }
            }
            for v in acc.iter_mut() {
                *v *= w_norm;
            }
            acc
        })
        .collect();
    let mut comps = vec![vec![0.0; grid.len()]; dim];
    for (&flat, v) in targets.iter().zip(&values) {
        for a in 0..dim {
            comps[a][flat] = v[a];
        }
    }
    VectorField::new(grid.clone(), comps)
}

fn relative_residual(phi: &VectorField, p: &ScalarField) -> f64 {
    let div = spectral_divergence(phi);
    let scale = p.max_abs();
    let diff = div.sub(p).expect("same grid").max_abs();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BogovskiiTolerances {
    pub residual: f64,
    pub support: f64,
}

impl Default for BogovskiiTolerances {
    fn default() -> Self {
        Self {
            residual: 1e-3,
            support: 1e-8,
        }
    }
}

/// Solves `div phi = p` with `phi` supported in the domain and records the
/// residual and support excess. Postconditions are checked only when `tol`
/// is given.
pub fn bogovskii_solve(
    p: &ScalarField,
    domain: &StarDomain,
    params: &BogovskiiParams,
    tol: Option<&BogovskiiTolerances>,
) -> Result<DivergenceSolution> {
    let phi = bogovskii_field(p, domain, params)?;
    let residual_linf = relative_residual(&phi, p);
    let excess = support_excess(&phi, |x| domain.contains(x));
    if let Some(t) = tol {
        if !(residual_linf <= t.residual) {
            return Err(Error::verification(
                "divergence solve",
                format!("residual {residual_linf:e} exceeds {:e}", t.residual),
            ));
        }
        if !(excess <= t.support) {
            return Err(Error::verification(
                "divergence solve",
                format!("support excess {excess:e} exceeds {:e}", t.support),
            ));
        }
    }
    Ok(DivergenceSolution {
        phi,
        p: p.clone(),
        domain: *domain,
        residual_linf,
        support_excess: excess,
    })
}

#[derive(Clone, Debug)]
pub struct AntisymmetricLift {
    pub a: MatrixField,
    pub u2: SymTensorField,
    pub v: MatrixField,
    pub m_slope: VectorField,
    pub p_src: ScalarField,
    /// `div phi` as seen by the spectral operators; used in place of the
    /// source on the diagonal so that the trace vanishes to round-off.
    pub p_spectral: ScalarField,
    pub diagnostics: LiftDiagnostics,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LiftDiagnostics {
    /// `max |div phi - p| / max |p|`.
    pub input_residual: f64,
    /// `max |tr A| / max |A|`.
    pub trace: f64,
    /// `max |div m_slope| / max |m_slope|`.
    pub div_m: f64,
    /// `max |div A + grad p| / max |grad p|`.
    pub momentum: f64,
}

/// Largest accepted `max |div phi - p| / max |p|` for the lift input.
pub const LIFT_INPUT_TOL: f64 = 1e-3;

pub fn antisymmetric_lift(p: &ScalarField, phi: &VectorField) -> Result<AntisymmetricLift> {
    let grid = p.grid().clone();
    if phi.grid() != &grid {
        return Err(Error::GridMismatch("phi and p on different grids".into()));
    }
    let n = grid.dim();
    let nf = n as f64;
    let p_spec = spectral_divergence(phi);
    let input_residual = relative_residual(phi, p);
    if input_residual > LIFT_INPUT_TOL {
        return Err(Error::verification(
            "antisymmetric lift",
            format!("div phi differs from p by {input_residual:e} (limit {LIFT_INPUT_TOL:e})"),
        ));
    }
    let grads: Vec<VectorField> = (0..n)
        .map(|j| {
            spectral_gradient(&ScalarField::new(grid.clone(), phi.component(j).to_vec()).expect("grid"))
        })
        .collect();
    let c = nf / (1.0 - nf);
    let mut a = vec![vec![0.0; grid.len()]; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = grads[j].component(i);
            a[i * n + j] = (0..grid.len())
                .map(|q| {
                    let diag = if i == j { p_spec.values()[q] / nf } else { 0.0 };
                    c * (d[q] - diag)
                })
                .collect();
        }
    }
    let a = MatrixField::new(grid.clone(), a)?;
    let trace = {
        let s = a.max_abs();
        if s == 0.0 {
            0.0
        } else {
            a.trace().max_abs() / s
        }
    };
    let sym = a.symmetric_part();
    let u2 = SymTensorField::new(grid.clone(), sym, true)?;
    let v = a.skew_part();
    let m_slope = spectral_divergence_matrix(&v);
    let div_m = {
        let s = m_slope.max_abs();
        if s == 0.0 {
            0.0
        } else {
            spectral_divergence(&m_slope).max_abs() / s
        }
    };
    let momentum = {
        let da = spectral_divergence_matrix(&a);
        let gp = spectral_gradient(p);
        let s = gp.max_abs();
        let r = da.add_scaled(1.0, &gp)?.max_abs();
        if s == 0.0 {
            r
        } else {
            r / s
        }
    };
    Ok(AntisymmetricLift {
        a,
        u2,
        v,
        m_slope,
        p_src: p.clone(),
        p_spectral: p_spec,
        diagnostics: LiftDiagnostics {
            input_residual,
            trace,
            div_m,
            momentum,
        },
    })
}

impl AntisymmetricLift {
    /// `m(t) = t * m_slope`.
    pub fn momentum_at(&self, t: f64) -> VectorField {
        self.m_slope.scaled(t)
    }

    /// `max |m_slope + div U2 + grad p| / max |grad p|`.
    pub fn system_residual(&self) -> f64 {
        let du = spectral_divergence_rows(&self.u2);
        let gp = spectral_gradient(&self.p_src);
        let r = du
            .add_scaled(1.0, &self.m_slope)
            .and_then(|v| v.add_scaled(1.0, &gp))
            .expect("same grid")
            .max_abs();
        let s = gp.max_abs();
        if s == 0.0 {
            r
        } else {
            r / s
        }
    }
}

/// Outcome of the least-squares search for a compactly supported solution of
/// `d1 U1 + d2 U2 = d1 p`, `d1 U2 - d2 U1 = d2 p`.
#[derive(Clone, Debug, Serialize)]
pub struct ObstructionReport {
    pub obstructed: bool,
    pub mean: f64,
    /// `||L U - b||_2` at the least-squares iterate (grid L2 norm).
    pub residual: f64,
    /// `residual / ||b||_2`.
    pub relative_residual: f64,
    pub iterations: usize,
}

/// Least squares over `(U1, U2)` supported in `support` (2D only), by CGLS
/// with a fixed iteration budget. Zero-mean sources are reported as
/// unobstructed without solving.
pub fn obstruction_witness(
    p: &ScalarField,
    support: &crate::field::Ball,
    iterations: usize,
) -> Result<ObstructionReport> {
    let grid = p.grid().clone();
    if grid.dim() != 2 {
        return Err(Error::Unsupported("obstruction witness is two-dimensional".into()));
    }
    let mean = p.integral();
    if mean.abs() <= COMPAT_TOL * p.max_abs() * grid.bbox().volume() {
        return Ok(ObstructionReport {
            obstructed: false,
            mean,
            residual: 0.0,
            relative_residual: 0.0,
            iterations: 0,
        });
    }
    let mask: Vec<f64> = (0..grid.len())
        .map(|q| if support.contains(&grid.position(q)) { 1.0 } else { 0.0 })
        .collect();
    let d = |f: &[f64], axis: usize| -> Vec<f64> {
        let mut o = vec![0; 2];
        o[axis] = 1;
        Spectrum::from_values(&grid, f).derivative(&o).into_values()
    };
    let apply = |u: &[Vec<f64>; 2]| -> [Vec<f64>; 2] {
        let (d1u1, d2u1, d1u2, d2u2) = (d(&u[0], 0), d(&u[0], 1), d(&u[1], 0), d(&u[1], 1));
        [
            d1u1.iter().zip(&d2u2).map(|(a, b)| a + b).collect(),
            d1u2.iter().zip(&d2u1).map(|(a, b)| a - b).collect(),
        ]
    };
    // spectral first derivatives are skew-adjoint
    let adjoint = |r: &[Vec<f64>; 2]| -> [Vec<f64>; 2] {
        let (d1r1, d2r1, d1r2, d2r2) = (d(&r[0], 0), d(&r[0], 1), d(&r[1], 0), d(&r[1], 1));
        let u1: Vec<f64> = (0..grid.len()).map(|q| (-d1r1[q] + d2r2[q]) * mask[q]).collect();
        let u2: Vec<f64> = (0..grid.len()).map(|q| (-d2r1[q] - d1r2[q]) * mask[q]).collect();
        [u1, u2]
    };
    let dot = |a: &[Vec<f64>; 2], b: &[Vec<f64>; 2]| -> f64 {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>()).sum()
    };
    let b = [d(p.values(), 0), d(p.values(), 1)];
    let bnorm = dot(&b, &b).sqrt();
    let mut x = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
    let mut r = b.clone();
    let mut s = adjoint(&r);
    let mut dir = s.clone();
    let mut gamma = dot(&s, &s);
    let mut it = 0;
    while it < iterations && gamma > 0.0 {
        let q = apply(&dir);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        for c in 0..2 {
            for i in 0..grid.len() {
                x[c][i] += alpha * dir[c][i];
                r[c][i] -= alpha * q[c][i];
            }
        }
        s = adjoint(&r);
        let g2 = dot(&s, &s);
        let beta = g2 / gamma;
        gamma = g2;
        for c in 0..2 {
            for i in 0..grid.len() {
                dir[c][i] = s[c][i] + beta * dir[c][i];
            }
        }
        it += 1;
    }
    let lx = apply(&x);
    let res: [Vec<f64>; 2] = [
        lx[0].iter().zip(&b[0]).map(|(a, c)| a - c).collect(),
        lx[1].iter().zip(&b[1]).map(|(a, c)| a - c).collect(),
    ];
    let vol = grid.cell_volume();
    let residual = (dot(&res, &res) * vol).sqrt();
    Ok(ObstructionReport {
        obstructed: true,
        mean,
        residual,
        relative_residual: residual / (bnorm * vol.sqrt()),
        iterations: it,
    })
}
