//! Pointwise geometry of the relaxed system: states `(m, U, q)`, the
//! function `e(rho, m, U) = lambda_max(m (x) m / rho - U)`, the constraint
//! set `K`, its convex hull, and the wave cone `{det M = 0}` of the block
//! matrix `M = [[U + q I, m], [m^T, 0]]`.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::pressure::PressureLaw;
use crate::weak::{TestFamily, TimeQuadrature, WeakSystem};

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

/// A state `(m, U, q)` in dimension `n` (2 or 3); unused entries are zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct State {
    pub n: usize,
    pub m: [f64; 3],
    pub u: Mat3,
    pub q: f64,
}

/// Relative trace bound for `U`.
pub const TRACE_TOL: f64 = 1e-12;

fn check_dim(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("dimension {n}")))
    }
}

impl State {
    pub fn new(n: usize, m: [f64; 3], u: Mat3, q: f64) -> Result<Self> {
        check_dim(n)?;
        let mut scale = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if (i >= n || j >= n) && u[i][j] != 0.0 {
                    return Err(Error::Domain(format!("U has entry ({i},{j}) outside dimension {n}")));
                }
                scale = scale.max(u[i][j].abs());
            }
            if i >= n && m[i] != 0.0 {
                return Err(Error::Domain(format!("m has component {i} outside dimension {n}")));
            }
        }
        for i in 0..n {
            for j in 0..i {
                if u[i][j] != u[j][i] {
                    return Err(Error::Domain("U is not symmetric".into()));
                }
            }
        }
        let tr: f64 = (0..n).map(|i| u[i][i]).sum();
        if tr.abs() > TRACE_TOL * scale.max(f64::MIN_POSITIVE) && tr != 0.0 {
            return Err(Error::Domain(format!("U has trace {tr:e}")));
        }
        Ok(Self { n, m, u, q })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            m: [0.0; 3],
            u: [[0.0; 3]; 3],
            q: 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.m[i] *= s;
            for j in 0..3 {
                out.u[i][j] *= s;
            }
        }
        out.q *= s;
        out
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &State) -> Self {
        let mut out = *self;
        for i in 0..3 {
            out.m[i] += s * other.m[i];
            for j in 0..3 {
                out.u[i][j] += s * other.u[i][j];
            }
        }
        out.q += s * other.q;
        out
    }

    pub fn m_norm_sq(&self) -> f64 {
        self.m.iter().map(|v| v * v).sum()
    }

    /// The `(n + 1) x (n + 1)` block matrix, embedded in a 4x4 array.
    pub fn block_matrix(&self) -> Mat4 {
        let n = self.n;
        let mut a = [[0.0; 4]; 4];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = self.u[i][j];
            }
            a[i][i] += self.q;
            a[i][n] = self.m[i];
            a[n][i] = self.m[i];
        }
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HullParams {
    pub rho: f64,
    pub chi: f64,
}

impl HullParams {
    pub fn new(rho: f64, chi: f64) -> Result<Self> {
        if !(rho > 0.0) || !(chi > 0.0) {
            return Err(Error::Domain(format!("need rho > 0 and chi > 0, got ({rho}, {chi})")));
        }
        Ok(Self { rho, chi })
    }
}

/// Largest eigenvalue of a symmetric `n x n` matrix, `n` in {1, 2, 3}.
pub fn lambda_max_sym(n: usize, s: &Mat3) -> f64 {
    match n {
        1 => s[0][0],
        2 => {
            let half_tr = 0.5 * (s[0][0] + s[1][1]);
            let half_diff = 0.5 * (s[0][0] - s[1][1]);
            half_tr + half_diff.hypot(s[0][1])
        }
        3 => {
            let p1 = s[0][1] * s[0][1] + s[0][2] * s[0][2] + s[1][2] * s[1][2];
            if p1 == 0.0 {
                return s[0][0].max(s[1][1]).max(s[2][2]);
            }
            let q = (s[0][0] + s[1][1] + s[2][2]) / 3.0;
            let d = [s[0][0] - q, s[1][1] - q, s[2][2] - q];
            let p2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2] + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let b = |i: usize, j: usize| if i == j { d[i] / p } else { s[i][j] / p };
            let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
                - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
                + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
            let r = (0.5 * det).clamp(-1.0, 1.0);
            q + 2.0 * p * (r.acos() / 3.0).cos()
        }
        _ => panic!("lambda_max_sym: dimension {n}"),
    }
}

pub(crate) fn e_raw(n: usize, rho: f64, m: &[f64; 3], u: &Mat3) -> f64 {
    let mut s = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = m[i] * m[j] / rho - u[i][j];
        }
    }
    lambda_max_sym(n, &s)
}

/// `lambda_max(m (x) m / rho - U)`.
pub fn e_value(rho: f64, m: &[f64; 3], u: &Mat3, n: usize) -> Result<f64> {
    check_dim(n)?;
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("density {rho} is not positive")));
    }
    Ok(e_raw(n, rho, m, u))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HullMargin {
    /// `chi / n - e`; positive in the hyperinterior.
    pub margin: f64,
    /// `q - p(rho) - chi / n`.
    pub q_defect: f64,
}

pub fn hull_margin(s: &State, hp: &HullParams, law: &PressureLaw) -> Result<HullMargin> {
    let nf = s.n as f64;
    let e = e_value(hp.rho, &s.m, &s.u, s.n)?;
    Ok(HullMargin {
        margin: hp.chi / nf - e,
        q_defect: s.q - (law.p(hp.rho)? + hp.chi / nf),
    })
}

/// Membership in the closed hull, with `margin >= -tol * chi / n`.
pub fn in_hull(s: &State, hp: &HullParams, law: &PressureLaw, tol: f64) -> Result<bool> {
    let h = hull_margin(s, hp, law)?;
    let qs = law.p(hp.rho)?.abs() + hp.chi / s.n as f64;
    Ok(h.margin >= -tol * hp.chi / s.n as f64 && h.q_defect.abs() <= tol * qs)
}

/// Membership in the hyperinterior (strict inequality).
pub fn in_hyperinterior(s: &State, hp: &HullParams, law: &PressureLaw, tol: f64) -> Result<bool> {
    let h = hull_margin(s, hp, law)?;
    let qs = law.p(hp.rho)?.abs() + hp.chi / s.n as f64;
    Ok(h.margin > 0.0 && h.q_defect.abs() <= tol * qs)
}

/// `m (x) m / rho - |m|^2 / (n rho) I`.
pub fn equality_stress(n: usize, rho: f64, m: &[f64; 3]) -> Mat3 {
    let nf = n as f64;
    let mut u = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            u[i][j] = m[i] * m[j] / rho;
        }
    }
    let tr: f64 = (0..n).map(|i| u[i][i]).sum();
    for i in 0..n {
        u[i][i] -= tr / nf;
    }
    u
}

fn op_norm_sym(n: usize, a: &Mat3) -> f64 {
    let mut neg = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            neg[i][j] = -a[i][j];
        }
    }
    lambda_max_sym(n, a).abs().max(lambda_max_sym(n, &neg).abs())
}

/// Membership in `K_{rho, chi}`: hull membership together with
/// `| |m|^2 - rho chi | <= tol rho chi`.
///
/// Panics if a state passes but its stress is farther from the equality
/// case than the hull bounds allow, since that contradicts the
/// characterization of equality in `|m|^2 / (n rho) <= e`.
pub fn in_k(s: &State, hp: &HullParams, law: &PressureLaw, tol: f64) -> Result<bool> {
    if !in_hull(s, hp, law, tol)? {
        return Ok(false);
    }
    let m2 = s.m_norm_sq();
    if (m2 - hp.rho * hp.chi).abs() > tol * hp.rho * hp.chi {
        return Ok(false);
    }
    let n = s.n;
    let nf = n as f64;
    let ueq = equality_stress(n, hp.rho, &s.m);
    let mut d = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = s.u[i][j] - ueq[i][j];
        }
    }
    let bound = (nf - 1.0) * 2.0 * tol * hp.chi / nf + 1e-12 * (1.0 + hp.chi + m2 / hp.rho);
    let defect = op_norm_sym(n, &d);
    assert!(
        defect <= bound,
        "state in K with stress {defect:e} away from the equality case (bound {bound:e})"
    );
    Ok(true)
}

/// `(U, q)` with `(m, U, q)` in `K_rho`.
pub fn flux_from_state(rho: f64, m: &[f64; 3], n: usize, law: &PressureLaw) -> Result<State> {
    check_dim(n)?;
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("density {rho} is not positive")));
    }
    let m2: f64 = m[..n].iter().map(|v| v * v).sum();
    let u = equality_stress(n, rho, m);
    let q = law.p(rho)? + m2 / (n as f64 * rho);
    let mut mm = [0.0; 3];
    mm[..n].copy_from_slice(&m[..n]);
    Ok(State { n, m: mm, u, q })
}

fn det(a: &Mat4, size: usize) -> f64 {
    match size {
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            let mut total = 0.0;
            for c in 0..size {
                if a[0][c] == 0.0 {
                    continue;
                }
                let mut minor = [[0.0; 4]; 4];
                for r in 1..size {
                    let mut k = 0;
                    for cc in 0..size {
                        if cc != c {
                            minor[r - 1][k] = a[r][cc];
                            k += 1;
                        }
                    }
                }
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * a[0][c] * det(&minor, size - 1);
            }
            total
        }
    }
}

/// `det M` by cofactor expansion.
pub fn wave_cone_residual(s: &State) -> f64 {
    det(&s.block_matrix(), s.n + 1)
}

/// `(max |M_ij|)^(n+1)`.
pub fn wave_cone_scale(s: &State) -> f64 {
    let a = s.block_matrix();
    let mx = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    mx.powi(s.n as i32 + 1)
}

pub fn in_wave_cone(s: &State, tol: f64) -> bool {
    wave_cone_residual(s).abs() <= tol * wave_cone_scale(s)
}

/// Eigenvalues and eigenvectors (columns) of a symmetric matrix by cyclic
/// Jacobi rotations.
pub fn jacobi_eigen(a: &Mat4, size: usize) -> ([f64; 4], Mat4) {
    let mut a = *a;
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate().take(size) {
        row[i] = 1.0;
    }
    let norm: f64 = (0..size)
        .flat_map(|i| (0..size).map(move |j| (i, j)))
        .map(|(i, j)| a[i][j] * a[i][j])
        .sum::<f64>()
        .sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..size)
            .flat_map(|i| (0..size).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-300 || off <= 1e-17 * norm {
            break;
        }
        for p in 0..size {
            for q in p + 1..size {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..size {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..size {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut().take(size) {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut vals = [0.0; 4];
    for i in 0..size {
        vals[i] = a[i][i];
    }
    (vals, v)
}

/// A unit vector `xi = (xi_x, xi_t)` spanning the numerical kernel of `M`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WaveKernel {
    pub xi: [f64; 4],
    /// Smallest over largest eigenvalue modulus of `M`; zero on the cone.
    pub conditioning: f64,
    /// `|M xi| / max |M_ij|`.
    pub residual: f64,
}

pub fn wave_cone_kernel(s: &State) -> WaveKernel {
    let size = s.n + 1;
    let a = s.block_matrix();
    let mx = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if mx == 0.0 {
        let mut xi = [0.0; 4];
        xi[s.n] = 1.0;
        return WaveKernel {
            xi,
            conditioning: 0.0,
            residual: 0.0,
        };
    }
    let (vals, vecs) = jacobi_eigen(&a, size);
    let mut imin = 0;
    let mut amax = 0.0f64;
    for i in 0..size {
        if vals[i].abs() < vals[imin].abs() {
            imin = i;
        }
        amax = amax.max(vals[i].abs());
    }
    let mut xi = [0.0; 4];
    for r in 0..size {
        xi[r] = vecs[r][imin];
    }
    WaveKernel {
        xi,
        conditioning: vals[imin].abs() / amax,
        residual: mat_vec_norm(&a, &xi, size) / mx,
    }
}

fn mat_vec_norm(a: &Mat4, x: &[f64; 4], size: usize) -> f64 {
    (0..size)
        .map(|i| (0..size).map(|j| a[i][j] * x[j]).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Kernel tolerance for [`plane_wave_check`]: `|M xi| <= tol max|M| |xi|`.
pub const KERNEL_TOL: f64 = 1e-10;

/// Largest relative weak residual of the linear system for the space-time
/// field `(m, U, q) h(x . xi_x + t xi_t)` on `grid x [0, horizon]`.
pub fn plane_wave_check(
    s: &State,
    xi: &[f64; 4],
    profile: &(dyn Fn(f64) -> f64 + Sync),
    grid: &Grid,
    horizon: f64,
) -> Result<f64> {
    let n = s.n;
    if grid.dim() != n {
        return Err(Error::GridMismatch(format!("state dimension {n}, grid dimension {}", grid.dim())));
    }
    let size = n + 1;
    let a = s.block_matrix();
    let mx = a.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let xn = (0..size).map(|i| xi[i] * xi[i]).sum::<f64>().sqrt();
    if xn == 0.0 {
        return Err(Error::Domain("xi is zero".into()));
    }
    if mat_vec_norm(&a, xi, size) > KERNEL_TOL * mx * xn {
        return Err(Error::Domain("xi is not in the kernel of M".into()));
    }
    let pos = grid.positions();
    let family = TestFamily::linear_system(grid, horizon)?;
    let quad = TimeQuadrature::for_family(&family, horizon);
    let sys = WeakSystem::new(size, n);
    let report = sys.residuals(grid, &family, &quad, None, |t| {
        let h: Vec<f64> = pos
            .iter()
            .map(|x| profile((0..n).map(|k| x[k] * xi[k]).sum::<f64>() + t * xi[n]))
            .collect();
        let mut density = vec![vec![0.0; grid.len()]; size];
        let mut flux = vec![vec![vec![0.0; grid.len()]; n]; size];
        for (q, hv) in h.iter().enumerate() {
            for i in 0..n {
                density[i][q] = s.m[i] * hv;
                for j in 0..n {
                    flux[i][j][q] = a[i][j] * hv;
                }
                flux[n][i][q] = s.m[i] * hv;
            }
        }
        (density, flux)
    })?;
    Ok(report.max_relative())
}

/// A split of `z` as the midpoint of `z + s z_bar` and `z - s z_bar`, with
/// `z_bar` in the wave cone and both endpoints in the hull with margin.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Direction {
    pub z_plus: State,
    pub z_minus: State,
    /// `(z_plus - z_minus) / 2`, with zero `q` component.
    pub z_bar: State,
    pub amplitude: f64,
    pub cone_residual: f64,
}

/// Relative determinant tolerance used to accept candidate directions.
pub const CONE_TOL: f64 = 1e-10;

/// A uniformly distributed point of the sphere `|m|^2 = r2` in dimension n.
pub fn sphere_point<R: Rng>(n: usize, r2: f64, rng: &mut R) -> [f64; 3] {
    loop {
        let mut v = [0.0; 3];
        for c in v.iter_mut().take(n) {
            *c = rng.gen_range(-1.0..1.0);
        }
        let s: f64 = v.iter().map(|c| c * c).sum();
        if s > 1e-6 && s <= 1.0 {
            let f = (r2 / s).sqrt();
            for c in v.iter_mut() {
                *c *= f;
            }
            return v;
        }
    }
}

/// A candidate `(z_plus - z_minus) / 2` from two random points of `K_{rho, chi}`.
pub fn k_pair_direction<R: Rng>(n: usize, hp: &HullParams, rng: &mut R) -> (State, State, State) {
    let mut pair = [State::zero(n); 2];
    for z in pair.iter_mut() {
        let m = sphere_point(n, hp.rho * hp.chi, rng);
        z.m = m;
        z.u = equality_stress(n, hp.rho, &m);
    }
    let z_bar = pair[0].add_scaled(-1.0, &pair[1]).scaled(0.5);
    (pair[0], pair[1], z_bar)
}

/// Largest `s` in `[0, cap]` with `ok(s)`, assuming `{s : ok(s)}` is an
/// interval containing 0.
pub fn max_amplitude(ok: impl Fn(f64) -> bool, cap: f64) -> f64 {
    if !ok(0.0) {
        return 0.0;
    }
    let mut hi = cap.min(1.0);
    while ok(hi) && hi < cap {
        hi = (2.0 * hi).min(cap);
    }
    if ok(hi) {
        return hi;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Search for a wave-cone direction through `z` whose endpoints stay in the
/// hull of `K_{rho, chi}` with margin `delta`. Candidates are taken in draw
/// order and the first of maximal `amplitude * |m_bar|` wins.
pub fn direction_search<R: Rng>(
    z: &State,
    hp: &HullParams,
    budget: usize,
    delta: f64,
    rng: &mut R,
) -> Option<Direction> {
    let n = z.n;
    let level = hp.chi / n as f64 - delta;
    let mut best: Option<(f64, Direction)> = None;
    for _ in 0..budget {
        let (zp, zm, zb) = k_pair_direction(n, hp, rng);
        let res = wave_cone_residual(&zb);
        if res.abs() > CONE_TOL * wave_cone_scale(&zb) {
            continue;
        }
        let ok = |s: f64| {
            let a = z.add_scaled(s, &zb);
            let b = z.add_scaled(-s, &zb);
            e_raw(n, hp.rho, &a.m, &a.u) <= level && e_raw(n, hp.rho, &b.m, &b.u) <= level
        };
        let cap = 4.0;
        let s = max_amplitude(ok, cap);
        if s <= 0.0 {
            continue;
        }
        let score = s * zb.m_norm_sq().sqrt();
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((
                score,
                Direction {
                    z_plus: zp,
                    z_minus: zm,
                    z_bar: zb,
                    amplitude: s,
                    cone_residual: res,
                },
            ));
        }
    }
    best.map(|(_, d)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PeriodicBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag2(a: f64, b: f64) -> Mat3 {
        [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, 0.0]]
    }

    #[test]
    fn e_value_examples() {
        assert_eq!(e_value(1.0, &[0.0; 3], &[[0.0; 3]; 3], 2).unwrap(), 0.0);
        assert_eq!(e_value(2.0, &[2.0, 0.0, 0.0], &[[0.0; 3]; 3], 2).unwrap(), 2.0);
        assert_eq!(e_value(1.0, &[1.0, 0.0, 0.0], &diag2(0.5, -0.5), 2).unwrap(), 0.5);
        assert!(e_value(0.0, &[0.0; 3], &[[0.0; 3]; 3], 2).is_err());
    }

    #[test]
    fn lambda_max_3x3_against_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut s = [[0.0; 3]; 3];
            let mut a = [[0.0; 4]; 4];
            for i in 0..3 {
                for j in 0..=i {
                    let v: f64 = rng.gen_range(-2.0..2.0);
                    s[i][j] = v;
                    s[j][i] = v;
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
            let (vals, _) = jacobi_eigen(&a, 3);
            let top = vals[..3].iter().cloned().fold(f64::MIN, f64::max);
            assert!((lambda_max_sym(3, &s) - top).abs() < 1e-12);
        }
        assert_eq!(lambda_max_sym(3, &[[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]]), 3.0);
    }

    #[test]
    fn hull_and_k_examples() {
        let law = PressureLaw::gamma(1.0, 2.0).unwrap();
        let hp = HullParams::new(1.0, 1.0).unwrap();
        let s0 = State::new(2, [0.0; 3], [[0.0; 3]; 3], law.p(1.0).unwrap() + 0.5).unwrap();
        let h = hull_margin(&s0, &hp, &law).unwrap();
        assert_eq!(h.margin, 0.5);
        assert_eq!(h.q_defect, 0.0);
        assert!(!in_k(&s0, &hp, &law, 1e-12).unwrap());

        let s1 = State::new(2, [1.0, 0.0, 0.0], diag2(0.5, -0.5), 1.5).unwrap();
        assert_eq!(hull_margin(&s1, &hp, &law).unwrap().margin, 0.0);
        assert!(in_k(&s1, &hp, &law, 1e-12).unwrap());

        let s2 = State::new(2, [1.0, 0.0, 0.0], [[0.0; 3]; 3], 1.5).unwrap();
        assert!(!in_k(&s2, &hp, &law, 1e-12).unwrap());
        assert!(!in_hull(&s2, &hp, &law, 1e-12).unwrap());
    }

    #[test]
    fn determinant_examples() {
        let s = State::new(2, [1.0, 0.0, 0.0], [[0.0; 3]; 3], 0.0).unwrap();
        assert_eq!(wave_cone_residual(&s), 0.0);
        let s = State::new(2, [1.0, 1.0, 0.0], [[0.0; 3]; 3], 1.0).unwrap();
        assert_eq!(wave_cone_residual(&s), -2.0);
        let s = State::new(3, [0.0; 3], [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0; 3]], 4.0).unwrap();
        assert_eq!(wave_cone_residual(&s), 0.0);
    }

    #[test]
    fn flux_example() {
        let law = PressureLaw::gamma(1.0, 2.0).unwrap();
        let s = flux_from_state(1.0, &[1.0, 0.0, 0.0], 2, &law).unwrap();
        assert_eq!(s.u, diag2(0.5, -0.5));
        assert_eq!(s.q, 1.5);
        let z = flux_from_state(1.3, &[0.0; 3], 2, &law).unwrap();
        assert_eq!(z.u, [[0.0; 3]; 3]);
        assert_eq!(z.q, law.p(1.3).unwrap());
    }

    #[test]
    fn kernel_of_cone_states() {
        let s = State::new(2, [1.0, 0.0, 0.0], [[0.0; 3]; 3], 0.0).unwrap();
        let k = wave_cone_kernel(&s);
        assert!(k.residual < 1e-14);
        assert!(k.conditioning < 1e-14);
        assert!((k.xi[1].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn k_pairs_in_two_dimensions_lie_on_the_cone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hp = HullParams::new(1.7, 0.9).unwrap();
        for _ in 0..100 {
            let (_, _, zb) = k_pair_direction(2, &hp, &mut rng);
            assert!(wave_cone_residual(&zb).abs() <= 1e-12 * wave_cone_scale(&zb));
        }
    }

    #[test]
    fn direction_search_from_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hp = HullParams::new(1.0, 1.0).unwrap();
        let d = direction_search(&State::zero(2), &hp, 16, 1e-3, &mut rng).unwrap();
        assert!(d.amplitude > 0.0);
        for sgn in [1.0, -1.0] {
            let z = State::zero(2).add_scaled(sgn * d.amplitude, &d.z_bar);
            assert!(e_raw(2, 1.0, &z.m, &z.u) <= 0.5 - 1e-3 + 1e-12);
        }
    }

    #[test]
    fn plane_wave_time_axis() {
        let grid = Grid::uniform(PeriodicBox::cube(2, 1.0).unwrap(), 64).unwrap();
        let s = State::new(2, [0.0; 3], [[0.3, 0.2, 0.0], [0.2, -0.3, 0.0], [0.0; 3]], 1.1).unwrap();
        let r = plane_wave_check(&s, &[0.0, 0.0, 1.0, 0.0], &|v: f64| v.sin(), &grid, 1.0).unwrap();
        assert!(r <= 1e-8, "{r}");
        let c = plane_wave_check(&s, &[0.0, 0.0, 1.0, 0.0], &|_v: f64| 1.0, &grid, 1.0).unwrap();
        assert!(c <= 1e-12, "{c}");
        assert!(plane_wave_check(&s, &[1.0, 0.0, 0.0, 0.0], &|v: f64| v.sin(), &grid, 1.0).is_err());
    }
}
