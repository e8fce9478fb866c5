//! Strict subsolutions `(rho0, m, U, q0)` of the semi-stationary system:
//! density generation, the stress `U1` from the compact Poisson potential,
//! the Bogovskii lift for the smooth remainder, the gauge `chi`, and the
//! validity predicate checked on grid and time samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bogovskii::{antisymmetric_lift, bogovskii_solve, BogovskiiParams, BogovskiiTolerances};
use crate::bump::RadialBump;
use crate::chi::ChiProfile;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{
    spectral_divergence, spectral_divergence_rows, spectral_gradient, spectral_hessian, support_excess, sym_index,
    sym_len, Ball, Field, Grid, ScalarField, Spectrum, SymTensorField, VectorField,
};
use crate::geometry::e_raw;
use crate::poisson::{pressure_deviation, solve_compact, PoissonTolerances};
use crate::pressure::PressureLaw;
use crate::wave::LocalizedWave;

/// Seeded sum of radial bumps inside a ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct BumpSpec {
    pub count: usize,
    /// Largest absolute value of the result.
    pub amplitude: f64,
    pub seed: u64,
    /// Subtract a multiple of a centred reference bump so that the discrete
    /// mean vanishes.
    pub balance: bool,
}

/// Random bumps of both signs, each strictly inside `omega`.
pub fn seeded_bump(grid: &Grid, omega: &Ball, spec: &BumpSpec) -> Result<ScalarField> {
    let n = grid.dim();
    if spec.amplitude == 0.0 || spec.count == 0 {
        return Ok(ScalarField::zeros(grid));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let big = 0.9 * omega.radius;
    let mut acc = ScalarField::zeros(grid);
    for _ in 0..spec.count {
        let r = big * rng.gen_range(0.3..0.6);
        let reach = big - r;
        let off = crate::geometry::sphere_point(n, 1.0, &mut rng);
        let s = rng.gen_range(0.0..1.0f64).powf(1.0 / n as f64) * reach;
        let mut c = omega.center;
        for a in 0..n {
            c[a] += s * off[a];
        }
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let b = RadialBump::new(c, r);
        let f = ScalarField::from_fn(grid, |x| b.value(x, n));
        acc = acc.add_scaled(sign * rng.gen_range(0.5..1.0), &f)?;
    }
    if spec.balance {
        let reference = RadialBump::new(omega.center, big);
        let f = ScalarField::from_fn(grid, |x| reference.value(x, n));
        acc = acc.add_scaled(-acc.mean() / f.mean(), &f)?;
    }
    let peak = acc.max_abs();
    if peak == 0.0 {
        return Ok(acc);
    }
    Ok(acc.scaled(spec.amplitude / peak))
}

/// `rho0 = p^{-1}(p(rho_bar) + bump)`.
pub fn density_from_bump(law: &PressureLaw, rho_bar: f64, bump: &ScalarField) -> Result<ScalarField> {
    let pbar = law.p(rho_bar)?;
    let (lo, hi) = law.range();
    let plo = if lo > 0.0 { law.p(lo)? } else { 0.0 };
    let phi = if hi.is_finite() { law.p(hi)? } else { f64::INFINITY };
    let mut out = Vec::with_capacity(bump.values().len());
    for &b in bump.values() {
        let target = pbar + b;
        if !(target > plo) || !(target < phi) {
            return Err(Error::PressureRange(format!(
                "p(rho_bar) + bump = {target} leaves the range ({plo}, {phi}) of the pressure law"
            )));
        }
        out.push(if b == 0.0 { rho_bar } else { law.inverse(target)? });
    }
    ScalarField::new(bump.grid().clone(), out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct U1Report {
    /// `max |tr| / max |U1|` before the traceless projection.
    pub trace: f64,
    /// `max |div U1 + grad p_eps| / max |grad p_eps|`.
    pub momentum: f64,
}

/// Largest relative trace accepted in [`build_u1`].
pub const U1_TRACE_TOL: f64 = 1e-7;

/// `U1 = -n/(n-1) Hess u + p_eps/(n-1) I`, projected to the traceless part
/// after checking that the raw trace is small.
pub fn build_u1(u: &ScalarField, p_eps: &ScalarField, trace_tol: f64) -> Result<(SymTensorField, U1Report)> {
    let grid = u.grid().clone();
    if p_eps.grid() != &grid {
        return Err(Error::GridMismatch("u and p_eps on different grids".into()));
    }
    let n = grid.dim();
    let nf = n as f64;
    let h = spectral_hessian(u);
    let mut comps = h.scaled(-nf / (nf - 1.0)).into_components();
    for i in 0..n {
        for (c, p) in comps[sym_index(n, i, i)].iter_mut().zip(p_eps.values()) {
            *c += p / (nf - 1.0);
        }
    }
    let raw = SymTensorField::new(grid.clone(), comps, false)?;
    let trace = raw.trace_defect();
    if !(trace <= trace_tol) {
        return Err(Error::verification(
            "U1 assembly",
            format!("relative trace {trace:e} exceeds {trace_tol:e}; the Poisson residual is too large"),
        ));
    }
    let u1 = SymTensorField::traceless_part(grid, raw.into_components())?;
    let gp = spectral_gradient(p_eps);
    let r = spectral_divergence_rows(&u1).add_scaled(1.0, &gp)?.max_abs();
    let s = gp.max_abs();
    let momentum = if s == 0.0 { r } else { r / s };
    Ok((u1, U1Report { trace, momentum }))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BuildTolerances {
    pub poisson: PoissonTolerances,
    pub bogovskii: BogovskiiTolerances,
    pub u1_trace: f64,
}

impl Default for BuildTolerances {
    fn default() -> Self {
        Self {
            poisson: PoissonTolerances::default(),
            bogovskii: BogovskiiTolerances::default(),
            u1_trace: U1_TRACE_TOL,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct BuildDiagnostics {
    pub poisson_residual: f64,
    pub poisson_support: f64,
    pub u1_trace: f64,
    pub u1_momentum: f64,
    pub divergence_residual: f64,
    pub divergence_support: f64,
    pub lift_trace: f64,
    pub lift_momentum: f64,
    /// `max |m_slope + div U + grad p(rho0)| / max |grad p(rho0)|`.
    pub system: f64,
}

/// The time-independent part of a subsolution before `chi` is attached.
#[derive(Clone, Debug)]
pub struct LinearPart {
    pub p1: ScalarField,
    pub u1: SymTensorField,
    pub u2: SymTensorField,
    pub u_tilde: SymTensorField,
    pub m_slope: VectorField,
    pub diagnostics: BuildDiagnostics,
}

/// Poisson potential, `U1`, Bogovskii lift of the smooth remainder, and
/// `U~ = U1 + U2`, with every stage checked.
pub fn build_linear_part(
    rho0: &ScalarField,
    law: &PressureLaw,
    rho_bar: f64,
    domain: &Domain,
    params: &BogovskiiParams,
    tol: &BuildTolerances,
) -> Result<LinearPart> {
    let grid = rho0.grid().clone();
    let p1 = pressure_deviation(rho0, law, rho_bar)?;
    let poisson = solve_compact(&p1, domain, &tol.poisson)?;
    let (u1, u1_report) = build_u1(&poisson.u, &poisson.p_eps, tol.u1_trace)?;
    let mut diagnostics = BuildDiagnostics {
        poisson_residual: poisson.residual_linf,
        poisson_support: poisson.support_excess,
        u1_trace: u1_report.trace,
        u1_momentum: u1_report.momentum,
        ..Default::default()
    };
    let (u2, m_slope) = if poisson.p_smooth.max_abs() == 0.0 {
        (SymTensorField::zeros(&grid, true), VectorField::zeros(&grid))
    } else {
        let div = bogovskii_solve(&poisson.p_smooth, &domain.outer, params, Some(&tol.bogovskii))?;
        let lift = antisymmetric_lift(&poisson.p_smooth, &div.phi)?;
        diagnostics.divergence_residual = div.residual_linf;
        diagnostics.divergence_support = div.support_excess;
        diagnostics.lift_trace = lift.diagnostics.trace;
        diagnostics.lift_momentum = lift.diagnostics.momentum;
        (lift.u2, lift.m_slope)
    };
    let u_tilde = u1.add(&u2)?;
    diagnostics.system = {
        let gp = spectral_gradient(&p1);
        let r = spectral_divergence_rows(&u_tilde)
            .add_scaled(1.0, &m_slope)?
            .add_scaled(1.0, &gp)?
            .max_abs();
        let s = gp.max_abs();
        if s == 0.0 {
            r
        } else {
            r / s
        }
    };
    if !(diagnostics.system <= tol.bogovskii.residual) {
        return Err(Error::verification(
            "subsolution assembly",
            format!(
                "momentum residual {:e} exceeds {:e}",
                diagnostics.system, tol.bogovskii.residual
            ),
        ));
    }
    Ok(LinearPart {
        p1,
        u1,
        u2,
        u_tilde,
        m_slope,
        diagnostics,
    })
}

/// Uniform samples of `[0, horizon]`.
pub fn uniform_times(horizon: f64, samples: usize) -> Vec<f64> {
    if samples < 2 {
        return vec![0.0];
    }
    (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect()
}

/// Fields of a subsolution at one time.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub m: VectorField,
    pub dmdt: VectorField,
    pub u: SymTensorField,
}

/// A subsolution: `m(t) = t m_slope + sum of waves`, `U(t) = U~ + sum of
/// wave stresses`, `q0 = p(rho0) + chi(t)/n`.
#[derive(Clone, Debug)]
pub struct Subsolution {
    pub rho0: ScalarField,
    pub law: PressureLaw,
    pub rho_bar: f64,
    pub domain: Domain,
    pub m_slope: VectorField,
    pub u_base: SymTensorField,
    pub waves: Vec<LocalizedWave>,
    pub chi: ChiProfile,
    pub horizon: f64,
    pub times: Vec<f64>,
}

impl Subsolution {
    pub fn grid(&self) -> &Grid {
        self.rho0.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    /// `rho0 = rho_bar`, `m = 0`, `U = 0`.
    pub fn trivial(
        grid: &Grid,
        law: PressureLaw,
        rho_bar: f64,
        domain: Domain,
        chi: ChiProfile,
        horizon: f64,
        samples: usize,
    ) -> Self {
        Self {
            rho0: ScalarField::constant(grid, rho_bar),
            law,
            rho_bar,
            domain,
            m_slope: VectorField::zeros(grid),
            u_base: SymTensorField::zeros(grid, true),
            waves: Vec::new(),
            chi,
            horizon,
            times: uniform_times(horizon, samples),
        }
    }

    pub fn from_linear(
        rho0: ScalarField,
        law: PressureLaw,
        rho_bar: f64,
        domain: Domain,
        linear: &LinearPart,
        chi: ChiProfile,
        horizon: f64,
        samples: usize,
    ) -> Self {
        Self {
            rho0,
            law,
            rho_bar,
            domain,
            m_slope: linear.m_slope.clone(),
            u_base: linear.u_tilde.clone(),
            waves: Vec::new(),
            chi,
            horizon,
            times: uniform_times(horizon, samples),
        }
    }

    pub fn snapshot(&self, t: f64) -> Snapshot {
        let grid = self.grid();
        let n = grid.dim();
        let mut m: Vec<Vec<f64>> = self.m_slope.components().iter().map(|c| c.iter().map(|v| t * v).collect()).collect();
        let mut dmdt: Vec<Vec<f64>> = self.m_slope.components().to_vec();
        let mut u: Vec<Vec<f64>> = self.u_base.components().to_vec();
        let active: Vec<&LocalizedWave> = self.waves.iter().filter(|w| w.active_at(t)).collect();
        if !active.is_empty() {
            let vals: Vec<(usize, [f64; 6])> = (0..grid.len())
                .into_par_iter()
                .filter_map(|q| {
                    let x = grid.position(q);
                    let mut acc = [0.0; 6];
                    let mut hit = false;
                    for w in &active {
                        if !w.covers(&x) {
                            continue;
                        }
                        hit = true;
                        let v = w.eval(&x, t);
                        acc[0] += v.m[0];
                        acc[1] += v.m[1];
                        acc[2] += v.dmdt[0];
                        acc[3] += v.dmdt[1];
                        acc[4] += v.a;
                        acc[5] += v.b;
                    }
                    hit.then_some((q, acc))
                })
                .collect();
            for (q, acc) in vals {
                m[0][q] += acc[0];
                m[1][q] += acc[1];
                dmdt[0][q] += acc[2];
                dmdt[1][q] += acc[3];
                u[sym_index(n, 0, 0)][q] += acc[4];
                u[sym_index(n, 1, 1)][q] -= acc[4];
                u[sym_index(n, 0, 1)][q] += acc[5];
            }
        }
        Snapshot {
            t,
            m: VectorField::new(grid.clone(), m).expect("grid"),
            dmdt: VectorField::new(grid.clone(), dmdt).expect("grid"),
            u: SymTensorField::new(grid.clone(), u, false).expect("grid"),
        }
    }

    pub fn momentum_at(&self, t: f64) -> VectorField {
        self.snapshot(t).m
    }

    /// `q0 = p(rho0) + chi(t)/n`.
    pub fn q0(&self, t: f64) -> Result<ScalarField> {
        let c = self.chi.value(t) / self.dim() as f64;
        let vals = self
            .rho0
            .values()
            .iter()
            .map(|&r| self.law.p(r).map(|p| p + c))
            .collect::<Result<Vec<_>>>()?;
        ScalarField::new(self.grid().clone(), vals)
    }

    /// `e(rho0, m, U)` at every grid point of a snapshot.
    pub fn e_field(&self, s: &Snapshot) -> Vec<f64> {
        let n = self.dim();
        let rho = self.rho0.values();
        (0..self.grid().len())
            .into_par_iter()
            .map(|q| e_raw(n, rho[q], &s.m.at(q), &s.u.at(q)))
            .collect()
    }

    /// `sup_x e` at the given times.
    pub fn lambda_samples(&self, times: &[f64]) -> Vec<f64> {
        times
            .iter()
            .map(|&t| self.e_field(&self.snapshot(t)).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// `sum |m|^2 h^n` at time t.
    pub fn energy_at(&self, t: f64) -> f64 {
        self.snapshot(t).m.l2_norm_sq()
    }

    pub fn check(&self, tol: &SubsolutionTolerances) -> Result<ValidityReport> {
        check_subsolution(self, tol)
    }

    /// [`Self::check`], failing on the first violated invariant.
    pub fn validate(&self, tol: &SubsolutionTolerances) -> Result<ValidityReport> {
        let r = self.check(tol)?;
        if let Some(msg) = r.failure(tol) {
            return Err(Error::verification("subsolution", msg));
        }
        Ok(r)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SubsolutionTolerances {
    /// Relative `div m`.
    pub divergence: f64,
    /// Relative `d_t m + div U + grad q0`.
    pub momentum: f64,
    /// Support excess outside the outer domain.
    pub support: f64,
    /// Relative trace of `U`.
    pub trace: f64,
}

impl Default for SubsolutionTolerances {
    fn default() -> Self {
        Self {
            divergence: 1e-6,
            momentum: 1e-3,
            support: 1e-6,
            trace: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TimeCheck {
    pub t: f64,
    pub divergence: f64,
    pub momentum: f64,
    pub support_m: f64,
    pub support_u: f64,
    pub trace: f64,
    /// `min_x (chi/n - e)`.
    pub min_gap: f64,
    pub lambda: f64,
    pub worst_point: [f64; 3],
    pub hull_violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidityReport {
    pub times: Vec<TimeCheck>,
}

impl ValidityReport {
    fn fold(&self, f: impl Fn(&TimeCheck) -> f64) -> f64 {
        self.times.iter().map(f).fold(0.0, f64::max)
    }

    pub fn max_divergence(&self) -> f64 {
        self.fold(|c| c.divergence)
    }

    pub fn max_momentum(&self) -> f64 {
        self.fold(|c| c.momentum)
    }

    pub fn max_support(&self) -> f64 {
        self.fold(|c| c.support_m.max(c.support_u))
    }

    pub fn min_gap(&self) -> f64 {
        self.times.iter().map(|c| c.min_gap).fold(f64::INFINITY, f64::min)
    }

    pub fn hull_violations(&self) -> usize {
        self.times.iter().map(|c| c.hull_violations).sum()
    }

    pub fn lambda(&self) -> Vec<f64> {
        self.times.iter().map(|c| c.lambda).collect()
    }

    /// Description of the first violated invariant, if any.
    pub fn failure(&self, tol: &SubsolutionTolerances) -> Option<String> {
        for c in &self.times {
            let t = c.t;
            if !(c.divergence <= tol.divergence) {
                return Some(format!("div m = {:e} at t = {t}", c.divergence));
            }
            if !(c.momentum <= tol.momentum) {
                return Some(format!("momentum residual {:e} at t = {t}", c.momentum));
            }
            if !(c.support_m <= tol.support) || !(c.support_u <= tol.support) {
                return Some(format!(
                    "support excess ({:e}, {:e}) at t = {t}",
                    c.support_m, c.support_u
                ));
            }
            if !(c.trace <= tol.trace) {
                return Some(format!("trace of U {:e} at t = {t}", c.trace));
            }
            if c.hull_violations > 0 {
                return Some(format!(
                    "{} points with e >= chi/n at t = {t}, worst gap {:e} at {:?}",
                    c.hull_violations, c.min_gap, c.worst_point
                ));
            }
        }
        None
    }
}

fn partial(grid: &Grid, values: &[f64], axis: usize) -> ScalarField {
    let mut orders = vec![0; grid.dim()];
    orders[axis] = 1;
    Spectrum::from_values(grid, values).derivative(&orders)
}

/// Relative divergence `max |div m| / max_x sum_j |d_j m_j|`.
pub fn relative_divergence(m: &VectorField) -> f64 {
    relative_divergence_at(m).0
}

/// [`relative_divergence`] with the grid index where `|div m|` peaks.
pub fn relative_divergence_at(m: &VectorField) -> (f64, usize) {
    let grid = m.grid();
    let n = grid.dim();
    let parts: Vec<ScalarField> = (0..n).map(|j| partial(grid, m.component(j), j)).collect();
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    let mut at = 0;
    for q in 0..grid.len() {
        let s: f64 = parts.iter().map(|p| p.values()[q]).sum();
        let a: f64 = parts.iter().map(|p| p.values()[q].abs()).sum();
        if s.abs() > num {
            num = s.abs();
            at = q;
        }
        den = den.max(a);
    }
    (if den == 0.0 { num } else { num / den }, at)
}

/// Relative `max |d_t m + div U + grad q| / max_x sum |terms|`.
pub fn relative_momentum(dmdt: &VectorField, u: &SymTensorField, grad_q: &VectorField) -> f64 {
    relative_momentum_at(dmdt, u, grad_q).0
}

/// [`relative_momentum`] with the grid index where the residual peaks.
pub fn relative_momentum_at(dmdt: &VectorField, u: &SymTensorField, grad_q: &VectorField) -> (f64, usize) {
    let grid = u.grid();
    let n = grid.dim();
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    let mut at = 0;
    for i in 0..n {
        let parts: Vec<ScalarField> = (0..n).map(|j| partial(grid, u.entry(i, j), j)).collect();
        for q in 0..grid.len() {
            let mut s = dmdt.component(i)[q] + grad_q.component(i)[q];
            let mut a = dmdt.component(i)[q].abs() + grad_q.component(i)[q].abs();
            for p in &parts {
                s += p.values()[q];
                a += p.values()[q].abs();
            }
            if s.abs() > num {
                num = s.abs();
                at = q;
            }
            den = den.max(a);
        }
    }
    (if den == 0.0 { num } else { num / den }, at)
}

fn check_subsolution(sub: &Subsolution, _tol: &SubsolutionTolerances) -> Result<ValidityReport> {
    let grid = sub.grid();
    let n = grid.dim();
    let nf = n as f64;
    let p0 = sub
        .rho0
        .values()
        .iter()
        .map(|&r| sub.law.p(r))
        .collect::<Result<Vec<_>>>()?;
    let grad_q = spectral_gradient(&ScalarField::new(grid.clone(), p0)?);
    let outer = sub.domain.outer;
    let mut out = Vec::with_capacity(sub.times.len());
    for &t in &sub.times {
        let s = sub.snapshot(t);
        let level = sub.chi.value(t) / nf;
        let e = sub.e_field(&s);
        let mut min_gap = f64::INFINITY;
        let mut worst = 0;
        let mut violations = 0;
        let mut lambda = f64::NEG_INFINITY;
        for (q, &v) in e.iter().enumerate() {
            lambda = lambda.max(v);
            let gap = level - v;
            if gap < min_gap {
                min_gap = gap;
                worst = q;
            }
            if !(gap > 0.0) {
                violations += 1;
            }
        }
        out.push(TimeCheck {
            t,
            divergence: relative_divergence(&s.m),
            momentum: relative_momentum(&s.dmdt, &s.u, &grad_q),
            support_m: support_excess(&s.m, |x| outer.contains(x)),
            support_u: support_excess(&s.u, |x| outer.contains(x)),
            trace: s.u.trace_defect(),
            min_gap,
            lambda,
            worst_point: grid.position(worst),
            hull_violations: violations,
        });
    }
    debug_assert_eq!(sym_len(n), sub.u_base.components().len());
    Ok(ValidityReport { times: out })
}

/// Least-squares fit `lambda ~ c1 t^2 + c2` with nonnegative coefficients,
/// raised in `c2` until it dominates every sample.
pub fn lambda_envelope(times: &[f64], lambda: &[f64]) -> (f64, f64) {
    let m = times.len() as f64;
    let (mut s4, mut s2, mut sl2, mut sl) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &l) in times.iter().zip(lambda) {
        let t2 = t * t;
        s4 += t2 * t2;
        s2 += t2;
        sl2 += l * t2;
        sl += l;
    }
    let det = s4 * m - s2 * s2;
    let (mut c1, mut c2) = if det.abs() > 1e-14 * (s4 * m).max(f64::MIN_POSITIVE) {
        ((sl2 * m - s2 * sl) / det, (s4 * sl - s2 * sl2) / det)
    } else {
        (0.0, sl / m)
    };
    if c1 < 0.0 {
        c1 = 0.0;
        c2 = sl / m;
    }
    c2 = c2.max(0.0);
    for (&t, &l) in times.iter().zip(lambda) {
        let short = l - (c1 * t * t + c2);
        if short > 0.0 {
            c2 += short;
        }
    }
    (c1, c2)
}

/// Samples of `lambda(t) = sup_x e(rho0, m(t), U(t))` and their envelope.
pub fn lambda_profile(sub: &Subsolution, times: &[f64]) -> (Vec<f64>, (f64, f64)) {
    let l = sub.lambda_samples(times);
    let env = lambda_envelope(times, &l);
    (l, env)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChiMode {
    /// `chi = n max lambda + margin`.
    ConstantMargin { margin: f64 },
    /// Solution of the admissibility ODE from `chi0`.
    OdeAdmissible { chi0: f64 },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChiChoice {
    pub profile: ChiProfile,
    /// `min (chi - n lambda)` over the samples up to `horizon`.
    pub min_gap: f64,
    /// Time up to which `chi > n lambda` holds.
    pub horizon: f64,
}

/// Gauge with `chi > n lambda` on the samples. The ODE mode takes the
/// admissibility constants `(C1, C2)` and may shorten the horizon.
pub fn choose_chi(
    n: usize,
    times: &[f64],
    lambda: &[f64],
    mode: &ChiMode,
    ode_constants: Option<(f64, f64)>,
) -> Result<ChiChoice> {
    let nf = n as f64;
    let t_end = times.iter().cloned().fold(0.0, f64::max);
    let (profile, horizon) = match *mode {
        ChiMode::ConstantMargin { margin } => {
            if !(margin > 0.0) {
                return Err(Error::Domain(format!("chi margin must be positive, got {margin}")));
            }
            let top = lambda.iter().cloned().fold(0.0, f64::max);
            (ChiProfile::constant(nf * top + margin)?, t_end)
        }
        ChiMode::OdeAdmissible { chi0 } => {
            let (c1, c2) = ode_constants
                .ok_or_else(|| Error::Config("ode-admissible chi needs admissibility constants".into()))?;
            let profile = ChiProfile::ode(chi0, c1, c2)?;
            let h = crate::admissibility::maximal_time(&profile, times, lambda, n)?;
            (profile, h.min(t_end))
        }
    };
    let min_gap = times
        .iter()
        .zip(lambda)
        .filter(|(t, _)| **t <= horizon)
        .map(|(&t, &l)| profile.value(t) - nf * l)
        .fold(f64::INFINITY, f64::min);
    Ok(ChiChoice {
        profile,
        min_gap,
        horizon,
    })
}

/// `max |div m|` relative check on a single field, used for initial data.
pub fn divergence_residual(m: &VectorField) -> f64 {
    let s = m.max_abs();
    if s == 0.0 {
        0.0
    } else {
        spectral_divergence(m).max_abs() / s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PeriodicBox;

    fn grid(n: usize) -> Grid {
        Grid::uniform(PeriodicBox::cube(2, 1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn inverse_of_quadratic_law() {
        let g = grid(32);
        let omega = Ball::centered(0.5);
        let b = seeded_bump(
            &g,
            &omega,
            &BumpSpec {
                count: 3,
                amplitude: 0.4,
                seed: 7,
                balance: true,
            },
        )
        .unwrap();
        assert!(b.mean().abs() < 1e-16);
        let law = PressureLaw::gamma(1.0, 2.0).unwrap();
        let rho = density_from_bump(&law, 1.0, &b).unwrap();
        for (r, bv) in rho.values().iter().zip(b.values()) {
            assert!((r - (1.0 + bv).sqrt()).abs() < 1e-12);
            assert!((r * r - 1.0 - bv).abs() < 1e-12);
        }
        for (q, x) in g.positions().iter().enumerate() {
            if !omega.contains(x) {
                assert_eq!(rho.values()[q], 1.0);
            }
        }
    }

    #[test]
    fn bump_below_range_is_rejected() {
        let g = grid(16);
        let b = ScalarField::from_fn(&g, |x| if x[0].abs() < 0.1 { -2.0 } else { 0.0 });
        let law = PressureLaw::gamma(1.0, 2.0).unwrap();
        assert!(matches!(density_from_bump(&law, 1.0, &b), Err(Error::PressureRange(_))));
    }

    #[test]
    fn u1_on_analytic_potential() {
        let g = grid(64);
        let pi = std::f64::consts::PI;
        let u = ScalarField::from_fn(&g, |x| (pi * x[0]).sin() * (pi * x[1]).sin());
        let p = u.scaled(-2.0 * pi * pi);
        let (u1, rep) = build_u1(&u, &p, 1e-10).unwrap();
        assert!(rep.trace < 1e-10);
        assert!(rep.momentum < 1e-8);
        assert!(u1.is_traceless());
    }

    #[test]
    fn envelope_of_quadratic_samples() {
        let t = [0.0, 1.0, -1.0, 2.0, -2.0];
        let l: Vec<f64> = t.iter().map(|s| s * s + 1.0).collect();
        let (c1, c2) = lambda_envelope(&t, &l);
        assert!((c1 - 1.0).abs() < 1e-12 && (c2 - 1.0).abs() < 1e-12);
        let l2 = [0.3, 2.0, 0.1, 0.5, 4.5];
        let (c1, c2) = lambda_envelope(&t, &l2);
        for (s, v) in t.iter().zip(l2) {
            assert!(c1 * s * s + c2 >= v - 1e-14);
        }
    }

    #[test]
    fn constant_margin_gauge() {
        let t = [0.0, 0.5, 1.0];
        let l: Vec<f64> = t.iter().map(|s| s * s + 1.0).collect();
        let c = choose_chi(2, &t, &l, &ChiMode::ConstantMargin { margin: 0.5 }, None).unwrap();
        assert_eq!(c.profile.value(0.3), 4.5);
        assert!((c.min_gap - 0.5).abs() < 1e-15);
        let c = choose_chi(2, &t, &[0.0; 3], &ChiMode::ConstantMargin { margin: 1.0 }, None).unwrap();
        assert_eq!(c.profile.value(0.0), 1.0);
    }

    #[test]
    fn trivial_subsolution_is_valid() {
        let g = grid(32);
        let sub = Subsolution::trivial(
            &g,
            PressureLaw::gamma(1.0, 2.0).unwrap(),
            1.0,
            Domain::default_2d(),
            ChiProfile::constant(1.0).unwrap(),
            1.0,
            5,
        );
        let r = sub.validate(&SubsolutionTolerances::default()).unwrap();
        assert_eq!(r.hull_violations(), 0);
        assert!((r.min_gap() - 0.5).abs() < 1e-15);
        let (l, env) = lambda_profile(&sub, &sub.times);
        assert!(l.iter().all(|&v| v == 0.0));
        assert_eq!(env, (0.0, 0.0));
        let q = sub.q0(0.3).unwrap();
        assert!(q.values().iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }
}
