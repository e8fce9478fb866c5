//! Batch pipeline: run configuration, the `build`, `perturb`, `verify` and
//! `chi` commands, and their reports.
//!
//! Commands return `Err` only for unusable input (bad configuration, missing
//! or malformed files). Numerical failures are recorded as failed stages of
//! the returned report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admissibility::{
    admissibility_constants, chi_ode_solve, family_for, maximal_time, pointwise_admissibility, weak_residual,
    AdmissibilityConstants, WeakKind,
};
use crate::bogovskii::{antisymmetric_lift, bogovskii_solve, BogovskiiParams, LIFT_INPUT_TOL};
use crate::chi::ChiProfile;
use crate::convex_integration::{initial_data_extract, iterate, PerturbationParams};
use crate::domain::{Domain, StarDomain};
use crate::error::{Error, Result};
use crate::field::{
    sfld, spectral_divergence_rows, spectral_gradient, support_excess, Ball, Field, Grid, PeriodicBox,
    ScalarField, SymTensorField, VectorField,
};
use crate::persist::{load_snapshot, load_subsolution, save_subsolution, write_json};
use crate::poisson::{compact_poisson, pressure_deviation, MEAN_TOL};
use crate::pressure::PressureLaw;
use crate::report::{Check, Provenance, RunReport, StageReport};
use crate::subsolution::{
    build_u1, choose_chi, density_from_bump, relative_divergence_at, relative_momentum_at, seeded_bump,
    uniform_times, BumpSpec, BuildTolerances, ChiMode, LinearPart, Subsolution, SubsolutionTolerances,
    ValidityReport,
};
use crate::geometry::e_raw;

pub const REPORT: &str = "report.json";
pub const SUMMARY: &str = "summary.txt";
pub const TRACE: &str = "trace.json";
pub const INITIAL_DATA: &str = "m0.sfld";

/// Relative `|div U1 + grad p_eps|`; spectral up to the Nyquist mode.
pub const U1_MOMENTUM_TOL: f64 = 1e-6;
/// `max |tr A| / max |A|` of the lift.
pub const LIFT_TRACE_TOL: f64 = 1e-10;
/// `max |div m_slope| / max |m_slope|`.
pub const LIFT_DIV_TOL: f64 = 1e-8;
/// Absolute bound on the worst-case admissibility field.
pub const ADMISSIBILITY_TOL: f64 = 1e-10;
/// Relative mismatch between stored snapshots and their reconstruction.
pub const STORED_TOL: f64 = 1e-12;
/// Closed form against the numerical gauge.
pub const CHI_ODE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureKind {
    /// `p = kappa rho^gamma`
    Gamma,
    /// `p = rho`
    Identity,
    /// Monotone table `table_rho`, `table_p`.
    Tabulated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeMode {
    /// `chi = n max lambda + chi_margin`
    ConstantMargin,
    /// Solution of the admissibility ODE from `chi0`.
    OdeAdmissible,
}

/// Flat run configuration. Every key is optional; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Space dimension, 2 or 3.
    pub dim: usize,
    /// Grid points per axis.
    pub grid: usize,
    /// The periodic box is `[-w, w]^n`.
    pub box_half_width: f64,
    /// Radius of the centred ball where the density varies.
    pub omega_radius: f64,
    /// Mollifier radius.
    pub epsilon: f64,
    /// Radius of the outer domain carrying all fields.
    pub outer_radius: f64,
    /// The outer domain is star-shaped about the ball of this radius.
    pub star_radius: f64,
    pub rho_bar: f64,
    pub pressure: PressureKind,
    pub kappa: f64,
    pub gamma: f64,
    pub table_rho: Vec<f64>,
    pub table_p: Vec<f64>,
    pub bump_count: usize,
    /// Peak of `p(rho0) - p(rho_bar)`; 0 gives the constant state.
    pub bump_amplitude: f64,
    /// Remove the mean of the bump so that the density is compatible.
    pub balance_bump: bool,
    pub seed: u64,
    pub horizon: f64,
    pub time_samples: usize,
    pub chi_mode: GaugeMode,
    pub chi_margin: f64,
    pub chi0: f64,
    pub perturb_steps: usize,
    pub perturb_frequency: u32,
    pub perturb_margin: f64,
    pub perturb_budget: usize,
    pub perturb_safety: f64,
    pub stagnation: usize,
    pub bogovskii_directions: usize,
    /// Multiplies every tolerance. Recorded in each report.
    pub tol_scale: f64,
    /// Output directory. Not part of the configuration hash.
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PerturbationParams::default();
        Self {
            dim: 2,
            grid: 128,
            box_half_width: 1.0,
            omega_radius: 0.5,
            epsilon: 0.1,
            outer_radius: 0.8,
            star_radius: 0.4,
            rho_bar: 1.0,
            pressure: PressureKind::Gamma,
            kappa: 1.0,
            gamma: 2.0,
            table_rho: Vec::new(),
            table_p: Vec::new(),
            bump_count: 4,
            bump_amplitude: 0.2,
            balance_bump: true,
            seed: 1,
            horizon: 1.0,
            time_samples: 33,
            chi_mode: GaugeMode::ConstantMargin,
            chi_margin: 0.1,
            chi0: 1.0,
            perturb_steps: 10,
            perturb_frequency: p.frequency,
            perturb_margin: p.margin,
            perturb_budget: p.budget,
            perturb_safety: p.safety,
            stagnation: p.stagnation,
            bogovskii_directions: BogovskiiParams::default().directions,
            tol_scale: 1.0,
            out: "run".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dim == 2 || self.dim == 3) {
            return bad(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.grid < 8 || self.grid % 2 != 0 {
            return bad(format!("grid must be even and at least 8, got {}", self.grid));
        }
        if !(self.tol_scale > 0.0 && self.tol_scale.is_finite()) {
            return bad(format!("tol_scale must be positive, got {}", self.tol_scale));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.time_samples < 2 {
            return bad("need horizon > 0 and time_samples >= 2".into());
        }
        if !(self.rho_bar > 0.0) || !(self.bump_amplitude >= 0.0) {
            return bad("need rho_bar > 0 and bump_amplitude >= 0".into());
        }
        if self.bump_amplitude > 0.0 && self.bump_count == 0 {
            return bad("bump_count must be positive".into());
        }
        if !(self.chi_margin > 0.0) || !(self.chi0 > 0.0) {
            return bad("chi_margin and chi0 must be positive".into());
        }
        if self.bogovskii_directions < 8 {
            return bad("bogovskii_directions must be at least 8".into());
        }
        self.law().map_err(|e| Error::Config(e.to_string()))?;
        self.domain()
            .validate(self.grid()?.bbox())
            .map_err(|e| Error::Config(e.to_string()))?;
        self.perturbation().validate()
    }

    pub fn law(&self) -> Result<PressureLaw> {
        match self.pressure {
            PressureKind::Gamma => PressureLaw::gamma(self.kappa, self.gamma),
            PressureKind::Identity => Ok(PressureLaw::identity()),
            PressureKind::Tabulated => PressureLaw::tabulated(self.table_rho.clone(), self.table_p.clone()),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let bbox = PeriodicBox::cube(self.dim, self.box_half_width).map_err(|e| Error::Config(e.to_string()))?;
        Grid::uniform(bbox, self.grid).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn domain(&self) -> Domain {
        Domain {
            omega: Ball::centered(self.omega_radius),
            epsilon: self.epsilon,
            outer: StarDomain {
                center: [0.0; 3],
                radius: self.outer_radius,
                star_radius: self.star_radius,
            },
        }
    }

    pub fn bump(&self) -> BumpSpec {
        BumpSpec {
            count: self.bump_count,
            amplitude: self.bump_amplitude,
            seed: self.seed,
            balance: self.balance_bump,
        }
    }

    pub fn gauge(&self) -> ChiMode {
        match self.chi_mode {
            GaugeMode::ConstantMargin => ChiMode::ConstantMargin { margin: self.chi_margin },
            GaugeMode::OdeAdmissible => ChiMode::OdeAdmissible { chi0: self.chi0 },
        }
    }

    pub fn perturbation(&self) -> PerturbationParams {
        PerturbationParams {
            frequency: self.perturb_frequency,
            margin: self.perturb_margin,
            budget: self.perturb_budget,
            seed: self.seed,
            safety: self.perturb_safety,
            stagnation: self.stagnation,
            ..PerturbationParams::default()
        }
    }

    pub fn bogovskii(&self) -> BogovskiiParams {
        BogovskiiParams {
            directions: self.bogovskii_directions,
            ..BogovskiiParams::default()
        }
    }

    pub fn build_tolerances(&self) -> BuildTolerances {
        scaled_build(self.tol_scale)
    }

    pub fn subsolution_tolerances(&self) -> SubsolutionTolerances {
        scaled_subsolution(self.tol_scale)
    }

    /// SHA-256 of the canonical JSON form, with `out` cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out.clear();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn scaled_build(s: f64) -> BuildTolerances {
    let mut t = BuildTolerances::default();
    t.poisson.residual *= s;
    t.poisson.support *= s;
    t.bogovskii.residual *= s;
    t.bogovskii.support *= s;
    t.u1_trace *= s;
    t
}

fn scaled_subsolution(s: f64) -> SubsolutionTolerances {
    let t = SubsolutionTolerances::default();
    SubsolutionTolerances {
        divergence: t.divergence * s,
        momentum: t.momentum * s,
        support: t.support * s,
        trace: t.trace * s,
    }
}

/// Writes `report.json` and `summary.txt` into `dir`.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join(REPORT), report)?;
    std::fs::write(dir.join(SUMMARY), report.summary())?;
    Ok(())
}

/// Reads a report from a file or from `report.json` inside a directory.
pub fn cmd_report(path: &Path) -> Result<RunReport> {
    let file: PathBuf = if path.is_dir() { path.join(REPORT) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", file.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn fail_stage(name: &str, e: &Error) -> StageReport {
    let mut s = StageReport::failed(name, e.to_string());
    match *e {
        Error::IncompatibleDensity { mean, limit } | Error::CompatibilityViolated { mean, limit } => {
            s.checks.push(Check::at_most("mean", mean.abs(), limit));
        }
        Error::ChiTooSmall { chi0, required } => {
            s.checks.push(Check::above("chi0", chi0, required));
        }
        _ => {}
    }
    s
}

/// Runs `f` as stage `name`; on error a failed block is recorded and `None`
/// returned.
fn stage<T>(report: &mut RunReport, name: &str, f: impl FnOnce() -> Result<(T, StageReport)>) -> Option<T> {
    match f() {
        Ok((v, s)) => report.push(s).then_some(v),
        Err(e) => {
            report.push(fail_stage(name, &e));
            None
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Density generation, compact Poisson, `U1`, divergence solve and lift,
/// each as a reported stage.
fn linear_stages(cfg: &RunConfig, report: &mut RunReport) -> Result<Option<(ScalarField, LinearPart)>> {
    let law = cfg.law()?;
    let grid = cfg.grid()?;
    let domain = cfg.domain();
    let tol = cfg.build_tolerances();
    let s = cfg.tol_scale;

    let Some(rho0) = stage(report, "density", || {
        let bump = seeded_bump(&grid, &domain.omega, &cfg.bump())?;
        let rho0 = density_from_bump(&law, cfg.rho_bar, &bump)?;
        let lo = rho0.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rho0.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let block = StageReport::new("density", vec![Check::above("min_density", lo, 0.0)])
            .with_data(&serde_json::json!({ "min": lo, "max": hi, "bump_integral": bump.integral() }));
        Ok((rho0, block))
    }) else {
        return Ok(None);
    };

    let Some(p1) = stage(report, "pressure_deviation", || {
        let p1 = pressure_deviation(&rho0, &law, cfg.rho_bar)?;
        let rel = ratio(p1.mean().abs(), p1.max_abs());
        Ok((p1, StageReport::new("pressure_deviation", vec![Check::at_most("relative_mean", rel, MEAN_TOL)])))
    }) else {
        return Ok(None);
    };

    if p1.max_abs() == 0.0 {
        // Constant state: every stage is exact.
        let zero_t = SymTensorField::zeros(&grid, true);
        for (name, checks) in [
            ("compact_poisson", vec![Check::at_most("residual", 0.0, tol.poisson.residual), Check::at_most("support_excess", 0.0, tol.poisson.support)]),
            ("u1", vec![Check::at_most("trace", 0.0, tol.u1_trace), Check::at_most("momentum", 0.0, U1_MOMENTUM_TOL * s)]),
            ("bogovskii", vec![Check::at_most("residual", 0.0, tol.bogovskii.residual), Check::at_most("support_excess", 0.0, tol.bogovskii.support)]),
            ("lift", vec![Check::at_most("trace_a", 0.0, LIFT_TRACE_TOL * s), Check::at_most("div_m_slope", 0.0, LIFT_DIV_TOL * s), Check::at_most("momentum", 0.0, tol.bogovskii.residual)]),
            ("assembly", vec![Check::at_most("system", 0.0, tol.bogovskii.residual)]),
        ] {
            report.push(StageReport::new(name, checks));
        }
        let linear = LinearPart {
            p1,
            u1: zero_t.clone(),
            u2: zero_t.clone(),
            u_tilde: zero_t,
            m_slope: VectorField::zeros(&grid),
            diagnostics: Default::default(),
        };
        return Ok(Some((rho0, linear)));
    }

    let Some(poisson) = stage(report, "compact_poisson", || {
        let sol = compact_poisson(&p1, domain.epsilon, &domain.omega)?;
        let checks = vec![
            Check::at_most("residual", sol.residual_linf, tol.poisson.residual),
            Check::at_most("support_excess", sol.support_excess, tol.poisson.support),
        ];
        Ok((sol, StageReport::new("compact_poisson", checks)))
    }) else {
        return Ok(None);
    };

    let Some(u1) = stage(report, "u1", || {
        // The trace is judged here rather than inside `build_u1`.
        let (u1, r) = build_u1(&poisson.u, &poisson.p_eps, f64::INFINITY)?;
        let checks = vec![
            Check::at_most("trace", r.trace, tol.u1_trace),
            Check::at_most("momentum", r.momentum, U1_MOMENTUM_TOL * s),
        ];
        Ok((u1, StageReport::new("u1", checks)))
    }) else {
        return Ok(None);
    };

    let Some(div) = stage(report, "bogovskii", || {
        let d = bogovskii_solve(&poisson.p_smooth, &domain.outer, &cfg.bogovskii(), None)?;
        let checks = vec![
            Check::at_most("residual", d.residual_linf, tol.bogovskii.residual),
            Check::at_most("support_excess", d.support_excess, tol.bogovskii.support),
        ];
        Ok((d, StageReport::new("bogovskii", checks)))
    }) else {
        return Ok(None);
    };

    let Some(lift) = stage(report, "lift", || {
        let l = antisymmetric_lift(&poisson.p_smooth, &div.phi)?;
        let d = l.diagnostics;
        let checks = vec![
            Check::at_most("input_residual", d.input_residual, LIFT_INPUT_TOL),
            Check::at_most("trace_a", d.trace, LIFT_TRACE_TOL * s),
            Check::at_most("div_m_slope", d.div_m, LIFT_DIV_TOL * s),
            Check::at_most("momentum", d.momentum, tol.bogovskii.residual),
        ];
        Ok((l, StageReport::new("lift", checks)))
    }) else {
        return Ok(None);
    };

    let Some(linear) = stage(report, "assembly", || {
        let u_tilde = u1.add(&lift.u2)?;
        let gp = spectral_gradient(&p1);
        let r = spectral_divergence_rows(&u_tilde)
            .add_scaled(1.0, &lift.m_slope)?
            .add_scaled(1.0, &gp)?
            .max_abs();
        let system = ratio(r, gp.max_abs());
        let block = StageReport::new("assembly", vec![Check::at_most("system", system, tol.bogovskii.residual)]);
        let linear = LinearPart {
            p1: p1.clone(),
            u1: u1.clone(),
            u2: lift.u2.clone(),
            u_tilde,
            m_slope: lift.m_slope.clone(),
            diagnostics: Default::default(),
        };
        Ok((linear, block))
    }) else {
        return Ok(None);
    };
    Ok(Some((rho0, linear)))
}

/// Checks of a validity report against `tol`.
fn validity_stage(name: &str, v: &ValidityReport, tol: &SubsolutionTolerances) -> StageReport {
    let worst = v
        .times
        .iter()
        .min_by(|a, b| a.min_gap.total_cmp(&b.min_gap))
        .copied();
    let mut gap = Check::above("min_hull_gap", v.min_gap(), 0.0);
    if let Some(w) = worst {
        gap = gap.located(w.t, w.worst_point);
    }
    let trace = v.times.iter().map(|c| c.trace).fold(0.0, f64::max);
    StageReport::new(
        name,
        vec![
            Check::at_most("divergence", v.max_divergence(), tol.divergence),
            Check::at_most("momentum", v.max_momentum(), tol.momentum),
            Check::at_most("support_excess", v.max_support(), tol.support),
            Check::at_most("trace", trace, tol.trace),
            gap,
        ],
    )
    .with_data(&serde_json::json!({ "lambda": v.lambda(), "times": v.times.iter().map(|c| c.t).collect::<Vec<_>>() }))
}

fn admissibility_stage(sub: &Subsolution, scale: f64) -> Result<StageReport> {
    let a = pointwise_admissibility(sub, sub.rho_bar)?;
    let c = admissibility_constants(&sub.rho0, &sub.law, sub.rho_bar)?;
    Ok(StageReport::new(
        "admissibility",
        vec![
            Check::at_most("worst_case", a.max_worst_case(), ADMISSIBILITY_TOL * scale),
            Check::at_most("dominance_defect", a.dominance_defect, ADMISSIBILITY_TOL * scale),
        ],
    )
    .with_data(&serde_json::json!({ "constants": c, "actual": a.actual, "worst_case": a.worst_case })))
}

/// Density through gauge selection; persists the subsolution into `out`.
pub fn cmd_build(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let hash = cfg.hash();
    let mut report = RunReport::new("build", Provenance::new(Some(hash.clone()), Some(cfg.seed), cfg.tol_scale));
    std::fs::create_dir_all(out)?;
    if let Some((rho0, linear)) = linear_stages(cfg, &mut report)? {
        if let Some(sub) = assemble(cfg, rho0, &linear, &mut report)? {
            save_subsolution(out, &sub, Some(hash), Some(cfg.seed))?;
        }
    }
    write_report(out, &report)?;
    Ok(report)
}

/// Gauge selection and the validity and admissibility checks.
fn assemble(cfg: &RunConfig, rho0: ScalarField, linear: &LinearPart, report: &mut RunReport) -> Result<Option<Subsolution>> {
    let law = cfg.law()?;
    let n = cfg.dim;
    let tol = cfg.subsolution_tolerances();
    let mode = cfg.gauge();
    let base = Subsolution::from_linear(
        rho0,
        law,
        cfg.rho_bar,
        cfg.domain(),
        linear,
        ChiProfile::constant(1.0)?,
        cfg.horizon,
        cfg.time_samples,
    );
    let Some((chi, horizon)) = stage(report, "chi", || {
        let lambda = base.lambda_samples(&base.times);
        let constants = match mode {
            ChiMode::OdeAdmissible { .. } => {
                let c = admissibility_constants(&base.rho0, &base.law, cfg.rho_bar)?;
                Some((c.big_c1, c.big_c2))
            }
            ChiMode::ConstantMargin { .. } => None,
        };
        let choice = choose_chi(n, &base.times, &lambda, &mode, constants)?;
        // A gauge that meets n lambda before the horizon shortens the run.
        let horizon = if choice.horizon < cfg.horizon {
            0.99 * choice.horizon
        } else {
            cfg.horizon
        };
        let block = StageReport::new("chi", vec![Check::above("min_gap", choice.min_gap, 0.0)]).with_data(
            &serde_json::json!({ "profile": choice.profile, "horizon": horizon, "lambda": lambda, "times": base.times }),
        );
        Ok(((choice.profile, horizon), block))
    }) else {
        return Ok(None);
    };
    let sub = Subsolution {
        chi,
        horizon,
        times: uniform_times(horizon, cfg.time_samples),
        ..base
    };
    let Some(()) = stage(report, "subsolution", || {
        let v = sub.check(&tol)?;
        Ok(((), validity_stage("subsolution", &v, &tol)))
    }) else {
        return Ok(None);
    };
    if matches!(chi, ChiProfile::Ode { .. }) {
        let Some(()) = stage(report, "admissibility", || Ok(((), admissibility_stage(&sub, cfg.tol_scale)?))) else {
            return Ok(None);
        };
    }
    Ok(Some(sub))
}

/// `steps` perturbation steps on the subsolution stored in `input`.
pub fn cmd_perturb(cfg: &RunConfig, input: &Path, steps: usize, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let (sub, _) = load_subsolution(input)?;
    let hash = cfg.hash();
    let mut report = RunReport::new("perturb", Provenance::new(Some(hash.clone()), Some(cfg.seed), cfg.tol_scale));
    let tol = cfg.subsolution_tolerances();
    let params = cfg.perturbation();
    std::fs::create_dir_all(out)?;
    let result = stage(&mut report, "perturbation", || {
        let (next, trace) = iterate(&sub, steps, &params, &tol)?;
        write_json(&out.join(TRACE), &trace)?;
        let acc: Vec<_> = trace.records.iter().filter(|r| r.accepted).collect();
        let gap = acc.iter().map(|r| -r.max_hull_violation).fold(f64::INFINITY, f64::min);
        let div = acc.iter().map(|r| r.divergence).fold(0.0, f64::max);
        let mom = acc.iter().map(|r| r.momentum).fold(0.0, f64::max);
        let weak = acc.iter().map(|r| r.weak_linear).fold(0.0, f64::max);
        let mut checks = vec![Check::at_most("energy_loss", -trace.total_gain(), 0.0)];
        if !acc.is_empty() {
            checks.extend([
                Check::above("min_hull_gap", gap, 0.0),
                Check::at_most("divergence", div, tol.divergence),
                Check::at_most("momentum", mom, tol.momentum),
                Check::at_most("weak_linear", weak, tol.momentum),
            ]);
        }
        let block = StageReport::new("perturbation", checks).with_data(&serde_json::json!({
            "steps": steps,
            "accepted": acc.len(),
            "energy_gain": trace.total_gain(),
            "final_deficit": trace.final_deficit,
            "stopped_early": trace.stopped_early,
        }));
        Ok((next, block))
    });
    if let Some(next) = result {
        let ok = stage(&mut report, "subsolution", || {
            let v = next.check(&tol)?;
            Ok(((), validity_stage("subsolution", &v, &tol)))
        });
        if ok.is_some() {
            stage(&mut report, "initial_data", || {
                let d = initial_data_extract(&next);
                sfld::save(&out.join(INITIAL_DATA), d.m0.grid(), &d.m0.component_slices())?;
                let block = StageReport::new("initial_data", vec![Check::at_most("divergence", d.divergence, tol.divergence)])
                    .with_data(&serde_json::json!({ "energy_defect": d.defect }));
                Ok(((), block))
            });
        }
        save_subsolution(out, &next, Some(hash), Some(cfg.seed))?;
    }
    write_report(out, &report)?;
    Ok(report)
}

/// Largest pointwise `|a - b|` over components, relative to `max |b|`, with
/// its grid index.
fn mismatch<F: Field>(a: &F, b: &F) -> (f64, usize) {
    let (ca, cb) = (a.component_slices(), b.component_slices());
    let mut worst = (0.0f64, 0usize);
    for (x, y) in ca.iter().zip(&cb) {
        for (q, (u, v)) in x.iter().zip(y.iter()).enumerate() {
            let d = (u - v).abs();
            if d > worst.0 {
                worst = (d, q);
            }
        }
    }
    (ratio(worst.0, b.max_abs()), worst.1)
}

/// Per-time residuals computed from the stored snapshot files.
#[derive(Clone, Copy, Debug, Serialize)]
struct StoredCheck {
    t: f64,
    stored: (f64, usize),
    divergence: (f64, usize),
    momentum: (f64, usize),
    support: f64,
    trace: f64,
    gap: (f64, usize),
}

/// Checks a subsolution directory from its stored snapshot files, and
/// independently through the reconstruction from its manifest.
pub fn cmd_verify(dir: &Path, tol_scale: f64) -> Result<RunReport> {
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        return Err(Error::Config(format!("tol_scale must be positive, got {tol_scale}")));
    }
    let (sub, man) = load_subsolution(dir)?;
    let tol = scaled_subsolution(tol_scale);
    let mut report = RunReport::new("verify", Provenance::new(man.config_hash.clone(), man.seed, tol_scale));
    let grid = sub.grid().clone();
    let n = grid.dim();
    let p0 = sub.rho0.values().iter().map(|&r| sub.law.p(r)).collect::<Result<Vec<_>>>()?;
    let grad_q = spectral_gradient(&ScalarField::new(grid.clone(), p0)?);
    let outer = sub.domain.outer;

    stage(&mut report, "stored_fields", || {
        let mut rows = Vec::with_capacity(man.times.len());
        for i in 0..man.times.len() {
            let s = load_snapshot(dir, &man, i)?;
            let r = sub.snapshot(s.t);
            let stored = [mismatch(&s.m, &r.m), mismatch(&s.dmdt, &r.dmdt), mismatch(&s.u, &r.u)]
                .into_iter()
                .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
            let level = sub.chi.value(s.t) / n as f64;
            let rho = sub.rho0.values();
            let mut gap = (f64::INFINITY, 0);
            for q in 0..grid.len() {
                let g = level - e_raw(n, rho[q], &s.m.at(q), &s.u.at(q));
                if !(g >= gap.0) {
                    gap = (g, q);
                }
            }
            rows.push(StoredCheck {
                t: s.t,
                stored,
                divergence: relative_divergence_at(&s.m),
                momentum: relative_momentum_at(&s.dmdt, &s.u, &grad_q),
                support: support_excess(&s.m, |x| outer.contains(x)).max(support_excess(&s.u, |x| outer.contains(x))),
                trace: s.u.trace_defect(),
                gap,
            });
        }
        let worst = |f: &dyn Fn(&StoredCheck) -> (f64, usize)| {
            rows.iter()
                .map(|r| (f(r), r.t))
                .fold(((0.0, 0), 0.0), |a, b| if b.0 .0 > a.0 .0 || b.0 .0.is_nan() { b } else { a })
        };
        let located = |c: Check, w: ((f64, usize), f64)| c.located(w.1, grid.position(w.0 .1));
        let st = worst(&|r| r.stored);
        let dv = worst(&|r| r.divergence);
        let mo = worst(&|r| r.momentum);
        let gp = rows
            .iter()
            .map(|r| (r.gap, r.t))
            .fold(((f64::INFINITY, 0), 0.0), |a, b| if !(b.0 .0 >= a.0 .0) { b } else { a });
        let support = rows.iter().map(|r| r.support).fold(0.0, f64::max);
        let trace = rows.iter().map(|r| r.trace).fold(0.0, f64::max);
        let checks = vec![
            located(Check::at_most("stored_vs_rebuilt", st.0 .0, STORED_TOL * tol_scale), st),
            located(Check::at_most("divergence", dv.0 .0, tol.divergence), dv),
            located(Check::at_most("momentum", mo.0 .0, tol.momentum), mo),
            Check::at_most("support_excess", support, tol.support),
            Check::at_most("trace", trace, tol.trace),
            located(Check::above("min_hull_gap", gp.0 .0, 0.0), gp),
        ];
        Ok(((), StageReport::new("stored_fields", checks)))
    });

    stage(&mut report, "weak_linear", || {
        let fam = family_for(&sub, WeakKind::Linear)?;
        let w = weak_residual(WeakKind::Linear, &sub, &fam)?;
        Ok(((), StageReport::new("weak_linear", vec![Check::at_most("max_relative", w.max_relative(), tol.momentum)])))
    });

    if matches!(sub.chi, ChiProfile::Ode { .. }) {
        stage(&mut report, "admissibility", || Ok(((), admissibility_stage(&sub, tol_scale)?)));
    }
    Ok(report)
}

/// One row of the gauge table.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChiRow {
    pub t: f64,
    pub closed_form: f64,
    pub numeric: f64,
}

/// Admissibility constants of the configured density, the gauge from `chi0`
/// in closed form and numerically, and the maximal time.
pub fn cmd_chi(cfg: &RunConfig, out: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let mut report = RunReport::new(
        "chi",
        Provenance::new(Some(cfg.hash()), Some(cfg.seed), cfg.tol_scale),
    );
    if let Some((rho0, linear)) = linear_stages(cfg, &mut report)? {
        let base = Subsolution::from_linear(
            rho0,
            cfg.law()?,
            cfg.rho_bar,
            cfg.domain(),
            &linear,
            ChiProfile::constant(1.0)?,
            cfg.horizon,
            cfg.time_samples,
        );
        let constants: Option<AdmissibilityConstants> = stage(&mut report, "constants", || {
            let c = admissibility_constants(&base.rho0, &base.law, cfg.rho_bar)?;
            Ok((c, StageReport::new("constants", Vec::new()).with_data(&c)))
        });
        if let Some(c) = constants {
            let sol = stage(&mut report, "chi_ode", || {
                let s = chi_ode_solve(cfg.chi0, &c, cfg.horizon, cfg.time_samples)?;
                let rows: Vec<ChiRow> = s
                    .times
                    .iter()
                    .zip(&s.closed_form)
                    .zip(&s.numeric)
                    .map(|((&t, &c), &v)| ChiRow {
                        t,
                        closed_form: c,
                        numeric: v,
                    })
                    .collect();
                let block = StageReport::new(
                    "chi_ode",
                    vec![Check::at_most("closed_vs_numeric", s.max_relative_difference, CHI_ODE_TOL * cfg.tol_scale)],
                )
                .with_data(&serde_json::json!({ "positivity_horizon": finite(s.horizon), "table": rows }));
                Ok((s, block))
            });
            if let Some(s) = sol {
                stage(&mut report, "maximal_time", || {
                    let lambda = base.lambda_samples(&base.times);
                    let t_bar = maximal_time(&s.profile, &base.times, &lambda, cfg.dim)?;
                    let block = StageReport::new("maximal_time", vec![Check::above("t_bar", t_bar, 0.0)])
                        .with_data(&serde_json::json!({
                            "t_bar": finite(t_bar),
                            "unbounded": t_bar.is_infinite(),
                            "positivity_horizon": finite(s.horizon),
                            "required_chi0": cfg.dim as f64 * lambda[0],
                        }));
                    Ok(((), block))
                });
            }
        }
    }
    if let Some(dir) = out {
        write_report(dir, &report)?;
    }
    Ok(report)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
