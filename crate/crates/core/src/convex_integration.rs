//! Perturbation of strict subsolutions by localized waves: each step draws a
//! cutoff and a wave-cone direction between two points of `K`, sizes the
//! amplitude so the perturbed states stay in the hull with a margin, adds
//! the exact potential wave, and accepts only after re-verifying every
//! subsolution invariant and a strict energy gain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissibility::{family_for, weak_residual, WeakKind};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::geometry::{e_raw, k_pair_direction, max_amplitude, wave_cone_residual, HullParams, State};
use crate::quadrature::simpson_weights;
use crate::subsolution::{relative_divergence, Snapshot, Subsolution, SubsolutionTolerances};
use crate::wave::{Cutoff, LocalizedWave};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationParams {
    /// Oscillations of the wave across the shortest box side.
    pub frequency: u32,
    /// Hull margin kept by the sized amplitude.
    pub margin: f64,
    /// Candidate directions per step.
    pub budget: usize,
    pub seed: u64,
    /// Spatial cutoff radius range, as fractions of the outer radius.
    pub radius_range: (f64, f64),
    /// Time-cutoff radius of the first step, as a fraction of the horizon.
    pub time_radius: f64,
    /// Fraction of the largest admissible amplitude actually used.
    pub safety: f64,
    /// Consecutive rejections that stop an iteration.
    pub stagnation: usize,
}

impl Default for PerturbationParams {
    fn default() -> Self {
        Self {
            frequency: 3,
            margin: 1e-2,
            budget: 32,
            seed: 0,
            radius_range: (0.5, 0.7),
            time_radius: 1.0,
            safety: 0.9,
            stagnation: 5,
        }
    }
}

impl PerturbationParams {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.radius_range;
        if self.frequency < 2
            || !(self.margin > 0.0)
            || self.budget == 0
            || !(a > 0.0 && a <= b && b < 1.0)
            || !(self.time_radius > 0.0 && self.time_radius <= 1.0)
            || !(self.safety > 0.0 && self.safety < 1.0)
        {
            return Err(Error::Config(format!("invalid perturbation parameters {self:?}")));
        }
        Ok(())
    }
}

/// `int_{outer} (rho0 chi(t) - |m(t)|^2)`.
pub fn deficit(sub: &Subsolution, t: f64) -> f64 {
    deficit_of(sub, &sub.momentum_at(t), t, |_| true)
}

fn deficit_of(sub: &Subsolution, m: &VectorField, t: f64, also: impl Fn(&[f64; 3]) -> bool) -> f64 {
    let grid = sub.grid();
    let chi = sub.chi.value(t);
    let rho = sub.rho0.values();
    let outer = sub.domain.outer;
    let mut acc = 0.0;
    for q in 0..grid.len() {
        let x = grid.position(q);
        if outer.contains(&x) && also(&x) {
            let mq = m.at(q);
            acc += rho[q] * chi - mq.iter().map(|v| v * v).sum::<f64>();
        }
    }
    acc * grid.cell_volume()
}

/// `int int |m|^2` by Simpson's rule over the time samples.
pub fn space_time_energy(sub: &Subsolution) -> f64 {
    let t = &sub.times;
    if t.len() < 3 {
        return sub.energy_at(t[0]);
    }
    let w = simpson_weights(t.len(), t[1] - t[0]);
    t.iter().zip(&w).map(|(&s, w)| w * sub.energy_at(s)).sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    /// Trial index within the iteration.
    pub step: usize,
    /// Exhaustion level: number of previously accepted steps.
    pub level: usize,
    pub accepted: bool,
    pub cause: Option<String>,
    pub deficit_before: f64,
    pub deficit_after: f64,
    /// Space-time `int int |m|^2`.
    pub energy_before: f64,
    pub energy_after: f64,
    /// `max (e - chi/n)` of the trial; negative means strictly inside.
    pub max_hull_violation: f64,
    pub divergence: f64,
    pub momentum: f64,
    pub weak_linear: f64,
    pub localization_defect: f64,
    /// Deficit at `t = 0` over the cutoff disc before the step.
    pub cutoff_deficit: f64,
    pub wave: Option<LocalizedWave>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<StepRecord>,
    /// `min gain / cutoff_deficit^2` over accepted steps.
    pub beta_hat: Option<f64>,
    pub final_deficit: f64,
    pub stopped_early: bool,
}

impl IterationTrace {
    pub fn accepted(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    pub fn total_gain(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.energy_after - r.energy_before)
            .sum()
    }
}

/// Snapshots of the sample times inside `[0, t_max)`.
fn window_snapshots(sub: &Subsolution, t_max: f64) -> Vec<Snapshot> {
    sub.times
        .iter()
        .filter(|&&t| t < t_max)
        .map(|&t| sub.snapshot(t))
        .collect()
}

struct Region {
    points: Vec<usize>,
}

fn region_samples(sub: &Subsolution, cutoff: &Cutoff) -> Region {
    let grid = sub.grid();
    let points = (0..grid.len()).filter(|&q| cutoff.covers(&grid.position(q))).collect();
    Region { points }
}

/// Largest `s` with `e(z +- s w) <= chi/n - margin` at every region sample,
/// where `w` is the unit-amplitude wave evaluated exactly. `e` is convex
/// in `s`, so the admissible set is an interval.
fn size_amplitude(sub: &Subsolution, region: &Region, snaps: &[Snapshot], wave: &LocalizedWave, margin: f64) -> f64 {
    let n = sub.dim();
    let grid = sub.grid();
    let rho = sub.rho0.values();
    let vals: Vec<Vec<State>> = snaps
        .iter()
        .map(|snap| {
            region
                .points
                .iter()
                .map(|&q| {
                    let v = wave.eval(&grid.position(q), snap.t);
                    State {
                        n,
                        m: [v.m[0], v.m[1], 0.0],
                        u: [[v.a, v.b, 0.0], [v.b, -v.a, 0.0], [0.0; 3]],
                        q: 0.0,
                    }
                })
                .collect()
        })
        .collect();
    let ok = |s: f64| {
        snaps.iter().zip(&vals).all(|(snap, w)| {
            let level = sub.chi.value(snap.t) / n as f64 - margin;
            region.points.iter().zip(w).all(|(&q, wq)| {
                let base = State {
                    n,
                    m: snap.m.at(q),
                    u: snap.u.at(q),
                    q: 0.0,
                };
                [1.0, -1.0].iter().all(|sg| {
                    let z = base.add_scaled(sg * s, wq);
                    e_raw(n, rho[q], &z.m, &z.u) <= level
                })
            })
        })
    };
    max_amplitude(ok, 1e6)
}

/// One trial step at exhaustion level `level`. Returns the new subsolution
/// (unchanged on rejection).
pub fn perturb_step<R: Rng>(
    sub: &Subsolution,
    level: usize,
    params: &PerturbationParams,
    tol: &SubsolutionTolerances,
    rng: &mut R,
) -> Result<(Subsolution, StepRecord)> {
    params.validate()?;
    if sub.dim() != 2 {
        return Err(Error::Unsupported("perturbation steps are implemented for n = 2".into()));
    }
    let grid = sub.grid().clone();
    let outer = sub.domain.outer;
    let big_r = outer.radius;
    // Nested regions exhausting the outer domain.
    let r_k = big_r * (1.0 - 0.5f64.powi(level as i32 + 2));
    let (a, b) = params.radius_range;
    let radius = (big_r * rng.gen_range(a..=b)).min(0.9 * r_k);
    let reach = (r_k - radius).max(0.0);
    let dir = crate::geometry::sphere_point(2, 1.0, rng);
    let dist = rng.gen_range(0.0..1.0f64).sqrt() * reach;
    let center = [outer.center[0] + dist * dir[0], outer.center[1] + dist * dir[1], 0.0];
    let t_radius = sub.horizon * params.time_radius * 0.5f64.powi(level as i32).max(0.25);
    let cutoff = Cutoff {
        center,
        radius,
        t_center: 0.0,
        t_radius,
    };
    let lmin = (0..2).map(|ax| grid.bbox().length(ax)).fold(f64::INFINITY, f64::min);
    let k = 2.0 * std::f64::consts::PI * params.frequency as f64 / lmin;
    let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);

    let snaps = window_snapshots(sub, t_radius);
    let region = region_samples(sub, &cutoff);
    let m0 = &snaps[0].m;
    let deficit_before = deficit_of(sub, m0, 0.0, |_| true);
    let cutoff_deficit = deficit_of(sub, m0, 0.0, |x| {
        (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) < radius * radius
    });
    let energy_before = space_time_energy(sub);
    let mut record = StepRecord {
        step: 0,
        level,
        accepted: false,
        cause: None,
        deficit_before,
        deficit_after: deficit_before,
        energy_before,
        energy_after: energy_before,
        max_hull_violation: f64::NAN,
        divergence: f64::NAN,
        momentum: f64::NAN,
        weak_linear: f64::NAN,
        localization_defect: f64::NAN,
        cutoff_deficit,
        wave: None,
    };

    // Candidates are drawn sequentially and scored in parallel; the first
    // of maximal score wins, so the outcome does not depend on scheduling.
    let q_center = (0..grid.len())
        .min_by(|&p, &q| {
            let d = |i: usize| {
                let x = grid.position(i);
                (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)
            };
            d(p).partial_cmp(&d(q)).unwrap()
        })
        .unwrap_or(0);
    let hp = HullParams::new(sub.rho0.values()[q_center], sub.chi.value(0.0))?;
    let candidates: Vec<State> = (0..params.budget).map(|_| k_pair_direction(2, &hp, rng).2).collect();
    let scored: Vec<(f64, f64)> = candidates
        .par_iter()
        .map(|zb| match LocalizedWave::new(zb, k, &cutoff, 1.0, phase) {
            Ok(w) => {
                let s = size_amplitude(sub, &region, &snaps, &w, params.margin);
                (s * zb.m_norm_sq().sqrt(), s)
            }
            Err(_) => (0.0, 0.0),
        })
        .collect();
    let mut best: Option<usize> = None;
    for (i, sc) in scored.iter().enumerate() {
        if sc.0 > 0.0 && best.map_or(true, |b| sc.0 > scored[b].0) {
            best = Some(i);
        }
    }
    let Some(bi) = best else {
        record.cause = Some("no admissible direction within the search budget".into());
        return Ok((sub.clone(), record));
    };
    let z_bar = candidates[bi];
    let amplitude = params.safety * scored[bi].1;
    let wave = LocalizedWave::new(&z_bar, k, &cutoff, amplitude, phase)?;
    debug_assert!(wave_cone_residual(&z_bar).abs() < 1e-8);
    record.wave = Some(wave);

    let pts: Vec<[f64; 3]> = region.points.iter().map(|&q| grid.position(q)).collect();
    let ts: Vec<f64> = snaps.iter().map(|s| s.t).collect();
    record.localization_defect = wave.localization_defect(&pts, &ts);

    let mut trial = sub.clone();
    trial.waves.push(wave);
    let report = trial.check(tol)?;
    record.max_hull_violation = -report.min_gap();
    record.divergence = report.max_divergence();
    record.momentum = report.max_momentum();
    if let Some(msg) = report.failure(tol) {
        record.cause = Some(msg);
        return Ok((sub.clone(), record));
    }
    let energy_after = space_time_energy(&trial);
    record.energy_after = energy_after;
    record.deficit_after = deficit(&trial, 0.0);
    if !(energy_after > energy_before) {
        record.cause = Some(format!("no energy gain ({energy_before:e} -> {energy_after:e})"));
        record.energy_after = energy_before;
        record.deficit_after = deficit_before;
        return Ok((sub.clone(), record));
    }
    let fam = family_for(&trial, WeakKind::Linear)?;
    record.weak_linear = weak_residual(WeakKind::Linear, &trial, &fam)?.max_relative();
    record.accepted = true;
    Ok((trial, record))
}

/// `steps` trial steps from one seeded stream, stopping after
/// `params.stagnation` consecutive rejections.
pub fn iterate(
    sub: &Subsolution,
    steps: usize,
    params: &PerturbationParams,
    tol: &SubsolutionTolerances,
) -> Result<(Subsolution, IterationTrace)> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut cur = sub.clone();
    let mut trace = IterationTrace::default();
    let mut rejected = 0;
    let mut accepted_steps = 0;
    for step in 0..steps {
        let (next, mut rec) = perturb_step(&cur, accepted_steps, params, tol, &mut rng)?;
        rec.step = step;
        if rec.accepted {
            rejected = 0;
            accepted_steps += 1;
            cur = next;
        } else {
            rejected += 1;
        }
        trace.records.push(rec);
        if rejected >= params.stagnation && step + 1 < steps {
            trace.stopped_early = true;
            break;
        }
    }
    trace.beta_hat = trace
        .records
        .iter()
        .filter(|r| r.accepted && r.cutoff_deficit > 0.0)
        .map(|r| (r.energy_after - r.energy_before) / r.cutoff_deficit.powi(2))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    trace.final_deficit = deficit(&cur, 0.0);
    Ok((cur, trace))
}

#[derive(Clone, Debug)]
pub struct InitialData {
    pub m0: VectorField,
    /// `sup_{outer} |rho0 chi(0) - |m0|^2|`.
    pub defect: f64,
    pub divergence: f64,
}

pub fn initial_data_extract(sub: &Subsolution) -> InitialData {
    let m0 = sub.momentum_at(0.0);
    let chi = sub.chi.value(0.0);
    let grid = sub.grid();
    let rho = sub.rho0.values();
    let mut defect: f64 = 0.0;
    for q in 0..grid.len() {
        if sub.domain.outer.contains(&grid.position(q)) {
            let mq = m0.at(q);
            defect = defect.max((rho[q] * chi - mq.iter().map(|v| v * v).sum::<f64>()).abs());
        }
    }
    let divergence = relative_divergence(&m0);
    InitialData { m0, defect, divergence }
}

/// `||a - b|| / max(||a||, ||b||)` in the discrete L2 norm.
pub fn relative_l2_distance(a: &VectorField, b: &VectorField) -> Result<f64> {
    let d = a.add_scaled(-1.0, b)?.l2_norm_sq().sqrt();
    let s = a.l2_norm_sq().sqrt().max(b.l2_norm_sq().sqrt());
    Ok(if s == 0.0 { 0.0 } else { d / s })
}

/// `|m|^2` at `t`, for reports.
pub fn kinetic_density(sub: &Subsolution, t: f64) -> ScalarField {
    sub.momentum_at(t).norm_sq()
}
