//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line before asserting. Reference values come from the oracles
//! in `common`, not from the library's own spectral path.

mod common;

use std::time::Instant;

use common::{e_oracle, op_norm, report_line, sup, sup_diff, Square};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wildeuler::admissibility::{
    admissibility_constants, chi_ode_solve_raw, maximal_time, pointwise_admissibility,
};
use wildeuler::bogovskii::{antisymmetric_lift, bogovskii_solve, BogovskiiParams};
use wildeuler::chi::ChiProfile;
use wildeuler::convex_integration::{iterate, relative_l2_distance, PerturbationParams};
use wildeuler::domain::Domain;
use wildeuler::field::{sfld, Field, Grid, PeriodicBox, ScalarField, VectorField};
use wildeuler::geometry::{
    direction_search, e_value, equality_stress, flux_from_state, hull_margin, in_hull,
    in_hyperinterior, in_k, in_wave_cone, k_pair_direction, plane_wave_check, wave_cone_kernel,
    wave_cone_residual, wave_cone_scale, HullParams, State, KERNEL_TOL,
};
use wildeuler::pipeline::{cmd_build, cmd_perturb, cmd_verify, RunConfig, INITIAL_DATA};
use wildeuler::poisson::{compact_poisson, pressure_deviation};
use wildeuler::pressure::PressureLaw;
use wildeuler::subsolution::{
    build_linear_part, density_from_bump, seeded_bump, BuildTolerances, BumpSpec, Subsolution,
    SubsolutionTolerances,
};
use wildeuler::Error;

type Mat3 = [[f64; 3]; 3];

fn grid(n: usize) -> Grid {
    Grid::uniform(PeriodicBox::cube(2, 1.0).unwrap(), n).unwrap()
}

fn law() -> PressureLaw {
    PressureLaw::gamma(1.0, 2.0).unwrap()
}

/// `p(rho0) - p(1)` for the default balanced bump with `seed`.
fn pressure_bump(n: usize, seed: u64) -> ScalarField {
    let g = grid(n);
    let dom = Domain::default_2d();
    let spec = BumpSpec {
        count: 4,
        amplitude: 0.2,
        seed,
        balance: true,
    };
    let b = seeded_bump(&g, &dom.omega, &spec).unwrap();
    let rho = density_from_bump(&law(), 1.0, &b).unwrap();
    pressure_deviation(&rho, &law(), 1.0).unwrap()
}

fn density(n: usize, seed: u64) -> ScalarField {
    let g = grid(n);
    let spec = BumpSpec {
        count: 4,
        amplitude: 0.2,
        seed,
        balance: true,
    };
    let b = seeded_bump(&g, &Domain::default_2d().omega, &spec).unwrap();
    density_from_bump(&law(), 1.0, &b).unwrap()
}

fn in_ball(center: [f64; 2], r: f64) -> impl Fn([f64; 2]) -> bool {
    move |x| (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) < r * r
}

fn fmt(v: f64) -> String {
    format!("{v:.3e}")
}

#[test]
fn criterion_01_compact_poisson() {
    let eps = 0.1;
    let dom = Domain::default_2d();
    let region = dom.omega.radius + eps;
    let mut worst_res = 0.0f64;
    let mut worst_u = 0.0f64;
    let mut worst_sup = 0.0f64;
    let mut shrinks = true;
    let mut ratios = Vec::new();
    for seed in 1..=5 {
        let coarse = compact_poisson(&pressure_bump(128, seed), eps, &dom.omega).unwrap();
        let p1 = pressure_bump(256, seed);
        let sol = compact_poisson(&p1, eps, &dom.omega).unwrap();
        let sq = Square { n: 256, half: 1.0 };
        let smooth = sq.convolve(p1.values(), &sq.mollifier(eps));
        let p_eps: Vec<f64> = p1.values().iter().zip(&smooth).map(|(a, b)| a - b).collect();
        let scale = sup(&p_eps);
        worst_res = worst_res.max(sup_diff(&sq.laplacian(sol.u.values()), &p_eps) / scale);
        let u_ref = sq.inverse_laplacian(&p_eps);
        worst_u = worst_u.max(sup_diff(sol.u.values(), &u_ref) / sup(&u_ref));
        let ex_lib = sol.support_excess;
        let ex_ref = sq.excess(&u_ref, in_ball([0.0, 0.0], region));
        worst_sup = worst_sup.max(ex_lib).max(ex_ref);
        shrinks &= ex_lib < coarse.support_excess;
        ratios.push(coarse.support_excess / ex_lib);
    }
    let passed = worst_res <= 1e-8 && worst_u <= 1e-8 && worst_sup <= 1e-6 && shrinks;
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    report_line(
        1,
        "compact Poisson",
        passed,
        &format!(
            "residual {} vs oracle u {} (<= 1e-8), support excess {} (<= 1e-6), 128->256 shrink factor >= {:.1}",
            fmt(worst_res),
            fmt(worst_u),
            fmt(worst_sup),
            min_ratio
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_02_nonnegative_source_has_no_compact_potential() {
    let g = grid(128);
    let sq = Square { n: 128, half: 1.0 };
    let dom = Domain::default_2d();
    let p = ScalarField::from_fn(&g, |x| {
        let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.16;
        if r2 < 1.0 {
            (1.0 - r2).powi(4)
        } else {
            0.0
        }
    });
    let u_lib = wildeuler::field::torus_inverse_laplacian(&p);
    let u_ref = sq.inverse_laplacian(p.values());
    let agree = sup_diff(u_lib.values(), &u_ref) / sup(&u_ref);
    let mut least = f64::INFINITY;
    for eps in [0.05, 0.1, 0.2, 0.3, 0.4] {
        let inside = in_ball([0.0, 0.0], dom.omega.radius + eps);
        least = least.min(sq.excess(u_lib.values(), &inside));
        least = least.min(sq.excess(&u_ref, &inside));
        let cp = compact_poisson(&p, eps, &dom.omega).unwrap();
        least = least.min(sq.excess(cp.u.values(), &inside));
    }
    let witness = wildeuler::bogovskii::obstruction_witness(&p, &dom.omega_eps(), 200).unwrap();
    let passed = least >= 1e-2 && agree <= 1e-10 && witness.obstructed;
    report_line(
        2,
        "negative control",
        passed,
        &format!(
            "smallest support excess {} (>= 1e-2) over eps in 0.05..0.4, obstructed {}, least-squares residual {}",
            fmt(least),
            witness.obstructed,
            fmt(witness.relative_residual)
        ),
    );
    assert!(passed);
}

/// `p1 * omega_eps` for the default bump, the source of the divergence
/// problem.
fn smooth_source(seed: u64) -> ScalarField {
    let dom = Domain::default_2d();
    compact_poisson(&pressure_bump(128, seed), dom.epsilon, &dom.omega)
        .unwrap()
        .p_smooth
}

#[test]
fn criterion_03_bogovskii() {
    let dom = Domain::default_2d();
    let params = BogovskiiParams::default();
    let sq = Square { n: 128, half: 1.0 };
    let outer = in_ball([0.0, 0.0], dom.outer.radius);
    let mut residual = 0.0f64;
    let mut support = 0.0f64;
    let sources: Vec<ScalarField> = (1..=4).map(smooth_source).collect();
    let mut fields = Vec::new();
    for p in &sources {
        let s = bogovskii_solve(p, &dom.outer, &params, None).unwrap();
        let phi = s.phi.components();
        let div = sq.divergence(phi);
        residual = residual.max(sup_diff(&div, p.values()) / sup(p.values()));
        let mag: Vec<f64> = (0..div.len()).map(|q| phi[0][q].hypot(phi[1][q])).collect();
        support = support.max(sq.excess(&mag, &outer));
        fields.push(s.phi);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut linearity = 0.0f64;
    for (i, j) in [(0, 1), (2, 3), (1, 2)] {
        let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mix = sources[i].scaled(a).add_scaled(b, &sources[j]).unwrap();
        let direct = bogovskii_solve(&mix, &dom.outer, &params, None).unwrap().phi;
        let combined = fields[i].scaled(a).add_scaled(b, &fields[j]).unwrap();
        let d = direct.add_scaled(-1.0, &combined).unwrap().max_abs() / combined.max_abs();
        linearity = linearity.max(d);
    }
    let passed = residual <= 1e-3 && support <= 1e-8 && linearity <= 1e-8;
    report_line(
        3,
        "Bogovskii",
        passed,
        &format!(
            "divergence residual {} (<= 1e-3), support excess {} (<= 1e-8), linearity {} (<= 1e-8)",
            fmt(residual),
            fmt(support),
            fmt(linearity)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_04_lift_identities() {
    let dom = Domain::default_2d();
    let params = BogovskiiParams::default();
    let sq = Square { n: 128, half: 1.0 };
    let (mut trace, mut div_m, mut system) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 1..=5 {
        let p = smooth_source(seed);
        let phi = bogovskii_solve(&p, &dom.outer, &params, None).unwrap().phi;
        let lift = antisymmetric_lift(&p, &phi).unwrap();
        let a = &lift.a;
        let tr: Vec<f64> = (0..p.values().len())
            .map(|q| a.entry(0, 0)[q] + a.entry(1, 1)[q])
            .collect();
        trace = trace.max(sup(&tr) / a.max_abs());
        let m = lift.m_slope.components();
        let mscale = sup(&m[0]).max(sup(&m[1]));
        div_m = div_m.max(sup(&sq.divergence(m)) / mscale);
        // m_slope + div U2 + grad p
        let gp = [sq.d(p.values(), 0), sq.d(p.values(), 1)];
        let gscale = sup(&gp[0]).max(sup(&gp[1]));
        for i in 0..2 {
            let r0 = sq.d(lift.u2.entry(i, 0), 0);
            let r1 = sq.d(lift.u2.entry(i, 1), 1);
            let r: Vec<f64> = (0..r0.len()).map(|q| m[i][q] + r0[q] + r1[q] + gp[i][q]).collect();
            system = system.max(sup(&r) / gscale);
        }
    }
    let passed = trace <= 1e-10 && div_m <= 1e-8 && system <= 1e-3;
    report_line(
        4,
        "antisymmetric lift identities",
        passed,
        &format!(
            "tr A {} (<= 1e-10), div m_slope {} (<= 1e-8), momentum system {} (<= 1e-3)",
            fmt(trace),
            fmt(div_m),
            fmt(system)
        ),
    );
    assert!(passed);
}

fn random_traceless<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Mat3 {
    let mut u = [[0.0; 3]; 3];
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-scale..scale);
            u[i][j] = v;
            u[j][i] = v;
        }
    }
    let tr: f64 = (0..n - 1).map(|i| u[i][i]).sum();
    u[n - 1][n - 1] = -tr;
    u
}

fn random_m<R: Rng>(n: usize, scale: f64, rng: &mut R) -> [f64; 3] {
    let mut m = [0.0; 3];
    for c in m.iter_mut().take(n) {
        *c = rng.gen_range(-scale..scale);
    }
    m
}

fn mix(a: &Mat3, b: &Mat3, s: f64) -> Mat3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            o[i][j] = s * a[i][j] + (1.0 - s) * b[i][j];
        }
    }
    o
}

#[test]
fn criterion_05_e_function_properties() {
    const SAMPLES: usize = 10_000;
    const SLACK: f64 = 1e-10;
    let start = Instant::now();
    let law = law();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = [0usize; 6];
    let mut oracle_gap = 0.0f64;
    for k in 0..SAMPLES {
        let n = 2 + k % 2;
        let rho = rng.gen_range(0.2..5.0);
        let (m1, m2) = (random_m(n, 2.0, &mut rng), random_m(n, 2.0, &mut rng));
        let (u1, u2) = (random_traceless(n, 2.0, &mut rng), random_traceless(n, 2.0, &mut rng));
        let e1 = e_value(rho, &m1, &u1, n).unwrap();
        let e2 = e_value(rho, &m2, &u2, n).unwrap();
        let size = 1.0 + e1.abs() + e2.abs();
        oracle_gap = oracle_gap.max((e1 - e_oracle(n, rho, &m1, &u1)).abs() / size);

        // convexity
        let s = rng.gen_range(0.0..1.0);
        let mut ms = [0.0; 3];
        for i in 0..n {
            ms[i] = s * m1[i] + (1.0 - s) * m2[i];
        }
        let es = e_value(rho, &ms, &mix(&u1, &u2, s), n).unwrap();
        if es > s * e1 + (1.0 - s) * e2 + SLACK * size {
            violations[0] += 1;
        }

        // lower bound, and equality exactly at the equality stress
        let nf = n as f64;
        let low = m1[..n].iter().map(|v| v * v).sum::<f64>() / (nf * rho);
        if low > e1 + SLACK * size {
            violations[1] += 1;
        }
        let ueq = equality_stress(n, rho, &m1);
        if (e_value(rho, &m1, &ueq, n).unwrap() - low).abs() > SLACK * (1.0 + low) {
            violations[1] += 1;
        }
        // any traceless departure D lifts e by at least |D| / (n - 1)
        let d = random_traceless(n, 10f64.powf(rng.gen_range(-6.0..0.0)), &mut rng);
        let mut moved = ueq;
        for i in 0..n {
            for j in 0..n {
                moved[i][j] += d[i][j];
            }
        }
        let lift = e_value(rho, &m1, &moved, n).unwrap() - low;
        if lift < op_norm(n, &d) / (nf - 1.0) - SLACK * (1.0 + low) {
            violations[2] += 1;
        }

        // operator-norm bound
        if op_norm(n, &u1) > (nf - 1.0) * e1 + SLACK * size {
            violations[3] += 1;
        }

        // hull and K membership
        let chi = nf * e1.max(0.0) * rng.gen_range(1.01..3.0) + rng.gen_range(0.01..1.0);
        let hp = HullParams::new(rho, chi).unwrap();
        let q = law.p(rho).unwrap() + chi / nf;
        let z = State::new(n, m1, u1, q).unwrap();
        let interior = in_hyperinterior(&z, &hp, &law, 1e-12).unwrap();
        let hull = in_hull(&z, &hp, &law, 1e-12).unwrap();
        if !interior || !hull || in_k(&z, &hp, &law, 1e-12).unwrap() {
            violations[4] += 1;
        }
        let mk = wildeuler::geometry::sphere_point(n, rho * chi, &mut rng);
        let zk = flux_from_state(rho, &mk, n, &law).unwrap();
        let zk = State::new(n, mk, zk.u, q).unwrap();
        let margin = hull_margin(&zk, &hp, &law).unwrap().margin;
        if !in_k(&zk, &hp, &law, 1e-10).unwrap() || margin.abs() > SLACK * (1.0 + chi) {
            violations[4] += 1;
        }
        let off = State::new(n, mk, moved_stress(n, &zk.u, 1e-3, &mut rng), q).unwrap();
        if in_k(&off, &hp, &law, 1e-10).unwrap() {
            violations[4] += 1;
        }

        // extremality: interior states with |m|^2 < rho chi split along the cone
        if low * nf < rho * chi {
            let found = direction_search(&z, &hp, 32, 1e-6 * chi, &mut rng);
            let ok = found.is_some_and(|dir| {
                let plus = z.add_scaled(dir.amplitude, &dir.z_bar);
                let minus = z.add_scaled(-dir.amplitude, &dir.z_bar);
                dir.amplitude > 0.0
                    && in_wave_cone(&dir.z_bar, 1e-10)
                    && in_hull(&plus, &hp, &law, SLACK).unwrap()
                    && in_hull(&minus, &hp, &law, SLACK).unwrap()
            });
            if !ok {
                violations[5] += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let total: usize = violations.iter().sum();
    let passed = total == 0 && oracle_gap <= SLACK && secs <= 10.0;
    report_line(
        5,
        "e-function properties",
        passed,
        &format!(
            "{SAMPLES} states; violations convexity {} lower bound {} equality {} norm {} hull/K {} split {}; \
             oracle gap {}; {secs:.2} s (<= 10 s)",
            violations[0],
            violations[1],
            violations[2],
            violations[3],
            violations[4],
            violations[5],
            fmt(oracle_gap)
        ),
    );
    assert!(passed, "{violations:?}");
}

/// `u + D` with `D` traceless and of operator norm about `size`.
fn moved_stress<R: Rng>(n: usize, u: &Mat3, size: f64, rng: &mut R) -> Mat3 {
    let d = random_traceless(n, 1.0, rng);
    let s = size / op_norm(n, &d).max(1e-300);
    let mut o = *u;
    for i in 0..n {
        for j in 0..n {
            o[i][j] += s * d[i][j];
        }
    }
    o
}

#[test]
fn criterion_06_wave_cone() {
    let g = grid(64);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut states = vec![(
        State::new(2, [0.0; 3], [[0.4, -0.1, 0.0], [-0.1, -0.4, 0.0], [0.0; 3]], 0.9).unwrap(),
        [0.0, 0.0, 1.0, 0.0],
    )];
    let hp = HullParams::new(1.2, 0.8).unwrap();
    while states.len() < 4 {
        let (_, _, zb) = k_pair_direction(2, &hp, &mut rng);
        let k = wave_cone_kernel(&zb);
        if in_wave_cone(&zb, 1e-10) && k.residual <= 0.1 * KERNEL_TOL {
            states.push((zb, k.xi));
        }
    }
    let mut worst = 0.0f64;
    for (s, xi) in &states {
        for n in [1.0, 2.0, 4.0] {
            let r = plane_wave_check(s, xi, &move |v: f64| (n * v).sin(), &g, 1.0).unwrap();
            worst = worst.max(r);
        }
    }
    let mut homog = 0.0f64;
    for k in 0..1000 {
        let n = 2 + k % 2;
        let q = rng.gen_range(-2.0..2.0);
        let s = State::new(n, random_m(n, 2.0, &mut rng), random_traceless(n, 2.0, &mut rng), q).unwrap();
        let t: f64 = rng.gen_range(-3.0..3.0);
        let lhs = wave_cone_residual(&s.scaled(t));
        let rhs = t.powi(n as i32 + 1) * wave_cone_residual(&s);
        homog = homog.max((lhs - rhs).abs() / (t.abs().powi(n as i32 + 1) * wave_cone_scale(&s)));
    }
    let passed = worst <= 1e-8 && homog <= 1e-12;
    report_line(
        6,
        "wave cone",
        passed,
        &format!(
            "plane-wave residual {} over N in {{1,2,4}} (<= 1e-8), determinant homogeneity {} (<= 1e-12)",
            fmt(worst),
            fmt(homog)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_subsolution_build() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let report = cmd_build(&cfg, dir.path()).unwrap();
    let check = |stage: &str, name: &str| {
        report
            .stage(stage)
            .and_then(|s| s.checks.iter().find(|c| c.name == name))
            .map(|c| c.value)
            .unwrap_or(f64::NAN)
    };
    let spectral = [
        check("compact_poisson", "residual"),
        check("u1", "trace"),
        check("lift", "trace_a"),
        check("lift", "div_m_slope"),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    let bogovskii = [
        check("bogovskii", "residual"),
        check("lift", "momentum"),
        check("assembly", "system"),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);

    // Independently: e < chi / n at every grid point of every stored sample.
    let (sub, man) = wildeuler::persist::load_subsolution(dir.path()).unwrap();
    let mut gap = f64::INFINITY;
    for i in 0..man.times.len() {
        let s = wildeuler::persist::load_snapshot(dir.path(), &man, i).unwrap();
        let level = sub.chi.value(s.t) / 2.0;
        let rho = sub.rho0.values();
        for q in 0..rho.len() {
            let m = s.m.at(q);
            let u = s.u.at(q);
            gap = gap.min(level - e_oracle(2, rho[q], &m, &u));
        }
    }
    let passed = report.passed && spectral <= 1e-8 && bogovskii <= 1e-3 && gap > 0.0;
    let failed: Vec<&str> = report.stages.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
    report_line(
        7,
        "subsolution build",
        passed,
        &format!(
            "{} stages, failed {:?}; spectral parts {} (<= 1e-8), divergence parts {} (<= 1e-3), min gap chi/n - e {} (> 0)",
            report.stages.len(),
            failed,
            fmt(spectral),
            fmt(bogovskii),
            fmt(gap)
        ),
    );
    assert!(passed, "{}", report.summary());
}

fn trivial_64() -> Subsolution {
    Subsolution::trivial(
        &grid(64),
        law(),
        1.0,
        Domain::default_2d(),
        ChiProfile::constant(1.0).unwrap(),
        1.0,
        33,
    )
}

#[test]
fn criterion_08_perturbation() {
    let sub = trivial_64();
    let tol = SubsolutionTolerances::default();
    let params = PerturbationParams {
        seed: 8,
        ..Default::default()
    };
    let (next, trace) = iterate(&sub, 10, &params, &tol).unwrap();
    let gain = trace.total_gain();
    let accepted: Vec<_> = trace.records.iter().filter(|r| r.accepted).collect();
    let inside = accepted.iter().all(|r| r.max_hull_violation < 0.0);
    let post = next.check(&tol).unwrap().hull_violations();

    // Defect between the localized wave and its plane part over frequency
    // doublings of the first accepted wave.
    let pts = sub.grid().positions();
    let mut ratios = Vec::new();
    if let Some(w) = accepted.first().and_then(|r| r.wave.clone()) {
        let d: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|f| {
                let mut v = w.clone();
                v.k *= f;
                v.localization_defect(&pts, &sub.times)
            })
            .collect();
        ratios = d.windows(2).map(|p| p[1] / p[0]).collect();
    }
    let decay = !ratios.is_empty() && ratios.iter().all(|r| *r >= 0.5 / 3.0 && *r <= 0.5 * 3.0);

    let (_, again) = iterate(&sub, 10, &params, &tol).unwrap();
    let same = serde_json::to_string(&trace).unwrap() == serde_json::to_string(&again).unwrap();
    let passed = gain > 0.0 && !accepted.is_empty() && inside && post == 0 && decay && same;
    report_line(
        8,
        "perturbation",
        passed,
        &format!(
            "energy gain {} (> 0) from {} accepted of {}; hull violations {} / post hoc {}; \
             defect ratio per doubling {:?} (in [1/6, 3/2]); reproducible {}",
            fmt(gain),
            accepted.len(),
            trace.records.len(),
            accepted.iter().filter(|r| r.max_hull_violation >= 0.0).count(),
            post,
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
            same
        ),
    );
    assert!(passed);
}

/// `chi = w^2` with `w' = -(c1 + c2 w^2) / 2`, by classical Runge-Kutta.
fn chi_by_rk4(chi0: f64, c1: f64, c2: f64, times: &[f64]) -> Vec<f64> {
    let f = |w: f64| -0.5 * (c1 + c2 * w * w);
    let mut w = chi0.sqrt();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let steps = ((target - t) / 1e-4).ceil().max(1.0) as usize;
        let h = (target - t) / steps as f64;
        for _ in 0..steps {
            if w <= 0.0 {
                break;
            }
            let k1 = f(w);
            let k2 = f(w + 0.5 * h * k1);
            let k3 = f(w + 0.5 * h * k2);
            let k4 = f(w + h * k3);
            w += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        t = target;
        out.push(w.max(0.0).powi(2));
    }
    out
}

#[test]
fn criterion_09_chi_ode() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut lib = 0.0f64;
    let mut oracle = 0.0f64;
    for _ in 0..100 {
        let chi0 = rng.gen_range(0.1..10.0);
        let c1 = rng.gen_range(0.0..5.0);
        let c2 = rng.gen_range(0.0..5.0);
        let h = ChiProfile::ode(chi0, c1, c2).unwrap().positivity_horizon();
        let t_end = if h.is_finite() { 0.95 * h } else { 2.0 };
        let sol = chi_ode_solve_raw(chi0, c1, c2, t_end, 65).unwrap();
        lib = lib.max(sol.max_relative_difference);
        let reference = chi_by_rk4(chi0, c1, c2, &sol.times);
        for (c, r) in sol.closed_form.iter().zip(&reference) {
            if *c >= 1e-4 * chi0 {
                oracle = oracle.max((c - r).abs() / c);
            }
        }
    }
    let sol = chi_ode_solve_raw(1.0, 2.0, 2.0, 0.7, 71).unwrap();
    let tan2 = sol
        .times
        .iter()
        .zip(&sol.closed_form)
        .map(|(t, c)| {
            let want = (std::f64::consts::FRAC_PI_4 - t).tan().powi(2);
            (c - want).abs() / want
        })
        .fold(0.0f64, f64::max);
    let passed = lib <= 1e-8 && oracle <= 1e-8 && tan2 <= 1e-8 && sol.max_relative_difference <= 1e-8;
    report_line(
        9,
        "gauge ODE",
        passed,
        &format!(
            "closed form vs adaptive solver {} and vs Runge-Kutta oracle {} on 100 triples (<= 1e-8); tan^2 example {}",
            fmt(lib),
            fmt(oracle),
            fmt(tan2)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_10_admissibility() {
    let mut worst = f64::NEG_INFINITY;
    let mut dominance = f64::NEG_INFINITY;
    for seed in 1..=10 {
        let rho0 = density(64, seed);
        let c = admissibility_constants(&rho0, &law(), 1.0).unwrap();
        let chi = ChiProfile::ode(1.0, c.big_c1, c.big_c2).unwrap();
        let horizon = 0.99 * chi.positivity_horizon().min(10.0);
        let mut sub = trivial_64();
        sub.rho0 = rho0;
        sub.chi = chi;
        sub.horizon = horizon;
        sub.times = wildeuler::subsolution::uniform_times(horizon, 65);
        let a = pointwise_admissibility(&sub, 1.0).unwrap();
        worst = worst.max(a.max_worst_case());
        dominance = dominance.max(a.dominance_defect);
    }

    // Maximal time against the lambda samples of a built subsolution.
    let g = grid(128);
    let rho0 = density(128, 1);
    let dom = Domain::default_2d();
    let linear = build_linear_part(&rho0, &law(), 1.0, &dom, &BogovskiiParams::default(), &BuildTolerances::default())
        .unwrap();
    assert_eq!(linear.p1.grid(), &g);
    let c = admissibility_constants(&rho0, &law(), 1.0).unwrap();
    let base = Subsolution::from_linear(rho0, law(), 1.0, dom, &linear, ChiProfile::constant(1.0).unwrap(), 1.0, 33);
    let lambda = base.lambda_samples(&base.times);
    let need = 2.0 * lambda[0];
    let big = ChiProfile::ode(10.0 * need + 1.0, c.big_c1, c.big_c2).unwrap();
    let t_bar = maximal_time(&big, &base.times, &lambda, 2).unwrap();
    // the gauge clears 2 lambda just before t_bar and not just after
    let lam = |t: f64| {
        let i = base.times.iter().position(|&s| s >= t).unwrap_or(base.times.len() - 1).max(1);
        let (t0, t1) = (base.times[i - 1], base.times[i]);
        let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        lambda[i - 1] + s * (lambda[i] - lambda[i - 1])
    };
    let crossing = t_bar.is_finite()
        && big.value(t_bar * (1.0 - 1e-6)) > 2.0 * lam(t_bar * (1.0 - 1e-6))
        && big.value(t_bar * (1.0 + 1e-6)) <= 2.0 * lam(t_bar * (1.0 + 1e-6)) + 1e-9;
    let small = ChiProfile::ode(0.5 * need, c.big_c1, c.big_c2).unwrap();
    let refused = match maximal_time(&small, &base.times, &lambda, 2) {
        Err(Error::ChiTooSmall { required, .. }) => (required - need).abs() <= 1e-12 * need,
        _ => false,
    };
    let passed = worst <= 1e-10 && dominance <= 1e-10 && t_bar > 0.0 && crossing && refused;
    report_line(
        10,
        "admissibility",
        passed,
        &format!(
            "worst-case field max {} and dominance {} over 10 densities (<= 1e-10); T = {t_bar:.4} (> 0, crossing {crossing}); \
             chi0 below {need:.4} refused {refused}",
            fmt(worst),
            fmt(dominance)
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_11_distinct_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("build");
    let cfg = RunConfig::default();
    assert!(cmd_build(&cfg, &base).unwrap().passed);
    let mut m0 = Vec::new();
    let mut verified = Vec::new();
    for seed in [2u64, 3] {
        let out = dir.path().join(format!("perturb_{seed}"));
        let c = RunConfig { seed, ..cfg.clone() };
        let r = cmd_perturb(&c, &base, 3, &out).unwrap();
        let v = cmd_verify(&out, 1.0).unwrap();
        verified.push(r.passed && v.passed);
        let raw = sfld::load(&out.join(INITIAL_DATA)).unwrap();
        m0.push(VectorField::new(raw.grid, raw.components).unwrap());
    }
    let dist = relative_l2_distance(&m0[0], &m0[1]).unwrap();
    let passed = dist >= 1e-2 && verified.iter().all(|v| *v);
    report_line(
        11,
        "distinct initial data",
        passed,
        &format!("relative L2 distance of m0 {} (>= 1e-2); both verified {:?}", fmt(dist), verified),
    );
    assert!(passed);
}
