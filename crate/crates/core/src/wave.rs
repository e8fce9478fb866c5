//! Localized plane waves for the two-dimensional linear system
//! `div m = 0`, `d_t m + div U = 0` (traceless `U`, pressure untouched).
//!
//! Every smooth potential `Pi(x, t)` gives an exact solution
//!
//! ```text
//! m = (-d2 Lap Pi, d1 Lap Pi),   U11 = -U22 = 2 dt d1 d2 Pi,   U12 = dt (d2^2 - d1^2) Pi.
//! ```
//!
//! With `Pi = s Phi(x, t) H(k . x + w t + phase) / |k|^3` and `H = -mu sin`,
//! the leading term is the cut-off plane wave `s Phi z_bar cos(...)`, where
//! `z_bar = (mu e_perp, nu S(theta))`, and everything else is `O(1 / |k|)`.

use serde::{Deserialize, Serialize};

use crate::bump::{self, RadialBump};
use crate::error::{Error, Result};
use crate::geometry::{wave_cone_residual, wave_cone_scale, State, CONE_TOL};

/// Cutoff exponent. The fields carry third derivatives of the cutoff, so it
/// is smoother than the default bump.
pub const CUTOFF_POWER: i32 = 20;

/// Exponent of the time cutoff; only one time derivative enters.
pub const TIME_POWER: i32 = 4;

/// `S(theta)`, the traceless stress direction paired with `e_perp(theta)`.
pub fn stress_direction(theta: f64) -> [[f64; 2]; 2] {
    let (s2, c2) = (2.0 * theta).sin_cos();
    [[s2, -c2], [-c2, -s2]]
}

pub fn e_perp(theta: f64) -> [f64; 2] {
    [-theta.sin(), theta.cos()]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedWave {
    pub center: [f64; 3],
    pub radius: f64,
    pub t_center: f64,
    pub t_radius: f64,
    /// Direction of the spatial wave vector.
    pub theta: f64,
    /// `|k|`.
    pub k: f64,
    pub mu: f64,
    pub nu: f64,
    pub amplitude: f64,
    pub phase: f64,
}

/// Space-time cutoff: radial bump in space, bump in time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: [f64; 3],
    pub radius: f64,
    pub t_center: f64,
    pub t_radius: f64,
}

impl Cutoff {
    /// `Phi(x, t)`.
    pub fn value(&self, x: &[f64; 3], t: f64) -> f64 {
        let s = (t - self.t_center) / self.t_radius;
        let space = RadialBump {
            power: CUTOFF_POWER,
            ..RadialBump::new(self.center, self.radius)
        };
        bump::value(s * s, TIME_POWER) * space.value(x, 2)
    }

    pub fn covers(&self, x: &[f64; 3]) -> bool {
        let d2 = (0..2).map(|a| (x[a] - self.center[a]).powi(2)).sum::<f64>();
        d2 < self.radius * self.radius
    }
}

/// Field values of a wave at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WaveValue {
    pub m: [f64; 2],
    pub dmdt: [f64; 2],
    /// `U11 = -U22`.
    pub a: f64,
    /// `U12`.
    pub b: f64,
}

/// Decomposes a two-dimensional cone state with zero `q` into
/// `(theta, mu, nu)`, `z = (mu e_perp(theta), nu S(theta))`, `mu > 0`.
pub fn decompose(z: &State) -> Result<(f64, f64, f64)> {
    if z.n != 2 {
        return Err(Error::Unsupported("localized waves are implemented for n = 2".into()));
    }
    if z.q != 0.0 {
        return Err(Error::Domain("wave direction must have zero q component".into()));
    }
    let scale = wave_cone_scale(z);
    if wave_cone_residual(z).abs() > CONE_TOL * scale {
        return Err(Error::Domain("wave direction is not in the wave cone".into()));
    }
    let mu = z.m[0].hypot(z.m[1]);
    let umax = z.u[0][0].abs().max(z.u[0][1].abs());
    if mu <= 1e-12 * umax.max(f64::MIN_POSITIVE) || mu == 0.0 {
        return Err(Error::Domain("wave direction has no momentum component".into()));
    }
    let theta = (-z.m[0]).atan2(z.m[1]);
    let s = stress_direction(theta);
    let nu = 0.5 * (z.u[0][0] * s[0][0] + 2.0 * z.u[0][1] * s[0][1] + z.u[1][1] * s[1][1]);
    let resid = (z.u[0][0] - nu * s[0][0]).abs().max((z.u[0][1] - nu * s[0][1]).abs());
    if resid > 1e-8 * (mu + umax) {
        return Err(Error::Domain(format!(
            "stress of the wave direction is off the cone family by {resid:e}"
        )));
    }
    Ok((theta, mu, nu))
}

impl LocalizedWave {
    pub fn new(z_bar: &State, k: f64, cutoff: &Cutoff, amplitude: f64, phase: f64) -> Result<Self> {
        let (theta, mu, nu) = decompose(z_bar)?;
        if !(k > 0.0) || !(cutoff.radius > 0.0) || !(cutoff.t_radius > 0.0) {
            return Err(Error::Domain("wave needs positive frequency and cutoff radii".into()));
        }
        Ok(Self {
            center: cutoff.center,
            radius: cutoff.radius,
            t_center: cutoff.t_center,
            t_radius: cutoff.t_radius,
            theta,
            k,
            mu,
            nu,
            amplitude,
            phase,
        })
    }

    pub fn omega(&self) -> f64 {
        self.k * self.nu / self.mu
    }

    pub fn wavevector(&self) -> [f64; 2] {
        [self.k * self.theta.cos(), self.k * self.theta.sin()]
    }

    /// Unit space-time kernel vector `(k, omega) / |(k, omega)|`.
    pub fn xi(&self) -> [f64; 4] {
        let kv = self.wavevector();
        let w = self.omega();
        let nrm = (self.k * self.k + w * w).sqrt();
        [kv[0] / nrm, kv[1] / nrm, w / nrm, 0.0]
    }

    pub fn z_bar(&self) -> State {
        let e = e_perp(self.theta);
        let s = stress_direction(self.theta);
        State {
            n: 2,
            m: [self.mu * e[0], self.mu * e[1], 0.0],
            u: [
                [self.nu * s[0][0], self.nu * s[0][1], 0.0],
                [self.nu * s[1][0], self.nu * s[1][1], 0.0],
                [0.0; 3],
            ],
            q: 0.0,
        }
    }

    fn space(&self) -> RadialBump {
        RadialBump {
            power: CUTOFF_POWER,
            ..RadialBump::new(self.center, self.radius)
        }
    }

    /// `(Phi_t, Phi_t')`.
    fn time_cutoff(&self, t: f64) -> (f64, f64) {
        let r2 = self.t_radius * self.t_radius;
        let s = t - self.t_center;
        let b = bump::profile(s * s / r2, TIME_POWER);
        (b[0], b[1] * 2.0 * s / r2)
    }

    pub fn active_at(&self, t: f64) -> bool {
        (t - self.t_center).abs() < self.t_radius
    }

    pub fn cutoff(&self) -> Cutoff {
        Cutoff {
            center: self.center,
            radius: self.radius,
            t_center: self.t_center,
            t_radius: self.t_radius,
        }
    }

    pub fn covers(&self, x: &[f64; 3]) -> bool {
        self.cutoff().covers(x)
    }

    fn sigma(&self, x: &[f64; 3], t: f64) -> f64 {
        let kv = self.wavevector();
        kv[0] * x[0] + kv[1] * x[1] + self.omega() * t + self.phase
    }

    /// Exact fields of the potential construction.
    pub fn eval(&self, x: &[f64; 3], t: f64) -> WaveValue {
        let (pt, dpt) = self.time_cutoff(t);
        if pt == 0.0 && dpt == 0.0 {
            return WaveValue::default();
        }
        let jet = self.space().jet(x, 2);
        if jet.v == 0.0 {
            return WaveValue::default();
        }
        let kv = self.wavevector();
        let w = self.omega();
        let sig = self.sigma(x, t);
        let c = self.amplitude / self.k.powi(3);
        // g^(j) = c H^(j), H = -mu sin.
        let g = |j: usize| -> f64 { -c * self.mu * (sig + j as f64 * std::f64::consts::FRAC_PI_2).sin() };
        let phi = |sub: &[usize]| -> f64 {
            match sub.len() {
                0 => jet.v,
                1 => jet.d1[sub[0]],
                2 => jet.d2[sub[0]][sub[1]],
                _ => jet.d3[sub[0]][sub[1]][sub[2]],
            }
        };
        // (d^list P, dt d^list P) with P = Phi_x G, by summing over subsets.
        let dp = |list: &[usize]| -> (f64, f64) {
            let l = list.len();
            let (mut v, mut vt) = (0.0, 0.0);
            for mask in 0..(1usize << l) {
                let mut sub = [0usize; 3];
                let mut ns = 0;
                let mut kprod = 1.0;
                let mut nr = 0;
                for (i, &ax) in list.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        sub[ns] = ax;
                        ns += 1;
                    } else {
                        kprod *= kv[ax];
                        nr += 1;
                    }
                }
                let f = phi(&sub[..ns]);
                v += f * kprod * g(nr);
                vt += f * kprod * w * g(nr + 1);
            }
            (v, vt)
        };
        // Spatial and mixed derivatives of Pi = Phi_t P.
        let d = |list: &[usize]| -> (f64, f64) {
            let (v, vt) = dp(list);
            (pt * v, dpt * v + pt * vt)
        };
        let d000 = d(&[0, 0, 0]);
        let d011 = d(&[0, 1, 1]);
        let d001 = d(&[0, 0, 1]);
        let d111 = d(&[1, 1, 1]);
        let d01 = d(&[0, 1]);
        let d00 = d(&[0, 0]);
        let d11 = d(&[1, 1]);
        WaveValue {
            m: [-(d001.0 + d111.0), d000.0 + d011.0],
            dmdt: [-(d001.1 + d111.1), d000.1 + d011.1],
            a: 2.0 * d01.1,
            b: d11.1 - d00.1,
        }
    }

    /// The cut-off plane wave `s Phi z_bar cos(sigma)` that [`Self::eval`]
    /// approximates.
    pub fn plane_part(&self, x: &[f64; 3], t: f64) -> WaveValue {
        let cut = self.cutoff().value(x, t);
        if cut == 0.0 {
            return WaveValue::default();
        }
        let h = self.amplitude * cut * self.sigma(x, t).cos();
        let e = e_perp(self.theta);
        let s = stress_direction(self.theta);
        WaveValue {
            m: [self.mu * e[0] * h, self.mu * e[1] * h],
            dmdt: [0.0; 2],
            a: self.nu * s[0][0] * h,
            b: self.nu * s[0][1] * h,
        }
    }

    /// `max |wave - plane part| / (s max(mu, |nu|))` over the given points
    /// and times; decays like `1 / |k|`.
    pub fn localization_defect(&self, points: &[[f64; 3]], times: &[f64]) -> f64 {
        let scale = self.amplitude.abs() * self.mu.max(self.nu.abs());
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for &t in times {
            if !self.active_at(t) {
                continue;
            }
            for x in points {
                if !self.covers(x) {
                    continue;
                }
                let e = self.eval(x, t);
                let p = self.plane_part(x, t);
                let d = (e.m[0] - p.m[0])
                    .abs()
                    .max((e.m[1] - p.m[1]).abs())
                    .max((e.a - p.a).abs())
                    .max((e.b - p.b).abs());
                worst = worst.max(d);
            }
        }
        worst / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{spectral_divergence, Grid, PeriodicBox, VectorField};
    use crate::geometry::{equality_stress, State};

    fn sample_wave(k: f64) -> LocalizedWave {
        let mp = [0.8, 0.6, 0.0];
        let mm = [-0.6, 0.8, 0.0];
        let up = equality_stress(2, 1.0, &mp);
        let um = equality_stress(2, 1.0, &mm);
        let mut zb = State::zero(2);
        for i in 0..2 {
            zb.m[i] = 0.5 * (mp[i] - mm[i]);
            for j in 0..2 {
                zb.u[i][j] = 0.5 * (up[i][j] - um[i][j]);
            }
        }
        let cut = Cutoff {
            center: [0.05, -0.1, 0.0],
            radius: 0.45,
            t_center: 0.0,
            t_radius: 0.5,
        };
        LocalizedWave::new(&zb, k, &cut, 0.7, 0.3).unwrap()
    }

    #[test]
    fn decomposition_round_trip() {
        let w = sample_wave(10.0);
        let (th, mu, nu) = decompose(&w.z_bar()).unwrap();
        assert!((th - w.theta).abs() < 1e-14);
        assert!((mu - w.mu).abs() < 1e-14 && (nu - w.nu).abs() < 1e-14);
    }

    #[test]
    fn exact_linear_system_pointwise() {
        // Finite differences of the analytic fields.
        let w = sample_wave(12.0);
        let h = 1e-5;
        for &(x, t) in &[([0.1, 0.05, 0.0], 0.1), ([-0.2, -0.15, 0.0], 0.3), ([0.3, -0.3, 0.0], 0.0)] {
            let f = |dx: f64, dy: f64, dt: f64| w.eval(&[x[0] + dx, x[1] + dy, 0.0], t + dt);
            let c = f(0.0, 0.0, 0.0);
            let dxm = (f(h, 0.0, 0.0).m[0] - f(-h, 0.0, 0.0).m[0]) / (2.0 * h);
            let dym = (f(0.0, h, 0.0).m[1] - f(0.0, -h, 0.0).m[1]) / (2.0 * h);
            let scale = 12.0 * c.m[0].abs().max(c.m[1].abs()).max(1e-3);
            assert!((dxm + dym).abs() < 1e-6 * scale, "div {}", dxm + dym);
            let dtm = [
                (f(0.0, 0.0, h).m[0] - f(0.0, 0.0, -h).m[0]) / (2.0 * h),
                (f(0.0, 0.0, h).m[1] - f(0.0, 0.0, -h).m[1]) / (2.0 * h),
            ];
            assert!((dtm[0] - c.dmdt[0]).abs() < 1e-6 * scale * 12.0);
            assert!((dtm[1] - c.dmdt[1]).abs() < 1e-6 * scale * 12.0);
            let da = (f(h, 0.0, 0.0).a - f(-h, 0.0, 0.0).a) / (2.0 * h);
            let db_y = (f(0.0, h, 0.0).b - f(0.0, -h, 0.0).b) / (2.0 * h);
            let db_x = (f(h, 0.0, 0.0).b - f(-h, 0.0, 0.0).b) / (2.0 * h);
            let da_y = (f(0.0, h, 0.0).a - f(0.0, -h, 0.0).a) / (2.0 * h);
            assert!((c.dmdt[0] + da + db_y).abs() < 1e-6 * scale * 12.0);
            assert!((c.dmdt[1] + db_x - da_y).abs() < 1e-6 * scale * 12.0);
        }
    }

    #[test]
    fn spectral_divergence_of_sampled_wave() {
        let grid = Grid::uniform(PeriodicBox::cube(2, 1.0).unwrap(), 64).unwrap();
        let w = sample_wave(4.0 * std::f64::consts::PI);
        let pos = grid.positions();
        let mut comps = vec![vec![0.0; grid.len()]; 2];
        for (q, x) in pos.iter().enumerate() {
            let v = w.eval(x, 0.1);
            comps[0][q] = v.m[0];
            comps[1][q] = v.m[1];
        }
        let m = VectorField::new(grid.clone(), comps).unwrap();
        let div = spectral_divergence(&m);
        let rel = crate::field::Field::max_abs(&div) / (w.k * crate::field::Field::max_abs(&m));
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn localization_defect_decays_like_one_over_k() {
        let pts: Vec<[f64; 3]> = (0..41)
            .flat_map(|i| (0..41).map(move |j| [-0.5 + i as f64 * 0.025, -0.5 + j as f64 * 0.025, 0.0]))
            .collect();
        let times = [0.0, 0.1, 0.2];
        let base = 2.0 * std::f64::consts::PI;
        let d: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|n| sample_wave(base * n).localization_defect(&pts, &times))
            .collect();
        for i in 0..2 {
            let ratio = d[i + 1] / d[i];
            assert!(ratio > 0.5 / 3.0 && ratio < 0.5 * 3.0, "{d:?}");
        }
    }
}
