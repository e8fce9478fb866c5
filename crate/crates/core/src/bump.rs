//! Compactly supported polynomial bumps with analytic derivatives.
//!
//! `(1 - u)^k` on `u < 1` is only `C^{k-1}`, but its spectrum decays far
//! faster at desk resolutions than the `C-infinity` exponential bump, which
//! keeps spectral residuals of sampled fields near round-off.

/// Default exponent of the bump profile.
pub const POWER: i32 = 10;

/// `(1 - u)^k` for `u < 1`, else 0, and its first three derivatives in `u`.
pub fn profile(u: f64, k: i32) -> [f64; 4] {
    if u >= 1.0 {
        return [0.0; 4];
    }
    let s = 1.0 - u;
    let kf = k as f64;
    [
        s.powi(k),
        -kf * s.powi(k - 1),
        kf * (kf - 1.0) * s.powi(k - 2),
        -kf * (kf - 1.0) * (kf - 2.0) * s.powi(k - 3),
    ]
}

pub fn value(u: f64, k: i32) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        (1.0 - u).powi(k)
    }
}

/// Radial bump `profile(|x - center|^2 / radius^2)` in up to three dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialBump {
    pub center: [f64; 3],
    pub radius: f64,
    pub power: i32,
}

/// Value, gradient, Hessian and third-derivative tensor at a point.
#[derive(Clone, Copy, Debug, Default)]
pub struct Jet3 {
    pub v: f64,
    pub d1: [f64; 3],
    pub d2: [[f64; 3]; 3],
    pub d3: [[[f64; 3]; 3]; 3],
}

impl RadialBump {
    pub fn new(center: [f64; 3], radius: f64) -> Self {
        Self {
            center,
            radius,
            power: POWER,
        }
    }

    fn u(&self, x: &[f64; 3], dim: usize) -> f64 {
        (0..dim).map(|a| (x[a] - self.center[a]).powi(2)).sum::<f64>() / (self.radius * self.radius)
    }

    pub fn value(&self, x: &[f64; 3], dim: usize) -> f64 {
        value(self.u(x, dim), self.power)
    }

    pub fn jet(&self, x: &[f64; 3], dim: usize) -> Jet3 {
        let u = self.u(x, dim);
        let b = profile(u, self.power);
        let mut j = Jet3 {
            v: b[0],
            ..Default::default()
        };
        if b[0] == 0.0 {
            return j;
        }
        let r2 = self.radius * self.radius;
        let mut du = [0.0; 3];
        for a in 0..dim {
            du[a] = 2.0 * (x[a] - self.center[a]) / r2;
        }
        let ddu = 2.0 / r2;
        let delta = |a: usize, b: usize| if a == b { ddu } else { 0.0 };
        for a in 0..dim {
            j.d1[a] = b[1] * du[a];
            for c in 0..dim {
                j.d2[a][c] = b[2] * du[a] * du[c] + b[1] * delta(a, c);
                for e in 0..dim {
                    j.d3[a][c][e] = b[3] * du[a] * du[c] * du[e]
                        + b[2] * (delta(a, c) * du[e] + delta(a, e) * du[c] + delta(c, e) * du[a]);
                }
            }
        }
        j
    }
}
