//! Weak-form residuals of first-order balance laws
//! `d_t A_c + div B_c = 0` on `grid x [0, T)` against a fixed family of
//! compactly supported test functions. Space integrals use the trapezoid
//! rule (the integrands are compactly supported), time integrals use
//! composite Gauss-Legendre panels whose edges contain the test supports'
//! endpoints.

use rayon::prelude::*;
use serde::Serialize;

use crate::bump::{self, RadialBump};
use crate::error::{Error, Result};
use crate::field::{Ball, Grid};
use crate::quadrature::gauss_legendre_on;

/// Bump exponent of test functions; higher than the field bumps so that
/// trapezoid sums of their derivatives are exact to round-off at 64^2.
pub const TEST_POWER: i32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TimeFactor {
    One,
    Sin,
    Cos,
}

/// `phi(x, t) = B(x) g(t) f(t)` with `B` a radial bump, `g` a bump in time
/// and `f` one of `1, sin(w t), cos(w t)` (or `1 + sin`, `1 + cos` when
/// nonnegative members are required).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TestFunction {
    pub center: [f64; 3],
    pub radius: f64,
    pub t_center: f64,
    pub t_radius: f64,
    pub factor: TimeFactor,
    pub omega: f64,
    pub nonnegative: bool,
}

impl TestFunction {
    fn space(&self) -> RadialBump {
        RadialBump {
            center: self.center,
            radius: self.radius,
            power: TEST_POWER,
        }
    }

    /// `(g f, (g f)')` at time `t`.
    pub fn time(&self, t: f64) -> (f64, f64) {
        let r2 = self.t_radius * self.t_radius;
        let s = t - self.t_center;
        let b = bump::profile(s * s / r2, TEST_POWER);
        let (g, dg) = (b[0], b[1] * 2.0 * s / r2);
        let shift = if self.nonnegative { 1.0 } else { 0.0 };
        let (f, df) = match self.factor {
            TimeFactor::One => (1.0, 0.0),
            TimeFactor::Sin => (shift + (self.omega * t).sin(), self.omega * (self.omega * t).cos()),
            TimeFactor::Cos => (shift + (self.omega * t).cos(), -self.omega * (self.omega * t).sin()),
        };
        (g * f, dg * f + g * df)
    }

    pub fn value(&self, x: &[f64; 3], t: f64, dim: usize) -> f64 {
        self.space().value(x, dim) * self.time(t).0
    }

    pub fn time_support(&self) -> (f64, f64) {
        (self.t_center - self.t_radius, self.t_center + self.t_radius)
    }
}

/// Which time windows the members of a family use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Windows {
    /// Supported in `[0, T/2]`, nonzero at `t = 0` (initial data enter).
    Initial,
    /// Supported in `[T/4, 3T/4]`.
    Interior,
    Both,
}

#[derive(Clone, Debug, Serialize)]
pub struct TestFamily {
    pub members: Vec<TestFunction>,
    pub horizon: f64,
}

/// Time panels per horizon; window endpoints are multiples of `T / PANELS`.
pub const PANELS: usize = 8;

impl TestFamily {
    /// Three widths x three centers x `{1, sin, cos}` in each requested
    /// window, with spatial supports inside `region`.
    pub fn standard(region: &Ball, dim: usize, horizon: f64, windows: Windows, nonnegative: bool) -> Result<Self> {
        if !(horizon > 0.0) || !(region.radius > 0.0) {
            return Err(Error::Domain("test family needs positive horizon and region radius".into()));
        }
        let r = region.radius;
        let mut centers = Vec::new();
        for off in [0.0, 0.25, -0.25] {
            let mut c = region.center;
            c[0] += off * r;
            if dim > 1 && off != 0.0 {
                c[1] += 0.5 * off * r;
            }
            centers.push(c);
        }
        let mut wins = Vec::new();
        if matches!(windows, Windows::Initial | Windows::Both) {
            wins.push((0.0, 0.5 * horizon));
        }
        if matches!(windows, Windows::Interior | Windows::Both) {
            wins.push((0.5 * horizon, 0.25 * horizon));
        }
        let omega = 2.0 * std::f64::consts::PI / horizon;
        let mut members = Vec::new();
        for &(t_center, t_radius) in &wins {
            for width in [0.35, 0.5, 0.7] {
                for c in &centers {
                    for factor in [TimeFactor::One, TimeFactor::Sin, TimeFactor::Cos] {
                        members.push(TestFunction {
                            center: *c,
                            radius: width * r,
                            t_center,
                            t_radius,
                            factor,
                            omega,
                            nonnegative,
                        });
                    }
                }
            }
        }
        Ok(Self { members, horizon })
    }

    /// Family for the linear system on the whole grid: supports inside the
    /// ball inscribed in the box (shrunk by 10%), both windows.
    pub fn linear_system(grid: &Grid, horizon: f64) -> Result<Self> {
        let b = grid.bbox();
        let mut center = [0.0; 3];
        let mut half = f64::INFINITY;
        for a in 0..grid.dim() {
            center[a] = 0.5 * (b.lower()[a] + b.upper()[a]);
            half = half.min(0.5 * b.length(a));
        }
        Self::standard(&Ball { center, radius: 0.9 * half }, grid.dim(), horizon, Windows::Both, false)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Composite Gauss-Legendre nodes on `[0, T]`.
#[derive(Clone, Debug)]
pub struct TimeQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes per panel.
pub const NODES_PER_PANEL: usize = 16;

impl TimeQuadrature {
    pub fn composite(horizon: f64, panels: usize, per_panel: usize) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let h = horizon / panels as f64;
        for p in 0..panels {
            let (x, w) = gauss_legendre_on(per_panel, p as f64 * h, (p + 1) as f64 * h);
            nodes.extend(x);
            weights.extend(w);
        }
        Self { nodes, weights }
    }

    pub fn for_family(_family: &TestFamily, horizon: f64) -> Self {
        Self::composite(horizon, PANELS, NODES_PER_PANEL)
    }
}

/// Signed weak integrals per test and component, with the matching
/// integrals of absolute values as scales.
#[derive(Clone, Debug, Serialize)]
pub struct WeakReport {
    pub components: usize,
    pub values: Vec<f64>,
    pub scales: Vec<f64>,
}

impl WeakReport {
    pub fn relative(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.scales)
            .map(|(v, s)| if *s > 0.0 { v / s } else { *v })
            .collect()
    }

    /// `max |value| / scale`.
    pub fn max_relative(&self) -> f64 {
        self.relative().iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Smallest signed `value / scale`.
    pub fn min_relative(&self) -> f64 {
        self.relative().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `max |value|` without normalization.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Index `(test, component)` of the largest relative residual.
    pub fn worst(&self) -> (usize, usize) {
        let rel = self.relative();
        let mut k = 0;
        for i in 0..rel.len() {
            if rel[i].abs() > rel[k].abs() {
                k = i;
            }
        }
        (k / self.components.max(1), k % self.components.max(1))
    }
}

/// Densities `A[c][point]` and fluxes `B[c][axis][point]` at one time.
pub type Balance = (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>);

/// A system of `components` balance laws in `dim` space dimensions.
#[derive(Clone, Copy, Debug)]
pub struct WeakSystem {
    pub components: usize,
    pub dim: usize,
}

struct Support {
    idx: Vec<usize>,
    val: Vec<f64>,
    grad: Vec<[f64; 3]>,
}

impl WeakSystem {
    pub fn new(components: usize, dim: usize) -> Self {
        Self { components, dim }
    }

    /// For every test `phi` and component `c`,
    /// `int int (A_c d_t phi + B_c . grad phi) + int A_c(x, 0) phi(x, 0)`,
    /// with `A(., 0)` taken from `initial` when given and from `eval(0)`
    /// otherwise.
    pub fn residuals<F>(
        &self,
        grid: &Grid,
        family: &TestFamily,
        quad: &TimeQuadrature,
        initial: Option<&[Vec<f64>]>,
        eval: F,
    ) -> Result<WeakReport>
    where
        F: Fn(f64) -> Balance + Sync,
    {
        let dim = self.dim;
        let nc = self.components;
        if grid.dim() != dim {
            return Err(Error::GridMismatch("weak system dimension differs from grid".into()));
        }
        if family.is_empty() {
            return Err(Error::Domain("empty test family".into()));
        }
        let pos = grid.positions();
        let supports: Vec<Support> = family
            .members
            .iter()
            .map(|tf| {
                let b = tf.space();
                let mut s = Support {
                    idx: Vec::new(),
                    val: Vec::new(),
                    grad: Vec::new(),
                };
                for (q, x) in pos.iter().enumerate() {
                    let j = b.jet(x, dim);
                    if j.v != 0.0 {
                        s.idx.push(q);
                        s.val.push(j.v);
                        s.grad.push(j.d1);
                    }
                }
                s
            })
            .collect();
        for tf in &family.members {
            let (_, hi) = tf.time_support();
            if hi > family.horizon * (1.0 + 1e-12) {
                return Err(Error::Domain("test function time support outside [0, T)".into()));
            }
        }
        let check = |bal: &Balance| -> Result<()> {
            if bal.0.len() != nc || bal.1.len() != nc || bal.1.iter().any(|f| f.len() != dim) {
                return Err(Error::Domain("balance has the wrong shape".into()));
            }
            Ok(())
        };
        let ntest = family.len();
        let dv = grid.cell_volume();

        // (values, scales) contributions per time node.
        let per_node: Vec<Result<(Vec<f64>, Vec<f64>)>> = quad
            .nodes
            .par_iter()
            .zip(quad.weights.par_iter())
            .map(|(&t, &w)| {
                let bal = eval(t);
                check(&bal)?;
                let mut vals = vec![0.0; ntest * nc];
                let mut scales = vec![0.0; ntest * nc];
                for (k, tf) in family.members.iter().enumerate() {
                    let (g, dg) = tf.time(t);
                    if g == 0.0 && dg == 0.0 {
                        continue;
                    }
                    let sp = &supports[k];
                    for c in 0..nc {
                        let (mut sa, mut sb, mut aa, mut ab) = (0.0, 0.0, 0.0, 0.0);
                        for (p, &q) in sp.idx.iter().enumerate() {
                            let a = bal.0[c][q];
                            sa += a * sp.val[p];
                            aa += (a * sp.val[p]).abs();
                            for j in 0..dim {
                                let f = bal.1[c][j][q] * sp.grad[p][j];
                                sb += f;
                                ab += f.abs();
                            }
                        }
                        vals[k * nc + c] += w * dv * (sa * dg + sb * g);
                        scales[k * nc + c] += w * dv * (aa * dg.abs() + ab * g.abs());
                    }
                }
                Ok((vals, scales))
            })
            .collect();
        let mut values = vec![0.0; ntest * nc];
        let mut scales = vec![0.0; ntest * nc];
        for r in per_node {
            let (v, s) = r?;
            for i in 0..values.len() {
                values[i] += v[i];
                scales[i] += s[i];
            }
        }
        let owned;
        let a0: &[Vec<f64>] = match initial {
            Some(a) => a,
            None => {
                let bal = eval(0.0);
                check(&bal)?;
                owned = bal.0;
                &owned
            }
        };
        if a0.len() != nc {
            return Err(Error::Domain("initial data has the wrong number of components".into()));
        }
        for (k, tf) in family.members.iter().enumerate() {
            let (g0, _) = tf.time(0.0);
            if g0 == 0.0 {
                continue;
            }
            let sp = &supports[k];
            for c in 0..nc {
                let mut s = 0.0;
                let mut sa = 0.0;
                for (p, &q) in sp.idx.iter().enumerate() {
                    s += a0[c][q] * sp.val[p];
                    sa += (a0[c][q] * sp.val[p]).abs();
                }
                values[k * nc + c] += dv * s * g0;
                scales[k * nc + c] += dv * sa * g0.abs();
            }
        }
        Ok(WeakReport {
            components: nc,
            values,
            scales,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PeriodicBox;

    #[test]
    fn time_factor_derivative() {
        let tf = TestFunction {
            center: [0.0; 3],
            radius: 0.5,
            t_center: 0.0,
            t_radius: 0.5,
            factor: TimeFactor::Sin,
            omega: 3.0,
            nonnegative: true,
        };
        for &t in &[0.0, 0.1, 0.3, 0.45] {
            let h = 1e-6;
            let fd = (tf.time(t + h).0 - tf.time(t - h).0) / (2.0 * h);
            assert!((fd - tf.time(t).1).abs() < 1e-6);
            assert!(tf.time(t).0 >= 0.0);
        }
    }

    #[test]
    fn transported_density_has_zero_residual() {
        // A = f(x - c t), B = c f(x - c t) solves d_t A + div B = 0.
        let grid = Grid::uniform(PeriodicBox::cube(2, 1.0).unwrap(), 64).unwrap();
        let fam = TestFamily::linear_system(&grid, 1.0).unwrap();
        let quad = TimeQuadrature::for_family(&fam, 1.0);
        let pos = grid.positions();
        let vel = [0.3, -0.2];
        let r = WeakSystem::new(1, 2)
            .residuals(&grid, &fam, &quad, None, |t| {
                let a: Vec<f64> = pos
                    .iter()
                    .map(|x| (2.0 * (x[0] - vel[0] * t)).sin() * (x[1] - vel[1] * t).cos())
                    .collect();
                let b = (0..2).map(|j| a.iter().map(|v| v * vel[j]).collect()).collect();
                (vec![a], vec![b])
            })
            .unwrap();
        assert!(r.max_relative() < 1e-9, "{}", r.max_relative());

        // A wrong sign on the flux must be visible.
        let bad = WeakSystem::new(1, 2)
            .residuals(&grid, &fam, &quad, None, |t| {
                let a: Vec<f64> = pos.iter().map(|x| (2.0 * (x[0] - vel[0] * t)).sin()).collect();
                let b = (0..2).map(|j| a.iter().map(|v| -v * vel[j]).collect()).collect();
                (vec![a], vec![b])
            })
            .unwrap();
        assert!(bad.max_relative() > 1e-3);
    }
}
