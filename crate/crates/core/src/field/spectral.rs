//! Pseudospectral calculus on the periodic grid.
//!
//! Derivatives are exact for the trigonometric interpolant. For odd-order
//! derivatives along an axis the Nyquist coefficient is dropped, since its
//! interpolant derivative is not real.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::{sym_index, sym_len, Field, Grid, MatrixField, ScalarField, SymTensorField, VectorField};
use crate::error::{Error, Result};

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let key = (len, direction == FftDirection::Forward);
        if let Some(f) = p.1.get(&key) {
            return f.clone();
        }
        let f = p.0.plan_fft(len, direction);
        p.1.insert(key, f.clone());
        f
    })
}

/// In-place n-dimensional transform, unnormalized in both directions.
pub(crate) fn fft_nd(data: &mut [Complex64], dims: &[usize], direction: FftDirection) {
    let total: usize = dims.iter().product();
    debug_assert_eq!(total, data.len());
    let mut line = Vec::new();
    for axis in 0..dims.len() {
        let n = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let outer = total / (n * inner);
        let fft = plan(n, direction);
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        line.resize(n, Complex64::default());
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * inner];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * inner] = *v;
                }
            }
        }
    }
}

pub(crate) fn fft_inverse(data: &mut [Complex64], dims: &[usize]) {
    fft_nd(data, dims, FftDirection::Inverse);
}

/// Discrete Fourier coefficients of a real grid function.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(f: &ScalarField) -> Self {
        Self::from_values(f.grid(), f.values())
    }

    pub fn from_values(grid: &Grid, values: &[f64]) -> Self {
        let mut coeffs: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut coeffs, grid.dims(), FftDirection::Forward);
        Self {
            grid: grid.clone(),
            coeffs,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Raw (unnormalized) coefficients in FFT order.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of the zero mode divided by the point count, i.e. the mean.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re / self.grid.len() as f64
    }

    /// Multiplies by `symbol(k, nyquist)` and transforms back, keeping the real
    /// part. `k` holds the wavevector and `nyquist[a]` flags the Nyquist index
    /// along axis `a`.
    pub fn filtered<F>(&self, symbol: F) -> ScalarField
    where
        F: Fn(&[f64; 3], &[bool; 3]) -> Complex64,
    {
        let grid = &self.grid;
        let mut data = self.coeffs.clone();
        for (flat, c) in data.iter_mut().enumerate() {
            let idx = grid.multi_index(flat);
            let mut k = [0.0; 3];
            let mut nyq = [false; 3];
            for a in 0..grid.dim() {
                k[a] = grid.wavenumbers(a)[idx[a]];
                nyq[a] = grid.nyquist(a) == Some(idx[a]);
            }
            *c *= symbol(&k, &nyq);
        }
        fft_nd(&mut data, grid.dims(), FftDirection::Inverse);
        let scale = 1.0 / grid.len() as f64;
        let values = data.iter().map(|c| c.re * scale).collect();
        ScalarField::new(grid.clone(), values).expect("same grid")
    }

    /// Multiplies by a precomputed symbol (FFT order) and transforms back.
    pub fn multiplied(&self, symbol: &[Complex64]) -> ScalarField {
        let mut data: Vec<Complex64> = self.coeffs.iter().zip(symbol).map(|(a, b)| a * b).collect();
        fft_nd(&mut data, self.grid.dims(), FftDirection::Inverse);
        let scale = 1.0 / self.grid.len() as f64;
        let values = data.iter().map(|c| c.re * scale).collect();
        ScalarField::new(self.grid.clone(), values).expect("same grid")
    }

    /// Mixed partial derivative with per-axis orders.
    pub fn derivative(&self, orders: &[usize]) -> ScalarField {
        self.filtered(|k, nyq| derivative_symbol(k, nyq, orders))
    }

    pub fn laplacian(&self) -> ScalarField {
        let dim = self.grid.dim();
        self.filtered(|k, _| {
            let k2: f64 = k[..dim].iter().map(|v| v * v).sum();
            Complex64::new(-k2, 0.0)
        })
    }
}

fn derivative_symbol(k: &[f64; 3], nyq: &[bool; 3], orders: &[usize]) -> Complex64 {
    let mut s = Complex64::new(1.0, 0.0);
    for (a, &p) in orders.iter().enumerate() {
        if p == 0 {
            continue;
        }
        if p % 2 == 1 && nyq[a] {
            return Complex64::new(0.0, 0.0);
        }
        s *= Complex64::new(0.0, k[a]).powu(p as u32);
    }
    s
}

fn unit_orders(dim: usize, axes: &[usize]) -> Vec<usize> {
    let mut o = vec![0; dim];
    for &a in axes {
        o[a] += 1;
    }
    o
}

pub fn spectral_gradient(f: &ScalarField) -> VectorField {
    let s = Spectrum::of(f);
    let dim = f.grid().dim();
    let comps = (0..dim)
        .map(|a| s.derivative(&unit_orders(dim, &[a])).into_values())
        .collect();
    VectorField::new(f.grid().clone(), comps).expect("same grid")
}

/// `sum_j d_j v_j`.
pub fn spectral_divergence(v: &VectorField) -> ScalarField {
    divergence_of_rows(v.grid(), &v.components().iter().collect::<Vec<_>>())
}

fn divergence_of_rows(grid: &Grid, row: &[&Vec<f64>]) -> ScalarField {
    let dim = grid.dim();
    let mut out = vec![0.0; grid.len()];
    for (j, c) in row.iter().enumerate() {
        let d = Spectrum::from_values(grid, c).derivative(&unit_orders(dim, &[j]));
        for (o, v) in out.iter_mut().zip(d.values()) {
            *o += v;
        }
    }
    ScalarField::new(grid.clone(), out).expect("same grid")
}

/// Row-wise divergence `(div T)_i = sum_j d_j T_ij` of a symmetric field.
pub fn spectral_divergence_rows(t: &SymTensorField) -> VectorField {
    let grid = t.grid();
    let n = grid.dim();
    let comps = (0..n)
        .map(|i| {
            let row: Vec<&Vec<f64>> = (0..n).map(|j| &t.components()[sym_index(n, i, j)]).collect();
            divergence_of_rows(grid, &row).into_values()
        })
        .collect();
    VectorField::new(grid.clone(), comps).expect("same grid")
}

/// Row-wise divergence of a full matrix field.
pub fn spectral_divergence_matrix(a: &MatrixField) -> VectorField {
    let grid = a.grid();
    let n = grid.dim();
    let comps = (0..n)
        .map(|i| {
            let row: Vec<&Vec<f64>> = (0..n).map(|j| &a.components()[i * n + j]).collect();
            divergence_of_rows(grid, &row).into_values()
        })
        .collect();
    VectorField::new(grid.clone(), comps).expect("same grid")
}

pub fn spectral_hessian(f: &ScalarField) -> SymTensorField {
    let s = Spectrum::of(f);
    let grid = f.grid();
    let n = grid.dim();
    let mut comps = vec![Vec::new(); sym_len(n)];
    for i in 0..n {
        for j in i..n {
            comps[sym_index(n, i, j)] = s.derivative(&unit_orders(n, &[i, j])).into_values();
        }
    }
    SymTensorField::new(grid.clone(), comps, false).expect("same grid")
}

pub fn spectral_laplacian(f: &ScalarField) -> ScalarField {
    Spectrum::of(f).laplacian()
}

/// Zero-mean solution of `Delta u = f - mean(f)` on the torus.
pub fn torus_inverse_laplacian(f: &ScalarField) -> ScalarField {
    let dim = f.grid().dim();
    Spectrum::of(f).filtered(|k, _| {
        let k2: f64 = k[..dim].iter().map(|v| v * v).sum();
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(-1.0 / k2, 0.0)
        }
    })
}

/// Torus convolution `(f * k)(x) = sum_y f(x - y) k(y) h^n`, where the kernel
/// samples are taken at physical coordinates (so `k` is centered at the
/// origin, not at the box corner).
pub fn convolve(f: &ScalarField, k: &ScalarField) -> Result<ScalarField> {
    if f.grid() != k.grid() {
        return Err(Error::GridMismatch("convolve operands on different grids".into()));
    }
    let grid = f.grid();
    let dim = grid.dim();
    let fk = Spectrum::of(f);
    let kk = Spectrum::of(k);
    let vol = grid.cell_volume();
    let lower = grid.bbox().lower().to_vec();
    let mut data: Vec<Complex64> = fk
        .coeffs
        .iter()
        .zip(&kk.coeffs)
        .enumerate()
        .map(|(flat, (a, b))| {
            let idx = grid.multi_index(flat);
            // Shift by the box lower corner: kernel sample j sits at lower + j h.
            let phase: f64 = (0..dim).map(|ax| grid.wavenumbers(ax)[idx[ax]] * lower[ax]).sum();
            a * b * vol * Complex64::from_polar(1.0, -phase)
        })
        .collect();
    // The shift phase is not conjugate-symmetric at Nyquist; taking the real
    // part below restores the real convolution of the interpolants.
    fft_nd(&mut data, grid.dims(), FftDirection::Inverse);
    let scale = 1.0 / grid.len() as f64;
    ScalarField::new(grid.clone(), data.iter().map(|c| c.re * scale).collect())
}
