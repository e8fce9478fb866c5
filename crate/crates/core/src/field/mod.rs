//! Periodic boxes, uniform grids and sampled fields.
//!
//! Every field lives on a [`Grid`] over a [`PeriodicBox`]. Samples are stored
//! row-major with axis 0 slowest; point `i` along axis `a` sits at
//! `lower[a] + i * spacing[a]`.

mod mollifier;
pub mod sfld;
mod spectral;

pub use mollifier::{mollifier, mollifier_profile};
pub(crate) use spectral::fft_inverse;
pub use spectral::{
    convolve, spectral_divergence, spectral_divergence_matrix, spectral_divergence_rows,
    spectral_gradient, spectral_hessian, spectral_laplacian, torus_inverse_laplacian, Spectrum,
};

use crate::error::{Error, Result};

/// Smallest accepted point count per axis.
pub const MIN_POINTS: usize = 16;

/// Axis-aligned box `[lower, upper]` treated as a torus.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PeriodicBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidGrid("lower/upper length mismatch".into()));
        }
        if !(2..=3).contains(&lower.len()) {
            return Err(Error::InvalidGrid(format!(
                "dimension {} not in {{2, 3}}",
                lower.len()
            )));
        }
        for (a, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: upper {hi} must exceed lower {lo}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[-half_width, half_width]^dim`.
    pub fn cube(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.length(a)).product()
    }

    /// Whether the closed ball `B(center, radius)` sits inside the box with at
    /// least `margin` to every face.
    pub fn contains_ball(&self, center: &[f64], radius: f64, margin: f64) -> bool {
        (0..self.dim()).all(|a| {
            center[a] - radius - margin >= self.lower[a] && center[a] + radius + margin <= self.upper[a]
        })
    }
}

/// Uniform tensor grid with spectral wavenumber tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bbox: PeriodicBox,
    dims: Vec<usize>,
    spacing: Vec<f64>,
    wavenumbers: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(bbox: PeriodicBox, dims: &[usize]) -> Result<Self> {
        if dims.len() != bbox.dim() {
            return Err(Error::InvalidGrid(format!(
                "{} point counts for a {}-dimensional box",
                dims.len(),
                bbox.dim()
            )));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < MIN_POINTS) {
            return Err(Error::InvalidGrid(format!(
                "{d} points per axis is below the minimum of {MIN_POINTS}"
            )));
        }
        let spacing = (0..dims.len())
            .map(|a| bbox.length(a) / dims[a] as f64)
            .collect();
        let wavenumbers = (0..dims.len())
            .map(|a| {
                let n = dims[a];
                let scale = 2.0 * std::f64::consts::PI / bbox.length(a);
                (0..n)
                    .map(|j| {
                        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                        k * scale
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            bbox,
            dims: dims.to_vec(),
            spacing,
            wavenumbers,
        })
    }

    /// Same point count along every axis.
    pub fn uniform(bbox: PeriodicBox, points: usize) -> Result<Self> {
        let dims = vec![points; bbox.dim()];
        Self::new(bbox, &dims)
    }

    pub fn bbox(&self) -> &PeriodicBox {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Angular wavenumbers `2*pi*k/L` in FFT order for one axis.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    /// Index of the Nyquist mode along `axis` (only meaningful for even counts).
    pub fn nyquist(&self, axis: usize) -> Option<usize> {
        let n = self.dims[axis];
        (n % 2 == 0).then_some(n / 2)
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in 0..self.dim() {
            flat = flat * self.dims[a] + idx[a];
        }
        flat
    }

    /// Physical coordinates of a grid point; unused trailing entries are 0.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = self.bbox.lower[a] + idx[a] as f64 * self.spacing[a];
        }
        x
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Read access shared by all sampled field kinds.
pub trait Field {
    fn grid(&self) -> &Grid;
    fn component_slices(&self) -> Vec<&[f64]>;

    /// Largest absolute sample over all components.
    fn max_abs(&self) -> f64 {
        self.component_slices()
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Pointwise max over components of `|value|`.
    fn pointwise_magnitude(&self, flat: usize) -> f64 {
        self.component_slices()
            .iter()
            .fold(0.0, |m, c| m.max(c[flat].abs()))
    }
}

/// Sup of `|f|` outside `region`, normalized by `max |f|`. Identically zero
/// fields return 0.
pub fn support_excess<F, R>(f: &F, region: R) -> f64
where
    F: Field + ?Sized,
    R: Fn(&[f64; 3]) -> bool,
{
    let total = f.max_abs();
    if total == 0.0 {
        return 0.0;
    }
    let grid = f.grid();
    let mut outside: f64 = 0.0;
    for flat in 0..grid.len() {
        if !region(&grid.position(flat)) {
            outside = outside.max(f.pointwise_magnitude(flat));
        }
    }
    outside / total
}

fn check_len(grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples for a grid of {} points",
            values.len(),
            grid.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            values: vec![value; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.position(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Trapezoidal (on the torus: rectangle) integral over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &ScalarField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }
}

impl Field for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn component_slices(&self) -> Vec<&[f64]> {
        vec![&self.values]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "{} components for a {}-dimensional vector field",
                components.len(),
                grid.dim()
            )));
        }
        for c in &components {
            check_len(&grid, c)?;
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            components: vec![vec![0.0; grid.len()]; grid.dim()],
            grid: grid.clone(),
        }
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    pub fn at(&self, flat: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (i, c) in self.components.iter().enumerate() {
            v[i] = c[flat];
        }
        v
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|v| s * v).collect())
                .collect(),
        }
    }

    pub fn add_scaled(&self, s: f64, other: &VectorField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
                .collect(),
        })
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_sq(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| self.components.iter().map(|c| c[i] * c[i]).sum())
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `sum_x |v|^2 * cell volume`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.norm_sq().integral()
    }
}

impl Field for VectorField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn component_slices(&self) -> Vec<&[f64]> {
        self.components.iter().map(|c| c.as_slice()).collect()
    }
}

/// Position of entry `(i, j)` in the packed upper-triangular layout
/// `(0,0), (0,1), .., (0,n-1), (1,1), ..`.
pub fn sym_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

pub fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Tolerance of the traceless flag, relative to the largest entry.
pub const TRACE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SymTensorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
    traceless: bool,
}

impl SymTensorField {
    /// Builds a symmetric tensor field; with `traceless` set the trace is
    /// checked at every point against [`TRACE_TOL`] times the largest entry.
    pub fn new(grid: Grid, components: Vec<Vec<f64>>, traceless: bool) -> Result<Self> {
        let n = grid.dim();
        if components.len() != sym_len(n) {
            return Err(Error::GridMismatch(format!(
                "{} components for a symmetric {n}x{n} field",
                components.len()
            )));
        }
        for c in &components {
            check_len(&grid, c)?;
        }
        let field = Self {
            grid,
            components,
            traceless: false,
        };
        if traceless {
            let rel = field.trace_defect();
            if rel > TRACE_TOL {
                return Err(Error::verification(
                    "traceless tensor",
                    format!("relative trace {rel:e} exceeds {TRACE_TOL:e}"),
                ));
            }
        }
        Ok(Self { traceless, ..field })
    }

    /// Removes `tr/n * I` pointwise and marks the result traceless.
    pub fn traceless_part(grid: Grid, mut components: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.dim();
        if components.len() != sym_len(n) {
            return Err(Error::GridMismatch("wrong component count".into()));
        }
        for p in 0..grid.len() {
            let tr: f64 = (0..n).map(|i| components[sym_index(n, i, i)][p]).sum();
            for i in 0..n {
                components[sym_index(n, i, i)][p] -= tr / n as f64;
            }
        }
        Self::new(grid, components, true)
    }

    pub fn zeros(grid: &Grid, traceless: bool) -> Self {
        Self {
            components: vec![vec![0.0; grid.len()]; sym_len(grid.dim())],
            grid: grid.clone(),
            traceless,
        }
    }

    pub fn is_traceless(&self) -> bool {
        self.traceless
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.components[sym_index(self.grid.dim(), i, j)]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.components
    }

    /// Full `n x n` matrix at one point, row-major into a 3x3 buffer.
    pub fn at(&self, flat: usize) -> [[f64; 3]; 3] {
        let n = self.grid.dim();
        let mut m = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = self.components[sym_index(n, i, j)][flat];
            }
        }
        m
    }

    pub fn trace(&self) -> ScalarField {
        let n = self.grid.dim();
        let values = (0..self.grid.len())
            .map(|p| (0..n).map(|i| self.components[sym_index(n, i, i)][p]).sum())
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `max |tr| / max |entries|` (0 for the zero field).
    pub fn trace_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        self.trace().max_abs() / scale
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|v| s * v).collect())
                .collect(),
            traceless: self.traceless,
        }
    }

    /// Sum of two fields; the result is traceless iff both inputs are.
    pub fn add(&self, other: &SymTensorField) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
            traceless: self.traceless && other.traceless,
        })
    }
}

impl Field for SymTensorField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn component_slices(&self) -> Vec<&[f64]> {
        self.components.iter().map(|c| c.as_slice()).collect()
    }
}

/// Full (not necessarily symmetric) matrix field, entry `(i, j)` at `i*n + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl MatrixField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.dim();
        if components.len() != n * n {
            return Err(Error::GridMismatch(format!(
                "{} components for a {n}x{n} matrix field",
                components.len()
            )));
        }
        for c in &components {
            check_len(&grid, c)?;
        }
        Ok(Self { grid, components })
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.components[i * self.grid.dim() + j]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// `(A + A^t)/2` as a packed symmetric field (no traceless flag).
    pub fn symmetric_part(&self) -> Vec<Vec<f64>> {
        let n = self.grid.dim();
        let mut out = vec![Vec::new(); sym_len(n)];
        for i in 0..n {
            for j in i..n {
                out[sym_index(n, i, j)] = self
                    .entry(i, j)
                    .iter()
                    .zip(self.entry(j, i))
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
            }
        }
        out
    }

    /// `(A - A^t)/2`.
    pub fn skew_part(&self) -> MatrixField {
        let n = self.grid.dim();
        let mut comps = vec![Vec::new(); n * n];
        for i in 0..n {
            for j in 0..n {
                comps[i * n + j] = self
                    .entry(i, j)
                    .iter()
                    .zip(self.entry(j, i))
                    .map(|(a, b)| 0.5 * (a - b))
                    .collect();
            }
        }
        MatrixField {
            grid: self.grid.clone(),
            components: comps,
        }
    }

    pub fn trace(&self) -> ScalarField {
        let n = self.grid.dim();
        let values = (0..self.grid.len())
            .map(|p| (0..n).map(|i| self.entry(i, i)[p]).sum())
            .collect();
        ScalarField {
            grid: self.grid.clone(),
            values,
        }
    }
}

impl Field for MatrixField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn component_slices(&self) -> Vec<&[f64]> {
        self.components.iter().map(|c| c.as_slice()).collect()
    }
}

/// Closed ball, used as a support region.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Ball {
    pub fn centered(radius: f64) -> Self {
        Self {
            center: [0.0; 3],
            radius,
        }
    }

    pub fn contains(&self, x: &[f64; 3]) -> bool {
        self.distance_sq(x) <= self.radius * self.radius
    }

    pub fn distance_sq(&self, x: &[f64; 3]) -> f64 {
        (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum()
    }

    pub fn grown(&self, by: f64) -> Self {
        Self {
            center: self.center,
            radius: self.radius + by,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(half: f64, n: usize) -> Grid {
        Grid::uniform(PeriodicBox::cube(2, half).unwrap(), n).unwrap()
    }

    #[test]
    fn spacing_follows_box_and_counts() {
        let g = square(1.0, 64);
        assert_eq!(g.spacing(), &[1.0 / 32.0, 1.0 / 32.0]);
        let g = square(2.0, 128);
        assert_eq!(g.spacing(), &[1.0 / 32.0, 1.0 / 32.0]);
    }

    #[test]
    fn coarse_grids_are_rejected() {
        let b = PeriodicBox::cube(2, 1.0).unwrap();
        assert!(matches!(Grid::uniform(b, 8), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        assert!(PeriodicBox::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(PeriodicBox::new(vec![0.0], vec![1.0]).is_err());
        assert!(PeriodicBox::new(vec![0.0; 4], vec![1.0; 4]).is_err());
    }

    #[test]
    fn wavenumbers_are_in_fft_order() {
        let g = square(std::f64::consts::PI, 16);
        let k = g.wavenumbers(0);
        assert_eq!(k[1], 1.0);
        assert_eq!(k[8], 8.0);
        assert_eq!(k[15], -1.0);
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::new(PeriodicBox::cube(3, 1.0).unwrap(), &[16, 32, 16]).unwrap();
        for flat in [0, 1, 17, 5000, g.len() - 1] {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
    }

    #[test]
    fn sym_index_packs_upper_triangle() {
        assert_eq!(sym_index(2, 0, 0), 0);
        assert_eq!(sym_index(2, 1, 0), 1);
        assert_eq!(sym_index(2, 1, 1), 2);
        assert_eq!(sym_index(3, 2, 2), 5);
        assert_eq!(sym_index(3, 1, 2), 4);
    }

    #[test]
    fn support_excess_conventions() {
        let g = square(1.0, 32);
        let zero = ScalarField::zeros(&g);
        assert_eq!(support_excess(&zero, |_| false), 0.0);
        let one = ScalarField::constant(&g, 1.0);
        assert_eq!(support_excess(&one, |x| x[0] < 0.0), 1.0);
        let inside = ScalarField::from_fn(&g, |x| if x[0].abs() < 0.3 { 1.0 } else { 0.0 });
        assert_eq!(support_excess(&inside, |x| x[0].abs() < 0.5), 0.0);
    }

    #[test]
    fn traceless_flag_is_checked() {
        let g = square(1.0, 16);
        let comps = vec![vec![1.0; g.len()], vec![0.0; g.len()], vec![-0.5; g.len()]];
        assert!(SymTensorField::new(g.clone(), comps.clone(), true).is_err());
        let t = SymTensorField::traceless_part(g, comps).unwrap();
        assert!(t.trace_defect() <= TRACE_TOL);
        assert!((t.entry(0, 0)[0] - 0.75).abs() < 1e-15);
    }
}
