use super::{Grid, ScalarField};
use crate::error::{Error, Result};

fn psi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Radial profile on `s = |x|/eps`: 1 on `[0, 1/2]`, a smooth step down to 0
/// on `[1/2, 1]`, 0 beyond. Not normalized.
pub fn mollifier_profile(s: f64) -> f64 {
    if s <= 0.5 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let t = 2.0 * s - 1.0;
    let a = psi(1.0 - t);
    let b = psi(t);
    a / (a + b)
}

/// Unit-mass radial kernel supported in `|x| < eps`, centered at the origin of
/// physical coordinates. Normalized by the discrete sum.
pub fn mollifier(epsilon: f64, grid: &Grid) -> Result<ScalarField> {
    let required = 2.0 * grid.max_spacing();
    if !(epsilon > required) {
        return Err(Error::UnderResolved { epsilon, required });
    }
    let dim = grid.dim();
    let mut k = ScalarField::from_fn(grid, |x| {
        let r = x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
        mollifier_profile(r / epsilon)
    });
    let mass = k.integral();
    for v in k.values_mut() {
        *v /= mass;
    }
    Ok(k)
}
