//! Quadratures and envelope checks on density fields.

use serde::{Deserialize, Serialize};

use super::DensityField;
use crate::error::{Error, Result};
use crate::moments::MomentState;

/// Cells with f below `DEFAULT_FLOOR · max f` are excluded from log-ratio
/// envelopes and Gaussian fits.
pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Trapezoidal mass, momentum and energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: [f64; 2],
    pub energy: f64,
}

fn quadrature(field: &DensityField, g: impl Fn(f64, f64) -> f64) -> f64 {
    let grid = field.grid();
    let n = grid.n();
    let h2 = grid.h() * grid.h();
    let mut total = 0.0;
    for i in 0..n {
        let x = grid.coord(i);
        let wi = grid.weight(i);
        let mut row = 0.0;
        for j in 0..n {
            row += grid.weight(j) * g(x, grid.coord(j)) * field.at(i, j);
        }
        total += wi * row;
    }
    total * h2
}

pub fn conserved_quantities(field: &DensityField) -> Conserved {
    Conserved {
        mass: quadrature(field, |_, _| 1.0),
        momentum: [quadrature(field, |x, _| x), quadrature(field, |_, y| y)],
        energy: quadrature(field, |x, y| x * x + y * y),
    }
}

/// E_αβ = ∫ v_α v_β f by the trapezoidal rule.
pub fn second_moments(field: &DensityField) -> [[f64; 2]; 2] {
    let e11 = quadrature(field, |x, _| x * x);
    let e22 = quadrature(field, |_, y| y * y);
    let e12 = quadrature(field, |x, y| x * y);
    [[e11, e12], [e12, e22]]
}

/// Grid second moments against the closed-form temperatures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistency {
    pub grid: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub max_diag_deviation: f64,
    pub off_diagonal: f64,
}

pub fn self_consistency(field: &DensityField, t: f64, moments: &MomentState) -> SelfConsistency {
    let e = second_moments(field);
    let grid = vec![e[0][0], e[1][1]];
    let closed_form = moments.temperatures(t);
    let max_diag_deviation = grid
        .iter()
        .zip(&closed_form)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    SelfConsistency { grid, closed_form, max_diag_deviation, off_diagonal: e[0][1].abs() }
}

/// Interior nodes whose 3×3 neighbourhood lies above the floor.
fn unmasked(field: &DensityField, floor: f64) -> Result<Vec<(usize, usize)>> {
    if !(floor > 0.0) {
        return Err(Error::NonPositive(floor));
    }
    let n = field.grid().n();
    let cut = floor * field.max_value();
    let mut cells = Vec::new();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let ok = (i - 1..=i + 1).all(|a| (j - 1..=j + 1).all(|b| field.at(a, b) > cut));
            if ok {
                cells.push((i, j));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::Insufficient("no grid cells above the density floor".into()));
    }
    Ok(cells)
}

/// max |∇ log f| / (1 + √t + |v|) over unmasked cells, by central
/// differences.
pub fn log_gradient_ratio(field: &DensityField, t: f64, floor: f64) -> Result<f64> {
    let grid = field.grid();
    let h = grid.h();
    let g = |i: usize, j: usize| field.at(i, j).ln();
    let mut best = 0.0f64;
    for (i, j) in unmasked(field, floor)? {
        let gx = (g(i + 1, j) - g(i - 1, j)) / (2.0 * h);
        let gy = (g(i, j + 1) - g(i, j - 1)) / (2.0 * h);
        let v = grid.point(i, j);
        best = best.max(gx.hypot(gy) / (1.0 + t.sqrt() + v.norm()));
    }
    Ok(best)
}

/// max |∇² log f|_F / (1 + t + |v|²) over unmasked cells.
pub fn log_hessian_ratio(field: &DensityField, t: f64, floor: f64) -> Result<f64> {
    let grid = field.grid();
    let h2 = grid.h() * grid.h();
    let g = |i: usize, j: usize| field.at(i, j).ln();
    let mut best = 0.0f64;
    for (i, j) in unmasked(field, floor)? {
        let gxx = (g(i + 1, j) - 2.0 * g(i, j) + g(i - 1, j)) / h2;
        let gyy = (g(i, j + 1) - 2.0 * g(i, j) + g(i, j - 1)) / h2;
        let gxy = (g(i + 1, j + 1) - g(i + 1, j - 1) - g(i - 1, j + 1) + g(i - 1, j - 1)) / (4.0 * h2);
        let frob = (gxx * gxx + gyy * gyy + 2.0 * gxy * gxy).sqrt();
        let v = grid.point(i, j);
        best = best.max(frob / (1.0 + t + v.norm_sq()));
    }
    Ok(best)
}

/// Lower envelope f ≥ C₂ exp(−C₂′|v|²/2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub c2: f64,
    pub c2_prime: f64,
    /// max over unmasked cells of (envelope − log f); ≤ 0 up to round-off.
    pub residual: f64,
    pub cells: usize,
}

/// Least-squares fit of log f against −|v|²/2, with the intercept then
/// lowered until the envelope lies below every unmasked cell.
pub fn gaussian_lower_check(field: &DensityField, floor: f64) -> Result<GaussianFit> {
    let grid = field.grid();
    let cells = unmasked(field, floor)?;
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .map(|&(i, j)| (-0.5 * grid.point(i, j).norm_sq(), field.at(i, j).ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Insufficient("Gaussian fit needs cells at distinct radii".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let shift = pts
        .iter()
        .map(|p| intercept + slope * p.0 - p.1)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let log_c2 = intercept - shift;
    let residual = pts
        .iter()
        .map(|p| log_c2 + slope * p.0 - p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(GaussianFit { c2: log_c2.exp(), c2_prime: slope, residual, cells: pts.len() })
}
