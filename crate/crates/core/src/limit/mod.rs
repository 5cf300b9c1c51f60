//! Grid solver for the two-dimensional limit equation.
//!
//! With the second moments known in closed form the Landau equation for
//! Maxwellian molecules becomes the linear Fokker–Planck equation
//!
//! ```text
//! ∂t f = ∇·( ā(t, v) ∇f + (d − 1) v f ),   ā = (d + |v|²) Id − v ⊗ v − diag(E(t)).
//! ```
//!
//! It is discretized in divergence form with vertex-centered control
//! volumes, so the trapezoidal mass is conserved to round-off.

mod diagnostics;
mod io;
mod solver;

pub use crate::moments::{abar, directional_temperature, ellipticity_margin, MomentState};
pub use diagnostics::{
    conserved_quantities, gaussian_lower_check, log_gradient_ratio, log_hessian_ratio,
    second_moments, self_consistency, Conserved, GaussianFit, SelfConsistency, DEFAULT_FLOOR,
};
pub use io::{read_field, write_field, FieldSidecar};
pub use solver::{
    apply_divergence_form, apply_nondivergence_form, max_stable_dt, solve, step_fp, CoefficientMode,
    Diagnostics, Snapshot, CFL,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Dim, VecD};
use crate::particle::InitialLaw;

/// Square grid [−L, L]² with n nodes per axis, spacing h = 2L/(n − 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid2D {
    half_width: f64,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    half_width: f64,
    n: usize,
}

impl TryFrom<GridRepr> for Grid2D {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid2D::new(r.half_width, r.n)
    }
}

impl From<Grid2D> for GridRepr {
    fn from(g: Grid2D) -> Self {
        GridRepr { half_width: g.half_width, n: g.n }
    }
}

impl Grid2D {
    /// `n` must be odd so that the origin is a node, and L ≥ 6.
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if n < 5 || n % 2 == 0 {
            return Err(Error::Config(format!("grid size must be odd and at least 5, got {n}")));
        }
        if !(half_width >= 6.0 && half_width.is_finite()) {
            return Err(Error::Config(format!("grid half-width must be at least 6, got {half_width}")));
        }
        Ok(Grid2D { half_width, n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    /// Coordinate of node k along either axis.
    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        -self.half_width + k as f64 * self.h()
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> VecD {
        VecD::from_slice_unchecked(&[self.coord(i), self.coord(j)], Dim::TWO)
    }

    /// One-dimensional trapezoid weight of node k (without the factor h).
    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k == self.n - 1 {
            0.5
        } else {
            1.0
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
}

/// Nodal values of a density on a [`Grid2D`], row-major in (v₁, v₂).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: Grid2D,
    values: Vec<f64>,
    time: f64,
}

impl DensityField {
    pub fn new(grid: Grid2D, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n * grid.n {
            return Err(Error::Config(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.n * grid.n
            )));
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Negativity { value: values[k], i: k / grid.n, j: k % grid.n, time });
        }
        Ok(DensityField { grid, values, time })
    }

    pub fn from_fn(grid: Grid2D, time: f64, f: impl Fn(&VecD) -> f64) -> Result<Self> {
        let n = grid.n;
        let values = (0..n * n).map(|k| f(&grid.point(k / n, k % n))).collect();
        Self::new(grid, values, time)
    }

    /// Nodal values of a two-dimensional initial law.
    pub fn from_law(grid: Grid2D, law: &InitialLaw) -> Result<Self> {
        if law.dim()? != Dim::TWO {
            return Err(Error::Dimension(law.dim()?.get()));
        }
        Self::from_fn(grid, 0.0, |v| law.density(v))
    }

    /// The standard Gaussian (2π)⁻¹ e^{−|v|²/2}.
    pub fn equilibrium(grid: Grid2D) -> Result<Self> {
        Self::from_fn(grid, 0.0, |v| (-0.5 * v.norm_sq()).exp() / (2.0 * std::f64::consts::PI))
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|x| x * s).collect(), self.time)
    }

    /// Bilinear interpolation; zero outside the grid.
    pub fn interpolate(&self, v: &VecD) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let x = (v[0] + g.half_width) / h;
        let y = (v[1] + g.half_width) / h;
        let top = (g.n - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= top && y <= top) {
            return 0.0;
        }
        let i = (x.floor() as usize).min(g.n - 2);
        let j = (y.floor() as usize).min(g.n - 2);
        let (fx, fy) = (x - i as f64, y - j as f64);
        (1.0 - fx) * (1.0 - fy) * self.at(i, j)
            + fx * (1.0 - fy) * self.at(i + 1, j)
            + (1.0 - fx) * fy * self.at(i, j + 1)
            + fx * fy * self.at(i + 1, j + 1)
    }

    /// Relative L¹ distance to another field on the same grid.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::Config("fields live on different grids".into()));
        }
        let g = &self.grid;
        let h2 = g.h() * g.h();
        let mut s = 0.0;
        for i in 0..g.n {
            for j in 0..g.n {
                let w = g.weight(i) * g.weight(j) * h2;
                s += w * (self.at(i, j) - other.at(i, j)).abs();
            }
        }
        Ok(s)
    }

    pub(crate) fn with_values(&self, values: Vec<f64>, time: f64) -> Self {
        DensityField { grid: self.grid, values, time }
    }
}
