//! The exactly solvable moment layer of the limit equation.
//!
//! Under the normalization (mass 1, momentum 0, energy d) the second-moment
//! matrix of the solution stays diagonal and relaxes as
//! E_α(t) = 1 + D_αα e^{−4dt}. The convolved diffusion matrix then reads
//! ā(v) = (d + |v|²) Id − v ⊗ v − diag(E(t)).

use crate::error::{Error, Result};
use crate::linalg::{Dim, MatD, VecD};

const SUM_TOL: f64 = 1e-12;

/// E_α(t) = 1 + D_αα e^{−4dt}.
#[inline]
pub fn directional_temperature(d_aa: f64, d: Dim, t: f64) -> f64 {
    1.0 + d_aa * (-4.0 * d.as_f64() * t).exp()
}

/// η = min_α min(1 + D_αα, d − 1 − D_αα). Errors unless Σ D_αα = 0 and η > 0.
pub fn ellipticity_margin(diag: &[f64]) -> Result<f64> {
    let d = Dim::new(diag.len())?.as_f64();
    let sum: f64 = diag.iter().sum();
    if sum.abs() > SUM_TOL {
        return Err(Error::Config(format!("anisotropy must be trace free, sum is {sum:e}")));
    }
    let eta = diag
        .iter()
        .map(|x| (1.0 + x).min(d - 1.0 - x))
        .fold(f64::INFINITY, f64::min);
    if !(eta > 0.0) {
        return Err(Error::Degenerate(eta));
    }
    Ok(eta)
}

/// Initial anisotropy D = diag(E(0)) − Id with its ellipticity margin.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    d: Dim,
    diag: Vec<f64>,
    eta: f64,
}

impl MomentState {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        let eta = ellipticity_margin(&diag)?;
        let d = Dim::new(diag.len())?;
        Ok(MomentState { d, diag, eta })
    }

    /// D = 0: the equilibrium moment layer.
    pub fn isotropic(d: Dim) -> Self {
        MomentState { d, diag: vec![0.0; d.get()], eta: 1.0 }
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.d
    }

    pub fn anisotropy(&self) -> &[f64] {
        &self.diag
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn temperature(&self, alpha: usize, t: f64) -> f64 {
        directional_temperature(self.diag[alpha], self.d, t)
    }

    pub fn temperatures(&self, t: f64) -> Vec<f64> {
        (0..self.d.get()).map(|a| self.temperature(a, t)).collect()
    }

    /// ā(v, t) = (d + |v|²) Id − v ⊗ v − diag(E(t)).
    pub fn abar(&self, v: &VecD, t: f64) -> MatD {
        let d = self.d.get();
        let base = self.d.as_f64() + v.norm_sq();
        let mut m = MatD::zeros(self.d);
        for a in 0..d {
            for b in 0..d {
                let x = if a == b { base - self.temperature(a, t) } else { 0.0 };
                m.set(a, b, x - v[a] * v[b]);
            }
        }
        m
    }
}

/// Free-function form of [`MomentState::abar`].
pub fn abar(v: &VecD, t: f64, moments: &MomentState) -> MatD {
    moments.abar(v, t)
}
