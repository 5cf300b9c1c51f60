//! Interacting particle systems whose joint law solves the Landau master
//! equation.
//!
//! Three Euler–Maruyama schemes are provided. They share the drift
//! (2/N) Σ_j b(v^i − v^j) and differ only in how the diffusion
//! (1/N) Σ_j a(v^i − v^j) is realized:
//!
//! * [`SchemeKind::Fournier`]: one d-dimensional Brownian motion per
//!   particle, multiplied by the square root of the averaged matrix.
//! * [`SchemeKind::Fgm`]: one Brownian motion per ordered pair, each
//!   multiplied by a(z)^{1/2} = |z| Π(z).
//! * [`SchemeKind::Environmental`]: scalar Brownian motions shared by all
//!   particles, one per (j, α < β), driving the rotation fields ξ_{αβ}.

mod initial;
mod interaction;
mod run;
mod schemes;

pub use initial::{sample_initial, InitialLaw};
pub use interaction::{
    diffusion_matrix_fast, diffusion_matrix_ref, interaction_drift_fast, interaction_drift_ref,
};
pub use run::{integrate, run, run_coupled, BlowUp, RunOutput, SimConfig, FGM_MAX_PARTICLES};
pub use schemes::{step, step_environmental, step_fgm, step_fournier, InteractionPath};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Dim, MatD, VecD};

/// Velocities of N particles in R^d plus the simulation clock.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleState {
    d: Dim,
    velocities: Vec<f64>,
    time: f64,
}

impl ParticleState {
    /// `velocities` is the flat, particle-major coordinate array.
    pub fn new(d: Dim, velocities: Vec<f64>, time: f64) -> Result<Self> {
        let dd = d.get();
        if velocities.is_empty() || velocities.len() % dd != 0 {
            return Err(Error::Config(format!(
                "velocity array of length {} does not hold whole {dd}-vectors",
                velocities.len()
            )));
        }
        if let Some(k) = velocities.iter().position(|x| !x.is_finite()) {
            return Err(Error::BlowUp { particle: k / dd, time });
        }
        if !(time >= 0.0) {
            return Err(Error::Config(format!("negative time {time}")));
        }
        Ok(ParticleState { d, velocities, time })
    }

    pub fn from_vectors(vs: &[VecD], time: f64) -> Result<Self> {
        let d = vs
            .first()
            .ok_or_else(|| Error::Config("empty particle set".into()))?
            .dim();
        let flat = vs.iter().flat_map(|v| v.as_slice().iter().copied()).collect();
        Self::new(d, flat, time)
    }

    #[inline]
    pub fn dim(&self) -> Dim {
        self.d
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.velocities.len() / self.d.get()
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> VecD {
        let d = self.d.get();
        VecD::from_slice_unchecked(&self.velocities[i * d..(i + 1) * d], self.d)
    }

    #[inline]
    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn iter(&self) -> impl Iterator<Item = VecD> + '_ {
        self.velocities
            .chunks_exact(self.d.get())
            .map(move |c| VecD::from_slice_unchecked(c, self.d))
    }

    /// Index of the first particle with a non-finite coordinate.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.velocities
            .iter()
            .position(|x| !x.is_finite())
            .map(|k| k / self.d.get())
    }

    /// Subtracts the empirical mean from every particle.
    pub fn center(&mut self) {
        let m = SufficientStats::from_state(self).mean;
        let d = self.d.get();
        for chunk in self.velocities.chunks_exact_mut(d) {
            for a in 0..d {
                chunk[a] -= m[a];
            }
        }
    }
}

/// Empirical mean m, mean energy s and second-moment matrix M of a state.
///
/// The centered covariance C = M − m ⊗ m is kept alongside because the
/// pairwise sums are evaluated in centered form, which makes N = 1 and
/// all-equal configurations exact fixed points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SufficientStats {
    pub mean: VecD,
    pub energy: f64,
    pub second: MatD,
    pub covariance: MatD,
}

impl SufficientStats {
    pub fn from_state(state: &ParticleState) -> Self {
        let d = state.dim();
        let dd = d.get();
        let inv_n = 1.0 / state.n() as f64;
        let mut mean = VecD::zeros(d);
        for v in state.iter() {
            mean = mean + v;
        }
        let mean = mean.scale(inv_n);
        let mut cov = MatD::zeros(d);
        for v in state.iter() {
            let u = v - mean;
            for a in 0..dd {
                for b in a..dd {
                    cov.set(a, b, cov.get(a, b) + u[a] * u[b]);
                }
            }
        }
        for a in 0..dd {
            for b in a..dd {
                let x = cov.get(a, b) * inv_n;
                cov.set(a, b, x);
                cov.set(b, a, x);
            }
        }
        let second = cov + mean.outer(&mean);
        SufficientStats { mean, energy: second.trace(), second, covariance: cov }
    }
}

/// Which particle system to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Fournier,
    Fgm,
    Environmental,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Fournier, SchemeKind::Fgm, SchemeKind::Environmental];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Fournier => "fournier",
            SchemeKind::Fgm => "fgm",
            SchemeKind::Environmental => "environmental",
        }
    }

    /// Standard normal draws consumed per step.
    pub fn normals_per_step(self, n: usize, d: Dim) -> usize {
        match self {
            SchemeKind::Fournier => n * d.get(),
            SchemeKind::Fgm => n * n * d.get(),
            SchemeKind::Environmental => n * d.pairs(),
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fournier" => Ok(SchemeKind::Fournier),
            "fgm" => Ok(SchemeKind::Fgm),
            "environmental" => Ok(SchemeKind::Environmental),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
