//! Particle simulation and verification tools for the spatially homogeneous
//! Landau equation with Maxwellian molecules.
//!
//! The crate has four layers:
//!
//! * [`kernels`], [`linalg`]: the coefficient fields a, b, c, ξ and small
//!   dense linear algebra for d ∈ {2, 3}.
//! * [`particle`], [`statistics`]: three interacting particle systems and the
//!   functionals tracked along their trajectories.
//! * [`moments`], [`limit`]: the closed-form moment layer of the limit
//!   equation and a finite-volume solver for its 2D density.
//! * [`chaos`]: distances between particle marginals and the limit density.

pub mod chaos;
pub mod error;
pub mod kernels;
pub mod limit;
pub mod linalg;
pub mod moments;
pub mod particle;
pub mod rng;
pub mod statistics;

pub use error::{Error, Result};
pub use linalg::{Dim, MatD, VecD};
pub use moments::MomentState;
pub use particle::{InitialLaw, ParticleState, SchemeKind, SimConfig, SufficientStats};
pub use statistics::StatRecord;
