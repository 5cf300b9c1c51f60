//! Pairwise interaction sums, by brute force and through sufficient statistics.
//!
//! For Maxwellian molecules both sums collapse onto the first two empirical
//! moments:
//!
//! ```text
//! (1/N) Σ_j b(v − v^j) = −(d−1)(v − m)
//! (1/N) Σ_j a(v − v^j) = (|u|² + tr C) Id − (u ⊗ u + C),   u = v − m
//! ```
//!
//! where C = M − m ⊗ m. The second line is the centered form of
//! (|v|² − 2 v·m + s) Id − (v⊗v − v⊗m − m⊗v + M).

use super::{ParticleState, SufficientStats};
use crate::kernels::{coeff_a, coeff_b};
use crate::linalg::{MatD, VecD};

/// (2/N) Σ_j b(v^i − v^j), evaluated pair by pair.
pub fn interaction_drift_ref(state: &ParticleState, i: usize) -> VecD {
    let vi = state.velocity(i);
    let mut acc = VecD::zeros(state.dim());
    for vj in state.iter() {
        acc = acc + coeff_b(&(vi - vj));
    }
    acc.scale(2.0 / state.n() as f64)
}

/// −2(d−1)(v − m): the drift of a particle at `v` from the statistics alone.
#[inline]
pub fn interaction_drift_fast(stats: &SufficientStats, v: &VecD) -> VecD {
    let d = v.dim().as_f64();
    (*v - stats.mean).scale(-2.0 * (d - 1.0))
}

/// (1/N) Σ_j a(v^i − v^j), evaluated pair by pair.
pub fn diffusion_matrix_ref(state: &ParticleState, i: usize) -> MatD {
    let vi = state.velocity(i);
    let mut acc = MatD::zeros(state.dim());
    for vj in state.iter() {
        acc = acc + coeff_a(&(vi - vj));
    }
    acc.scale(1.0 / state.n() as f64)
}

/// (1/N) Σ_j a(v − v^j) from the statistics, in O(d²).
#[inline]
pub fn diffusion_matrix_fast(stats: &SufficientStats, v: &VecD) -> MatD {
    let dim = v.dim();
    let d = dim.get();
    let u = *v - stats.mean;
    let c = &stats.covariance;
    let diag = u.norm_sq() + c.trace();
    let mut out = MatD::zeros(dim);
    for a in 0..d {
        for b in a..d {
            let delta = if a == b { diag } else { 0.0 };
            let x = delta - (u[a] * u[b] + c.get(a, b));
            out.set(a, b, x);
            out.set(b, a, x);
        }
    }
    out
}
