//! One Euler–Maruyama step for each particle system.
//!
//! Coefficients are frozen at the start of the step. Every step returns a
//! fresh state with the clock advanced by `dt`; non-finite coordinates are
//! passed through for the caller's blow-up guard to report.

use serde::{Deserialize, Serialize};

use super::interaction::{
    diffusion_matrix_fast, diffusion_matrix_ref, interaction_drift_fast, interaction_drift_ref,
};
use super::{ParticleState, SchemeKind, SufficientStats};
use crate::error::{Error, Result};
use crate::kernels::{psd_sqrt, sqrt_a_apply, xi_field, PSD_TOL};
use crate::linalg::VecD;
use crate::rng::NoiseSource;

/// How pairwise sums are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionPath {
    /// Sufficient-statistics reduction.
    Fast,
    /// Explicit loop over all pairs.
    Reference,
}

impl InteractionPath {
    pub fn from_flag(fast: bool) -> Self {
        if fast {
            InteractionPath::Fast
        } else {
            InteractionPath::Reference
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("time step must be positive, got {dt}")))
    }
}

fn drifts(state: &ParticleState, stats: &SufficientStats, path: InteractionPath) -> Vec<VecD> {
    match path {
        InteractionPath::Fast => state.iter().map(|v| interaction_drift_fast(stats, &v)).collect(),
        InteractionPath::Reference => (0..state.n()).map(|i| interaction_drift_ref(state, i)).collect(),
    }
}

fn advanced(state: &ParticleState, velocities: Vec<f64>, dt: f64) -> ParticleState {
    ParticleState { d: state.d, velocities, time: state.time + dt }
}

/// v^i ← v^i + drift dt + √(2dt) (avg a)^{1/2} g^i, one d-vector of noise
/// per particle drawn as a single block of N·d normals.
pub fn step_fournier<N: NoiseSource + ?Sized>(
    state: &ParticleState,
    dt: f64,
    noise: &mut N,
    path: InteractionPath,
) -> Result<ParticleState> {
    check_dt(dt)?;
    let d = state.d.get();
    let n = state.n();
    let mut g = vec![0.0; n * d];
    noise.fill_normal(&mut g);
    let stats = SufficientStats::from_state(state);
    let drift = drifts(state, &stats, path);
    let amp = (2.0 * dt).sqrt();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        let v = state.velocity(i);
        let diff = match path {
            InteractionPath::Fast => diffusion_matrix_fast(&stats, &v),
            InteractionPath::Reference => diffusion_matrix_ref(state, i),
        };
        let root = psd_sqrt(&diff, PSD_TOL)?;
        let gi = VecD::from_slice_unchecked(&g[i * d..(i + 1) * d], state.d);
        let next = v + drift[i].scale(dt) + root.mul_vec(&gi).scale(amp);
        out.extend_from_slice(next.as_slice());
    }
    Ok(advanced(state, out, dt))
}

/// v^i ← v^i + drift dt + √(2dt/N) Σ_j |z|Π(z) g^{ij}, z = v^i − v^j.
///
/// The N² independent pair noises are drawn one particle row (N·d normals)
/// at a time, so this scheme consumes N blocks per step rather than one.
pub fn step_fgm<N: NoiseSource + ?Sized>(
    state: &ParticleState,
    dt: f64,
    noise: &mut N,
    path: InteractionPath,
) -> Result<ParticleState> {
    check_dt(dt)?;
    let d = state.d.get();
    let n = state.n();
    let stats = SufficientStats::from_state(state);
    let drift = drifts(state, &stats, path);
    let amp = (2.0 * dt / n as f64).sqrt();
    let mut row = vec![0.0; n * d];
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        noise.fill_normal(&mut row);
        let v = state.velocity(i);
        let mut acc = VecD::zeros(state.d);
        for (j, vj) in state.iter().enumerate() {
            let g = VecD::from_slice_unchecked(&row[j * d..(j + 1) * d], state.d);
            acc = acc + sqrt_a_apply(&(v - vj), &g);
        }
        let next = v + drift[i].scale(dt) + acc.scale(amp);
        out.extend_from_slice(next.as_slice());
    }
    Ok(advanced(state, out, dt))
}

/// v^i ← v^i + drift dt + √(2dt/N) Σ_j Σ_{α<β} ξ_{αβ}(v^i − v^j) g^{j,αβ}.
///
/// The scalar noises g^{j,αβ} are shared by every particle; they are drawn
/// as one block of N·d(d−1)/2 normals laid out particle-major.
pub fn step_environmental<N: NoiseSource + ?Sized>(
    state: &ParticleState,
    dt: f64,
    noise: &mut N,
    path: InteractionPath,
) -> Result<ParticleState> {
    check_dt(dt)?;
    let dim = state.d;
    let d = dim.get();
    let n = state.n();
    let pairs: Vec<(usize, usize)> = dim.pair_indices().collect();
    let np = pairs.len();
    let mut g = vec![0.0; n * np];
    noise.fill_normal(&mut g);
    let stats = SufficientStats::from_state(state);
    let drift = drifts(state, &stats, path);
    let amp = (2.0 * dt / n as f64).sqrt();
    let mut out = Vec::with_capacity(n * d);
    match path {
        InteractionPath::Fast => {
            // S_p = Σ_j g^{j,p},  T_p = Σ_j v^j g^{j,p}.
            let mut s = vec![0.0; np];
            let mut t = vec![VecD::zeros(dim); np];
            for (j, vj) in state.iter().enumerate() {
                for p in 0..np {
                    let gj = g[j * np + p];
                    s[p] += gj;
                    t[p] = t[p] + vj.scale(gj);
                }
            }
            for (i, v) in state.iter().enumerate() {
                let mut acc = VecD::zeros(dim);
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    acc[a] += t[p][b] - v[b] * s[p];
                    acc[b] += v[a] * s[p] - t[p][a];
                }
                let next = v + drift[i].scale(dt) + acc.scale(amp);
                out.extend_from_slice(next.as_slice());
            }
        }
        InteractionPath::Reference => {
            for (i, v) in state.iter().enumerate() {
                let mut acc = VecD::zeros(dim);
                for (j, vj) in state.iter().enumerate() {
                    let z = v - vj;
                    for (p, &(a, b)) in pairs.iter().enumerate() {
                        acc = acc + xi_field(&z, a, b)?.scale(g[j * np + p]);
                    }
                }
                let next = v + drift[i].scale(dt) + acc.scale(amp);
                out.extend_from_slice(next.as_slice());
            }
        }
    }
    Ok(advanced(state, out, dt))
}

/// Dispatches on the scheme.
pub fn step<N: NoiseSource + ?Sized>(
    scheme: SchemeKind,
    state: &ParticleState,
    dt: f64,
    noise: &mut N,
    path: InteractionPath,
) -> Result<ParticleState> {
    match scheme {
        SchemeKind::Fournier => step_fournier(state, dt, noise, path),
        SchemeKind::Fgm => step_fgm(state, dt, noise, path),
        SchemeKind::Environmental => step_environmental(state, dt, noise, path),
    }
}
