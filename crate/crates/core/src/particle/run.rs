//! Whole-trajectory integration of one replica.

use serde::{Deserialize, Serialize};

use super::initial::{sample_initial, InitialLaw};
use super::schemes::{step, InteractionPath};
use super::{ParticleState, SchemeKind};
use crate::error::{Error, Result};
use crate::linalg::Dim;
use crate::moments::MomentState;
use crate::rng::{replica_rng, Coarsened, NoiseSource};
use crate::statistics::StatRecord;

/// Largest particle count accepted for the O(N²) pair-noise scheme.
pub const FGM_MAX_PARTICLES: usize = 4096;

fn default_p() -> u32 {
    4
}

fn default_record_every() -> usize {
    1
}

fn default_fast_path() -> bool {
    true
}

/// Parameters of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub d: Dim,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: SchemeKind,
    pub seed: u64,
    pub initial: InitialLaw,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_fast_path")]
    pub fast_path: bool,
    #[serde(default)]
    pub exact_center: bool,
    /// Order of the extra moment column of each record.
    #[serde(default = "default_p")]
    pub moment_p: u32,
}

impl SimConfig {
    /// A configuration with the defaults for the optional fields.
    pub fn new(d: Dim, n: usize, dt: f64, t_end: f64, scheme: SchemeKind, seed: u64) -> Self {
        SimConfig {
            d,
            n,
            dt,
            t_end,
            scheme,
            seed,
            initial: InitialLaw::isotropic(d),
            record_every: 1,
            fast_path: true,
            exact_center: false,
            moment_p: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.moment_p < 2 || self.moment_p % 2 != 0 {
            return Err(Error::Config(format!("moment_p must be even and >= 2, got {}", self.moment_p)));
        }
        if self.scheme == SchemeKind::Fgm && self.n > FGM_MAX_PARTICLES {
            return Err(Error::Config(format!(
                "the fgm scheme is limited to n <= {FGM_MAX_PARTICLES}, got {}",
                self.n
            )));
        }
        if self.initial.dim()? != self.d {
            return Err(Error::Config(format!(
                "initial law is {}-dimensional but d = {}",
                self.initial.dim()?,
                self.d
            )));
        }
        self.initial.validate()?;
        self.steps().map(|_| ())
    }

    /// Number of steps; t_end must be a whole multiple of dt.
    pub fn steps(&self) -> Result<usize> {
        let k = (self.t_end / self.dt).round();
        if (k * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::Config(format!(
                "t_end = {} is not a whole number of steps dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(k as usize)
    }

    pub fn path(&self) -> InteractionPath {
        InteractionPath::from_flag(self.fast_path)
    }
}

/// Where and when a replica produced non-finite velocities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub step: usize,
    pub time: f64,
    pub particle: usize,
}

/// Records of one replica plus its final state.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub replica: u64,
    pub records: Vec<StatRecord>,
    pub final_state: ParticleState,
    pub blow_up: Option<BlowUp>,
}

/// Integrates replica `replica` of `config` from a fresh i.i.d. sample.
///
/// The replica's random stream is `replica_rng(config.seed, replica)`; it
/// first draws the initial state and then all step noise, so the output is
/// a function of `(config, replica)` alone.
pub fn run(config: &SimConfig, replica: u64) -> Result<RunOutput> {
    run_coupled(config, replica, 1)
}

/// Like [`run`], but each step consumes `coarsening` blocks of the replica
/// stream, combined into one Brownian increment over the longer step.
///
/// Running `config` with step `k·dt` and coarsening `k` follows the same
/// Brownian path as running it with step `dt` and coarsening 1. Only the
/// single-block schemes (fournier, environmental) can be coupled this way.
pub fn run_coupled(config: &SimConfig, replica: u64, coarsening: usize) -> Result<RunOutput> {
    config.validate()?;
    if coarsening == 0 {
        return Err(Error::Config("coarsening must be at least 1".into()));
    }
    if coarsening > 1 && config.scheme == SchemeKind::Fgm {
        return Err(Error::Config("the fgm scheme draws per-row noise and cannot be coarsened".into()));
    }
    let moments = config.initial.moment_state()?;
    let mut rng = replica_rng(config.seed, replica);
    let state = sample_initial(&config.initial, config.n, &mut rng, config.exact_center)?;
    let mut noise = Coarsened::new(rng, coarsening);
    integrate(config, state, &mut noise, &moments, replica)
}

/// Integrates `state` to `config.t_end` with the given noise.
pub fn integrate<N: NoiseSource + ?Sized>(
    config: &SimConfig,
    mut state: ParticleState,
    noise: &mut N,
    moments: &MomentState,
    replica: u64,
) -> Result<RunOutput> {
    let steps = config.steps()?;
    let path = config.path();
    let record = |s: &ParticleState| StatRecord::compute(s, moments, config.moment_p, replica, config.scheme);
    let mut records = vec![record(&state)?];
    let t0 = state.time();
    for k in 1..=steps {
        let mut next = step(config.scheme, &state, config.dt, noise, path)?;
        next.set_time(t0 + k as f64 * config.dt);
        if let Some(particle) = next.first_non_finite() {
            let blow_up = BlowUp { step: k, time: next.time(), particle };
            return Ok(RunOutput { replica, records, final_state: state, blow_up: Some(blow_up) });
        }
        state = next;
        if k % config.record_every == 0 || k == steps {
            records.push(record(&state)?);
        }
    }
    Ok(RunOutput { replica, records, final_state: state, blow_up: None })
}
