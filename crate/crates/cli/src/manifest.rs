use std::path::Path;
use std::time::Instant;

use landau_core::rng::{replica_seed, splitmix64};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliResult;

pub const SEED_RULE: &str = "replica r of an axis with master seed s uses ChaCha8 seeded with \
splitmix64(s ^ splitmix64(r + 1)); sweep axis N uses master splitmix64(seed ^ (N << 32)); \
auxiliary streams use replica indices counting down from 2^64 - 1";

/// Master seed of the N-th point of a sweep.
pub fn axis_master(seed: u64, n: usize) -> u64 {
    splitmix64(seed ^ ((n as u64) << 32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSeed {
    /// Particle count of the sweep point, or the base n for plain runs.
    pub n: usize,
    pub replica: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// What ran, with which seeds, and where the artifacts went.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub seed_rule: String,
    pub replica_seeds: Vec<ReplicaSeed>,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<String>,
    /// Derived settings such as an automatically chosen step.
    pub notes: Vec<String>,
    /// Blow-ups, failed gates and other conditions worth a second look.
    pub flags: Vec<String>,
}

/// Accumulates a manifest while a command runs.
pub struct ManifestBuilder {
    manifest: RunManifest,
    start: Instant,
    stage_start: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: &ExperimentConfig, workers: usize) -> Self {
        let now = Instant::now();
        ManifestBuilder {
            manifest: RunManifest {
                tool: "landau".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                config: config.clone(),
                master_seed: config.sim.seed,
                seed_rule: SEED_RULE.into(),
                replica_seeds: Vec::new(),
                workers,
                wall_clock_seconds: 0.0,
                stages: Vec::new(),
                outputs: Vec::new(),
                notes: Vec::new(),
                flags: Vec::new(),
            },
            start: now,
            stage_start: now,
        }
    }

    pub fn seeds(&mut self, master: u64, n: usize, replicas: usize) {
        self.manifest
            .replica_seeds
            .extend((0..replicas as u64).map(|r| ReplicaSeed { n, replica: r, seed: replica_seed(master, r) }));
    }

    /// Closes the current stage under `name`.
    pub fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.manifest.stages.push(StageTiming { stage: name.into(), seconds: (now - self.stage_start).as_secs_f64() });
        self.stage_start = now;
    }

    pub fn output(&mut self, file: &str) {
        self.manifest.outputs.push(file.into());
    }

    pub fn note(&mut self, note: String) {
        self.manifest.notes.push(note);
    }

    pub fn flag(&mut self, note: String) {
        self.manifest.flags.push(note);
    }

    pub fn write(mut self, dir: &Path) -> CliResult<RunManifest> {
        self.manifest.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(self.manifest)
    }
}
