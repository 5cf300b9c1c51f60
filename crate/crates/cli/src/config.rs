//! Experiment configuration: one TOML file, parsed strictly.
//!
//! Sections may be written as tables or as dotted keys (`sim.n = 1000`).
//! Unknown keys are errors, reported with their full path.

use std::path::Path;

use landau_core::limit::{CoefficientMode, Grid2D};
use landau_core::particle::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

fn one() -> usize {
    1
}

/// Everything a command needs; each command reads the sections it uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chaos: Option<ChaosConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveConfig>,
}

/// N axis of the law-of-large-numbers sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub replicas: usize,
    /// Times at which the functional is averaged; the runs stop at the last.
    pub times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One fixed particle from every replica.
    #[default]
    Particle,
    /// All particles of all replicas.
    All,
}

fn default_limit_samples() -> usize {
    100_000
}
fn default_n_proj() -> usize {
    128
}
fn default_knn_k() -> usize {
    landau_core::chaos::DEFAULT_K
}
fn default_bins() -> usize {
    24
}
fn default_hist_half_width() -> f64 {
    6.0
}
fn default_groups() -> usize {
    8
}

/// N axis and estimator settings of the chaos sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosConfig {
    pub n_values: Vec<usize>,
    pub replicas: usize,
    pub time: f64,
    #[serde(default = "default_limit_samples")]
    pub limit_samples: usize,
    #[serde(default = "default_n_proj")]
    pub n_proj: usize,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_hist_half_width")]
    pub histogram_half_width: f64,
    #[serde(default = "default_groups")]
    pub jackknife_groups: usize,
    #[serde(default)]
    pub pool: Pooling,
    #[serde(default)]
    pub particle_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    #[default]
    ClosedForm,
    SelfConsistent,
}

/// Grid and schedule of the limit solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub half_width: f64,
    pub n: usize,
    /// Defaults to the largest stable step that lands on every output time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub output_times: Vec<f64>,
    #[serde(default)]
    pub mode: SolveMode,
}

impl SolveConfig {
    pub fn grid(&self) -> CliResult<Grid2D> {
        Ok(Grid2D::new(self.half_width, self.n)?)
    }

    pub fn coefficient_mode(&self, sim: &SimConfig) -> CliResult<CoefficientMode> {
        Ok(match self.mode {
            SolveMode::ClosedForm => CoefficientMode::ClosedForm(sim.initial.moment_state()?),
            SolveMode::SelfConsistent => CoefficientMode::SelfConsistent,
        })
    }
}

fn strictly_increasing(name: &str, v: &[usize]) -> CliResult<()> {
    if v.is_empty() {
        return Err(CliError::Config(format!("{name} is empty")));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!("{name} must be strictly increasing")));
    }
    if v[0] == 0 {
        return Err(CliError::Config(format!("{name} must be positive")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::Config(e.to_string()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner().message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the config echoed in a run manifest when the
    /// path ends in `.json`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let de = &mut serde_json::Deserializer::from_str(&text);
            let manifest: RunManifest = serde_path_to_error::deserialize(de)
                .map_err(|e| CliError::Config(format!("manifest at `{}`: {}", e.path(), e.inner())))?;
            manifest.config.validate()?;
            return Ok(manifest.config);
        }
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.sim.validate()?;
        if self.replicas == 0 {
            return Err(CliError::Config("replicas must be at least 1".into()));
        }
        if let Some(s) = &self.sweep {
            strictly_increasing("sweep.n_values", &s.n_values)?;
            if s.replicas == 0 {
                return Err(CliError::Config("sweep.replicas must be at least 1".into()));
            }
            if s.times.is_empty() || s.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return Err(CliError::Config("sweep.times must be nonempty and nonnegative".into()));
            }
        }
        if let Some(c) = &self.chaos {
            strictly_increasing("chaos.n_values", &c.n_values)?;
            if c.replicas == 0 {
                return Err(CliError::Config("chaos.replicas must be at least 1".into()));
            }
            if !(c.time >= 0.0 && c.time.is_finite()) {
                return Err(CliError::Config("chaos.time must be nonnegative".into()));
            }
            if self.solve.is_none() {
                return Err(CliError::Config("the chaos sweep needs a [solve] section for the limit density".into()));
            }
            if c.particle_index >= c.n_values[0] {
                return Err(CliError::Config("chaos.particle_index must be below every N".into()));
            }
        }
        if let Some(s) = &self.solve {
            s.grid()?;
            if s.output_times.is_empty() {
                return Err(CliError::Config("solve.output_times is empty".into()));
            }
            if let Some(dt) = s.dt {
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(CliError::Config(format!("solve.dt must be positive, got {dt}")));
                }
            }
        }
        Ok(())
    }
}
