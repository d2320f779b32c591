//! Experiment configuration files (TOML).
//!
//! Every key is optional; missing keys take the reference defaults and
//! unknown keys are rejected. Section and key names mirror the Rust field
//! names:
//!
//! ```toml
//! experiment = "convergence"   # convergence | capacity-sweep | energy-rate-sweep | single-eval
//! seeds = [1, 2, 3, 4, 5]
//! output_dir = "out/convergence"
//! sweep = [5, 10, 15, 20, 25]  # sweep kinds only
//! write_step_log = false
//!
//! [model]
//! battery_capacity = 10
//! rate_energy = 110.0
//!
//! [learn]
//! algorithm = "every_step"     # or "regenerative"
//! total_steps = 1000000
//! schedule = { kind = "harmonic_tail", gamma0 = 0.0005, kappa = 200000.0 }
//! recurrent_state = { energy = 1, event = "energy_arrival" }
//!
//! [sim]
//! horizon = 1000000
//! burn_in = 10000
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::learner::LearnConfig;
use crate::model::ModelParams;
use crate::oracle::default_anchor;
use crate::simulator::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Convergence,
    CapacitySweep,
    EnergyRateSweep,
    SingleEval,
}

impl ExperimentKind {
    pub fn default_grid(self) -> Option<Vec<f64>> {
        match self {
            Self::CapacitySweep => Some(vec![5.0, 10.0, 15.0, 20.0, 25.0]),
            Self::EnergyRateSweep => Some(vec![90.0, 100.0, 110.0, 120.0, 130.0]),
            Self::Convergence | Self::SingleEval => None,
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(self, Self::CapacitySweep | Self::EnergyRateSweep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Sweep grid; `None` takes the experiment's default grid.
    pub sweep: Option<Vec<f64>>,
    /// Emit per-step CSV logs of the evaluation trajectories.
    pub write_step_log: bool,
    pub model: ModelParams,
    pub learn: LearnConfig,
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Convergence,
            seeds: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            sweep: None,
            write_step_log: false,
            model: ModelParams::default(),
            learn: LearnConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Fill defaults that depend on other keys and check every range.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        if self.sweep.is_none() {
            self.sweep = self.experiment.default_grid();
        }
        if self.learn.recurrent_state.is_none() {
            self.learn.recurrent_state = Some(default_anchor(&self.model));
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::out_of_range(
                "seeds",
                "must list at least one seed",
            ));
        }
        self.model.validate()?;
        if self.experiment.is_sweep() {
            let grid = self.grid();
            if grid.is_empty() {
                return Err(ConfigError::out_of_range("sweep", "grid must not be empty"));
            }
            for &v in grid {
                let params = self.params_for(v);
                if self.experiment == ExperimentKind::CapacitySweep && (v.fract() != 0.0 || v < 1.0)
                {
                    return Err(ConfigError::out_of_range(
                        "sweep",
                        "capacities must be integers >= 1",
                    ));
                }
                params.validate().map_err(|e| match e {
                    ConfigError::OutOfRange { key, reason } => ConfigError::OutOfRange {
                        key: format!("sweep ({key})"),
                        reason,
                    },
                    other => other,
                })?;
                self.learn.validate(&params)?;
                self.sim.validate(&params)?;
            }
        } else {
            self.learn.validate(&self.model)?;
            self.sim.validate(&self.model)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        self.sweep.as_deref().unwrap_or(&[])
    }

    /// Model parameters at one sweep value (the base model otherwise).
    pub fn params_for(&self, value: f64) -> ModelParams {
        let mut p = self.model;
        match self.experiment {
            ExperimentKind::CapacitySweep => p.battery_capacity = value as u32,
            ExperimentKind::EnergyRateSweep => p.rate_energy = value,
            ExperimentKind::Convergence | ExperimentKind::SingleEval => {}
        }
        p
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: ExperimentConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_owned()))?;
    raw.resolve()
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{Algorithm, StepSchedule};
    use crate::model::{Event, State};

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c.model, ModelParams::default());
        let learn = LearnConfig {
            recurrent_state: Some(State::new(1, Event::EnergyArrival)),
            ..LearnConfig::default()
        };
        assert_eq!(c.learn, learn);
        assert_eq!(c.experiment, ExperimentKind::Convergence);
        assert_eq!(c.seeds, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn bad_probability_names_key() {
        let err = parse_config_str("[model]\nharvest_success_prob = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("harvest_success_prob"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse_config_str("[model]\nbattery_size = 3\n").unwrap_err();
        assert!(err.to_string().contains("battery_size"), "{err}");
        assert!(parse_config_str("colour = 1\n").is_err());
    }

    #[test]
    fn energy_rate_override() {
        let c = parse_config_str("[model]\nrate_energy = 90.0\n").unwrap();
        assert_eq!(c.model.rate_energy, 90.0);
        assert_eq!(c.model.uniformization_constant(), 230.0);
    }

    #[test]
    fn sweep_defaults_and_nested_tables() {
        let text = r#"
experiment = "capacity-sweep"
seeds = [7]
[learn]
algorithm = "regenerative"
schedule = { kind = "constant", gamma0 = 0.002 }
recurrent_state = { energy = 2, event = "energy_arrival" }
"#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.grid(), &[5.0, 10.0, 15.0, 20.0, 25.0]);
        assert_eq!(c.learn.algorithm, Algorithm::Regenerative);
        assert_eq!(c.learn.schedule, StepSchedule::Constant { gamma0: 0.002 });
        assert_eq!(
            c.learn.recurrent_state,
            Some(State::new(2, Event::EnergyArrival))
        );
        assert_eq!(c.params_for(15.0).battery_capacity, 15);
    }

    #[test]
    fn invalid_sweeps_rejected() {
        assert!(parse_config_str("experiment = \"capacity-sweep\"\nsweep = []\n").is_err());
        assert!(parse_config_str("experiment = \"capacity-sweep\"\nsweep = [2.5]\n").is_err());
        let err =
            parse_config_str("experiment = \"energy-rate-sweep\"\nsweep = [-1.0]\n").unwrap_err();
        assert!(err.to_string().contains("rate_energy"), "{err}");
        assert!(parse_config_str("seeds = []\n").is_err());
    }

    #[test]
    fn effective_config_roundtrips() {
        let c = parse_config_str("experiment = \"energy-rate-sweep\"\n").unwrap();
        let again = parse_config_str(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }
}
