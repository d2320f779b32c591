//! Energy-allocation admission control for an energy-harvesting access
//! point.
//!
//! The crate models the access point as an average-reward Markov decision
//! process over (battery level, event) states, simulates it under
//! uniformization, learns a logistic threshold policy with simulation-based
//! policy gradients, and computes exact ground truth (stationary
//! distribution, average reward, gradient, optimal policy) on the small
//! embedded chain.

pub mod config;
pub mod csv;
pub mod error;
pub mod harness;
pub mod learner;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod simulator;
pub mod stats;

pub use config::{parse_config, parse_config_str, ExperimentConfig, ExperimentKind};
pub use error::{ConfigError, HarnessError, LearnError, OracleError};
pub use harness::{run_experiment, ExperimentReport, ResultRow};
pub use learner::{train, Algorithm, LearnConfig, LearnerState, StepSchedule, TrainOutcome};
pub use model::{Action, Event, ModelParams, RequestClass, State};
pub use oracle::{exact_average_reward, exact_gradient, solve_optimal, ChainSolution};
pub use policy::{extract_thresholds, ParamVector, PolicyKind, SigmoidPolicy};
pub use simulator::{run_trajectory, SimConfig};
