use std::path::PathBuf;

use thiserror::Error;

use crate::model::State;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    OutOfRange { key: String, reason: String },

    #[error("failed to parse config: {0}")]
    Parse(String),

    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub(crate) fn out_of_range(key: &str, reason: &str) -> Self {
        Self::OutOfRange {
            key: key.to_owned(),
            reason: reason.to_owned(),
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("chain has more than one recurrent class; states unreachable from {reference}: {}", format_states(.unreachable))]
    Reducible {
        reference: State,
        unreachable: Vec<State>,
    },

    #[error("anchor state {anchor} is not reachable from: {}", format_states(.unreachable))]
    AnchorUnreachable {
        anchor: State,
        unreachable: Vec<State>,
    },

    #[error("linear system is singular ({0})")]
    Singular(&'static str),

    #[error("relative value iteration did not converge within {sweeps} sweeps (span {span:e})")]
    NoConvergence { sweeps: usize, span: f64 },

    #[error("state {0} lies outside the model")]
    StateOutOfRange(State),

    #[error("exact gradient needs a sigmoid policy")]
    NotDifferentiable,
}

fn format_states(states: &[State]) -> String {
    let parts: Vec<String> = states.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(", "))
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("parameter diverged at step {step}: |theta| = {magnitude:e} exceeds {limit:e}; reduce the step size")]
    Diverged {
        step: u64,
        magnitude: f64,
        limit: f64,
    },

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Learn(#[from] LearnError),

    #[error(transparent)]
    Oracle(#[from] OracleError),

    #[error("result invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
