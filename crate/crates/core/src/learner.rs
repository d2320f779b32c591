//! Simulation-based policy-gradient learning of the logistic threshold
//! parameters.
//!
//! Two update rules are provided. The regenerative rule accumulates a
//! whole excursion between visits to a recurrent state and updates once
//! per excursion. The every-step rule carries an eligibility trace (the
//! score summed since the last visit) and updates at every step; summed
//! over one excursion with frozen parameters it yields the same direction.

use serde::{Deserialize, Serialize};

use crate::csv::{fmt_real, Table};
use crate::error::{ConfigError, LearnError};
use crate::model::{ModelParams, State};
use crate::oracle::{default_anchor, exact_average_reward};
use crate::policy::{ParamVector, PolicyKind, SigmoidPolicy, DEFAULT_SLOPE};
use crate::simulator::Simulator;

/// Training aborts when any parameter magnitude exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 1_000;

/// Step sizes `gamma_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    /// `gamma_0 * kappa / (kappa + k)`: sums diverge, squares converge.
    HarmonicTail { gamma0: f64, kappa: f64 },
    /// `gamma_0` forever. Does not satisfy the Robbins-Monro conditions.
    Constant { gamma0: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self::HarmonicTail {
            gamma0: 5e-4,
            kappa: 2e5,
        }
    }
}

impl StepSchedule {
    pub fn gamma(&self, k: u64) -> f64 {
        match *self {
            Self::HarmonicTail { gamma0, kappa } => gamma0 * kappa / (kappa + k as f64),
            Self::Constant { gamma0 } => gamma0,
        }
    }

    pub fn satisfies_robbins_monro(&self) -> bool {
        match *self {
            Self::HarmonicTail { gamma0, .. } => gamma0 > 0.0,
            Self::Constant { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let (gamma0, kappa) = match *self {
            Self::HarmonicTail { gamma0, kappa } => (gamma0, kappa),
            Self::Constant { gamma0 } => (gamma0, 1.0),
        };
        if !(gamma0.is_finite() && gamma0 >= 0.0) {
            return Err(ConfigError::out_of_range(
                "gamma0",
                "must be finite and >= 0",
            ));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(ConfigError::out_of_range("kappa", "must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// One update per excursion between recurrent-state visits.
    Regenerative,
    /// One update per step, with an eligibility trace.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub schedule: StepSchedule,
    /// Regeneration state; `None` means (1, energy arrival).
    pub recurrent_state: Option<State>,
    pub total_steps: u64,
    pub initial_theta: ParamVector,
    pub initial_est_avg_reward: f64,
    #[serde(skip)]
    pub seed: u64,
    pub snapshot_every: u64,
    pub slope: f64,
    /// Evaluate the exact average reward at every snapshot.
    pub track_exact: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::EveryStep,
            eta: 1.0,
            schedule: StepSchedule::default(),
            recurrent_state: None,
            total_steps: 1_000_000,
            initial_theta: ParamVector::new(1.0, 1.0, 1.0),
            initial_est_avg_reward: 0.7,
            seed: 0,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            slope: DEFAULT_SLOPE,
            track_exact: true,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<(), ConfigError> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(ConfigError::out_of_range("eta", "must be finite and > 0"));
        }
        self.schedule.validate()?;
        if !self.initial_theta.is_finite() {
            return Err(ConfigError::out_of_range(
                "initial_theta",
                "components must be finite",
            ));
        }
        if !self.initial_est_avg_reward.is_finite() {
            return Err(ConfigError::out_of_range(
                "initial_est_avg_reward",
                "must be finite",
            ));
        }
        if !(self.slope.is_finite() && self.slope > 0.0) {
            return Err(ConfigError::out_of_range("slope", "must be finite and > 0"));
        }
        if self.snapshot_every == 0 {
            return Err(ConfigError::out_of_range("snapshot_every", "must be >= 1"));
        }
        if let Some(s) = self.recurrent_state {
            if s.energy > params.battery_capacity {
                return Err(ConfigError::out_of_range(
                    "recurrent_state",
                    "energy must not exceed battery_capacity",
                ));
            }
        }
        Ok(())
    }

    pub fn anchor(&self, params: &ModelParams) -> State {
        self.recurrent_state
            .unwrap_or_else(|| default_anchor(params))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerState {
    pub theta: ParamVector,
    pub est_avg_reward: f64,
    pub trace: ParamVector,
    pub step: u64,
    pub visits: u64,
}

impl LearnerState {
    pub fn new(theta: ParamVector, est_avg_reward: f64) -> Self {
        Self {
            theta,
            est_avg_reward,
            trace: ParamVector::ZERO,
            step: 0,
            visits: 0,
        }
    }
}

/// Reward and score of one visited state-action pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredStep {
    pub reward: f64,
    pub score: ParamVector,
}

/// Excursion gradient direction
/// `F = sum_n q(n) * score(n)` with `q(n) = sum_{k >= n} (R_k - psi)`.
pub fn regenerative_direction(history: &[ScoredStep], psi: f64) -> ParamVector {
    let mut suffix = 0.0;
    let mut direction = ParamVector::ZERO;
    for s in history.iter().rev() {
        suffix += s.reward - psi;
        direction += s.score * suffix;
    }
    direction
}

/// Parameter and average-reward update at the end of one excursion.
pub fn regenerative_update(
    history: &[ScoredStep],
    state: &LearnerState,
    gamma: f64,
    eta: f64,
) -> LearnerState {
    let psi = state.est_avg_reward;
    let direction = regenerative_direction(history, psi);
    let innovation: f64 = history.iter().map(|s| s.reward - psi).sum();
    LearnerState {
        theta: state.theta + direction * gamma,
        est_avg_reward: psi + eta * gamma * innovation,
        trace: state.trace,
        step: state.step + history.len() as u64,
        visits: state.visits + 1,
    }
}

/// Every-step update. The trace restarts from the current score whenever
/// the step starts at the recurrent state.
pub fn online_step(
    step: &ScoredStep,
    at_recurrent: bool,
    state: &LearnerState,
    gamma: f64,
    eta: f64,
) -> LearnerState {
    let trace = if at_recurrent {
        step.score
    } else {
        state.trace + step.score
    };
    let innovation = step.reward - state.est_avg_reward;
    LearnerState {
        theta: state.theta + trace * (gamma * innovation),
        est_avg_reward: state.est_avg_reward + eta * gamma * innovation,
        trace,
        step: state.step + 1,
        visits: state.visits + u64::from(at_recurrent),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub theta: ParamVector,
    pub psi_tilde: f64,
    pub psi_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub final_state: LearnerState,
    pub snapshots: Vec<Snapshot>,
    /// Whether the schedule met the Robbins-Monro conditions.
    pub robbins_monro: bool,
}

impl TrainOutcome {
    pub fn policy(&self, slope: f64) -> SigmoidPolicy {
        SigmoidPolicy::with_slope(self.final_state.theta, slope)
    }

    pub fn trace_table(&self) -> Table {
        let with_exact = self.snapshots.iter().any(|s| s.psi_exact.is_some());
        let mut header = vec!["step", "theta_b", "theta_c", "theta_s", "psi_tilde"];
        if with_exact {
            header.push("psi_exact");
        }
        let mut t = Table::new(&header);
        for s in &self.snapshots {
            let mut row = vec![s.step.to_string()];
            row.extend(s.theta.to_array().iter().map(|&v| fmt_real(v)));
            row.push(fmt_real(s.psi_tilde));
            if with_exact {
                row.push(s.psi_exact.map(fmt_real).unwrap_or_default());
            }
            t.push_raw(row);
        }
        t
    }
}

struct SnapshotRecorder<'a> {
    every: u64,
    track_exact: bool,
    slope: f64,
    params: &'a ModelParams,
    snapshots: Vec<Snapshot>,
}

impl SnapshotRecorder<'_> {
    fn record(&mut self, state: &LearnerState) -> Result<(), LearnError> {
        let psi_exact = if self.track_exact {
            let pol = PolicyKind::Sigmoid(SigmoidPolicy::with_slope(state.theta, self.slope));
            Some(exact_average_reward(&pol, self.params)?)
        } else {
            None
        };
        self.snapshots.push(Snapshot {
            step: state.step,
            theta: state.theta,
            psi_tilde: state.est_avg_reward,
            psi_exact,
        });
        Ok(())
    }

    fn maybe_record(&mut self, state: &LearnerState) -> Result<(), LearnError> {
        if state.step.is_multiple_of(self.every) {
            self.record(state)?;
        }
        Ok(())
    }

    fn finish(mut self, state: &LearnerState) -> Result<Vec<Snapshot>, LearnError> {
        if self.snapshots.last().map(|s| s.step) != Some(state.step) {
            self.record(state)?;
        }
        Ok(self.snapshots)
    }
}

fn check_divergence(state: &LearnerState) -> Result<(), LearnError> {
    let magnitude = state.theta.max_abs();
    if !magnitude.is_finite() || magnitude > DIVERGENCE_LIMIT {
        return Err(LearnError::Diverged {
            step: state.step,
            magnitude,
            limit: DIVERGENCE_LIMIT,
        });
    }
    Ok(())
}

/// Run the simulator and the configured learning rule for
/// `config.total_steps` steps, starting from a full battery.
pub fn train(config: &LearnConfig, params: &ModelParams) -> Result<TrainOutcome, LearnError> {
    params.validate()?;
    config.validate(params)?;
    let anchor = config.anchor(params);
    let mut sim = Simulator::new(params, config.seed);
    let mut energy = params.battery_capacity;
    let mut state = LearnerState::new(config.initial_theta, config.initial_est_avg_reward);
    let mut recorder = SnapshotRecorder {
        every: config.snapshot_every,
        track_exact: config.track_exact,
        slope: config.slope,
        params,
        snapshots: Vec::new(),
    };
    recorder.record(&state)?;

    match config.algorithm {
        Algorithm::EveryStep => {
            for k in 0..config.total_steps {
                let policy = SigmoidPolicy::with_slope(state.theta, config.slope);
                let event = sim.draw_event();
                let rec =
                    sim.step_with_event(State::new(energy, event), &PolicyKind::Sigmoid(policy));
                let scored = ScoredStep {
                    reward: rec.reward,
                    score: policy.score(rec.state, rec.action),
                };
                state = online_step(
                    &scored,
                    rec.state == anchor,
                    &state,
                    config.schedule.gamma(k),
                    config.eta,
                );
                energy = rec.next_energy;
                check_divergence(&state)?;
                recorder.maybe_record(&state)?;
            }
        }
        Algorithm::Regenerative => {
            let mut history: Vec<ScoredStep> = Vec::new();
            let mut in_excursion = false;
            for _ in 0..config.total_steps {
                let event = sim.draw_event();
                let current = State::new(energy, event);
                if current == anchor {
                    if in_excursion {
                        let gamma = config.schedule.gamma(state.visits);
                        let step = state.step;
                        state = regenerative_update(&history, &state, gamma, config.eta);
                        state.step = step;
                        check_divergence(&state)?;
                    }
                    history.clear();
                    in_excursion = true;
                }
                let policy = SigmoidPolicy::with_slope(state.theta, config.slope);
                let rec = sim.step_with_event(current, &PolicyKind::Sigmoid(policy));
                if in_excursion {
                    history.push(ScoredStep {
                        reward: rec.reward,
                        score: policy.score(rec.state, rec.action),
                    });
                }
                energy = rec.next_energy;
                state.step += 1;
                recorder.maybe_record(&state)?;
            }
        }
    }

    let snapshots = recorder.finish(&state)?;
    Ok(TrainOutcome {
        final_state: state,
        snapshots,
        robbins_monro: config.schedule.satisfies_robbins_monro(),
    })
}

/// One excursion's direction `F_m` and length, sampled with frozen
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenerationSample {
    pub direction: ParamVector,
    pub length: u64,
}

/// Sample `count` complete excursions from `anchor` back to `anchor` under
/// a frozen policy, centering rewards at `psi`.
pub fn sample_regenerations(
    policy: &SigmoidPolicy,
    params: &ModelParams,
    psi: f64,
    anchor: State,
    count: usize,
    seed: u64,
) -> Vec<RegenerationSample> {
    let kind = PolicyKind::Sigmoid(*policy);
    let mut sim = Simulator::new(params, seed);
    let mut energy = anchor.energy;
    // Wait for the first visit.
    let mut current = loop {
        let s = State::new(energy, sim.draw_event());
        if s == anchor {
            break s;
        }
        energy = sim.step_with_event(s, &kind).next_energy;
    };
    let mut out = Vec::with_capacity(count);
    let mut history = Vec::new();
    while out.len() < count {
        history.clear();
        loop {
            let rec = sim.step_with_event(current, &kind);
            history.push(ScoredStep {
                reward: rec.reward,
                score: policy.score(rec.state, rec.action),
            });
            current = State::new(rec.next_energy, sim.draw_event());
            if current == anchor {
                break;
            }
        }
        out.push(RegenerationSample {
            direction: regenerative_direction(&history, psi),
            length: history.len() as u64,
        });
    }
    out
}
