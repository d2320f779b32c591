//! Seeded Monte Carlo engine for the uniformized chain.
//!
//! Each step consumes random draws in a fixed order: the event draw, then
//! the action draw (request events only), then the harvest draw (energy
//! events only). Together with a fixed generator this makes every seed
//! reproduce bit-identical trajectories.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{apply_transition, immediate_reward, Action, Event, ModelParams, State};
use crate::policy::PolicyKind;
use crate::stats::MeanEstimate;

/// Generator used for every stochastic component of the crate.
pub type SimRng = ChaCha8Rng;

/// Identifier of [`SimRng`], written into every output directory.
pub const RNG_ID: &str = "rand_chacha::ChaCha8Rng (seed_from_u64)";

pub const DEFAULT_BURN_IN: u64 = 10_000;
pub const DEFAULT_HORIZON: u64 = 1_000_000;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    #[serde(skip)]
    pub seed: u64,
    pub horizon: u64,
    /// Starting battery level; `None` starts full.
    pub initial_energy: Option<u32>,
    pub burn_in: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: DEFAULT_HORIZON,
            initial_energy: None,
            burn_in: DEFAULT_BURN_IN,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<(), crate::error::ConfigError> {
        use crate::error::ConfigError;
        if self.horizon <= self.burn_in {
            return Err(ConfigError::out_of_range("horizon", "must exceed burn_in"));
        }
        if let Some(e) = self.initial_energy {
            if e > params.battery_capacity {
                return Err(ConfigError::out_of_range(
                    "initial_energy",
                    "must not exceed battery_capacity",
                ));
            }
        }
        Ok(())
    }

    pub fn start_energy(&self, params: &ModelParams) -> u32 {
        self.initial_energy.unwrap_or(params.battery_capacity)
    }
}

/// Audit record of one uniformized step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep {
    pub step: u64,
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub next_energy: u32,
}

impl TrajectoryStep {
    pub fn harvested(&self) -> bool {
        self.next_energy > self.state.energy
    }

    pub fn consumed(&self) -> bool {
        self.next_energy < self.state.energy
    }
}

/// Running metrics over the counted (post burn-in) steps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub counted_steps: u64,
    pub total_reward: f64,
    pub average_reward: f64,
    pub accepted: [u64; 3],
    pub offered: [u64; 3],
    pub average_energy: f64,
    pub harvested: u64,
    energy_sum: u64,
}

impl Metrics {
    fn record(&mut self, s: &TrajectoryStep) {
        self.counted_steps += 1;
        self.total_reward += s.reward;
        self.energy_sum += s.state.energy as u64;
        if let Some(class) = s.state.event.request_class() {
            self.offered[class.index()] += 1;
            if s.consumed() {
                self.accepted[class.index()] += 1;
            }
        } else if s.harvested() {
            self.harvested += 1;
        }
    }

    fn finish(&mut self) {
        if self.counted_steps > 0 {
            let n = self.counted_steps as f64;
            self.average_reward = self.total_reward / n;
            self.average_energy = self.energy_sum as f64 / n;
        }
    }

    pub fn total_accepted(&self) -> u64 {
        self.accepted.iter().sum()
    }
}

/// Whole-run energy bookkeeping, burn-in included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnergyLedger {
    pub initial: u32,
    pub harvested: u64,
    pub consumed: u64,
    pub final_energy: u32,
}

impl EnergyLedger {
    pub fn balances(&self) -> bool {
        self.initial as i64 + self.harvested as i64 - self.consumed as i64
            == self.final_energy as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub metrics: Metrics,
    pub ledger: EnergyLedger,
    pub steps: Option<Vec<TrajectoryStep>>,
}

/// Single-trajectory sampler holding the generator and the cumulative
/// event distribution.
pub struct Simulator<'a> {
    params: &'a ModelParams,
    cumulative: [f64; 3],
    rng: SimRng,
    step_index: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(params: &'a ModelParams, seed: u64) -> Self {
        Self::with_rng(params, rng_from_seed(seed))
    }

    pub fn with_rng(params: &'a ModelParams, rng: SimRng) -> Self {
        let d = params.event_distribution();
        let cumulative = [d[0], d[0] + d[1], d[0] + d[1] + d[2]];
        Self {
            params,
            cumulative,
            rng,
            step_index: 0,
        }
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn draw_event(&mut self) -> Event {
        let u: f64 = self.rng.random();
        let i = self.cumulative.iter().position(|&c| u < c).unwrap_or(3);
        Event::ALL[i]
    }

    /// Advance one step from `energy` under `policy`.
    pub fn step(&mut self, energy: u32, policy: &PolicyKind) -> TrajectoryStep {
        let event = self.draw_event();
        self.step_with_event(State::new(energy, event), policy)
    }

    /// Complete a step whose event has already been drawn.
    pub fn step_with_event(&mut self, state: State, policy: &PolicyKind) -> TrajectoryStep {
        let action = if state.event.is_request() {
            let draw: f64 = self.rng.random();
            policy.sample_action(state, draw)
        } else {
            Action::Accept
        };
        let harvest =
            !state.event.is_request() && self.rng.random_bool(self.params.harvest_success_prob);
        let record = TrajectoryStep {
            step: self.step_index,
            state,
            action,
            reward: immediate_reward(state, action, self.params),
            next_energy: apply_transition(state, action, harvest, self.params),
        };
        self.step_index += 1;
        record
    }
}

/// Run `config.horizon` steps and report metrics over the post burn-in
/// window. With `keep_log` every step record is returned as well.
pub fn run_trajectory(
    config: &SimConfig,
    policy: &PolicyKind,
    params: &ModelParams,
    keep_log: bool,
) -> Trajectory {
    let mut sim = Simulator::new(params, config.seed);
    let initial = config.start_energy(params);
    let mut energy = initial;
    let mut metrics = Metrics::default();
    let mut ledger = EnergyLedger {
        initial,
        ..EnergyLedger::default()
    };
    let mut steps = keep_log.then(|| Vec::with_capacity(config.horizon.min(1 << 24) as usize));
    for k in 0..config.horizon {
        let s = sim.step(energy, policy);
        if s.harvested() {
            ledger.harvested += 1;
        } else if s.consumed() {
            ledger.consumed += 1;
        }
        if k >= config.burn_in {
            metrics.record(&s);
        }
        energy = s.next_energy;
        if let Some(log) = steps.as_mut() {
            log.push(s);
        }
    }
    ledger.final_energy = energy;
    metrics.finish();
    Trajectory {
        metrics,
        ledger,
        steps,
    }
}

/// Mean and standard error of the per-trajectory average reward over
/// `n_seeds` independent runs seeded `base_seed, base_seed + 1, ...`.
pub fn estimate_average_reward(
    policy: &PolicyKind,
    params: &ModelParams,
    n_seeds: usize,
    horizon: u64,
    burn_in: u64,
    base_seed: u64,
) -> MeanEstimate {
    use rayon::prelude::*;
    assert!(n_seeds >= 1, "need at least one seed");
    let samples: Vec<f64> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let config = SimConfig {
                seed: base_seed.wrapping_add(i),
                horizon,
                initial_energy: None,
                burn_in,
            };
            run_trajectory(&config, policy, params, false)
                .metrics
                .average_reward
        })
        .collect();
    MeanEstimate::from_samples(&samples)
}

pub const STEP_LOG_HEADER: &str = "step,energy,event,action,reward,next_energy";

pub fn write_step_log<W: Write>(mut out: W, steps: &[TrajectoryStep]) -> io::Result<()> {
    writeln!(out, "{STEP_LOG_HEADER}")?;
    for s in steps {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.step,
            s.state.energy,
            s.state.event,
            s.action.as_bit(),
            crate::csv::fmt_real(s.reward),
            s.next_energy
        )?;
    }
    Ok(())
}
