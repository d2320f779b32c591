//! Environment model: constants, states, events, actions and the
//! single-step dynamics of the uniformized chain.
//!
//! Time is indexed by uniformized event steps. Every step draws exactly one
//! event (a request from one of three classes, or an energy arrival) with
//! probability proportional to its rate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Energy units consumed by serving one request.
pub const ENERGY_PER_REQUEST: u32 = 1;

/// Environment constants. Rates are events/hour; only their ratios matter
/// to the uniformized chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub battery_capacity: u32,
    pub rate_balloon: f64,
    pub rate_ground: f64,
    pub rate_satellite: f64,
    pub rate_energy: f64,
    pub harvest_success_prob: f64,
    pub reward_balloon: f64,
    pub reward_ground: f64,
    pub reward_satellite: f64,
    pub energy_per_request: u32,
}

impl Default for ModelParams {
    /// Reference setup: capacity 10, rates (60, 70, 10, 110), harvest
    /// success 0.9, rewards (5, 2, 3).
    fn default() -> Self {
        Self {
            battery_capacity: 10,
            rate_balloon: 60.0,
            rate_ground: 70.0,
            rate_satellite: 10.0,
            rate_energy: 110.0,
            harvest_success_prob: 0.9,
            reward_balloon: 5.0,
            reward_ground: 2.0,
            reward_satellite: 3.0,
            energy_per_request: ENERGY_PER_REQUEST,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.battery_capacity < 1 {
            return Err(ConfigError::out_of_range(
                "battery_capacity",
                "must be >= 1",
            ));
        }
        for (key, rate) in [
            ("rate_balloon", self.rate_balloon),
            ("rate_ground", self.rate_ground),
            ("rate_satellite", self.rate_satellite),
            ("rate_energy", self.rate_energy),
        ] {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(ConfigError::out_of_range(key, "must be finite and > 0"));
            }
        }
        let p = self.harvest_success_prob;
        if !(0.0..=1.0).contains(&p) {
            return Err(ConfigError::out_of_range(
                "harvest_success_prob",
                "must lie in [0, 1]",
            ));
        }
        for (key, r) in [
            ("reward_balloon", self.reward_balloon),
            ("reward_ground", self.reward_ground),
            ("reward_satellite", self.reward_satellite),
        ] {
            if !r.is_finite() {
                return Err(ConfigError::out_of_range(key, "must be finite"));
            }
        }
        if self.energy_per_request != ENERGY_PER_REQUEST {
            return Err(ConfigError::out_of_range(
                "energy_per_request",
                "only 1 energy unit per request is supported",
            ));
        }
        Ok(())
    }

    /// Total event rate `u` used to uniformize the chain.
    pub fn uniformization_constant(&self) -> f64 {
        self.rate_balloon + self.rate_ground + self.rate_satellite + self.rate_energy
    }

    /// Per-step event probabilities in [`Event::ALL`] order. The energy
    /// component is computed as the complement so the vector sums to 1.
    pub fn event_distribution(&self) -> [f64; 4] {
        let u = self.uniformization_constant();
        let b = self.rate_balloon / u;
        let c = self.rate_ground / u;
        let s = self.rate_satellite / u;
        [b, c, s, 1.0 - (b + c + s)]
    }

    /// Revenue for serving a request of the given class.
    pub fn reward(&self, class: RequestClass) -> f64 {
        match class {
            RequestClass::Balloon => self.reward_balloon,
            RequestClass::Ground => self.reward_ground,
            RequestClass::Satellite => self.reward_satellite,
        }
    }

    pub fn max_reward(&self) -> f64 {
        self.reward_balloon
            .max(self.reward_ground)
            .max(self.reward_satellite)
    }

    /// Number of (energy, event) states.
    pub fn state_count(&self) -> usize {
        (self.battery_capacity as usize + 1) * Event::ALL.len()
    }
}

/// Request classes, in parameter-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RequestClass {
    Balloon,
    Ground,
    Satellite,
}

impl RequestClass {
    pub const ALL: [RequestClass; 3] = [Self::Balloon, Self::Ground, Self::Satellite];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Balloon => "balloon",
            Self::Ground => "ground",
            Self::Satellite => "satellite",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    RequestBalloon,
    RequestGround,
    RequestSatellite,
    EnergyArrival,
}

impl Event {
    pub const ALL: [Event; 4] = [
        Self::RequestBalloon,
        Self::RequestGround,
        Self::RequestSatellite,
        Self::EnergyArrival,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Event> {
        Self::ALL.get(i).copied()
    }

    /// The request class, or `None` for an energy arrival.
    pub fn request_class(self) -> Option<RequestClass> {
        match self {
            Self::RequestBalloon => Some(RequestClass::Balloon),
            Self::RequestGround => Some(RequestClass::Ground),
            Self::RequestSatellite => Some(RequestClass::Satellite),
            Self::EnergyArrival => None,
        }
    }

    pub fn is_request(self) -> bool {
        self.request_class().is_some()
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::RequestBalloon => "request_balloon",
            Self::RequestGround => "request_ground",
            Self::RequestSatellite => "request_satellite",
            Self::EnergyArrival => "energy_arrival",
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub energy: u32,
    pub event: Event,
}

impl State {
    pub fn new(energy: u32, event: Event) -> Self {
        Self { energy, event }
    }

    /// Dense index `energy * 4 + event`, used by the exact solvers.
    pub fn index(self) -> usize {
        self.energy as usize * Event::ALL.len() + self.event.index()
    }

    pub fn from_index(i: usize) -> State {
        let n = Event::ALL.len();
        State::new((i / n) as u32, Event::ALL[i % n])
    }

    /// Every state of a battery with the given capacity, in index order.
    pub fn enumerate(capacity: u32) -> Vec<State> {
        (0..=capacity)
            .flat_map(|e| Event::ALL.into_iter().map(move |x| State::new(e, x)))
            .collect()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.energy, self.event)
    }
}

/// Admission decision. Energy arrivals carry a forced action, recorded as
/// `Accept` (the harvested unit is always taken in).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Reject = 0,
    Accept = 1,
}

impl Action {
    pub fn as_bit(self) -> u8 {
        self as u8
    }
}

/// Whether serving a request at this energy level is physically possible.
pub fn can_serve(energy: u32) -> bool {
    energy >= ENERGY_PER_REQUEST
}

/// Reward collected for taking `action` in `state`: the class revenue for a
/// feasible accepted request, zero otherwise.
pub fn immediate_reward(state: State, action: Action, params: &ModelParams) -> f64 {
    match state.event.request_class() {
        Some(class) if action == Action::Accept && can_serve(state.energy) => params.reward(class),
        _ => 0.0,
    }
}

/// Battery level after the step. An accept with an empty battery is a no-op;
/// a successful harvest on a full battery is lost.
pub fn apply_transition(
    state: State,
    action: Action,
    harvest_success: bool,
    params: &ModelParams,
) -> u32 {
    let e = state.energy.min(params.battery_capacity);
    if state.event.is_request() {
        if action == Action::Accept && can_serve(e) {
            e - ENERGY_PER_REQUEST
        } else {
            e
        }
    } else if harvest_success && e < params.battery_capacity {
        e + 1
    } else {
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(b: f64, c: f64, s: f64, e: f64) -> ModelParams {
        ModelParams {
            rate_balloon: b,
            rate_ground: c,
            rate_satellite: s,
            rate_energy: e,
            ..ModelParams::default()
        }
    }

    #[test]
    fn uniformization_sums_rates() {
        assert_eq!(ModelParams::default().uniformization_constant(), 250.0);
        assert_eq!(rates(1.0, 1.0, 1.0, 1.0).uniformization_constant(), 4.0);
        assert_eq!(
            rates(60.0, 70.0, 10.0, 90.0).uniformization_constant(),
            230.0
        );
    }

    #[test]
    fn event_distribution_reference_rates() {
        let d = ModelParams::default().event_distribution();
        let expected = [60.0 / 250.0, 70.0 / 250.0, 10.0 / 250.0, 110.0 / 250.0];
        for (got, want) in d.iter().zip(expected) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((d[0] - 0.24).abs() < 1e-15);
        assert!((d[3] - 0.44).abs() < 1e-15);
        assert_eq!(d.iter().sum::<f64>(), 1.0);

        assert_eq!(rates(3.0, 3.0, 3.0, 3.0).event_distribution(), [0.25; 4]);

        let dom = rates(1.0, 1.0, 1.0, 1e6).event_distribution();
        assert!((dom[3] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn reward_examples() {
        let p = ModelParams::default();
        let s = |e, x| State::new(e, x);
        assert_eq!(
            immediate_reward(s(5, Event::RequestBalloon), Action::Accept, &p),
            5.0
        );
        assert_eq!(
            immediate_reward(s(5, Event::RequestGround), Action::Reject, &p),
            0.0
        );
        assert_eq!(
            immediate_reward(s(0, Event::RequestSatellite), Action::Accept, &p),
            0.0
        );
        assert_eq!(
            immediate_reward(s(5, Event::EnergyArrival), Action::Accept, &p),
            0.0
        );
    }

    #[test]
    fn transition_examples() {
        let p = ModelParams::default();
        let cap = p.battery_capacity;
        let s = |e, x| State::new(e, x);
        assert_eq!(
            apply_transition(s(3, Event::RequestBalloon), Action::Accept, false, &p),
            2
        );
        assert_eq!(
            apply_transition(s(cap, Event::EnergyArrival), Action::Accept, true, &p),
            cap
        );
        assert_eq!(
            apply_transition(s(0, Event::RequestGround), Action::Accept, false, &p),
            0
        );
        assert_eq!(
            apply_transition(s(4, Event::EnergyArrival), Action::Accept, true, &p),
            5
        );
        assert_eq!(
            apply_transition(s(4, Event::EnergyArrival), Action::Accept, false, &p),
            4
        );
        assert_eq!(
            apply_transition(s(4, Event::RequestGround), Action::Reject, true, &p),
            4
        );
    }

    #[test]
    fn exhaustive_dynamics_properties() {
        for cap in [1u32, 2, 10] {
            let p = ModelParams {
                battery_capacity: cap,
                ..ModelParams::default()
            };
            for state in State::enumerate(cap) {
                for action in [Action::Accept, Action::Reject] {
                    for harvest in [false, true] {
                        let next = apply_transition(state, action, harvest, &p);
                        assert!(next <= cap);
                        let r = immediate_reward(state, action, &p);
                        if r > 0.0 {
                            assert_eq!(next + 1, state.energy);
                        }
                        if action == Action::Reject || !state.event.is_request() {
                            assert_eq!(r, 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn state_index_roundtrip() {
        for (i, s) in State::enumerate(7).into_iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(State::from_index(i), s);
        }
    }

    #[test]
    fn validation_names_offending_key() {
        let bad = ModelParams {
            harvest_success_prob: 1.5,
            ..ModelParams::default()
        };
        let err = bad.validate().unwrap_err();
        assert!(err.to_string().contains("harvest_success_prob"));
        let bad = ModelParams {
            battery_capacity: 0,
            ..ModelParams::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("battery_capacity"));
        let bad = ModelParams {
            rate_ground: 0.0,
            ..ModelParams::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("rate_ground"));
        let bad = ModelParams {
            energy_per_request: 2,
            ..ModelParams::default()
        };
        assert!(bad
            .validate()
            .unwrap_err()
            .to_string()
            .contains("energy_per_request"));
        assert!(ModelParams::default().validate().is_ok());
    }
}
