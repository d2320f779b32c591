//! Admission policies: the logistic threshold policy used for learning,
//! plus the deterministic greedy and fixed-threshold baselines.

use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::model::{can_serve, Action, RequestClass, State};

/// Default steepness of the logistic acceptance curve.
pub const DEFAULT_SLOPE: f64 = 1.5;

/// One real threshold (in energy units) per request class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamVector {
    pub theta_balloon: f64,
    pub theta_ground: f64,
    pub theta_satellite: f64,
}

impl ParamVector {
    pub const ZERO: ParamVector = ParamVector::new(0.0, 0.0, 0.0);

    pub const fn new(theta_balloon: f64, theta_ground: f64, theta_satellite: f64) -> Self {
        Self {
            theta_balloon,
            theta_ground,
            theta_satellite,
        }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta_balloon, self.theta_ground, self.theta_satellite]
    }

    pub fn get(&self, class: RequestClass) -> f64 {
        match class {
            RequestClass::Balloon => self.theta_balloon,
            RequestClass::Ground => self.theta_ground,
            RequestClass::Satellite => self.theta_satellite,
        }
    }

    pub fn get_mut(&mut self, class: RequestClass) -> &mut f64 {
        match class {
            RequestClass::Balloon => &mut self.theta_balloon,
            RequestClass::Ground => &mut self.theta_ground,
            RequestClass::Satellite => &mut self.theta_satellite,
        }
    }

    /// Unit vector along one class component.
    pub fn basis(class: RequestClass) -> Self {
        let mut v = Self::ZERO;
        *v.get_mut(class) = 1.0;
        v
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|t| t.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, t| m.max(t.abs()))
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.theta_balloon * other.theta_balloon
            + self.theta_ground * other.theta_ground
            + self.theta_satellite * other.theta_satellite
    }
}

impl Add for ParamVector {
    type Output = ParamVector;
    fn add(self, o: ParamVector) -> ParamVector {
        ParamVector::new(
            self.theta_balloon + o.theta_balloon,
            self.theta_ground + o.theta_ground,
            self.theta_satellite + o.theta_satellite,
        )
    }
}

impl Sub for ParamVector {
    type Output = ParamVector;
    fn sub(self, o: ParamVector) -> ParamVector {
        self + o * -1.0
    }
}

impl Mul<f64> for ParamVector {
    type Output = ParamVector;
    fn mul(self, k: f64) -> ParamVector {
        ParamVector::new(
            self.theta_balloon * k,
            self.theta_ground * k,
            self.theta_satellite * k,
        )
    }
}

impl AddAssign for ParamVector {
    fn add_assign(&mut self, o: ParamVector) {
        *self = *self + o;
    }
}

/// Logistic acceptance policy: a request of class `x` at energy `e` is
/// accepted with probability `1 / (1 + exp(slope * (theta_x - e)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidPolicy {
    pub theta: ParamVector,
    pub slope: f64,
}

impl SigmoidPolicy {
    pub fn new(theta: ParamVector) -> Self {
        Self {
            theta,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn with_slope(theta: ParamVector, slope: f64) -> Self {
        assert!(slope > 0.0, "sigmoid slope must be positive");
        Self { theta, slope }
    }

    pub fn accept_probability(&self, energy: u32, class: RequestClass) -> f64 {
        let z = self.slope * (self.theta.get(class) - energy as f64);
        1.0 / (1.0 + z.exp())
    }

    /// Log-likelihood gradient `grad mu / mu` of the action taken. Only the
    /// component of the request's class is non-zero; energy arrivals have a
    /// forced action and a zero score.
    pub fn score(&self, state: State, action: Action) -> ParamVector {
        let Some(class) = state.event.request_class() else {
            return ParamVector::ZERO;
        };
        let p = self.accept_probability(state.energy, class);
        let g = match action {
            Action::Accept => -self.slope * (1.0 - p),
            Action::Reject => self.slope * p,
        };
        let mut v = ParamVector::ZERO;
        *v.get_mut(class) = g;
        v
    }

    /// Gradient of the accept probability itself, `slope * p * (1 - p)`
    /// with a negative sign, on the class component. The reject gradient
    /// is its negation.
    pub fn accept_gradient(&self, energy: u32, class: RequestClass) -> ParamVector {
        let p = self.accept_probability(energy, class);
        ParamVector::basis(class) * (-self.slope * p * (1.0 - p))
    }
}

/// Probability of each action in one state. Energy arrivals are `Forced`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionDistribution {
    Forced,
    Binary { accept: f64 },
}

impl ActionDistribution {
    pub fn accept(&self) -> f64 {
        match *self {
            Self::Forced => 1.0,
            Self::Binary { accept } => accept,
        }
    }

    pub fn reject(&self) -> f64 {
        match *self {
            Self::Forced => 0.0,
            Self::Binary { accept } => 1.0 - accept,
        }
    }

    pub fn probability(&self, action: Action) -> f64 {
        match action {
            Action::Accept => self.accept(),
            Action::Reject => self.reject(),
        }
    }

    /// Inverse-CDF sample: `draw < accept` selects `Accept`.
    pub fn sample(&self, draw: f64) -> Action {
        match *self {
            Self::Forced => Action::Accept,
            Self::Binary { accept } if draw < accept => Action::Accept,
            Self::Binary { .. } => Action::Reject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Sigmoid(SigmoidPolicy),
    /// Accept every request the battery can serve.
    Greedy,
    /// Accept a class-`x` request iff energy >= `thresholds[x]`.
    FixedThreshold([u32; 3]),
}

impl PolicyKind {
    pub fn sigmoid(theta: ParamVector) -> Self {
        Self::Sigmoid(SigmoidPolicy::new(theta))
    }

    /// A policy that never admits anything.
    pub fn reject_all() -> Self {
        Self::FixedThreshold([u32::MAX; 3])
    }

    pub fn action_distribution(&self, state: State) -> ActionDistribution {
        let Some(class) = state.event.request_class() else {
            return ActionDistribution::Forced;
        };
        let accept = match self {
            Self::Sigmoid(p) => p.accept_probability(state.energy, class),
            Self::Greedy => indicator(can_serve(state.energy)),
            Self::FixedThreshold(t) => indicator(state.energy >= t[class.index()]),
        };
        ActionDistribution::Binary { accept }
    }

    pub fn sample_action(&self, state: State, draw: f64) -> Action {
        self.action_distribution(state).sample(draw)
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, Self::Sigmoid(_))
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Per-class smallest energy level at which the logistic policy accepts
/// with probability at least 1/2, clamped to `[1, capacity + 1]`;
/// `capacity + 1` means the class is never admitted.
pub fn extract_thresholds(theta: &ParamVector, capacity: u32) -> [u32; 3] {
    let upper = capacity as f64 + 1.0;
    theta.to_array().map(|t| {
        let t = if t.is_nan() { upper } else { t };
        t.ceil().clamp(1.0, upper) as u32
    })
}
