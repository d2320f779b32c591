//! Exact, simulation-free computations on the embedded chain.
//!
//! The chain has `(E + 1) * 4` states, so everything here is dense linear
//! algebra: the stationary distribution comes from the balance equations
//! with one row swapped for normalization, differential rewards from the
//! Poisson equation anchored at a recurrent state, and the optimal
//! deterministic policy from relative value iteration.

use nalgebra::{DMatrix, DVector};

use crate::csv::{fmt_real, Table};
use crate::error::OracleError;
use crate::model::{
    apply_transition, immediate_reward, Action, Event, ModelParams, RequestClass, State,
};
use crate::policy::{ActionDistribution, ParamVector, PolicyKind, SigmoidPolicy};

pub const RVI_TOLERANCE: f64 = 1e-10;
pub const RVI_MAX_SWEEPS: usize = 1_000_000;

/// Default regeneration/anchor state: an energy arrival with one unit
/// stored. It is visited often under every policy, which keeps excursions
/// short.
pub fn default_anchor(params: &ModelParams) -> State {
    State::new(
        crate::model::ENERGY_PER_REQUEST.min(params.battery_capacity),
        Event::EnergyArrival,
    )
}

/// Possible next energy levels, with probabilities, for one state-action
/// pair. Requests are deterministic; energy arrivals branch on the harvest.
pub fn energy_outcomes(state: State, action: Action, params: &ModelParams) -> [(u32, f64); 2] {
    if state.event.is_request() {
        [
            (apply_transition(state, action, false, params), 1.0),
            (0, 0.0),
        ]
    } else {
        let p = params.harvest_success_prob;
        [
            (apply_transition(state, action, true, params), p),
            (apply_transition(state, action, false, params), 1.0 - p),
        ]
    }
}

fn weighted_actions(dist: ActionDistribution) -> impl Iterator<Item = (Action, f64)> {
    let pairs = match dist {
        ActionDistribution::Forced => [(Action::Accept, 1.0), (Action::Reject, 0.0)],
        ActionDistribution::Binary { accept } => {
            [(Action::Accept, accept), (Action::Reject, 1.0 - accept)]
        }
    };
    pairs.into_iter().filter(|&(_, w)| w > 0.0)
}

/// Dense representation of the chain induced by a fixed policy.
#[derive(Debug, Clone)]
pub struct Chain {
    pub capacity: u32,
    pub states: Vec<State>,
    pub event_probs: [f64; 4],
    pub transition: DMatrix<f64>,
    pub reward: DVector<f64>,
}

impl Chain {
    pub fn build(policy: &PolicyKind, params: &ModelParams) -> Self {
        let states = State::enumerate(params.battery_capacity);
        let n = states.len();
        let ev = params.event_distribution();
        let mut transition = DMatrix::zeros(n, n);
        let mut reward = DVector::zeros(n);
        for &s in &states {
            let i = s.index();
            for (action, mu) in weighted_actions(policy.action_distribution(s)) {
                reward[i] += mu * immediate_reward(s, action, params);
                for (e_next, q) in energy_outcomes(s, action, params) {
                    if q == 0.0 {
                        continue;
                    }
                    for x in Event::ALL {
                        transition[(i, State::new(e_next, x).index())] += mu * q * ev[x.index()];
                    }
                }
            }
        }
        Self {
            capacity: params.battery_capacity,
            states,
            event_probs: ev,
            transition,
            reward,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: State) -> Result<usize, OracleError> {
        if s.energy > self.capacity {
            return Err(OracleError::StateOutOfRange(s));
        }
        Ok(s.index())
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.transition
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        self.transition
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect()
    }

    /// `reach[i][j]`: state j is reachable from state i (reflexive).
    fn reachability(&self) -> Vec<Vec<bool>> {
        let succ = self.successors();
        let n = self.len();
        (0..n)
            .map(|start| {
                let mut seen = vec![false; n];
                let mut stack = vec![start];
                seen[start] = true;
                while let Some(i) = stack.pop() {
                    for &j in &succ[i] {
                        if !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
                seen
            })
            .collect()
    }

    /// Closed communicating classes, each as sorted state indices.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let reach = self.reachability();
        let n = self.len();
        let mut assigned = vec![false; n];
        let mut classes = Vec::new();
        for i in 0..n {
            if assigned[i] {
                continue;
            }
            let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
            if closed {
                let class: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
                for &j in &class {
                    assigned[j] = true;
                }
                classes.push(class);
            }
        }
        classes
    }

    /// States from which `target` cannot be reached.
    fn cannot_reach(&self, target: usize) -> Vec<State> {
        let reach = self.reachability();
        (0..self.len())
            .filter(|&i| !reach[i][target])
            .map(|i| self.states[i])
            .collect()
    }

    /// Per-state value of a policy's transition under one action:
    /// `sum_s' P(s, a, s') f(s')`.
    fn expected_next(
        &self,
        s: State,
        action: Action,
        f: &DVector<f64>,
        params: &ModelParams,
    ) -> f64 {
        energy_outcomes(s, action, params)
            .iter()
            .filter(|(_, q)| *q > 0.0)
            .map(|&(e, q)| {
                q * Event::ALL
                    .iter()
                    .map(|&x| self.event_probs[x.index()] * f[State::new(e, x).index()])
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Solve the balance equations `pi P = pi`, `sum pi = 1`.
pub fn stationary_distribution(chain: &Chain) -> Result<DVector<f64>, OracleError> {
    let classes = chain.recurrent_classes();
    if classes.len() > 1 {
        let reference = chain.states[classes[0][0]];
        let unreachable = classes[1..]
            .iter()
            .flatten()
            .map(|&i| chain.states[i])
            .collect();
        return Err(OracleError::Reducible {
            reference,
            unreachable,
        });
    }
    let n = chain.len();
    let mut a = chain.transition.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or(OracleError::Singular("balance equations"))?;
    if pi.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::Singular("balance equations"));
    }
    // Round-off can leave tiny negatives on transient states.
    Ok(pi.map(|v| v.max(0.0)))
}

/// `max |(pi P - pi)_j|`.
pub fn balance_residual(chain: &Chain, pi: &DVector<f64>) -> f64 {
    let lhs = chain.transition.tr_mul(pi);
    (lhs - pi).amax()
}

/// Stationary solution of one policy's chain.
#[derive(Debug, Clone)]
pub struct ChainSolution {
    pub chain: Chain,
    pub stationary: DVector<f64>,
    pub psi: f64,
}

impl ChainSolution {
    pub fn solve(policy: &PolicyKind, params: &ModelParams) -> Result<Self, OracleError> {
        let chain = Chain::build(policy, params);
        let stationary = stationary_distribution(&chain)?;
        let psi = stationary.dot(&chain.reward);
        Ok(Self {
            chain,
            stationary,
            psi,
        })
    }

    /// Probability mass on each event summed over energy.
    pub fn event_marginals(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for (i, s) in self.chain.states.iter().enumerate() {
            m[s.event.index()] += self.stationary[i];
        }
        m
    }

    pub fn energy_marginals(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.chain.capacity as usize + 1];
        for (i, s) in self.chain.states.iter().enumerate() {
            m[s.energy as usize] += self.stationary[i];
        }
        m
    }

    pub fn average_energy(&self) -> f64 {
        self.energy_marginals()
            .iter()
            .enumerate()
            .map(|(e, p)| e as f64 * p)
            .sum()
    }

    /// Long-run accepted (served) requests per step, per class.
    pub fn acceptance_rates(&self, policy: &PolicyKind) -> [f64; 3] {
        let mut rates = [0.0; 3];
        for (i, &s) in self.chain.states.iter().enumerate() {
            if let Some(class) = s.event.request_class() {
                if crate::model::can_serve(s.energy) {
                    rates[class.index()] +=
                        self.stationary[i] * policy.action_distribution(s).accept();
                }
            }
        }
        rates
    }
}

pub fn exact_average_reward(policy: &PolicyKind, params: &ModelParams) -> Result<f64, OracleError> {
    ChainSolution::solve(policy, params).map(|s| s.psi)
}

/// Solve the Poisson equation `d = R - psi + P d` with `d(anchor) = 0`.
///
/// With the anchor fixed, `d(s)` is the expected centered reward collected
/// from `s` up to the first visit to the anchor.
pub fn differential_rewards(
    chain: &Chain,
    psi: f64,
    anchor: State,
) -> Result<DVector<f64>, OracleError> {
    let k = chain.index_of(anchor)?;
    let n = chain.len();
    let unreachable = chain.cannot_reach(k);
    if !unreachable.is_empty() {
        return Err(OracleError::AnchorUnreachable {
            anchor,
            unreachable,
        });
    }
    let mut a = DMatrix::identity(n, n) - &chain.transition;
    let mut b = chain.reward.add_scalar(-psi);
    a.row_mut(k).fill(0.0);
    a[(k, k)] = 1.0;
    b[k] = 0.0;
    a.lu()
        .solve(&b)
        .ok_or(OracleError::Singular("Poisson equation"))
}

/// Exact gradient of the average reward of a logistic policy,
///
/// `grad psi = sum_s pi(s) sum_a grad mu(s, a) q(s, a)`,
/// `q(s, a) = R(s, a) - psi + sum_s' P(s, a, s') d(s')`,
///
/// with `grad mu` taken analytically from the logistic curve.
pub fn exact_gradient(
    policy: &SigmoidPolicy,
    params: &ModelParams,
    anchor: Option<State>,
) -> Result<ParamVector, OracleError> {
    let kind = PolicyKind::Sigmoid(*policy);
    let sol = ChainSolution::solve(&kind, params)?;
    let anchor = anchor.unwrap_or_else(|| default_anchor(params));
    let d = differential_rewards(&sol.chain, sol.psi, anchor)?;
    Ok(gradient_from_solution(policy, params, &sol, &d))
}

pub(crate) fn gradient_from_solution(
    policy: &SigmoidPolicy,
    params: &ModelParams,
    sol: &ChainSolution,
    d: &DVector<f64>,
) -> ParamVector {
    let mut grad = ParamVector::ZERO;
    for (i, &s) in sol.chain.states.iter().enumerate() {
        let Some(class) = s.event.request_class() else {
            continue;
        };
        let d_accept = policy.accept_gradient(s.energy, class);
        for (action, dmu) in [
            (Action::Accept, d_accept),
            (Action::Reject, d_accept * -1.0),
        ] {
            let q = immediate_reward(s, action, params) - sol.psi
                + sol.chain.expected_next(s, action, d, params);
            grad += dmu * (sol.stationary[i] * q);
        }
    }
    grad
}

/// Deterministic average-reward optimal policy.
#[derive(Debug, Clone)]
pub struct OptimalPolicy {
    pub capacity: u32,
    /// Indexed by [`State::index`]; energy arrivals hold `Accept`.
    pub decisions: Vec<Action>,
    pub psi_star: f64,
    pub sweeps: usize,
    pub span: f64,
}

impl OptimalPolicy {
    pub fn decision(&self, s: State) -> Action {
        self.decisions[s.index()]
    }

    /// Per-class thresholds when the policy has threshold form (rejects
    /// below, accepts at and above); `capacity + 1` means never accept.
    pub fn thresholds(&self) -> Option<[u32; 3]> {
        let mut out = [0u32; 3];
        for class in RequestClass::ALL {
            let event = Event::ALL[class.index()];
            let accepts: Vec<bool> = (0..=self.capacity)
                .map(|e| self.decision(State::new(e, event)) == Action::Accept)
                .collect();
            let first = accepts
                .iter()
                .position(|&a| a)
                .unwrap_or(self.capacity as usize + 1);
            if accepts[first.min(accepts.len())..].iter().any(|&a| !a) {
                return None;
            }
            out[class.index()] = first as u32;
        }
        Some(out)
    }

    pub fn as_policy(&self) -> Option<PolicyKind> {
        self.thresholds().map(PolicyKind::FixedThreshold)
    }
}

/// Relative value iteration over the full MDP, stopping when the span of
/// successive differences drops below [`RVI_TOLERANCE`].
pub fn solve_optimal(params: &ModelParams) -> Result<OptimalPolicy, OracleError> {
    let cap = params.battery_capacity as usize;
    let ev = params.event_distribution();
    let p = params.harvest_success_prob;
    let n = (cap + 1) * 4;
    let reference = n - 1;
    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut w = vec![0.0; cap + 1];
    let mut span = f64::INFINITY;
    let rewards = RequestClass::ALL.map(|c| params.reward(c));

    for sweep in 1..=RVI_MAX_SWEEPS {
        for (e, we) in w.iter_mut().enumerate() {
            *we = (0..4).map(|x| ev[x] * h[e * 4 + x]).sum();
        }
        for e in 0..=cap {
            for (x, r) in rewards.iter().enumerate() {
                let reject = w[e];
                next[e * 4 + x] = if e >= 1 {
                    reject.max(r + w[e - 1])
                } else {
                    reject
                };
            }
            next[e * 4 + 3] = p * w[(e + 1).min(cap)] + (1.0 - p) * w[e];
        }
        let (lo, hi) = next
            .iter()
            .zip(&h)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        span = hi - lo;
        let offset = next[reference];
        for (hv, nv) in h.iter_mut().zip(&next) {
            *hv = nv - offset;
        }
        if span < RVI_TOLERANCE {
            let psi_star = 0.5 * (lo + hi);
            for (e, we) in w.iter_mut().enumerate() {
                *we = (0..4).map(|x| ev[x] * h[e * 4 + x]).sum();
            }
            let decisions = (0..n)
                .map(|i| {
                    let s = State::from_index(i);
                    match s.event.request_class() {
                        None => Action::Accept,
                        Some(class) if s.energy >= 1 => {
                            let e = s.energy as usize;
                            let gain = params.reward(class) + w[e - 1] - w[e];
                            if gain > 1e-9 {
                                Action::Accept
                            } else {
                                Action::Reject
                            }
                        }
                        Some(_) => Action::Reject,
                    }
                })
                .collect();
            return Ok(OptimalPolicy {
                capacity: params.battery_capacity,
                decisions,
                psi_star,
                sweeps: sweep,
                span,
            });
        }
    }
    Err(OracleError::NoConvergence {
        sweeps: RVI_MAX_SWEEPS,
        span,
    })
}

pub const POLICY_TABLE_HEADER: [&str; 3] = ["energy", "event", "accept_prob_or_decision"];

/// Acceptance probability (or 0/1 decision) for every state of the policy.
pub fn policy_table(policy: &PolicyKind, capacity: u32) -> Table {
    let mut t = Table::new(&POLICY_TABLE_HEADER);
    for s in State::enumerate(capacity) {
        let p = policy.action_distribution(s).accept();
        t.push_raw(vec![s.energy.to_string(), s.event.to_string(), fmt_real(p)]);
    }
    t
}

pub fn optimal_policy_table(opt: &OptimalPolicy) -> Table {
    let mut t = Table::new(&POLICY_TABLE_HEADER);
    for s in State::enumerate(opt.capacity) {
        t.push_raw(vec![
            s.energy.to_string(),
            s.event.to_string(),
            opt.decision(s).as_bit().to_string(),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_theta() -> ParamVector {
        ParamVector::new(-1.5577, 4.3448, 1.7029)
    }

    #[test]
    fn chain_shape_and_rows() {
        let params = ModelParams::default();
        for policy in [
            PolicyKind::Greedy,
            PolicyKind::reject_all(),
            PolicyKind::sigmoid(reference_theta()),
        ] {
            let c = Chain::build(&policy, &params);
            assert_eq!(c.len(), 44);
            assert_eq!(c.transition.shape(), (44, 44));
            assert!(c.max_row_sum_error() <= 1e-12);
            assert!(c.transition.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn reject_all_moves_energy_only_on_arrivals() {
        let params = ModelParams::default();
        let c = Chain::build(&PolicyKind::reject_all(), &params);
        for (i, s) in c.states.iter().enumerate() {
            for (j, t) in c.states.iter().enumerate() {
                if c.transition[(i, j)] > 0.0 && t.energy != s.energy {
                    assert_eq!(s.event, Event::EnergyArrival);
                    assert_eq!(t.energy, s.energy + 1);
                }
            }
        }
        assert_eq!(c.reward.sum(), 0.0);
    }

    #[test]
    fn greedy_expected_reward_per_state() {
        let params = ModelParams::default();
        let c = Chain::build(&PolicyKind::Greedy, &params);
        for e in 1..=10 {
            assert_eq!(c.reward[State::new(e, Event::RequestBalloon).index()], 5.0);
            assert_eq!(c.reward[State::new(e, Event::RequestGround).index()], 2.0);
        }
        assert_eq!(c.reward[State::new(0, Event::RequestBalloon).index()], 0.0);
    }

    #[test]
    fn symmetric_toy_chain() {
        let chain = Chain {
            capacity: 0,
            states: vec![
                State::new(0, Event::RequestBalloon),
                State::new(0, Event::RequestGround),
            ],
            event_probs: [0.5, 0.5, 0.0, 0.0],
            transition: DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, 0.3]),
            reward: DVector::from_vec(vec![1.0, 0.0]),
        };
        let pi = stationary_distribution(&chain).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reject_all_with_sure_harvest_fills_battery() {
        let params = ModelParams {
            harvest_success_prob: 1.0,
            ..ModelParams::default()
        };
        let sol = ChainSolution::solve(&PolicyKind::reject_all(), &params).unwrap();
        let m = sol.energy_marginals();
        assert!((m[10] - 1.0).abs() < 1e-12);
        assert_eq!(sol.psi, 0.0);
    }

    #[test]
    fn event_marginals_match_event_distribution() {
        let params = ModelParams::default();
        let sol = ChainSolution::solve(&PolicyKind::sigmoid(reference_theta()), &params).unwrap();
        let ev = params.event_distribution();
        for (m, p) in sol.event_marginals().iter().zip(ev) {
            assert!((m - p).abs() < 1e-10);
        }
        assert!(balance_residual(&sol.chain, &sol.stationary) <= 1e-10);
        assert!((sol.stationary.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn reducible_chain_is_reported() {
        // No harvesting: every energy level under reject-all is absorbing.
        let params = ModelParams {
            harvest_success_prob: 0.0,
            ..ModelParams::default()
        };
        let err =
            stationary_distribution(&Chain::build(&PolicyKind::reject_all(), &params)).unwrap_err();
        match err {
            OracleError::Reducible { unreachable, .. } => assert!(!unreachable.is_empty()),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn poisson_solution_properties() {
        let params = ModelParams::default();
        let sol = ChainSolution::solve(&PolicyKind::sigmoid(reference_theta()), &params).unwrap();
        let anchor = default_anchor(&params);
        let d = differential_rewards(&sol.chain, sol.psi, anchor).unwrap();
        assert_eq!(d[anchor.index()], 0.0);
        // Full Poisson equation holds at every state, anchor included.
        let resid = &d - (&sol.chain.reward.add_scalar(-sol.psi) + &sol.chain.transition * &d);
        assert!(resid.amax() < 1e-9, "residual {}", resid.amax());
        let centered = sol.chain.reward.add_scalar(-sol.psi);
        assert!(sol.stationary.dot(&centered).abs() < 1e-12);
    }

    #[test]
    fn constant_reward_gives_zero_differential() {
        let params = ModelParams::default();
        let mut chain = Chain::build(&PolicyKind::Greedy, &params);
        chain.reward.fill(0.7);
        let d = differential_rewards(&chain, 0.7, default_anchor(&params)).unwrap();
        assert!(d.amax() < 1e-12);
    }

    #[test]
    fn gradient_insensitive_to_anchor() {
        let params = ModelParams::default();
        let pol = SigmoidPolicy::new(ParamVector::new(0.5, 3.0, 2.5));
        let a = exact_gradient(&pol, &params, None).unwrap();
        let b = exact_gradient(&pol, &params, Some(State::new(4, Event::RequestGround))).unwrap();
        assert!((a - b).max_abs() < 1e-10);
    }

    #[test]
    fn saturated_policy_has_flat_gradient() {
        let params = ModelParams::default();
        let pol = SigmoidPolicy::new(ParamVector::new(-1e3, -1e3, -1e3));
        assert!(exact_gradient(&pol, &params, None).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn optimal_policy_reference_setup() {
        let params = ModelParams::default();
        let opt = solve_optimal(&params).unwrap();
        assert!(opt.psi_star <= 1.55 + RVI_TOLERANCE);
        let thr = opt.thresholds().expect("threshold structure");
        assert_eq!(thr[0], 1);
        // The deterministic optimum evaluated exactly reproduces psi*.
        let psi = exact_average_reward(&opt.as_policy().unwrap(), &params).unwrap();
        assert!((psi - opt.psi_star).abs() < 1e-8);
        // Dominates greedy and the reference logistic policy.
        let greedy = exact_average_reward(&PolicyKind::Greedy, &params).unwrap();
        let sig = exact_average_reward(&PolicyKind::sigmoid(reference_theta()), &params).unwrap();
        assert!(greedy < sig && sig <= opt.psi_star);
    }

    #[test]
    fn zero_rewards_zero_gain() {
        let params = ModelParams {
            reward_balloon: 0.0,
            reward_ground: 0.0,
            reward_satellite: 0.0,
            ..ModelParams::default()
        };
        assert!(solve_optimal(&params).unwrap().psi_star.abs() < 1e-12);
    }

    #[test]
    fn abundant_energy_makes_greedy_optimal() {
        let params = ModelParams {
            rate_energy: 1e5,
            harvest_success_prob: 1.0,
            ..ModelParams::default()
        };
        let opt = solve_optimal(&params).unwrap();
        assert_eq!(opt.thresholds(), Some([1, 1, 1]));
        let greedy = exact_average_reward(&PolicyKind::Greedy, &params).unwrap();
        assert!((greedy - opt.psi_star).abs() < 1e-8);
        let ev = params.event_distribution();
        let offered = ev[0] * 5.0 + ev[1] * 2.0 + ev[2] * 3.0;
        assert!((opt.psi_star - offered).abs() < 1e-4);
    }

    #[test]
    fn policy_table_rows() {
        let t = policy_table(&PolicyKind::Greedy, 2);
        let lines: Vec<&str> = t.as_str().lines().collect();
        assert_eq!(lines[0], "energy,event,accept_prob_or_decision");
        assert_eq!(lines.len(), 1 + 12);
        assert_eq!(lines[1], "0,request_balloon,0.000000000");
    }
}
