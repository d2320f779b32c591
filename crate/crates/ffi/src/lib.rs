//! C ABI over the `harvest-admission` crate.
//!
//! Models and policies are opaque heap handles created by `ha_*_new` and
//! released with the matching `ha_*_free`. Every fallible call returns an
//! [`HaStatus`]; on failure a message is kept per thread and can be read
//! with [`ha_last_error_message`]. Outputs are written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use harvest_admission::error::{LearnError, OracleError};
use harvest_admission::learner::{train, Algorithm, LearnConfig, StepSchedule};
use harvest_admission::model::{Event, ModelParams, RequestClass, State};
use harvest_admission::oracle::{exact_average_reward, exact_gradient, solve_optimal};
use harvest_admission::policy::{ParamVector, PolicyKind, SigmoidPolicy};
use harvest_admission::simulator::{run_trajectory, SimConfig};
use harvest_admission::ConfigError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Oracle = 4,
    Diverged = 5,
    NotThreshold = 6,
    Panic = 7,
}

/// Values for [`HaTrainOptions::algorithm`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaAlgorithm {
    Regenerative = 0,
    EveryStep = 1,
}

/// Plain model parameters; start from [`ha_model_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HaModelParams {
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

impl From<ModelParams> for HaModelParams {
    fn from(p: ModelParams) -> Self {
        Self {
            battery_capacity: p.battery_capacity,
            rate_balloon: p.rate_balloon,
            rate_ground: p.rate_ground,
            rate_satellite: p.rate_satellite,
            rate_energy: p.rate_energy,
            harvest_success_prob: p.harvest_success_prob,
            reward_balloon: p.reward_balloon,
            reward_ground: p.reward_ground,
            reward_satellite: p.reward_satellite,
            energy_per_request: p.energy_per_request,
        }
    }
}

impl From<HaModelParams> for ModelParams {
    fn from(p: HaModelParams) -> Self {
        Self {
            battery_capacity: p.battery_capacity,
            rate_balloon: p.rate_balloon,
            rate_ground: p.rate_ground,
            rate_satellite: p.rate_satellite,
            rate_energy: p.rate_energy,
            harvest_success_prob: p.harvest_success_prob,
            reward_balloon: p.reward_balloon,
            reward_ground: p.reward_ground,
            reward_satellite: p.reward_satellite,
            energy_per_request: p.energy_per_request,
        }
    }
}

/// Training options; start from [`ha_train_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HaTrainOptions {
    /// An [`HaAlgorithm`] value.
    pub algorithm: u32,
    /// Harmonic-tail schedule `gamma0 * kappa / (kappa + k)`.
    pub gamma0: f64,
    pub kappa: f64,
    pub eta: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub initial_theta: [f64; 3],
    pub initial_est_avg_reward: f64,
    pub slope: f64,
    /// Battery level of the recurrent energy-arrival state.
    pub recurrent_energy: u32,
}

/// Opaque validated model.
pub struct HaModel {
    params: ModelParams,
}

/// Opaque admission policy.
pub struct HaPolicy {
    policy: PolicyKind,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

trait IntoStatus {
    fn status(&self) -> HaStatus;
}

impl IntoStatus for ConfigError {
    fn status(&self) -> HaStatus {
        HaStatus::Config
    }
}

impl IntoStatus for OracleError {
    fn status(&self) -> HaStatus {
        HaStatus::Oracle
    }
}

impl IntoStatus for LearnError {
    fn status(&self) -> HaStatus {
        match self {
            LearnError::Diverged { .. } => HaStatus::Diverged,
            LearnError::Oracle(_) => HaStatus::Oracle,
            LearnError::Config(_) => HaStatus::Config,
        }
    }
}

fn fail<E: IntoStatus + std::fmt::Display>(e: E) -> HaStatus {
    set_error(e.to_string());
    e.status()
}

fn null(what: &str) -> HaStatus {
    set_error(format!("`{what}` is null"));
    HaStatus::NullPointer
}

fn invalid(msg: &str) -> HaStatus {
    set_error(msg);
    HaStatus::InvalidArgument
}

/// Run `f`, turning a panic into [`HaStatus::Panic`].
fn guard(f: impl FnOnce() -> HaStatus) -> HaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_owned())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            set_error(format!("internal panic: {msg}"));
            HaStatus::Panic
        }
    }
}

unsafe fn theta_from(ptr: *const f64) -> ParamVector {
    let t = std::slice::from_raw_parts(ptr, 3);
    ParamVector::new(t[0], t[1], t[2])
}

/// Static description of a status code; unknown codes get a generic text.
#[no_mangle]
pub extern "C" fn ha_status_string(status: i32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer argument",
        2 => c"invalid argument",
        3 => c"invalid configuration",
        4 => c"exact solver failed",
        5 => c"learner diverged",
        6 => c"optimal policy is not of threshold form",
        7 => c"internal panic",
        _ => c"unknown status",
    };
    s.as_ptr()
}

/// Copy the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// without the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ha_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
/// `out` must be null or point to writable memory for one struct.
#[no_mangle]
pub unsafe extern "C" fn ha_model_params_default(out: *mut HaModelParams) -> HaStatus {
    if out.is_null() {
        return null("out");
    }
    *out = ModelParams::default().into();
    HaStatus::Ok
}

/// Validate `params` and create a model handle.
///
/// # Safety
/// `params` must be null or point to a valid struct; `out` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn ha_model_new(
    params: *const HaModelParams,
    out: *mut *mut HaModel,
) -> HaStatus {
    if params.is_null() {
        return null("params");
    }
    if out.is_null() {
        return null("out");
    }
    guard(|| {
        let p: ModelParams = (*params).into();
        if let Err(e) = p.validate() {
            return fail(e);
        }
        *out = Box::into_raw(Box::new(HaModel { params: p }));
        HaStatus::Ok
    })
}

/// # Safety
/// `model` must be null or come from [`ha_model_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ha_model_free(model: *mut HaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn put_policy(policy: PolicyKind, out: *mut *mut HaPolicy) -> HaStatus {
    if out.is_null() {
        return null("out");
    }
    *out = Box::into_raw(Box::new(HaPolicy { policy }));
    HaStatus::Ok
}

/// Logistic threshold policy with parameters `theta[0..3]` and `slope`.
///
/// # Safety
/// `theta` must point to three doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_policy_new_sigmoid(
    theta: *const f64,
    slope: f64,
    out: *mut *mut HaPolicy,
) -> HaStatus {
    if theta.is_null() {
        return null("theta");
    }
    let t = theta_from(theta);
    if !t.is_finite() {
        return invalid("theta must be finite");
    }
    if !(slope.is_finite() && slope > 0.0) {
        return invalid("slope must be finite and > 0");
    }
    put_policy(
        PolicyKind::Sigmoid(SigmoidPolicy::with_slope(t, slope)),
        out,
    )
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_policy_new_greedy(out: *mut *mut HaPolicy) -> HaStatus {
    put_policy(PolicyKind::Greedy, out)
}

/// Deterministic policy accepting class `c` when energy >= `thresholds[c]`.
///
/// # Safety
/// `thresholds` must point to three integers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_policy_new_threshold(
    thresholds: *const u32,
    out: *mut *mut HaPolicy,
) -> HaStatus {
    if thresholds.is_null() {
        return null("thresholds");
    }
    let t = std::slice::from_raw_parts(thresholds, 3);
    put_policy(PolicyKind::FixedThreshold([t[0], t[1], t[2]]), out)
}

/// # Safety
/// `policy` must be null or come from an `ha_policy_new_*` call.
#[no_mangle]
pub unsafe extern "C" fn ha_policy_free(policy: *mut HaPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Probability of accepting a class `request_class` (0, 1, 2) request at
/// battery level `energy`.
///
/// # Safety
/// `policy` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_policy_accept_probability(
    policy: *const HaPolicy,
    energy: u32,
    request_class: u32,
    out: *mut f64,
) -> HaStatus {
    if policy.is_null() {
        return null("policy");
    }
    if out.is_null() {
        return null("out");
    }
    let Some(&class) = RequestClass::ALL.get(request_class as usize) else {
        return invalid("request_class must be 0, 1 or 2");
    };
    let state = State::new(energy, Event::ALL[class.index()]);
    *out = (*policy).policy.action_distribution(state).accept();
    HaStatus::Ok
}

/// Exact long-run average reward of `policy` on `model`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_exact_average_reward(
    model: *const HaModel,
    policy: *const HaPolicy,
    out: *mut f64,
) -> HaStatus {
    if model.is_null() {
        return null("model");
    }
    if policy.is_null() {
        return null("policy");
    }
    if out.is_null() {
        return null("out");
    }
    guard(
        || match exact_average_reward(&(*policy).policy, &(*model).params) {
            Ok(psi) => {
                *out = psi;
                HaStatus::Ok
            }
            Err(e) => fail(e),
        },
    )
}

/// Exact gradient of the average reward with respect to the logistic
/// parameters `theta`, written to `out[0..3]`.
///
/// # Safety
/// `theta` and `out` must each hold three doubles.
#[no_mangle]
pub unsafe extern "C" fn ha_exact_gradient(
    model: *const HaModel,
    theta: *const f64,
    slope: f64,
    out: *mut f64,
) -> HaStatus {
    if model.is_null() {
        return null("model");
    }
    if theta.is_null() {
        return null("theta");
    }
    if out.is_null() {
        return null("out");
    }
    if !(slope.is_finite() && slope > 0.0) {
        return invalid("slope must be finite and > 0");
    }
    guard(|| {
        let policy = SigmoidPolicy::with_slope(theta_from(theta), slope);
        match exact_gradient(&policy, &(*model).params, None) {
            Ok(g) => {
                ptr::copy_nonoverlapping(g.to_array().as_ptr(), out, 3);
                HaStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Optimal average reward and, when the optimal policy has threshold
/// form, its per-class thresholds (`capacity + 1` means never accept).
/// `psi_star` is written even when the status is `NotThreshold`.
///
/// # Safety
/// `psi_star` must be writable; `thresholds` must be null or hold three
/// integers.
#[no_mangle]
pub unsafe extern "C" fn ha_solve_optimal(
    model: *const HaModel,
    psi_star: *mut f64,
    thresholds: *mut u32,
) -> HaStatus {
    if model.is_null() {
        return null("model");
    }
    if psi_star.is_null() {
        return null("psi_star");
    }
    guard(|| match solve_optimal(&(*model).params) {
        Ok(opt) => {
            *psi_star = opt.psi_star;
            if thresholds.is_null() {
                return HaStatus::Ok;
            }
            match opt.thresholds() {
                Some(t) => {
                    ptr::copy_nonoverlapping(t.as_ptr(), thresholds, 3);
                    HaStatus::Ok
                }
                None => {
                    set_error("optimal policy is not of threshold form");
                    HaStatus::NotThreshold
                }
            }
        }
        Err(e) => fail(e),
    })
}

/// Simulate `horizon` steps from a full battery and report the average
/// reward over the steps after `burn_in`.
///
/// # Safety
/// Handles must be live; `avg_reward` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_simulate(
    model: *const HaModel,
    policy: *const HaPolicy,
    seed: u64,
    horizon: u64,
    burn_in: u64,
    avg_reward: *mut f64,
) -> HaStatus {
    if model.is_null() {
        return null("model");
    }
    if policy.is_null() {
        return null("policy");
    }
    if avg_reward.is_null() {
        return null("avg_reward");
    }
    let config = SimConfig {
        seed,
        horizon,
        initial_energy: None,
        burn_in,
    };
    if let Err(e) = config.validate(&(*model).params) {
        return fail(e);
    }
    guard(|| {
        let t = run_trajectory(&config, &(*policy).policy, &(*model).params, false);
        *avg_reward = t.metrics.average_reward;
        HaStatus::Ok
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ha_train_options_default(out: *mut HaTrainOptions) -> HaStatus {
    if out.is_null() {
        return null("out");
    }
    let d = LearnConfig::default();
    let (gamma0, kappa) = match d.schedule {
        StepSchedule::HarmonicTail { gamma0, kappa } => (gamma0, kappa),
        StepSchedule::Constant { gamma0 } => (gamma0, f64::INFINITY),
    };
    *out = HaTrainOptions {
        algorithm: HaAlgorithm::EveryStep as u32,
        gamma0,
        kappa,
        eta: d.eta,
        total_steps: d.total_steps,
        seed: 0,
        initial_theta: d.initial_theta.to_array(),
        initial_est_avg_reward: d.initial_est_avg_reward,
        slope: d.slope,
        recurrent_energy: 1,
    };
    HaStatus::Ok
}

/// Train the logistic policy and write the final parameters to
/// `theta_out[0..3]` and the final average-reward estimate to
/// `psi_tilde_out`.
///
/// # Safety
/// `options` must be valid; `theta_out` must hold three doubles;
/// `psi_tilde_out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ha_train(
    model: *const HaModel,
    options: *const HaTrainOptions,
    theta_out: *mut f64,
    psi_tilde_out: *mut f64,
) -> HaStatus {
    if model.is_null() {
        return null("model");
    }
    if options.is_null() {
        return null("options");
    }
    if theta_out.is_null() {
        return null("theta_out");
    }
    let o = *options;
    let algorithm = match o.algorithm {
        a if a == HaAlgorithm::Regenerative as u32 => Algorithm::Regenerative,
        a if a == HaAlgorithm::EveryStep as u32 => Algorithm::EveryStep,
        _ => return invalid("unknown algorithm"),
    };
    let config = LearnConfig {
        algorithm,
        eta: o.eta,
        schedule: StepSchedule::HarmonicTail {
            gamma0: o.gamma0,
            kappa: o.kappa,
        },
        recurrent_state: Some(State::new(o.recurrent_energy, Event::EnergyArrival)),
        total_steps: o.total_steps,
        initial_theta: ParamVector::from_array(o.initial_theta),
        initial_est_avg_reward: o.initial_est_avg_reward,
        seed: o.seed,
        snapshot_every: o.total_steps.max(1),
        slope: o.slope,
        track_exact: false,
    };
    guard(|| match train(&config, &(*model).params) {
        Ok(outcome) => {
            ptr::copy_nonoverlapping(outcome.final_state.theta.to_array().as_ptr(), theta_out, 3);
            if !psi_tilde_out.is_null() {
                *psi_tilde_out = outcome.final_state.est_avg_reward;
            }
            HaStatus::Ok
        }
        Err(e) => fail(e),
    })
}
