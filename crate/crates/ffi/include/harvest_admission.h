#ifndef HARVEST_ADMISSION_H
#define HARVEST_ADMISSION_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HaStatus {
  HA_STATUS_OK = 0,
  HA_STATUS_NULL_POINTER = 1,
  HA_STATUS_INVALID_ARGUMENT = 2,
  HA_STATUS_CONFIG = 3,
  HA_STATUS_ORACLE = 4,
  HA_STATUS_DIVERGED = 5,
  HA_STATUS_NOT_THRESHOLD = 6,
  HA_STATUS_PANIC = 7,
} HaStatus;

/**
 * Values for [`HaTrainOptions::algorithm`].
 */
typedef enum HaAlgorithm {
  HA_ALGORITHM_REGENERATIVE = 0,
  HA_ALGORITHM_EVERY_STEP = 1,
} HaAlgorithm;

/**
 * Opaque validated model.
 */
typedef struct HaModel HaModel;

/**
 * Opaque admission policy.
 */
typedef struct HaPolicy HaPolicy;

/**
 * Plain model parameters; start from [`ha_model_params_default`].
 */
typedef struct HaModelParams {
  uint32_t battery_capacity;
  double rate_balloon;
  double rate_ground;
  double rate_satellite;
  double rate_energy;
  double harvest_success_prob;
  double reward_balloon;
  double reward_ground;
  double reward_satellite;
  uint32_t energy_per_request;
} HaModelParams;

/**
 * Training options; start from [`ha_train_options_default`].
 */
typedef struct HaTrainOptions {
  /**
   * An [`HaAlgorithm`] value.
   */
  uint32_t algorithm;
  /**
   * Harmonic-tail schedule `gamma0 * kappa / (kappa + k)`.
   */
  double gamma0;
  double kappa;
  double eta;
  uint64_t total_steps;
  uint64_t seed;
  double initial_theta[3];
  double initial_est_avg_reward;
  double slope;
  /**
   * Battery level of the recurrent energy-arrival state.
   */
  uint32_t recurrent_energy;
} HaTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code; unknown codes get a generic text.
 */
const char *ha_status_string(int32_t status);

/**
 * Copy the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * without the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ha_last_error_message(char *buf, size_t len);

/**
 * # Safety
 * `out` must be null or point to writable memory for one struct.
 */
enum HaStatus ha_model_params_default(struct HaModelParams *out);

/**
 * Validate `params` and create a model handle.
 *
 * # Safety
 * `params` must be null or point to a valid struct; `out` must be null
 * or writable.
 */
enum HaStatus ha_model_new(const struct HaModelParams *params, struct HaModel **out);

/**
 * # Safety
 * `model` must be null or come from [`ha_model_new`] and not be freed twice.
 */
void ha_model_free(struct HaModel *model);

/**
 * Logistic threshold policy with parameters `theta[0..3]` and `slope`.
 *
 * # Safety
 * `theta` must point to three doubles; `out` must be writable.
 */
enum HaStatus ha_policy_new_sigmoid(const double *theta, double slope, struct HaPolicy **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum HaStatus ha_policy_new_greedy(struct HaPolicy **out);

/**
 * Deterministic policy accepting class `c` when energy >= `thresholds[c]`.
 *
 * # Safety
 * `thresholds` must point to three integers; `out` must be writable.
 */
enum HaStatus ha_policy_new_threshold(const uint32_t *thresholds, struct HaPolicy **out);

/**
 * # Safety
 * `policy` must be null or come from an `ha_policy_new_*` call.
 */
void ha_policy_free(struct HaPolicy *policy);

/**
 * Probability of accepting a class `request_class` (0, 1, 2) request at
 * battery level `energy`.
 *
 * # Safety
 * `policy` must be a live handle; `out` must be writable.
 */
enum HaStatus ha_policy_accept_probability(const struct HaPolicy *policy,
                                           uint32_t energy,
                                           uint32_t request_class,
                                           double *out);

/**
 * Exact long-run average reward of `policy` on `model`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HaStatus ha_exact_average_reward(const struct HaModel *model,
                                      const struct HaPolicy *policy,
                                      double *out);

/**
 * Exact gradient of the average reward with respect to the logistic
 * parameters `theta`, written to `out[0..3]`.
 *
 * # Safety
 * `theta` and `out` must each hold three doubles.
 */
enum HaStatus ha_exact_gradient(const struct HaModel *model,
                                const double *theta,
                                double slope,
                                double *out);

/**
 * Optimal average reward and, when the optimal policy has threshold
 * form, its per-class thresholds (`capacity + 1` means never accept).
 * `psi_star` is written even when the status is `NotThreshold`.
 *
 * # Safety
 * `psi_star` must be writable; `thresholds` must be null or hold three
 * integers.
 */
enum HaStatus ha_solve_optimal(const struct HaModel *model, double *psi_star, uint32_t *thresholds);

/**
 * Simulate `horizon` steps from a full battery and report the average
 * reward over the steps after `burn_in`.
 *
 * # Safety
 * Handles must be live; `avg_reward` must be writable.
 */
enum HaStatus ha_simulate(const struct HaModel *model,
                          const struct HaPolicy *policy,
                          uint64_t seed,
                          uint64_t horizon,
                          uint64_t burn_in,
                          double *avg_reward);

/**
 * # Safety
 * `out` must be writable.
 */
enum HaStatus ha_train_options_default(struct HaTrainOptions *out);

/**
 * Train the logistic policy and write the final parameters to
 * `theta_out[0..3]` and the final average-reward estimate to
 * `psi_tilde_out`.
 *
 * # Safety
 * `options` must be valid; `theta_out` must hold three doubles;
 * `psi_tilde_out` must be null or writable.
 */
enum HaStatus ha_train(const struct HaModel *model,
                       const struct HaTrainOptions *options,
                       double *theta_out,
                       double *psi_tilde_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARVEST_ADMISSION_H */
