#ifndef SWIDOPT_H
#define SWIDOPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SwidStatus {
  SWID_STATUS_OK = 0,
  SWID_STATUS_NULL_POINTER = 1,
  SWID_STATUS_INVALID_ARGUMENT = 2,
  // Quadrature or root finding failed.
  SWID_STATUS_NUMERICAL = 3,
  // Output buffer length does not match the scenario.
  SWID_STATUS_LENGTH_MISMATCH = 4,
  SWID_STATUS_PANIC = 5,
} SwidStatus;

typedef enum SwidObjective {
  // Uses the weights the scenario was built with.
  SWID_OBJECTIVE_WEIGHTED_SUM = 0,
  SWID_OBJECTIVE_PROPORTIONAL_FAIR = 1,
} SwidObjective;

// Opaque scenario: users in feedback order plus their weights.
typedef struct SwidScenario SwidScenario;

typedef struct SwidSimSummary {
  double flags_per_unit;
  double idle_fraction;
  // NaN when every unit was idle.
  double mean_flag_position;
  double sum_rate;
  // Users flagged by the threshold monitor.
  size_t flagged_users;
} SwidSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null if it succeeded.
// The pointer stays valid until the next `swid_*` call on the same thread.
const char *swid_last_error_message(void);

// Builds a Rayleigh scenario. `mean_snrs` are linear and in feedback order;
// user ids are `1..=len`. `weights` may be null for unit weights.
//
// # Safety
// `mean_snrs` must point to `len` doubles, `weights` to `len` doubles or be
// null, and `out` must be writable. Release the handle with
// [`swid_scenario_free`].
enum SwidStatus swid_scenario_new(const double *mean_snrs,
                                  const double *weights,
                                  size_t len,
                                  uint64_t seed,
                                  struct SwidScenario **out);

// # Safety
// `scenario` must come from [`swid_scenario_new`] and not be freed twice.
// Null is accepted.
void swid_scenario_free(struct SwidScenario *scenario);

// # Safety
// `scenario` must be a live handle and `out` writable.
enum SwidStatus swid_scenario_len(const struct SwidScenario *scenario, size_t *out);

// # Safety
// `out` must be writable.
enum SwidStatus swid_exp_integral_e1(double x, double *out);

// PF rate threshold (nats) of a Rayleigh user with `users_after` users
// behind it in the feedback order.
//
// # Safety
// `out` must be writable.
enum SwidStatus swid_pf_threshold(double mean_snr, size_t users_after, double *out);

// Optimal rate thresholds (nats) and the objective value.
// `objective_value` may be null.
//
// # Safety
// `scenario` must be a live handle, `thresholds` must hold `len` doubles.
enum SwidStatus swid_optimize(const struct SwidScenario *scenario,
                              enum SwidObjective objective,
                              double *thresholds,
                              size_t len,
                              double *objective_value);

// Per-user expected rates (nats) and access ratios under the given rate
// thresholds. `access_ratios` may be null.
//
// # Safety
// `thresholds`, `rates` and (when non-null) `access_ratios` must each hold
// `len` doubles.
enum SwidStatus swid_expected_rates(const struct SwidScenario *scenario,
                                    const double *thresholds,
                                    size_t len,
                                    double *rates,
                                    double *access_ratios);

// Sum capacity (nats) of full-feedback selection over `users` i.i.d.
// Rayleigh users.
//
// # Safety
// `out` must be writable.
enum SwidStatus swid_seld_iid_sum_capacity(double mean_snr, size_t users, double *out);

// # Safety
// `values` must hold `len` doubles and `out` must be writable.
enum SwidStatus swid_jain_index(const double *values, size_t len, double *out);

// Monte Carlo run with every terminal honest. Per-user empirical rates go to
// `rates` (may be null), aggregates to `summary`.
//
// # Safety
// `thresholds` must hold `len` doubles, `rates` `len` doubles or be null,
// and `summary` must be writable.
enum SwidStatus swid_simulate(const struct SwidScenario *scenario,
                              const double *thresholds,
                              size_t len,
                              uint64_t resource_units,
                              uint64_t batches,
                              uint64_t seed,
                              double *rates,
                              struct SwidSimSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWIDOPT_H */
