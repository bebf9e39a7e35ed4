#ifndef FILELIFE_H
#define FILELIFE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Which chain the simulator runs.
 */
typedef enum FlSimModel {
  /**
   * Full (centers, copies) chain started from the stationary network.
   */
  FL_SIM_MODEL_PHYSICAL2D = 0,
  /**
   * Copy-count chain with corrected replication rates, started from one copy.
   */
  FL_SIM_MODEL_CORRECTED1D = 1,
} FlSimModel;

/**
 * Result codes returned by every fallible function.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  FL_STATUS_NULL_POINTER = 1,
  FL_STATUS_INVALID_ARGUMENT = 2,
  FL_STATUS_SINGULAR = 3,
  FL_STATUS_NO_CONVERGENCE = 4,
  FL_STATUS_BUFFER_TOO_SMALL = 5,
  FL_STATUS_UNAVAILABLE = 6,
  FL_STATUS_INTERNAL = 7,
} FlStatus;

/**
 * Validated model parameters.
 */
typedef struct FlParams FlParams;

/**
 * Result of one lifetime evaluation.
 */
typedef struct FlReport FlReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *fl_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/**
 * Validates `(lambda, beta, mu, d)` and stores a new handle in `*out`.
 *
 * # Safety
 * `out` must be null or valid for writing one pointer.
 */
enum FlStatus fl_params_new(double lambda, double beta, double mu, size_t d, struct FlParams **out);

/**
 * # Safety
 * `params` must be null or a handle from [`fl_params_new`] not yet freed.
 */
void fl_params_free(struct FlParams *params);

/**
 * Mean lifetime of the one-dimensional phase-type approximation.
 *
 * # Safety
 * `params` must be a live handle; `out` must be valid for writing one pointer.
 */
enum FlStatus fl_approx(const struct FlParams *params, struct FlReport **out);

/**
 * Mean lifetime of the two-dimensional chain, refining the truncation level
 * until the relative change falls below `tol`.
 *
 * # Safety
 * `params` must be a live handle; `out` must be valid for writing one pointer.
 */
enum FlStatus fl_qbd(const struct FlParams *params, double tol, struct FlReport **out);

/**
 * Monte Carlo estimate with `samples` independent replications.
 *
 * # Safety
 * `params` must be a live handle; `out` must be valid for writing one pointer.
 */
enum FlStatus fl_simulate(const struct FlParams *params,
                          enum FlSimModel model,
                          uint64_t samples,
                          uint64_t seed,
                          struct FlReport **out);

/**
 * # Safety
 * `report` must be null or a handle returned by this library not yet freed.
 */
void fl_report_free(struct FlReport *report);

/**
 * Mean lifetime, or NaN for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
double fl_report_mean(const struct FlReport *report);

/**
 * Number of raw moments stored in the report.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t fl_report_moment_count(const struct FlReport *report);

/**
 * Raw moment `E[X^order]`, `order >= 1`.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for writing a double.
 */
enum FlStatus fl_report_moment(const struct FlReport *report, size_t order, double *out);

/**
 * Standard error of the mean; zero for analytic methods.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for writing a double.
 */
enum FlStatus fl_report_std_error(const struct FlReport *report, double *out);

/**
 * Truncation level behind the result: the final level for the QBD method,
 * the stationary-law cutoff for the approximation. Simulations have none.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for writing a `size_t`.
 */
enum FlStatus fl_report_truncation_level(const struct FlReport *report, size_t *out);

/**
 * Stationary probabilities of the number of live centers, truncated once
 * the remaining tail is below `tol`.
 *
 * `*out_len` always receives the number of probabilities. If `capacity` is
 * smaller, nothing is copied and [`FlStatus::BufferTooSmall`] is returned,
 * so a first call with `buf = NULL, capacity = 0` queries the size.
 *
 * # Safety
 * `buf` must be valid for `capacity` doubles (or null with zero capacity);
 * `out_len` must be valid for writing a `size_t`.
 */
enum FlStatus fl_stationary(double lambda,
                            double beta,
                            double tol,
                            double *buf,
                            size_t capacity,
                            size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FILELIFE_H */
