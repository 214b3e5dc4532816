#ifndef GGN_H
#define GGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by all functions.
 */
typedef enum GgnStatus {
  GGN_STATUS_OK = 0,
  GGN_STATUS_NULL_POINTER = 1,
  GGN_STATUS_INVALID_ARGUMENT = 2,
  GGN_STATUS_SOLVER_FAILURE = 3,
  GGN_STATUS_PANIC = 4,
} GgnStatus;

/**
 * How a run ended.
 */
typedef enum GgnTermination {
  GGN_TERMINATION_DISCREPANCY = 0,
  GGN_TERMINATION_ITERATION_LIMIT = 1,
  GGN_TERMINATION_BETA_FAILURE = 2,
  GGN_TERMINATION_FORWARD_FAILURE = 3,
} GgnTermination;

/**
 * Simulated noisy observations together with the exact solution.
 */
typedef struct GgnData GgnData;

/**
 * Outcome of one solver run.
 */
typedef struct GgnReport GgnReport;

/**
 * Summary numbers of a finished run.
 */
typedef struct GgnSummary {
  size_t iterations;
  size_t nodes;
  double beta;
  double relative_error;
  double final_discrepancy;
  double threshold;
  double wall_time;
  enum GgnTermination termination;
} GgnSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL terminated,
 * truncated to `len` bytes). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t ggn_last_error(char *buf, size_t len);

/**
 * Simulates data. `case` is one of 'a', 'b', 'c'; `l2_obs` selects
 * distributed observation instead of the 9 x 9 point lattice.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum GgnStatus ggn_simulate(double zeta,
                            double noise,
                            char case_,
                            int32_t l2_obs,
                            uint8_t fine_levels,
                            uint64_t seed,
                            struct GgnData **out);

/**
 * Noise norm of the data, or NaN for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle from [`ggn_simulate`].
 */
double ggn_data_delta(const struct GgnData *data);

/**
 * # Safety
 * `data` must be null or a live handle; it is invalid afterwards.
 */
void ggn_data_free(struct GgnData *data);

/**
 * Runs the Gauss-Newton solver with default settings.
 *
 * # Safety
 * `data` must be a live handle and `out` valid writable storage.
 */
enum GgnStatus ggn_run_ggn(const struct GgnData *data, struct GgnReport **out);

/**
 * Runs the nonlinear Tikhonov reference solver with default settings.
 *
 * # Safety
 * `data` must be a live handle and `out` valid writable storage.
 */
enum GgnStatus ggn_run_nt(const struct GgnData *data, struct GgnReport **out);

/**
 * # Safety
 * `report` must be a live handle and `out` valid writable storage.
 */
enum GgnStatus ggn_report_summary(const struct GgnReport *report, struct GgnSummary *out);

/**
 * # Safety
 * `report` must be null or a live handle; it is invalid afterwards.
 */
void ggn_report_free(struct GgnReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GGN_H */
