#ifndef HOMODYNE_H
#define HOMODYNE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  HD_STATUS_OK = 0,
  HD_STATUS_INVALID_ARGUMENT = 1,
  HD_STATUS_NUMERICAL = 2,
  HD_STATUS_PARSE = 3,
  HD_STATUS_IO = 4,
  HD_STATUS_NULL_POINTER = 5,
  HD_STATUS_PANIC = 6,
} HdStatus;

typedef enum {
  HD_STATE_KIND_VACUUM = 0,
  HD_STATE_KIND_SINGLE_PHOTON = 1,
  HD_STATE_KIND_COHERENT = 2,
  HD_STATE_KIND_THERMAL = 3,
  HD_STATE_KIND_CAT = 4,
} HdStateKind;

typedef struct HdResult HdResult;

typedef struct HdTable HdTable;

/**
 * Estimator settings. `n_override == 0` selects `N` from the sample size.
 */
typedef struct {
  double eta;
  double epsilon;
  double r0;
  double b0;
  size_t n_override;
  double kappa;
  size_t grid;
} HdEstimatorConfig;

/**
 * Catalog state; `q0` is read for coherent and cat, `beta` for thermal.
 */
typedef struct {
  HdStateKind kind;
  double q0;
  double beta;
} HdState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. Valid
 * until the next failing call on the same thread.
 */
const char *hd_last_error(void);

HdEstimatorConfig hd_estimator_config_default(void);

/**
 * Row-major `dim x dim` truncation of the state's density matrix.
 */
HdStatus hd_density_matrix(const HdState *state, size_t dim, double *re_out, double *im_out);

/**
 * Fill `y_out[0..n]` and `phi_out[0..n]` with simulated records.
 */
HdStatus hd_simulate(const HdState *state,
                     double eta,
                     size_t n,
                     uint64_t seed,
                     double *y_out,
                     double *phi_out);

/**
 * Build the pattern-function table for `j + k < n` at efficiency `eta` on
 * a grid of `q` points (0 selects the default).
 */
HdStatus hd_table_build(size_t n, double eta, size_t q, HdTable **out);

void hd_table_free(HdTable *table);

/**
 * Spline value of `f_{j,k}` at `x`; zero outside the grid.
 */
HdStatus hd_table_eval(const HdTable *table, size_t j, size_t k, double x, double *out);

HdStatus hd_table_sup_norm(const HdTable *table, size_t j, size_t k, double *out);

/**
 * Estimate from `n` records given as parallel arrays.
 */
HdStatus hd_estimate(const double *y,
                     const double *phi,
                     size_t n,
                     const HdEstimatorConfig *config,
                     HdResult **out);

void hd_result_free(HdResult *result);

/**
 * `N` used by the estimate; 0 for a null handle.
 */
size_t hd_result_n_used(const HdResult *result);

/**
 * Entry `(j, k)` of the thresholded (`thresholded != 0`) or raw estimate.
 */
HdStatus hd_result_get(const HdResult *result,
                       size_t j,
                       size_t k,
                       int32_t thresholded,
                       double *re,
                       double *im);

/**
 * Threshold `t_{j,k}`; zero outside the index set.
 */
HdStatus hd_result_threshold(const HdResult *result, size_t j, size_t k, double *out);

/**
 * JSON serialization of the result; release with [`hd_string_free`].
 */
HdStatus hd_result_to_json(const HdResult *result, char **out);

void hd_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMODYNE_H */
