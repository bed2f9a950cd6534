/* Generated by cbindgen from src/lib.rs; do not edit. */

#ifndef MOMINEQ_H
#define MOMINEQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MiStatus {
  MI_STATUS_OK = 0,
  MI_STATUS_NULL_POINTER = 1,
  MI_STATUS_INVALID_ARGUMENT = 2,
  MI_STATUS_NOT_POSITIVE_DEFINITE = 3,
  MI_STATUS_INFEASIBLE = 4,
  MI_STATUS_NUMERICAL = 5,
  MI_STATUS_BUDGET_EXCEEDED = 6,
  MI_STATUS_PANIC = 7,
} MiStatus;

typedef enum MiVariant {
  MI_VARIANT_CC = 0,
  MI_VARIANT_RCC = 1,
} MiVariant;

// Opaque full-vector problem.
typedef struct MiFullProblem MiFullProblem;

// Opaque test outcome.
typedef struct MiOutcome MiOutcome;

// Opaque subvector problem.
typedef struct MiSubProblem MiSubProblem;

// Solver settings; fill with [`mi_settings_default`] and adjust.
typedef struct MiSettings {
  double tol_feas;
  double tol_active;
  double tol_rank;
  double tol_kkt;
  double tol_vertex_dedupe;
  double tol_zero_statistic;
  double ridge;
  double delta_ridge;
  uint64_t vertex_budget;
} MiSettings;

// Scalar part of a test outcome. `tau_hat` is NaN when the refinement was
// not computed and may be infinite.
typedef struct MiSummary {
  double statistic;
  size_t r_hat;
  double tau_hat;
  double beta_hat;
  double critical_value;
  bool reject;
  double kkt_residual;
} MiSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *mi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *mi_version(void);

// # Safety
// `out` must be a valid pointer to writable memory for one `MiSettings`.
enum MiStatus mi_settings_default(struct MiSettings *out);

// Quantile of the chi-squared distribution with `r` degrees of freedom;
// `r = 0` is the point mass at zero.
//
// # Safety
// `out` must be a valid pointer to one writable `double`.
enum MiStatus mi_chi2_quantile(uint32_t r, double p, double *out);

// Problem `A E[m] <= b` with `a` a row-major `k x d_m` matrix, `mean` of
// length `d_m` and `variance` the row-major `d_m x d_m` estimate of the
// variance of `√n m̄`.
//
// # Safety
// Every pointer must reference at least as many readable doubles as the
// dimensions imply, and `out` must be writable. Free the handle with
// [`mi_full_problem_free`].
enum MiStatus mi_full_problem_new(const double *mean,
                                  const double *variance,
                                  size_t d_m,
                                  size_t n,
                                  const double *a,
                                  const double *b,
                                  size_t k,
                                  double alpha,
                                  struct MiFullProblem **out);

// # Safety
// `problem` must be NULL or a handle from [`mi_full_problem_new`] that has
// not been freed.
void mi_full_problem_free(struct MiFullProblem *problem);

// Runs the test. `settings` may be NULL for the defaults.
//
// # Safety
// `problem` must be a live handle, `settings` NULL or valid, and `out`
// writable. Free the outcome with [`mi_outcome_free`].
enum MiStatus mi_full_problem_test(const struct MiFullProblem *problem,
                                   enum MiVariant variant,
                                   const struct MiSettings *settings,
                                   struct MiOutcome **out);

// Problem `B E[m|Z] <= C δ + d` for some `δ`: `b` is row-major `k x d_m`,
// `c` row-major `k x p`, `d` of length `k`.
//
// # Safety
// As for [`mi_full_problem_new`]. Free the handle with
// [`mi_sub_problem_free`].
enum MiStatus mi_sub_problem_new(const double *b,
                                 const double *c,
                                 const double *d,
                                 size_t k,
                                 size_t p,
                                 const double *mean,
                                 const double *variance,
                                 size_t d_m,
                                 size_t n,
                                 double alpha,
                                 struct MiSubProblem **out);

// # Safety
// `problem` must be NULL or a handle from [`mi_sub_problem_new`] that has
// not been freed.
void mi_sub_problem_free(struct MiSubProblem *problem);

// # Safety
// As for [`mi_full_problem_test`].
enum MiStatus mi_sub_problem_test(const struct MiSubProblem *problem,
                                  enum MiVariant variant,
                                  const struct MiSettings *settings,
                                  struct MiOutcome **out);

// # Safety
// `outcome` must be a live handle and `out` writable.
enum MiStatus mi_outcome_summary(const struct MiOutcome *outcome, struct MiSummary *out);

// Copies the restricted estimate into `buf`. `len` is the capacity of
// `buf`; the full length is stored in `written` even when `buf` is too
// small, in which case nothing is copied and `MI_STATUS_INVALID_ARGUMENT`
// is returned.
//
// # Safety
// `outcome` must be a live handle, `buf` must hold `len` doubles (it may
// be NULL when `len` is 0) and `written` must be writable.
enum MiStatus mi_outcome_restricted_estimate(const struct MiOutcome *outcome,
                                             double *buf,
                                             size_t len,
                                             size_t *written);

// The full outcome as JSON. Free the string with [`mi_string_free`].
//
// # Safety
// `outcome` must be a live handle and `out` writable.
enum MiStatus mi_outcome_to_json(const struct MiOutcome *outcome, char **out);

// # Safety
// `outcome` must be NULL or a handle that has not been freed.
void mi_outcome_free(struct MiOutcome *outcome);

// # Safety
// `s` must be NULL or a string returned by this library that has not been
// freed.
void mi_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOMINEQ_H */
