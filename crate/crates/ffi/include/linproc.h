#ifndef LINPROC_H
#define LINPROC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LinprocFamily {
  LINPROC_FAMILY_STANDARD_NORMAL = 0,
  // `param1` = shape.
  LINPROC_FAMILY_CENTERED_GAMMA = 1,
  // `param1` = scale.
  LINPROC_FAMILY_CENTERED_LAPLACE = 2,
  // `param1` = half width.
  LINPROC_FAMILY_CENTERED_UNIFORM = 3,
  // `param1` = p, `param2` = upper value.
  LINPROC_FAMILY_TWO_POINT = 4,
} LinprocFamily;

typedef enum LinprocModel {
  LINPROC_MODEL_AR1 = 0,
  LINPROC_MODEL_MA1 = 1,
  LINPROC_MODEL_ARMA11 = 2,
} LinprocModel;

// Status codes returned by every fallible function.
typedef enum LinprocStatus {
  LINPROC_STATUS_OK = 0,
  LINPROC_STATUS_NULL_POINTER = 1,
  LINPROC_STATUS_INVALID_ARGUMENT = 2,
  // Parameter outside the model domain or a boundary problem.
  LINPROC_STATUS_NUMERICAL = 3,
  // Output buffer too small; the required length is reported.
  LINPROC_STATUS_BUFFER_TOO_SMALL = 4,
  LINPROC_STATUS_UNAVAILABLE = 5,
  // A Rust panic was caught at the boundary.
  LINPROC_STATUS_INTERNAL = 6,
} LinprocStatus;

typedef enum LinprocTargetKind {
  LINPROC_TARGET_KIND_SQUARE = 0,
  LINPROC_TARGET_KIND_IDENTITY = 1,
  LINPROC_TARGET_KIND_ABS = 2,
  // `cos(param x)`.
  LINPROC_TARGET_KIND_COS_T = 3,
  // Constant `param`.
  LINPROC_TARGET_KIND_CONSTANT = 4,
} LinprocTargetKind;

typedef enum LinprocThetaMethod {
  LINPROC_THETA_METHOD_LEAST_SQUARES = 0,
  LINPROC_THETA_METHOD_MOMENT_MATCH = 1,
  LINPROC_THETA_METHOD_ONE_STEP = 2,
  LINPROC_THETA_METHOD_SCORE_ROOT = 3,
  LINPROC_THETA_METHOD_KNOWN = 4,
} LinprocThetaMethod;

typedef enum LinprocVarianceKind {
  LINPROC_VARIANCE_KIND_EMPIRICAL = 0,
  LINPROC_VARIANCE_KIND_IMPROVED = 1,
  LINPROC_VARIANCE_KIND_USTAT_LS = 2,
  LINPROC_VARIANCE_KIND_EFFICIENT = 3,
} LinprocVarianceKind;

// Opaque observed path `Y_{-r}, ..., Y_n`.
typedef struct LinprocPath LinprocPath;

// Opaque estimation report.
typedef struct LinprocReport LinprocReport;

typedef struct LinprocInnovations {
  enum LinprocFamily family;
  double param1;
  double param2;
} LinprocInnovations;

typedef struct LinprocTarget {
  enum LinprocTargetKind kind;
  double param;
} LinprocTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL terminated,
// truncated to `len`) and returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t linproc_last_error_message(char *buf, size_t len);

// Simulates a stationary path with `r` pre-observations and `n` observations.
//
// # Safety
// `theta` must point to `theta_len` doubles; `out` must be a valid pointer.
enum LinprocStatus linproc_path_simulate(enum LinprocModel model,
                                         const double *theta,
                                         size_t theta_len,
                                         struct LinprocInnovations innovations,
                                         size_t n,
                                         size_t r,
                                         uint64_t seed,
                                         struct LinprocPath **out);

// Builds a path from `r + 1` pre-observations `Y_{-r}..Y_0` and `n` observations.
//
// # Safety
// The arrays must hold the stated number of doubles; `out` must be valid.
enum LinprocStatus linproc_path_from_values(const double *pre,
                                            size_t pre_len,
                                            const double *obs,
                                            size_t obs_len,
                                            struct LinprocPath **out);

// Reports `n` and `r` of a path.
//
// # Safety
// `path` must come from this library; `n` and `r` must be valid pointers.
enum LinprocStatus linproc_path_dims(const struct LinprocPath *path, size_t *n, size_t *r);

// Copies `Y_{-r}, ..., Y_n` into `buf`; `*needed` receives `r + 1 + n`.
//
// # Safety
// `buf` must hold `len` doubles (or be null with `len == 0`).
enum LinprocStatus linproc_path_values(const struct LinprocPath *path,
                                       double *buf,
                                       size_t len,
                                       size_t *needed);

// Releases a path. Null is ignored.
//
// # Safety
// `path` must be null or a handle not yet freed.
void linproc_path_free(struct LinprocPath *path);

// Complete U-statistic over all injective `m`-tuples of `x`.
//
// # Safety
// `x` holds `n` doubles, `beta` holds `m`; `out` must be valid.
enum LinprocStatus linproc_ustat_exact(const double *x,
                                       size_t n,
                                       const double *beta,
                                       size_t m,
                                       struct LinprocTarget target,
                                       uint64_t enumeration_cap,
                                       double *out);

// Incomplete U-statistic from `draws` sampled tuples; `se` may be null.
//
// # Safety
// `x` holds `n` doubles, `beta` holds `m`; `out` must be valid.
enum LinprocStatus linproc_ustat_incomplete(const double *x,
                                            size_t n,
                                            const double *beta,
                                            size_t m,
                                            struct LinprocTarget target,
                                            uint64_t draws,
                                            uint64_t seed,
                                            size_t partitions,
                                            double *out,
                                            double *se);

// Substitution estimate of `E[h(Y_0)]` from a path. `m == 0` and
// `draws == 0` select the automatic order and `B = 200 n m`.
//
// # Safety
// `path` must come from this library; `out` must be valid.
enum LinprocStatus linproc_estimate(const struct LinprocPath *path,
                                    enum LinprocModel model,
                                    enum LinprocThetaMethod method,
                                    struct LinprocInnovations innovations,
                                    struct LinprocTarget target,
                                    size_t m,
                                    uint64_t draws,
                                    uint64_t seed,
                                    struct LinprocReport **out);

// Point estimate, plug-in standard error and `a_star_hat` of a report.
//
// # Safety
// `report` must come from this library; the out pointers may be null.
enum LinprocStatus linproc_report_values(const struct LinprocReport *report,
                                         double *kappa_hat,
                                         double *se_plugin,
                                         double *a_star_hat);

// Writes the report as NUL-terminated JSON; `*needed` receives the length
// including the NUL.
//
// # Safety
// `buf` must hold `len` bytes (or be null with `len == 0`).
enum LinprocStatus linproc_report_json(const struct LinprocReport *report,
                                       char *buf,
                                       size_t len,
                                       size_t *needed);

// Releases a report. Null is ignored.
//
// # Safety
// `report` must be null or a handle not yet freed.
void linproc_report_free(struct LinprocReport *report);

// Closed-form asymptotic variance for AR(1) with `h(x) = x^2`. Pass a
// negative `fisher_info` when it is unavailable.
//
// # Safety
// `out` must be a valid pointer.
enum LinprocStatus linproc_asymptotic_variance(enum LinprocVarianceKind kind,
                                               double theta0,
                                               double mu2,
                                               double mu3,
                                               double mu4,
                                               double fisher_info,
                                               double *out);

// Runs the tiny-instance oracle suite; returns `Ok` only if every case passed.
//
// # Safety
// `passed` and `total` may be null.
enum LinprocStatus linproc_selftest(uint64_t seed, size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINPROC_H */
