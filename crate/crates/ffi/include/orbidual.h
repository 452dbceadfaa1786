#ifndef ORBIDUAL_H
#define ORBIDUAL_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum OrbStatus {
  ORB_STATUS_OK = 0,
  ORB_STATUS_NULL_POINTER = 1,
  ORB_STATUS_INVALID_ARGUMENT = 2,
  /*
   Config text rejected: unknown scenario, bad params or schema version.
   */
  ORB_STATUS_CONFIG = 3,
  /*
   A computation failed (singular block, blow-up, factorization breakdown).
   */
  ORB_STATUS_NUMERICAL = 4,
  ORB_STATUS_BUFFER_TOO_SMALL = 5,
  ORB_STATUS_PANIC = 6,
} OrbStatus;

/*
 A double Lie group `N x N*`.
 */
typedef struct OrbDouble OrbDouble;

/*
 Outcome of a scenario run.
 */
typedef struct OrbReport OrbReport;

/*
 Uniformly sampled trajectory of coordinate vectors.
 */
typedef struct OrbTrajectory OrbTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *orb_version(void);

/*
 Copies the calling thread's last error message (empty after a success).

 # Safety
 `buf` must hold `cap` writable bytes; `needed` may be null.
 */
enum OrbStatus orb_last_error(char *buf, size_t cap, size_t *needed);

/*
 The Lu-Weinstein double `AN(2) x SU(2)` inside `SL(2, C)`.

 # Safety
 `out` must be a valid pointer; the handle is released with [`orb_double_free`].
 */
enum OrbStatus orb_double_lu_weinstein(struct OrbDouble **out);

/*
 The abelian double of `R^n`, `n >= 1`.

 # Safety
 `out` must be a valid pointer.
 */
enum OrbStatus orb_double_abelian(size_t n, struct OrbDouble **out);

/*
 # Safety
 `d` must come from an `orb_double_*` constructor and not be used afterwards. Null is ignored.
 */
void orb_double_free(struct OrbDouble *d);

/*
 Dimension `n` of each factor.

 # Safety
 `d` must be a live handle and `n` a valid pointer.
 */
enum OrbStatus orb_double_factor_dim(const struct OrbDouble *d, size_t *n);

/*
 Evaluates the condition `Pi_{n*}[X, alpha] = 0` for every `X` in `n`, with
 `alpha` given by `len = n` coordinates in `n*`. `holds` is 1 or 0 and
 `residual` the largest violation.

 # Safety
 `alpha` must hold `len` doubles; `holds` and `residual` must be valid pointers.
 */
enum OrbStatus orb_double_alpha_condition(const struct OrbDouble *d,
                                          const double *alpha,
                                          size_t len,
                                          int *holds,
                                          double *residual);

/*
 Runs a scenario from config JSON (same schema as the command line,
 `spec_version` 1). Relative `include` paths resolve against `base_dir`,
 which may be null for the working directory. No artifacts are written.

 # Safety
 `config_json` must be a NUL-terminated string, `base_dir` null or one, and
 `out` a valid pointer. Release the report with [`orb_report_free`].
 */
enum OrbStatus orb_scenario_run(const char *config_json,
                                const char *base_dir,
                                struct OrbReport **out);

/*
 # Safety
 `r` must come from [`orb_scenario_run`] and not be used afterwards. Null is ignored.
 */
void orb_report_free(struct OrbReport *r);

/*
 1 when every metric lies within its bound.

 # Safety
 `r` must be a live handle and `pass` a valid pointer.
 */
enum OrbStatus orb_report_pass(const struct OrbReport *r, int *pass);

/*
 Value of a named metric; `ORB_STATUS_INVALID_ARGUMENT` when absent.

 # Safety
 `r` must be a live handle, `name` a NUL-terminated string and `value` a valid pointer.
 */
enum OrbStatus orb_report_metric(const struct OrbReport *r, const char *name, double *value);

/*
 The report as pretty JSON.

 # Safety
 `r` must be a live handle; `buf` must hold `cap` writable bytes; `needed` may be null.
 */
enum OrbStatus orb_report_json(const struct OrbReport *r, char *buf, size_t cap, size_t *needed);

/*
 Lie-Poisson flow of the free rigid body on `se(2)*` with principal moments
 `i1 < i2 < i3`, from `beta0` (3 doubles) over `[0, t_end]` with step `dt`.

 # Safety
 `beta0` must hold 3 doubles and `out` be a valid pointer. Release with [`orb_trajectory_free`].
 */
enum OrbStatus orb_rigid_body_flow(double i1,
                                   double i2,
                                   double i3,
                                   const double *beta0,
                                   double t_end,
                                   double dt,
                                   struct OrbTrajectory **out);

/*
 # Safety
 `t` must come from a trajectory constructor and not be used afterwards. Null is ignored.
 */
void orb_trajectory_free(struct OrbTrajectory *t);

/*
 Number of samples and coordinates per sample.

 # Safety
 `t` must be a live handle; `len` and `dim` valid pointers.
 */
enum OrbStatus orb_trajectory_shape(const struct OrbTrajectory *t, size_t *len, size_t *dim);

/*
 Time and coordinates of sample `i`; `state` must hold `dim` doubles.

 # Safety
 `t` must be a live handle, `time` a valid pointer and `state` hold `cap` doubles.
 */
enum OrbStatus orb_trajectory_sample(const struct OrbTrajectory *t,
                                     size_t i,
                                     double *time,
                                     double *state,
                                     size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBIDUAL_H */
