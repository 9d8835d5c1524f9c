#ifndef MICE_H
#define MICE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MiceCriterion {
  MICE_CRITERION_ALM = 0,
  MICE_CRITERION_ALC = 1,
  MICE_CRITERION_MI = 2,
  MICE_CRITERION_MICE = 3,
  MICE_CRITERION_RANDOM = 4,
} MiceCriterion;

typedef enum MiceFamily {
  MICE_FAMILY_SQUARED_EXPONENTIAL = 0,
  MICE_FAMILY_MATERN52 = 1,
} MiceFamily;

typedef enum MiceStatus {
  MICE_STATUS_OK = 0,
  MICE_STATUS_NULL_POINTER = 1,
  MICE_STATUS_INVALID_ARGUMENT = 2,
  MICE_STATUS_NUMERICAL = 3,
  MICE_STATUS_CALLBACK = 4,
  MICE_STATUS_PANIC = 5,
} MiceStatus;

// A fitted emulator.
typedef struct MiceGp MiceGp;

// Correlation function with lengthscales, process variance and nugget.
typedef struct MiceKernel MiceKernel;

// One of the built-in test functions on the scaled domain [0,1]^p.
typedef struct MiceObjective MiceObjective;

// Options for [`mice_run_sequential`].
typedef struct MiceSequentialOptions {
  enum MiceCriterion criterion;
  enum MiceFamily family;
  // Final design size.
  uintptr_t budget;
  // Initial maximin LHD size.
  uintptr_t initial;
  // Candidates per step; the discretization and reference set match it.
  uintptr_t n_cand;
  double nugget;
  double tau_s;
  // `dim` fixed lengthscales, or NULL to estimate them by maximum likelihood.
  const double *lengthscales;
  uint64_t seed;
} MiceSequentialOptions;

// Objective supplied by the caller. Writes f(x) to `out` and returns 0 on
// success; any other value aborts the run with `MICE_STATUS_CALLBACK`.
typedef int (*MiceObjectiveCallback)(const double *x, uintptr_t dim, void *user_data, double *out);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL if none. The pointer
// stays valid until the next failing call on this thread.
const char *mice_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *mice_version(void);

// Creates a kernel with `dim` lengthscales, unit process variance and the
// given nugget.
//
// # Safety
// `lengthscales` must point to `dim` doubles; `out` must be writable.
enum MiceStatus mice_kernel_new(enum MiceFamily family,
                                const double *lengthscales,
                                uintptr_t dim,
                                double nugget,
                                struct MiceKernel **out);

// # Safety
// `kernel` must come from `mice_kernel_new` or be NULL.
void mice_kernel_free(struct MiceKernel *kernel);

// Fits the emulator to `n` points of dimension `dim` stored row-major in
// `xs` with outputs `ys`. Outputs are standardized internally.
//
// # Safety
// `xs` must hold `n * dim` doubles, `ys` `n` doubles; `out` must be writable.
enum MiceStatus mice_gp_fit(const struct MiceKernel *kernel,
                            const double *xs,
                            uintptr_t n,
                            uintptr_t dim,
                            const double *ys,
                            struct MiceGp **out);

// Predictive mean (original output units) and variance (standardized
// units) at `x`. Either output pointer may be NULL.
//
// # Safety
// `x` must hold `dim` doubles.
enum MiceStatus mice_gp_predict(const struct MiceGp *gp,
                                const double *x,
                                uintptr_t dim,
                                double *mean,
                                double *variance);

// # Safety
// `gp` must come from `mice_gp_fit` or be NULL.
void mice_gp_free(struct MiceGp *gp);

// Looks up a built-in objective by name (`grf2d`, `branin`,
// `oscillatory4d`, `oscillatory8d`, `piston`).
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum MiceStatus mice_objective_new(const char *name, uint64_t seed, struct MiceObjective **out);

// Input dimension, or 0 for a NULL handle.
//
// # Safety
// `objective` must come from `mice_objective_new` or be NULL.
uintptr_t mice_objective_dim(const struct MiceObjective *objective);

// Evaluates the objective at a scaled point `u` in [0,1]^dim.
//
// # Safety
// `u` must hold `dim` doubles; `out` must be writable.
enum MiceStatus mice_objective_eval(const struct MiceObjective *objective,
                                    const double *u,
                                    uintptr_t dim,
                                    double *out);

// # Safety
// `objective` must come from `mice_objective_new` or be NULL.
void mice_objective_free(struct MiceObjective *objective);

// Default options: MICE with 150 candidates, Matérn 5/2, estimated
// lengthscales, an initial design of 10 and a budget of 50.
struct MiceSequentialOptions mice_sequential_options_default(void);

// Runs a sequential design on [0,1]^dim against a caller-supplied objective.
// On success `points` holds `budget * dim` doubles row-major and `values`
// the `budget` outputs, in selection order. `callback` must be safe to call
// from any thread.
//
// # Safety
// `points` and `values` must be writable for the sizes above; `lengthscales`
// in `options` must be NULL or hold `dim` doubles.
enum MiceStatus mice_run_sequential(MiceObjectiveCallback callback,
                                    void *user_data,
                                    uintptr_t dim,
                                    const struct MiceSequentialOptions *options,
                                    double *points,
                                    double *values);

// Root-mean-square error between `n` predictions and truths.
//
// # Safety
// Both arrays must hold `n` doubles; `out` must be writable.
enum MiceStatus mice_rmspe(const double *predictions,
                           const double *truths,
                           uintptr_t n,
                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MICE_H */
