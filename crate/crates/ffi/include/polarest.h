#ifndef POLAREST_H
#define POLAREST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PolarestStatus {
  POLAREST_STATUS_OK = 0,
  POLAREST_STATUS_NULL_POINTER = 1,
  POLAREST_STATUS_INVALID_ARGUMENT = 2,
  POLAREST_STATUS_DOMAIN = 3,
  POLAREST_STATUS_SOLVER = 4,
  POLAREST_STATUS_IO = 5,
  POLAREST_STATUS_PANIC = 6,
} PolarestStatus;

typedef enum PolarestAlgorithm {
  POLAREST_ALGORITHM_BOMP = 0,
  POLAREST_ALGORITHM_PAIBOMP = 1,
  POLAREST_ALGORITHM_POIBOMP = 2,
  POLAREST_ALGORITHM_CCBP = 3,
  POLAREST_ALGORITHM_PAIBOMP_CCBP = 4,
  POLAREST_ALGORITHM_TDE_MUSIC = 5,
} PolarestAlgorithm;

// Time-delay dictionary with its arc frames and arc error.
typedef struct PolarestModel PolarestModel;

// Random demodulator.
typedef struct PolarestOperator PolarestOperator;

// Estimator settings. Initialise with [`polarest_options_default`].
typedef struct PolarestOptions {
  enum PolarestAlgorithm algorithm;
  // Number of pulses to recover.
  uintptr_t k;
  // Band exclusion level in [0, 1].
  double eta;
  // CCBP sparsity weight.
  double lambda;
  // Per-measurement noise variance.
  double sigma_sq;
  // Grid neighbors added around greedy atoms before CCBP refinement.
  uintptr_t xi;
} PolarestOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread, or NULL.
//
// The pointer stays valid until the next call into this library on the same thread.
const char *polarest_last_error(void);

// Builds a time-delay model on `n` samples at rate `fs` Hz with the reference
// chirp and redundancy `redundancy`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PolarestStatus polarest_model_new(uintptr_t n,
                                       double fs,
                                       uintptr_t redundancy,
                                       struct PolarestModel **out);

// # Safety
// `model` must be NULL or a handle from [`polarest_model_new`] not yet freed.
void polarest_model_free(struct PolarestModel *model);

// Arc approximation error of the model's dictionary.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum PolarestStatus polarest_model_zeta(const struct PolarestModel *model, double *out);

// Arc approximation error of the time-delay dictionary with `n` samples at
// the reference rate and redundancy `c`, sampled at `samples` offsets.
//
// # Safety
// `out` must be writable.
enum PolarestStatus polarest_zeta(uintptr_t n, uintptr_t c, uintptr_t samples, double *out);

// Builds a random demodulator with `round(kappa * n)` rows from `seed`.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum PolarestStatus polarest_operator_new(uintptr_t n,
                                          double kappa,
                                          uint64_t seed,
                                          struct PolarestOperator **out);

// # Safety
// `op` must be NULL or a handle from [`polarest_operator_new`] not yet freed.
void polarest_operator_free(struct PolarestOperator *op);

// Number of measurements produced by `op`, or 0 if `op` is NULL.
//
// # Safety
// `op` must be NULL or a live handle.
uintptr_t polarest_operator_rows(const struct PolarestOperator *op);

// Applies `op` to the signal `f` (`n` complex values) and writes `m` measurements to `y`.
//
// # Safety
// `f` must hold `2 * n` doubles and `y` room for `2 * m`.
enum PolarestStatus polarest_operator_apply(const struct PolarestOperator *op,
                                            const double *f,
                                            uintptr_t n,
                                            double *y,
                                            uintptr_t m);

struct PolarestOptions polarest_options_default(enum PolarestAlgorithm algorithm, uintptr_t k);

// Estimates delays and amplitudes from `m` measurements `y`.
//
// Writes up to `capacity` delays (seconds) to `delays` and interleaved
// amplitudes to `amplitudes`, and the number written to `count`.
//
// # Safety
// `y` must hold `2 * m` doubles, `delays` room for `capacity` doubles,
// `amplitudes` room for `2 * capacity`, and `count` must be writable.
enum PolarestStatus polarest_estimate(const struct PolarestModel *model,
                                      const struct PolarestOperator *op,
                                      const struct PolarestOptions *options,
                                      const double *y,
                                      uintptr_t m,
                                      double *delays,
                                      double *amplitudes,
                                      uintptr_t capacity,
                                      uintptr_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POLAREST_H */
