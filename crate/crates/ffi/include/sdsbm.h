#ifndef SDSBM_H
#define SDSBM_H

/* Generated by cbindgen from crates/ffi. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum SdsbmStatus {
  SDSBM_STATUS_OK = 0,
  SDSBM_STATUS_VALIDATION = 1,
  SDSBM_STATUS_NUMERICAL = 2,
  SDSBM_STATUS_PARSE = 3,
  SDSBM_STATUS_IO = 4,
  SDSBM_STATUS_NULL_POINTER = 5,
  SDSBM_STATUS_OUT_OF_RANGE = 6,
  SDSBM_STATUS_PANIC = 7,
} SdsbmStatus;

/*
 Opaque EM fit of one block.
 */
typedef struct SdsbmFit SdsbmFit;

/*
 Opaque generated or loaded dynamic network.
 */
typedef struct SdsbmNetwork SdsbmNetwork;

/*
 Generator settings. Fill with `sdsbm_generate_options_default` first.
 */
typedef struct SdsbmGenerateOptions {
  uint32_t types;
  /*
   Possible edges per block.
   */
  uint64_t block_n;
  uint32_t period;
  double bias;
  /*
   One zero-sum period of `period` offsets, or NULL for the default
   (the rounded 8-step sine when `period == 8`, otherwise an amplitude-0.3 sine).
   */
  const double *period_offsets;
  double q_m;
  double q_s;
  double r;
  uint64_t steps;
  uint64_t seed;
  /*
   Non-zero: counts are `round(n * E_t)` instead of binomial draws.
   */
  uint8_t expected_counts;
} SdsbmGenerateOptions;

/*
 EM settings. Fill with `sdsbm_fit_options_default` first.
 */
typedef struct SdsbmFitOptions {
  uint32_t period;
  double init_q_m;
  double init_q_s;
  double init_r;
  double init_cov_scale;
  /*
   Non-zero: all-ones initial mean instead of the first-period density.
   */
  uint8_t literal_init;
  uint32_t max_iters;
  double loglik_rel_tol;
  double r_lo;
  double r_hi;
} SdsbmFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or NULL if none.
 The pointer stays valid until the next failing call on the same thread.
 */
const char *sdsbm_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *sdsbm_version(void);

/*
 Measurement variance `n E (1 - E) + n^2 r`.
 */
double sdsbm_obs_variance(uint64_t n, double e, double r);

/*
 Fills `out` with the synthetic-experiment defaults: 3 types, 1000 possible
 edges per block, period 8, bias 0.5, `q_m = q_s = 1e-8`, `r = 5.5e-3`, 80 steps.

 # Safety
 `out` must be NULL or point to writable memory for one `SdsbmGenerateOptions`.
 */
enum SdsbmStatus sdsbm_generate_options_default(struct SdsbmGenerateOptions *out);

/*
 Generates a network. On success `*out` receives a handle to free with
 `sdsbm_network_free`.

 # Safety
 `opts` must point to a valid options struct whose `period_offsets` is NULL
 or points to `period` readable doubles; `out` must be writable.
 */
enum SdsbmStatus sdsbm_network_generate(const struct SdsbmGenerateOptions *opts,
                                        struct SdsbmNetwork **out);

/*
 Reads a network JSON file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SdsbmStatus sdsbm_network_read(const char *path, struct SdsbmNetwork **out);

/*
 Writes a network JSON file.

 # Safety
 `net` must be a live handle; `path` a NUL-terminated string.
 */
enum SdsbmStatus sdsbm_network_write(const struct SdsbmNetwork *net, const char *path);

/*
 Releases a network handle. NULL is ignored.

 # Safety
 `net` must be NULL or a handle not yet freed.
 */
void sdsbm_network_free(struct SdsbmNetwork *net);

/*
 Number of blocks, or 0 for NULL.

 # Safety
 `net` must be NULL or a live handle.
 */
uintptr_t sdsbm_network_block_count(const struct SdsbmNetwork *net);

/*
 Number of time steps T, or 0 for NULL.

 # Safety
 `net` must be NULL or a live handle.
 */
uintptr_t sdsbm_network_steps(const struct SdsbmNetwork *net);

/*
 Period d, or 0 for NULL.

 # Safety
 `net` must be NULL or a live handle.
 */
uintptr_t sdsbm_network_period(const struct SdsbmNetwork *net);

/*
 Type pair and possible-edge count of block `index`.

 # Safety
 `net` must be a live handle; output pointers must be writable.
 */
enum SdsbmStatus sdsbm_network_block_info(const struct SdsbmNetwork *net,
                                          uintptr_t index,
                                          uint32_t *type_a,
                                          uint32_t *type_b,
                                          uint64_t *n);

/*
 Copies the T counts of block `index` into `buf` (capacity `len`).

 # Safety
 `net` must be a live handle; `buf` must hold `len` writable values.
 */
enum SdsbmStatus sdsbm_network_counts(const struct SdsbmNetwork *net,
                                      uintptr_t index,
                                      uint64_t *buf,
                                      uintptr_t len);

/*
 Fills `out` with the EM defaults for period `period`.

 # Safety
 `out` must be NULL or writable.
 */
enum SdsbmStatus sdsbm_fit_options_default(uint32_t period, struct SdsbmFitOptions *out);

/*
 Fits one count series of `len` values with `n` possible edges.

 # Safety
 `counts` must point to `len` readable values; `opts` to a valid struct;
 `out` must be writable.
 */
enum SdsbmStatus sdsbm_fit_counts(const uint64_t *counts,
                                  uintptr_t len,
                                  uint64_t n,
                                  const struct SdsbmFitOptions *opts,
                                  struct SdsbmFit **out);

/*
 Fits block `index` of a network.

 # Safety
 `net` must be a live handle; `opts` valid; `out` writable.
 */
enum SdsbmStatus sdsbm_fit_network_block(const struct SdsbmNetwork *net,
                                         uintptr_t index,
                                         const struct SdsbmFitOptions *opts,
                                         struct SdsbmFit **out);

/*
 Releases a fit handle. NULL is ignored.

 # Safety
 `fit` must be NULL or a handle not yet freed.
 */
void sdsbm_fit_free(struct SdsbmFit *fit);

/*
 Learned variances of the final EM iteration.

 # Safety
 `fit` must be a live handle; output pointers writable.
 */
enum SdsbmStatus sdsbm_fit_params(const struct SdsbmFit *fit, double *q_m, double *q_s, double *r);

/*
 Number of EM iterations (E-steps) run, or 0 for NULL.

 # Safety
 `fit` must be NULL or a live handle.
 */
uintptr_t sdsbm_fit_iterations(const struct SdsbmFit *fit);

/*
 1 when EM met its tolerance, 0 otherwise (or for NULL).

 # Safety
 `fit` must be NULL or a live handle.
 */
uint8_t sdsbm_fit_converged(const struct SdsbmFit *fit);

/*
 Number of time steps in the fit, or 0 for NULL.

 # Safety
 `fit` must be NULL or a live handle.
 */
uintptr_t sdsbm_fit_steps(const struct SdsbmFit *fit);

/*
 Copies the observed-data log-likelihood of each iteration into `buf`.

 # Safety
 `fit` must be a live handle; `buf` must hold `len` writable doubles.
 */
enum SdsbmStatus sdsbm_fit_loglik_trace(const struct SdsbmFit *fit, double *buf, uintptr_t len);

/*
 Copies the smoothed state means, row-major `T x d`, into `buf`.

 # Safety
 `fit` must be a live handle; `buf` must hold `len` writable doubles.
 */
enum SdsbmStatus sdsbm_fit_smoothed_means(const struct SdsbmFit *fit, double *buf, uintptr_t len);

/*
 Copies the predicted densities `Ê_t` of the final filter pass into `buf`.

 # Safety
 `fit` must be a live handle; `buf` must hold `len` writable doubles.
 */
enum SdsbmStatus sdsbm_fit_density_estimates(const struct SdsbmFit *fit,
                                             double *buf,
                                             uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDSBM_H */
