#ifndef CVAR_GAMES_H
#define CVAR_GAMES_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CvgStatus {
  CVG_STATUS_OK = 0,
  CVG_STATUS_NULL_POINTER = 1,
  CVG_STATUS_INVALID_ARGUMENT = 2,
  CVG_STATUS_VALIDATION_FAILED = 3,
  CVG_STATUS_CONTRACT_VIOLATION = 4,
  CVG_STATUS_IO = 5,
  CVG_STATUS_BUFFER_TOO_SMALL = 6,
  CVG_STATUS_PANIC = 7,
} CvgStatus;

/**
 * Opaque, validated experiment configuration.
 */
typedef struct CvgConfig CvgConfig;

/**
 * Opaque cost histogram.
 */
typedef struct CvgDistribution CvgDistribution;

/**
 * Opaque result of a finished run.
 */
typedef struct CvgResult CvgResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *cvg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cvg_version(void);

/**
 * `n_t = ceil(b U^2 (T - t + 1)^a)` for `1 <= t <= T`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `usize`.
 */
enum CvgStatus cvg_sample_count(double a,
                                double b,
                                double bound_u,
                                size_t horizon,
                                size_t t,
                                size_t *out);

/**
 * DKW radius of episode `t` for confidence `gamma`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum CvgStatus cvg_dkw_radius(double a,
                              double b,
                              double bound_u,
                              size_t horizon,
                              size_t t,
                              double gamma,
                              double *out);

/**
 * Closed-form CVaR of both Cournot agents at `(x1, x2)`.
 *
 * # Safety
 * `out` must be null or point to writable memory for two `double`s.
 */
enum CvgStatus cvg_cournot_true_cvar(double x1,
                                     double x2,
                                     double alpha1,
                                     double alpha2,
                                     double *out);

/**
 * Symmetric Cournot equilibrium action for risk level `alpha`.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `double`.
 */
enum CvgStatus cvg_cournot_equilibrium(double alpha, double *out);

/**
 * Builds a histogram of `len` samples on `bins` equal bins over `[lo, hi]`.
 *
 * # Safety
 * `samples` must point to `len` readable `double`s; `out` must be writable.
 */
enum CvgStatus cvg_distribution_from_samples(const double *samples,
                                             size_t len,
                                             double lo,
                                             double hi,
                                             size_t bins,
                                             struct CvgDistribution **out);

/**
 * `beta * prev + (1 - beta) * current` as a new handle.
 *
 * # Safety
 * `prev` and `current` must be live handles; `out` must be writable.
 */
enum CvgStatus cvg_distribution_mix(const struct CvgDistribution *prev,
                                    const struct CvgDistribution *current,
                                    double beta,
                                    struct CvgDistribution **out);

/**
 * CVaR of the histogram at risk level `alpha`.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum CvgStatus cvg_distribution_cvar(const struct CvgDistribution *dist, double alpha, double *out);

/**
 * Sup distance between the two histograms' CDFs.
 *
 * # Safety
 * Both handles must be live; `out` must be writable.
 */
enum CvgStatus cvg_distribution_kolmogorov(const struct CvgDistribution *f,
                                           const struct CvgDistribution *g,
                                           double *out);

/**
 * # Safety
 * `dist` must be null or a handle not yet freed.
 */
void cvg_distribution_free(struct CvgDistribution *dist);

/**
 * Parses and validates a JSON config.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CvgStatus cvg_config_from_json(const char *json, struct CvgConfig **out);

/**
 * The default Cournot experiment.
 *
 * # Safety
 * `out` must be writable.
 */
enum CvgStatus cvg_config_cournot_default(struct CvgConfig **out);

/**
 * Overrides the trial count and master seed.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum CvgStatus cvg_config_set_trials(struct CvgConfig *config, size_t trials, uint64_t seed);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void cvg_config_free(struct CvgConfig *config);

/**
 * Runs the config and writes its files into `out_dir`. `jobs == 0` uses
 * every available core.
 *
 * # Safety
 * `config` must be live, `out_dir` NUL-terminated, `out` writable.
 */
enum CvgStatus cvg_run(const struct CvgConfig *config,
                       const char *out_dir,
                       size_t jobs,
                       struct CvgResult **out);

/**
 * Like [`cvg_run`] but requires at least two variants and writes `comparison.csv`.
 *
 * # Safety
 * As [`cvg_run`].
 */
enum CvgStatus cvg_compare(const struct CvgConfig *config,
                           const char *out_dir,
                           size_t jobs,
                           struct CvgResult **out);

/**
 * Number of variants in a result.
 *
 * # Safety
 * `result` must be live; `out` writable.
 */
enum CvgStatus cvg_result_variant_count(const struct CvgResult *result, size_t *out);

/**
 * Trial-mean, agent-averaged true CVaR at the mean action in every episode
 * of variant `variant`. Writes `episodes` values into `buf` when `cap` is
 * large enough; always stores the episode count in `episodes`.
 *
 * # Safety
 * `result` must be live; `buf` must hold `cap` doubles; `episodes` writable.
 */
enum CvgStatus cvg_result_mean_cvar(const struct CvgResult *result,
                                    size_t variant,
                                    double *buf,
                                    size_t cap,
                                    size_t *episodes);

/**
 * Lowercase hex config hash of the run, copied with a trailing NUL into `buf`.
 *
 * # Safety
 * `result` must be live; `buf` must hold `cap` bytes.
 */
enum CvgStatus cvg_result_config_hash(const struct CvgResult *result, char *buf, size_t cap);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void cvg_result_free(struct CvgResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CVAR_GAMES_H */
