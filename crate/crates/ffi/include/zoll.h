#ifndef ZOLL_H
#define ZOLL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verdict codes written by [`zoll_detect`].
 */
#define ZOLL_VERDICT_NOT_ZOLL -1

#define ZOLL_VERDICT_INCONCLUSIVE 0

#define ZOLL_VERDICT_ZOLL 1

typedef enum ZollStatus {
  ZOLL_STATUS_OK = 0,
  ZOLL_STATUS_NULL_POINTER = 1,
  ZOLL_STATUS_INVALID_ARGUMENT = 2,
  ZOLL_STATUS_PARSE_ERROR = 3,
  ZOLL_STATUS_UNSUPPORTED = 4,
  ZOLL_STATUS_NUMERIC_ERROR = 5,
  ZOLL_STATUS_PANIC = 6,
} ZollStatus;

/**
 * A surface model.
 */
typedef struct ZollModel ZollModel;

/**
 * An observable on the unit cotangent bundle of a model.
 */
typedef struct ZollObservable ZollObservable;

/**
 * A closed-form eigenbasis table.
 */
typedef struct ZollSpectrum ZollSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *zoll_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *zoll_version(void);

/**
 * `sphere`, `torus`, `zoll_revolution_demo` or `round_revolution`.
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is writable.
 */
enum ZollStatus zoll_model_new(const char *name, struct ZollModel **out);

/**
 * # Safety
 * `model` is null or came from [`zoll_model_new`] and is not used afterwards.
 */
void zoll_model_free(struct ZollModel *model);

/**
 * Parses `const(c)`, `indicator(R)`, `mollifier(R,k)` or `smooth(name)`.
 *
 * # Safety
 * `model` is a live handle, `desc` a NUL-terminated string, `out` writable.
 */
enum ZollStatus zoll_observable_parse(const struct ZollModel *model,
                                      const char *desc,
                                      struct ZollObservable **out);

/**
 * # Safety
 * `obs` is null or came from [`zoll_observable_parse`] and is not used afterwards.
 */
void zoll_observable_free(struct ZollObservable *obs);

/**
 * Finite-horizon functional: infimum over the phase grid (base × directions)
 * of the time-`t` average.
 *
 * # Safety
 * Handles are live; `out` is writable.
 */
enum ZollStatus zoll_g2_t(const struct ZollModel *model,
                          const struct ZollObservable *obs,
                          double t,
                          size_t base,
                          size_t directions,
                          double *out);

/**
 * Doubling limit over horizons t0·2^j, j ≤ doublings.
 *
 * # Safety
 * Handles are live; `out` is writable.
 */
enum ZollStatus zoll_g2(const struct ZollModel *model,
                        const struct ZollObservable *obs,
                        double t0,
                        size_t doublings,
                        size_t base,
                        size_t directions,
                        double *out);

/**
 * Eigenbasis up to degree `lambda_max` (sphere) or |k| ≤ `lambda_max` (torus).
 *
 * # Safety
 * `model` is live; `out` is writable.
 */
enum ZollStatus zoll_spectrum_new(const struct ZollModel *model,
                                  double lambda_max,
                                  struct ZollSpectrum **out);

/**
 * # Safety
 * `s` is null or came from [`zoll_spectrum_new`] and is not used afterwards.
 */
void zoll_spectrum_free(struct ZollSpectrum *s);

/**
 * Copies up to `cap` eigenvalues, repeated by multiplicity, into `buf` and
 * writes the total count to `len`. Pass `buf = NULL` to query the count.
 *
 * # Safety
 * `s` is live; `buf` is null or holds `cap` doubles; `len` is writable.
 */
enum ZollStatus zoll_spectrum_eigenvalues(const struct ZollSpectrum *s,
                                          double *buf,
                                          size_t cap,
                                          size_t *len);

/**
 * Smallest mass-matrix eigenvalue over the table for a function of the base point.
 *
 * # Safety
 * Handles are live; `out` is writable.
 */
enum ZollStatus zoll_g1(const struct ZollSpectrum *s,
                        const struct ZollObservable *weight,
                        double *out);

/**
 * Smallest eigenvalue of the time-averaged Gramian at horizon `t`;
 * `t = INFINITY` gives the block-diagonal limit.
 *
 * # Safety
 * Handles are live; `out` is writable.
 */
enum ZollStatus zoll_observability_constant(const struct ZollSpectrum *s,
                                            const struct ZollObservable *weight,
                                            double t,
                                            double *out);

/**
 * Spectral Zoll test with default settings. Writes a `ZOLL_VERDICT_*` code,
 * and the fitted period and shift (NaN when no net was fitted).
 *
 * # Safety
 * `values` holds `n` doubles; the out-pointers are writable.
 */
enum ZollStatus zoll_detect(const double *values,
                            size_t n,
                            int *verdict,
                            double *period,
                            double *sigma);

/**
 * Runs a named suite. `config` is configuration text (NULL for sphere
 * defaults); `out_dir` receives the artifacts (NULL writes nothing).
 * `pass` is set to 1 when every check passed, else 0.
 *
 * # Safety
 * Strings are NUL-terminated or null where allowed; `pass` is writable.
 */
enum ZollStatus zoll_run_suite(const char *name,
                               const char *config,
                               const char *out_dir,
                               int *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZOLL_H */
