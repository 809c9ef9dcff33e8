#ifndef FRAME_LANGEVIN_H
#define FRAME_LANGEVIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FL_OK 0

#define FL_ERR_NULL 1

#define FL_ERR_DOMAIN 2

#define FL_ERR_MODEL 3

#define FL_ERR_DT_BUDGET 4

#define FL_ERR_INVALID_ARG 5

#define FL_ERR_NUMERIC 6

#define FL_ERR_PANIC 7

#define FL_SCHEME_EM 0

#define FL_SCHEME_EXP_OU 1

/**
 * Opaque model handle.
 */
typedef struct FlModel FlModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *fl_last_error_message(void);

/**
 * Builds a preset model. `keys`/`values` hold `count` parameter overrides
 * (e.g. "mass", "gamma0"); they may be null when `count` is 0.
 *
 * # Safety
 * String arguments must be NUL-terminated; arrays must hold `count` entries;
 * `out` must be writable.
 */
int32_t fl_model_new_preset(const char *manifold,
                            const char *preset_name,
                            const char *const *keys,
                            const double *values,
                            size_t count,
                            struct FlModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `m` must come from `fl_model_new_preset` and not be freed twice.
 */
void fl_model_free(struct FlModel *m);

/**
 * Manifold dimension n of the model.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
int32_t fl_model_dim(const struct FlModel *m, size_t *out);

/**
 * Certified lower bound gamma1 on the symmetric part of the drag.
 *
 * # Safety
 * `m` must be a live handle and `gamma1` writable.
 */
int32_t fl_model_validate(const struct FlModel *m, double *gamma1);

/**
 * Noise-induced drift at the frame (chart, coords, h): the coordinate and
 * frame parts of S^h and the frame part of S^v (its coordinate part is zero).
 *
 * # Safety
 * Inputs hold n and n*n doubles; outputs hold n, n*n and n*n doubles.
 */
int32_t fl_drift(const struct FlModel *m,
                 uint32_t chart,
                 const double *coords,
                 const double *h,
                 double *sh_dx,
                 double *sh_dh,
                 double *sv_dh);

/**
 * Integrates the mass system for `n_steps` of size `dt` on the Wiener grid
 * of (seed, path_index) and writes the final state.
 *
 * # Safety
 * Array arguments hold n (coords, v) or n*n (h) doubles; outputs are writable.
 */
int32_t fl_simulate_mass(const struct FlModel *m,
                         uint64_t seed,
                         uint64_t path_index,
                         int32_t scheme,
                         double dt,
                         size_t n_steps,
                         uint32_t chart,
                         const double *coords,
                         const double *h,
                         const double *v0,
                         uint32_t *out_chart,
                         double *out_coords,
                         double *out_h,
                         double *out_v);

/**
 * Integrates the limiting equation with the Stratonovich Heun scheme on the
 * same Wiener grid that `fl_simulate_mass` uses for (seed, path_index).
 *
 * # Safety
 * As for `fl_simulate_mass`, without velocities.
 */
int32_t fl_simulate_limit(const struct FlModel *m,
                          uint64_t seed,
                          uint64_t path_index,
                          double dt,
                          size_t n_steps,
                          uint32_t chart,
                          const double *coords,
                          const double *h,
                          uint32_t *out_chart,
                          double *out_coords,
                          double *out_h);

/**
 * Solves gamma J + J gamma^T = sigma for n in 1..=3.
 *
 * # Safety
 * `gamma`, `sigma` and `out_j` hold n*n doubles.
 */
int32_t fl_lyapunov_solve(size_t n, const double *gamma, const double *sigma, double *out_j);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRAME_LANGEVIN_H */
