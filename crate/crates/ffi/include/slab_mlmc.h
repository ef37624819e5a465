#ifndef SLAB_MLMC_H
#define SLAB_MLMC_H

/* Generated by cbindgen from slab-mlmc-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes (0 ok, 2 config, 3 numerics).
 */
typedef enum SlabStatus {
  SLAB_STATUS_OK = 0,
  SLAB_STATUS_CONFIG_ERROR = 2,
  SLAB_STATUS_NUMERICAL_ERROR = 3,
  SLAB_STATUS_INVALID_ARGUMENT = 4,
  SLAB_STATUS_PANIC = 5,
} SlabStatus;

/**
 * Opaque study configuration handle.
 */
typedef struct SlabConfig SlabConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Crate version as a static NUL-terminated string.
 */
const char *slab_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *slab_last_error_message(void);

/**
 * Parses flat `key = value` config text into a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid writable slot.
 */
enum SlabStatus slab_config_parse(const char *text, struct SlabConfig **out);

/**
 * Overrides one config key on an existing handle.
 *
 * # Safety
 * `cfg` must be a live handle from [`slab_config_parse`]; `key` and `value`
 * must be NUL-terminated strings.
 */
enum SlabStatus slab_config_set(struct SlabConfig *cfg, const char *key, const char *value);

/**
 * Frees a config handle. Passing NULL is a no-op.
 *
 * # Safety
 * `cfg` must be a handle from [`slab_config_parse`], not yet freed.
 */
void slab_config_free(struct SlabConfig *cfg);

/**
 * Runs one study (`"solve"`, `"convergence"`, `"epscost"` or `"kl-check"`)
 * against the config, writing the study's files. `out_dir` overrides the
 * config's output directory when non-NULL.
 *
 * # Safety
 * `cfg` must be a live handle; `study` must be NUL-terminated; `out_dir`
 * may be NULL or NUL-terminated.
 */
enum SlabStatus slab_run_study(const struct SlabConfig *cfg,
                               const char *study,
                               const char *out_dir);

/**
 * Solves the configured deterministic problem and copies the nodal scalar
 * flux (length `solve_cells + 1`) into `phi_out`. `*n_nodes` carries the
 * buffer capacity in and the node count out; when the buffer is too small
 * the required size is written and `SLAB_STATUS_INVALID_ARGUMENT` returned.
 *
 * # Safety
 * `cfg` must be a live handle; `phi_out` must point to `*n_nodes` writable
 * doubles; `n_nodes` must be a valid writable slot.
 */
enum SlabStatus slab_solve_flux(const struct SlabConfig *cfg, double *phi_out, uintptr_t *n_nodes);

/**
 * Closed-form scalar flux of the constant pure absorber (`f = 1`,
 * `sigma_S = 0`) at `x`; NaN on domain errors.
 */
double slab_pure_absorber_flux(double sigma, double x);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLAB_MLMC_H */
