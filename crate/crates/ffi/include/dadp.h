#ifndef DADP_H
#define DADP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum DadpStatus {
  DADP_STATUS_OK = 0,
  // A required pointer argument was null.
  DADP_STATUS_NULL_POINTER = 1,
  // Invalid configuration, dimensions or domain parameters.
  DADP_STATUS_INVALID_ARGUMENT = 2,
  // Files or models that do not belong together.
  DADP_STATUS_LINEAGE = 3,
  // Non-finite values or a failed numerical routine.
  DADP_STATUS_NUMERICAL = 4,
  // Unreadable, unwritable or malformed file.
  DADP_STATUS_IO = 5,
  // Internal failure; the library state is still consistent.
  DADP_STATUS_PANIC = 6,
} DadpStatus;

// Opaque expert dataset.
typedef struct DadpDataset DadpDataset;

// Opaque trained context encoder.
typedef struct DadpEncoder DadpEncoder;

// Opaque trained diffusion policy.
typedef struct DadpPolicy DadpPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on the same thread.
const char *dadp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dadp_version(void);

// Expert dataset on a uniform grid of `grid_per_axis` points per
// parameter. `env`: 0 BallDrop, 1 Push1D.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum DadpStatus dadp_dataset_generate(uint32_t env,
                                      size_t grid_per_axis,
                                      size_t episodes_per_domain,
                                      size_t episode_len,
                                      uint64_t seed,
                                      struct DadpDataset **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum DadpStatus dadp_dataset_load(const char *path, struct DadpDataset **out);

// # Safety
// `ds` must be a live handle and `path` a NUL-terminated string.
enum DadpStatus dadp_dataset_save(const struct DadpDataset *ds, const char *path);

// Number of domains and total number of trajectories.
//
// # Safety
// `ds` must be a live handle; the outputs must be writable.
enum DadpStatus dadp_dataset_counts(const struct DadpDataset *ds,
                                    size_t *domains,
                                    size_t *trajectories);

// # Safety
// `ds` must come from this library and not be used afterwards. Null is
// ignored.
void dadp_dataset_free(struct DadpDataset *ds);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum DadpStatus dadp_encoder_load(const char *path, struct DadpEncoder **out);

// Context length and representation width of an encoder.
//
// # Safety
// `enc` must be a live handle; the outputs must be writable.
enum DadpStatus dadp_encoder_dims(const struct DadpEncoder *enc, size_t *history, size_t *z_dim);

// Representation of a context of `steps` rows (`steps <= history`),
// oldest first. `obs` holds `steps * obs_dim` values, `actions`
// `steps * action_dim`; `z` receives `z_len == z_dim` values.
//
// # Safety
// Array pointers must be valid for the stated lengths.
enum DadpStatus dadp_encoder_encode(const struct DadpEncoder *enc,
                                    const double *obs,
                                    const double *actions,
                                    size_t steps,
                                    double *z,
                                    size_t z_len);

// # Safety
// `enc` must come from this library and not be used afterwards. Null is
// ignored.
void dadp_encoder_free(struct DadpEncoder *enc);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum DadpStatus dadp_policy_load(const char *path, struct DadpPolicy **out);

// Push1D action for the current observation given the `steps` completed
// steps before it (oldest first, at most the policy history). The live
// history also serves as the encoder context. `seed` fixes the sampler
// noise.
//
// # Safety
// Handles must be live; array pointers valid for the stated lengths.
enum DadpStatus dadp_policy_act(const struct DadpPolicy *policy,
                                const struct DadpEncoder *encoder,
                                const double *history_obs,
                                const double *history_actions,
                                size_t steps,
                                double current_obs,
                                uint64_t seed,
                                double *action);

// # Safety
// `policy` must come from this library and not be used afterwards. Null
// is ignored.
void dadp_policy_free(struct DadpPolicy *policy);

// Gravity and current speed from three consecutive positions
// `y[T-2], y[T-1], y[T]` sampled `t0` apart.
//
// # Safety
// `y` must point to 3 values; the outputs must be writable.
enum DadpStatus dadp_balldrop_fit_g(const double *y, double t0, double *g, double *v);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DADP_H */
