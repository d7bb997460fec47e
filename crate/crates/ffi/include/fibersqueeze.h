#ifndef FIBERSQUEEZE_H
#define FIBERSQUEEZE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FsqFormat {
  FSQ_FORMAT_CSV = 0,
  FSQ_FORMAT_JSON = 1,
} FsqFormat;

typedef enum FsqStatus {
  FSQ_STATUS_OK = 0,
  FSQ_STATUS_NULL_POINTER = 1,
  FSQ_STATUS_INVALID_ARGUMENT = 2,
  FSQ_STATUS_CONFIG = 3,
  FSQ_STATUS_RUNTIME = 4,
  FSQ_STATUS_IO = 5,
  FSQ_STATUS_PANIC = 6,
} FsqStatus;

typedef struct FsqConfig FsqConfig;

typedef struct FsqPropagation FsqPropagation;

typedef struct FsqSqueeze FsqSqueeze;

typedef struct FsqSweep FsqSweep;

/**
 * Pulse metrics at one distance of a classical run.
 */
typedef struct FsqMetricsRow {
  double distance_m;
  double energy_pj;
  double peak_power_w;
  double fwhm_ps;
  double centroid_rad_per_ps;
} FsqMetricsRow;

/**
 * Lossless calibrated squeezing at one distance.
 */
typedef struct FsqSqueezeRow {
  double distance_m;
  double v_min;
  double v_max;
  double squeezing_db;
  double antisqueezing_db;
  double theta_opt_rad;
  double homodyne_db;
  double stat_err_db;
} FsqSqueezeRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fsq_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fsq_last_error(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library that has not
 * been freed yet.
 */
void fsq_string_free(char *s);

/**
 * New configuration with every default applied.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum FsqStatus fsq_config_new(struct FsqConfig **out);

/**
 * Parse a TOML configuration.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum FsqStatus fsq_config_from_toml(const char *text, struct FsqConfig **out);

/**
 * Resolved configuration as TOML; release with `fsq_string_free`.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum FsqStatus fsq_config_to_toml(const struct FsqConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be NULL or a handle from this library not yet freed.
 */
void fsq_config_free(struct FsqConfig *cfg);

/**
 * Sech pulse with `energy_pj` pJ and intensity FWHM `fwhm_ps` ps.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsqStatus fsq_config_set_pulse(struct FsqConfig *cfg, double energy_pj, double fwhm_ps);

/**
 * β₂ (ps²/km), β₃ (ps³/km), γ (1/(W·km)), intrinsic loss (dB/km).
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsqStatus fsq_config_set_fiber(struct FsqConfig *cfg,
                                    double beta2,
                                    double beta3,
                                    double gamma,
                                    double loss_db_per_km);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsqStatus fsq_config_set_raman(struct FsqConfig *cfg, bool enabled);

/**
 * Fiber length, step and snapshot distances (m, strictly increasing).
 *
 * # Safety
 * `cfg` must be a live handle; `distances` must point to `n` doubles.
 */
enum FsqStatus fsq_config_set_propagation(struct FsqConfig *cfg,
                                          double length_m,
                                          double dz_m,
                                          const double *distances,
                                          size_t n);

/**
 * Master seed of propagation and sweeps.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsqStatus fsq_config_set_seed(struct FsqConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum FsqStatus fsq_config_set_n_traj(struct FsqConfig *cfg, size_t n_traj);

/**
 * Noise-free propagation; row 0 is the input pulse.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum FsqStatus fsq_propagate_classical(const struct FsqConfig *cfg, struct FsqPropagation **out);

/**
 * # Safety
 * `p` must be a live handle.
 */
size_t fsq_propagation_len(const struct FsqPropagation *p);

/**
 * # Safety
 * `p` must be a live handle; `out` must be writable.
 */
enum FsqStatus fsq_propagation_row(const struct FsqPropagation *p,
                                   size_t i,
                                   struct FsqMetricsRow *out);

/**
 * # Safety
 * `p` must be NULL or a handle from this library not yet freed.
 */
void fsq_propagation_free(struct FsqPropagation *p);

/**
 * Stochastic ensemble plus shot-noise run; one lossless row per snapshot.
 * `threads` = 0 uses every core; results do not depend on it.
 *
 * # Safety
 * `cfg` must be a live handle; `out` must be writable.
 */
enum FsqStatus fsq_squeeze(const struct FsqConfig *cfg, size_t threads, struct FsqSqueeze **out);

/**
 * # Safety
 * `s` must be a live handle.
 */
size_t fsq_squeeze_len(const struct FsqSqueeze *s);

/**
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum FsqStatus fsq_squeeze_row(const struct FsqSqueeze *s, size_t i, struct FsqSqueezeRow *out);

/**
 * Row `i` after fiber loss over its own length plus an external efficiency.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
enum FsqStatus fsq_squeeze_row_with_loss(const struct FsqSqueeze *s,
                                         size_t i,
                                         double loss_db_per_km,
                                         double external_efficiency,
                                         struct FsqSqueezeRow *out);

/**
 * # Safety
 * `s` must be NULL or a handle from this library not yet freed.
 */
void fsq_squeeze_free(struct FsqSqueeze *s);

/**
 * Beam-splitter loss on a normalized variance: `ηV + 1 − η`.
 *
 * # Safety
 * `out` must be writable.
 */
enum FsqStatus fsq_apply_loss(double variance, double efficiency, double *out);

/**
 * Run the configuration's sweep section (defaults when absent).
 * `checkpoint_dir` may be NULL.
 *
 * # Safety
 * `cfg` must be a live handle; `checkpoint_dir` NULL or NUL-terminated;
 * `out` must be writable.
 */
enum FsqStatus fsq_sweep_run(const struct FsqConfig *cfg,
                             size_t threads,
                             const char *checkpoint_dir,
                             struct FsqSweep **out);

/**
 * # Safety
 * `s` must be a live handle.
 */
size_t fsq_sweep_record_count(const struct FsqSweep *s);

/**
 * # Safety
 * `s` must be a live handle.
 */
bool fsq_sweep_is_complete(const struct FsqSweep *s);

/**
 * # Safety
 * `s` must be a live handle; `path` NUL-terminated.
 */
enum FsqStatus fsq_sweep_export(const struct FsqSweep *s, const char *path, enum FsqFormat format);

/**
 * # Safety
 * `s` must be NULL or a handle from this library not yet freed.
 */
void fsq_sweep_free(struct FsqSweep *s);

/**
 * Fundamental-soliton energy (pJ). `cfg` may be NULL for the default fiber.
 *
 * # Safety
 * `cfg` NULL or live; `out` writable.
 */
enum FsqStatus fsq_soliton_energy(const struct FsqConfig *cfg, double fwhm_ps, double *out);

/**
 * # Safety
 * `cfg` NULL or live; `out` writable.
 */
enum FsqStatus fsq_soliton_number(const struct FsqConfig *cfg,
                                  double fwhm_ps,
                                  double energy_pj,
                                  double *out);

/**
 * Raman parameter K. A negative `t_r_fs` uses the configured response.
 *
 * # Safety
 * `cfg` NULL or live; `out` writable.
 */
enum FsqStatus fsq_raman_k(const struct FsqConfig *cfg,
                           double fwhm_ps,
                           double z_m,
                           double t_r_fs,
                           double *out);

/**
 * Self-frequency-shift rate (rad/ps/m) for sech width `tau_ps`.
 *
 * # Safety
 * `cfg` NULL or live; `out` writable.
 */
enum FsqStatus fsq_ssfs_rate(const struct FsqConfig *cfg,
                             double tau_ps,
                             double t_r_fs,
                             double *out);

/**
 * Duration (ps) with K = `k_star` at length `z_m`.
 *
 * # Safety
 * `cfg` NULL or live; `out` writable.
 */
enum FsqStatus fsq_optimal_duration(const struct FsqConfig *cfg,
                                    double z_m,
                                    double k_star,
                                    double t_r_fs,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBERSQUEEZE_H */
