#ifndef DYRECT_H
#define DYRECT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum DyrectStatus {
  DYRECT_STATUS_OK = 0,
  DYRECT_STATUS_NULL_POINTER = 1,
  DYRECT_STATUS_INVALID_INPUT = 2,
  DYRECT_STATUS_GEOMETRY_MISMATCH = 3,
  DYRECT_STATUS_FORMAT = 4,
  DYRECT_STATUS_IO = 5,
  DYRECT_STATUS_NUMERICAL = 6,
  DYRECT_STATUS_PANIC = 7,
} DyrectStatus;

/**
 * Scan geometry with view angles and timestamps.
 */
typedef struct DyrectGeometry DyrectGeometry;

/**
 * Stack of projection images with their geometry.
 */
typedef struct DyrectProjections DyrectProjections;

/**
 * Per-voxel event model: initial and final attenuation and transition time.
 */
typedef struct DyrectVolume DyrectVolume;

/**
 * Reconstruction parameters. Obtain defaults from [`dyrect_params_default`].
 */
typedef struct DyrectParams {
  double lambda_t;
  double lambda_0;
  double lambda_1;
  double lambda_delta;
  double lambda_mu;
  /**
   * Values <= 0 select the automatic epsilon.
   */
  double epsilon;
  size_t n_iterations;
  size_t n_subsets;
  uint64_t rng_seed;
  bool use_weights;
  double weight_floor;
  double ray_step;
  bool fit_attenuations;
} DyrectParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *dyrect_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dyrect_version(void);

struct DyrectParams dyrect_params_default(void);

/**
 * Circular parallel-beam scan of `n_views` views, `projections_per_rotation`
 * per turn, starting at `start_angle_rad`.
 */
enum DyrectStatus dyrect_geometry_parallel(size_t det_rows,
                                           size_t det_cols,
                                           double pixel_pitch_mm,
                                           size_t projections_per_rotation,
                                           size_t n_views,
                                           double start_angle_rad,
                                           struct DyrectGeometry **out);

/**
 * Circular cone-beam scan; distances in mm.
 */
enum DyrectStatus dyrect_geometry_cone(double source_to_origin_mm,
                                       double origin_to_detector_mm,
                                       size_t det_rows,
                                       size_t det_cols,
                                       double pixel_pitch_mm,
                                       size_t projections_per_rotation,
                                       size_t n_views,
                                       double start_angle_rad,
                                       struct DyrectGeometry **out);

size_t dyrect_geometry_n_views(const struct DyrectGeometry *geometry);

void dyrect_geometry_free(struct DyrectGeometry *geometry);

/**
 * Event volume on an `nx * ny * nz` grid centred on the origin. Each array
 * holds `nx * ny * nz` values, x fastest.
 */
enum DyrectStatus dyrect_volume_new(size_t nx,
                                    size_t ny,
                                    size_t nz,
                                    double voxel_size_mm,
                                    const double *mu0,
                                    const double *mu1,
                                    const double *tstar,
                                    struct DyrectVolume **out);

/**
 * Reads the `<stem>_mu0/_mu1/_tstar.raw` triple.
 */
enum DyrectStatus dyrect_volume_read(const char *stem, struct DyrectVolume **out);

enum DyrectStatus dyrect_volume_write(const struct DyrectVolume *volume, const char *stem);

/**
 * Number of voxels, or 0 for a NULL handle.
 */
size_t dyrect_volume_len(const struct DyrectVolume *volume);

/**
 * Copies the three parameter arrays; any output pointer may be NULL to skip it.
 */
enum DyrectStatus dyrect_volume_copy(const struct DyrectVolume *volume,
                                     double *mu0,
                                     double *mu1,
                                     double *tstar,
                                     size_t len);

void dyrect_volume_free(struct DyrectVolume *volume);

/**
 * Time-resolved forward projection of `volume` in `geometry`.
 */
enum DyrectStatus dyrect_forward_project(const struct DyrectVolume *volume,
                                         const struct DyrectGeometry *geometry,
                                         double ray_step,
                                         struct DyrectProjections **out);

/**
 * Wraps caller data (`n_views * det_rows * det_cols` values) as projections.
 */
enum DyrectStatus dyrect_projections_new(const struct DyrectGeometry *geometry,
                                         const double *data,
                                         size_t len,
                                         struct DyrectProjections **out);

enum DyrectStatus dyrect_projections_read(const char *path_, struct DyrectProjections **out);

enum DyrectStatus dyrect_projections_write(const struct DyrectProjections *projections,
                                           const char *path_);

/**
 * Number of stored values, or 0 for a NULL handle.
 */
size_t dyrect_projections_len(const struct DyrectProjections *projections);

enum DyrectStatus dyrect_projections_copy(const struct DyrectProjections *projections,
                                          double *out,
                                          size_t len);

void dyrect_projections_free(struct DyrectProjections *projections);

/**
 * Event-based reconstruction starting from `init`. `params` may be NULL for
 * defaults.
 */
enum DyrectStatus dyrect_reconstruct(const struct DyrectProjections *measured,
                                     const struct DyrectParams *params,
                                     const struct DyrectVolume *init,
                                     struct DyrectVolume **out);

/**
 * Mean absolute transition-time error (rotations) over voxels whose
 * attenuation change is at least half the largest one in `truth`.
 */
enum DyrectStatus dyrect_mae_transition(const struct DyrectVolume *truth,
                                        const struct DyrectVolume *reconstruction,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DYRECT_H */
