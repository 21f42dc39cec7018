#ifndef VOXELVIEW_H
#define VOXELVIEW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Procedural test objects.
typedef enum VvObjectKind {
  VV_OBJECT_KIND_CAR = 0,
  VV_OBJECT_KIND_CHAIR = 1,
  VV_OBJECT_KIND_PLANE = 2,
  VV_OBJECT_KIND_CUBE = 3,
} VvObjectKind;

// Result code of every fallible call.
typedef enum VvStatus {
  VV_STATUS_OK = 0,
  VV_STATUS_NULL_POINTER = 1,
  VV_STATUS_INVALID_PARAM = 2,
  VV_STATUS_DEGENERATE_UP = 3,
  VV_STATUS_RESOLUTION_MISMATCH = 4,
  VV_STATUS_BAD_FILE = 5,
  VV_STATUS_VALUE_OUT_OF_RANGE = 6,
  VV_STATUS_EMPTY_HYPOTHESES = 7,
  VV_STATUS_CONFIG_ERROR = 8,
  VV_STATUS_LENGTH_MISMATCH = 9,
  VV_STATUS_DEGENERATE_CLOUD = 10,
  VV_STATUS_DEGENERATE_MEAN = 11,
  VV_STATUS_IO = 12,
  VV_STATUS_PANIC = 99,
} VvStatus;

// Opaque trained viewpoint estimator.
typedef struct VvEstimator VvEstimator;

// Opaque rendered image (RGB plus alpha, row-major, row 0 at the top).
typedef struct VvImage VvImage;

// Opaque voxel volume.
typedef struct VvVolume VvVolume;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread; empty after a
// successful call. Valid until the next call into this library on the same
// thread. Never null.
const char *vv_last_error(void);

// Builds a procedural test object at `resolution` (at least 16). `kind`
// is a [`VvObjectKind`] value; it is taken as an integer so that
// out-of-range values are reported instead of being undefined behavior.
//
// # Safety
// `out` must be null or point to writable storage for one handle.
enum VvStatus vv_volume_make_object(uint32_t kind, size_t resolution, struct VvVolume **out);

// Reads a VXV1 volume file.
//
// # Safety
// `path` must be null or a NUL-terminated string; `out` null or writable.
enum VvStatus vv_volume_read(const char *path, struct VvVolume **out);

// Writes a volume as a VXV1 file.
//
// # Safety
// `volume` must be null or a live handle; `path` null or NUL-terminated.
enum VvStatus vv_volume_write(const struct VvVolume *volume, const char *path);

// Grid side of the volume, or 0 for a null handle.
//
// # Safety
// `volume` must be null or a live handle.
size_t vv_volume_resolution(const struct VvVolume *volume);

// Releases a volume. Null is ignored.
//
// # Safety
// `volume` must be null or a handle not yet freed.
void vv_volume_free(struct VvVolume *volume);

// Renders `volume` from the unit viewpoint `v` with z up.
//
// # Safety
// `volume` null or live; `v` null or three readable doubles; `out` null or
// writable.
enum VvStatus vv_render_view(const struct VvVolume *volume,
                             const double *v,
                             double camera_distance,
                             struct VvImage **out);

// Mean squared color error of the render at `v` against `target` and its
// gradient with respect to `v` (tangent to the sphere).
//
// # Safety
// Handles null or live; `v` null or three readable doubles; `loss` and
// `grad` null or writable (one and three doubles).
enum VvStatus vv_render_loss_grad(const struct VvVolume *volume,
                                  const double *v,
                                  double camera_distance,
                                  const struct VvImage *target,
                                  double *loss,
                                  double *grad);

// Image width in pixels, or 0 for a null handle.
//
// # Safety
// `image` must be null or a live handle.
size_t vv_image_width(const struct VvImage *image);

// Image height in pixels, or 0 for a null handle.
//
// # Safety
// `image` must be null or a live handle.
size_t vv_image_height(const struct VvImage *image);

// Copies interleaved RGB (`3·width·height` doubles) into `buf`.
//
// # Safety
// `image` null or live; `buf` null or `len` writable doubles.
enum VvStatus vv_image_copy_rgb(const struct VvImage *image, double *buf, size_t len);

// Copies alpha (`width·height` doubles) into `buf`.
//
// # Safety
// `image` null or live; `buf` null or `len` writable doubles.
enum VvStatus vv_image_copy_alpha(const struct VvImage *image, double *buf, size_t len);

// Releases an image. Null is ignored.
//
// # Safety
// `image` must be null or a handle not yet freed.
void vv_image_free(struct VvImage *image);

// Recovers the viewpoint of `target` by multi-start gradient descent.
//
// # Safety
// Handles null or live; `out_v` null or three writable doubles; `out_loss`
// null (ignored) or writable.
enum VvStatus vv_estimate_viewpoint(const struct VvVolume *volume,
                                    const struct VvImage *target,
                                    double camera_distance,
                                    size_t starts,
                                    double *out_v,
                                    double *out_loss);

// Loads a trained estimator from its JSON file.
//
// # Safety
// `path` null or NUL-terminated; `out` null or writable.
enum VvStatus vv_estimator_load(const char *path, struct VvEstimator **out);

// Predicts the viewpoint of `image`; `out_head` (optional) receives the
// index of the head the selection head chose.
//
// # Safety
// Handles null or live; `out_v` null or three writable doubles; `out_head`
// null or writable.
enum VvStatus vv_estimator_predict(const struct VvEstimator *estimator,
                                   const struct VvImage *image,
                                   double *out_v,
                                   size_t *out_head);

// Releases an estimator. Null is ignored.
//
// # Safety
// `estimator` must be null or a handle not yet freed.
void vv_estimator_free(struct VvEstimator *estimator);

// Geodesic error in radians between the zero-tilt poses of two viewpoints.
//
// # Safety
// `a`, `b` null or three readable doubles each; `out` null or writable.
enum VvStatus vv_viewpoint_error(const double *a, const double *b, double *out);

// Best proper rotation taking `preds` onto `gts` (`n` unit vectors each,
// packed as `3n` doubles). Writes the 3×3 matrix row-major to `out_rotation`.
//
// # Safety
// `preds`, `gts` null or `3n` readable doubles; `out_rotation` null or nine
// writable doubles.
enum VvStatus vv_procrustes_align(const double *preds,
                                  const double *gts,
                                  size_t n,
                                  double *out_rotation);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOXELVIEW_H */
