/* meshpose C API — marker-free 3D-to-2D pose registration. */

#ifndef MESHPOSE_FFI_H
#define MESHPOSE_FFI_H

/* Generated by cbindgen from meshpose-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
enum MpStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  // Success.
  MP_STATUS_OK = 0,
  // A required pointer argument was null.
  MP_STATUS_NULL_ARGUMENT = -1,
  // File could not be read or written.
  MP_STATUS_IO = -2,
  // File contents could not be parsed or failed validation.
  MP_STATUS_PARSE = -3,
  // Image dimensions do not match the model input size.
  MP_STATUS_SHAPE_MISMATCH = -4,
  // The 6D rotation input is degenerate and cannot be orthonormalized.
  MP_STATUS_DEGENERATE = -5,
  // An argument failed validation (e.g. not a rotation matrix).
  MP_STATUS_INVALID_ARGUMENT = -6,
  // The string argument was not valid UTF-8.
  MP_STATUS_UTF8 = -7,
  // An internal panic was caught at the boundary.
  MP_STATUS_INTERNAL = -8,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum MpStatus MpStatus;
#else
typedef int32_t MpStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

// Opaque triangle-mesh handle.
typedef struct MpMesh MpMesh;

// Opaque pose-regressor handle (loaded checkpoint).
typedef struct MpModel MpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static version string; never freed by the caller.
const char *mp_version(void);

// Load an ASCII PLY or OBJ mesh. On success writes a handle the caller
// must release with [`mp_mesh_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string and `out_mesh` a valid
// pointer.
MpStatus mp_mesh_load(const char *path, struct MpMesh **out_mesh);

// Construct one of the builtin surfaces: `sphere`, `cavity`, or `blob`.
//
// # Safety
// `name` must be a valid NUL-terminated string and `out_mesh` a valid
// pointer.
MpStatus mp_mesh_builtin(const char *name, double radius_mm, struct MpMesh **out_mesh);

// Release a mesh handle; null is a no-op.
//
// # Safety
// `mesh` must be a handle returned by this library, released once.
void mp_mesh_free(struct MpMesh *mesh);

// # Safety
// `mesh` must be a valid handle.
uint64_t mp_mesh_vertex_count(const struct MpMesh *mesh);

// # Safety
// `mesh` must be a valid handle.
uint64_t mp_mesh_face_count(const struct MpMesh *mesh);

// Mesh centroid in mm, written to `out_xyz[3]`.
//
// # Safety
// `mesh` must be a valid handle; `out_xyz` must point to 3 doubles.
MpStatus mp_mesh_centroid(const struct MpMesh *mesh, double *out_xyz);

// Load a trained checkpoint (`.p6ck`). On success writes a handle the
// caller must release with [`mp_model_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string and `out_model` a valid
// pointer.
MpStatus mp_model_load(const char *path, struct MpModel **out_model);

// Release a model handle; null is a no-op.
//
// # Safety
// `model` must be a handle returned by this library, released once.
void mp_model_free(struct MpModel *model);

// Expected input image size in pixels.
//
// # Safety
// All pointers must be valid.
MpStatus mp_model_input_size(const struct MpModel *model,
                             uint32_t *out_height,
                             uint32_t *out_width);

// # Safety
// `model` must be a valid handle.
uint64_t mp_model_parameter_count(const struct MpModel *model);

// Predict the camera pose from one 8-bit grayscale frame (row-major,
// `width × height` bytes). Writes 12 doubles to `out_pose`: the recovered
// rotation (9, row-major) and translation in mm (3).
//
// # Safety
// `pixels` must point to `width*height` bytes; `out_pose` to 12 doubles.
MpStatus mp_predict_pose(const struct MpModel *model,
                         const uint8_t *pixels,
                         uint32_t width,
                         uint32_t height,
                         double *out_pose);

// Recover a rotation matrix from the 6D representation by Gram–Schmidt.
// `r6` holds the flattened first two columns; `out_rotation` receives 9
// row-major entries.
//
// # Safety
// `r6` must point to 6 doubles, `out_rotation` to 9.
MpStatus mp_r6_to_rotation(const double *r6, double *out_rotation);

// Flatten the first two columns of a rotation matrix into the 6D form.
//
// # Safety
// `rotation` must point to 9 row-major doubles, `out_r6` to 6.
MpStatus mp_rotation_to_r6(const double *rotation, double *out_r6);

// Geodesic angular distance between two rotations, in degrees.
//
// # Safety
// `rot_a` and `rot_b` must point to 9 row-major doubles each.
MpStatus mp_rotation_geodesic_deg(const double *rot_a, const double *rot_b, double *out_deg);

// Euclidean translation error in mm, with the per-axis absolute
// differences in `out_axis_mm[3]`.
//
// # Safety
// `t_a`, `t_b`, and `out_axis_mm` must point to 3 doubles each.
MpStatus mp_translation_error_mm(const double *t_a,
                                 const double *t_b,
                                 double *out_total_mm,
                                 double *out_axis_mm);

// ADD metric: mean distance in mm between the mesh vertices transformed by
// two poses (each 12 doubles: 9 row-major rotation + 3 translation).
//
// # Safety
// `mesh` must be a valid handle; `pose_a`/`pose_b` must point to 12
// doubles each.
MpStatus mp_add_metric_mm(const struct MpMesh *mesh,
                          const double *pose_a,
                          const double *pose_b,
                          double *out_mm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MESHPOSE_FFI_H */
