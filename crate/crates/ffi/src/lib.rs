//! C ABI for the meshpose registration library.
//!
//! The surface is deliberately small: load a mesh and a trained checkpoint,
//! feed 8-bit grayscale frames, get camera poses back, plus the rotation
//! utilities and error metrics needed to consume them. Handles are opaque;
//! every function returns an [`MpStatus`] code and writes results through
//! out-pointers.
//!
//! Pose wire format: 12 doubles — 9 row-major rotation entries followed by
//! 3 translation entries in millimetres.
//!
//! The generated header lives at `include/meshpose.h`.

use meshpose::geometry::{
    r6_to_rotation, rotation_geodesic_distance, rotation_to_r6, translation_error, Pose, Rot6,
    RotationMatrix,
};
use meshpose::mesh::TriMesh;
use meshpose::model::PoseModel;
use meshpose::render::Image;
use nalgebra::Vector3;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible call.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = -1,
    /// File could not be read or written.
    Io = -2,
    /// File contents could not be parsed or failed validation.
    Parse = -3,
    /// Image dimensions do not match the model input size.
    ShapeMismatch = -4,
    /// The 6D rotation input is degenerate and cannot be orthonormalized.
    Degenerate = -5,
    /// An argument failed validation (e.g. not a rotation matrix).
    InvalidArgument = -6,
    /// The string argument was not valid UTF-8.
    Utf8 = -7,
    /// An internal panic was caught at the boundary.
    Internal = -8,
}

/// Opaque triangle-mesh handle.
pub struct MpMesh(TriMesh);

/// Opaque pose-regressor handle (loaded checkpoint).
pub struct MpModel(PoseModel);

const VERSION: &CStr = c"meshpose-ffi 0.1.0";

/// Static version string; never freed by the caller.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    VERSION.as_ptr()
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, MpStatus> {
    if ptr.is_null() {
        return Err(MpStatus::NullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| MpStatus::Utf8)
}

fn guard<F: FnOnce() -> MpStatus>(f: F) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => MpStatus::Internal,
    }
}

/// Load an ASCII PLY or OBJ mesh. On success writes a handle the caller
/// must release with [`mp_mesh_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_mesh` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_load(
    path: *const c_char,
    out_mesh: *mut *mut MpMesh,
) -> MpStatus {
    guard(|| {
        if out_mesh.is_null() {
            return MpStatus::NullArgument;
        }
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match meshpose::mesh::load_mesh(path) {
            Ok(mesh) => {
                unsafe { *out_mesh = Box::into_raw(Box::new(MpMesh(mesh))) };
                MpStatus::Ok
            }
            Err(meshpose::mesh::MeshError::Io(_)) => MpStatus::Io,
            Err(_) => MpStatus::Parse,
        }
    })
}

/// Construct one of the builtin surfaces: `sphere`, `cavity`, or `blob`.
///
/// # Safety
/// `name` must be a valid NUL-terminated string and `out_mesh` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_builtin(
    name: *const c_char,
    radius_mm: f64,
    out_mesh: *mut *mut MpMesh,
) -> MpStatus {
    guard(|| {
        if out_mesh.is_null() {
            return MpStatus::NullArgument;
        }
        let name = match unsafe { cstr_arg(name) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        if !(radius_mm > 0.0) {
            return MpStatus::InvalidArgument;
        }
        match meshpose::mesh::builtin_mesh(name, radius_mm) {
            Ok(mesh) => {
                unsafe { *out_mesh = Box::into_raw(Box::new(MpMesh(mesh))) };
                MpStatus::Ok
            }
            Err(_) => MpStatus::InvalidArgument,
        }
    })
}

/// Release a mesh handle; null is a no-op.
///
/// # Safety
/// `mesh` must be a handle returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_free(mesh: *mut MpMesh) {
    if !mesh.is_null() {
        drop(unsafe { Box::from_raw(mesh) });
    }
}

/// # Safety
/// `mesh` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_vertex_count(mesh: *const MpMesh) -> u64 {
    if mesh.is_null() {
        return 0;
    }
    unsafe { &*mesh }.0.vertex_count() as u64
}

/// # Safety
/// `mesh` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_face_count(mesh: *const MpMesh) -> u64 {
    if mesh.is_null() {
        return 0;
    }
    unsafe { &*mesh }.0.face_count() as u64
}

/// Mesh centroid in mm, written to `out_xyz[3]`.
///
/// # Safety
/// `mesh` must be a valid handle; `out_xyz` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn mp_mesh_centroid(mesh: *const MpMesh, out_xyz: *mut f64) -> MpStatus {
    guard(|| {
        if mesh.is_null() || out_xyz.is_null() {
            return MpStatus::NullArgument;
        }
        let c = unsafe { &*mesh }.0.centroid();
        let out = unsafe { std::slice::from_raw_parts_mut(out_xyz, 3) };
        out.copy_from_slice(&[c.x, c.y, c.z]);
        MpStatus::Ok
    })
}

/// Load a trained checkpoint (`.p6ck`). On success writes a handle the
/// caller must release with [`mp_model_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out_model` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_model_load(
    path: *const c_char,
    out_model: *mut *mut MpModel,
) -> MpStatus {
    guard(|| {
        if out_model.is_null() {
            return MpStatus::NullArgument;
        }
        let path = match unsafe { cstr_arg(path) } {
            Ok(p) => p,
            Err(s) => return s,
        };
        match PoseModel::load_checkpoint(path) {
            Ok(model) => {
                unsafe { *out_model = Box::into_raw(Box::new(MpModel(model))) };
                MpStatus::Ok
            }
            Err(meshpose::model::ModelError::Io(_)) => MpStatus::Io,
            Err(_) => MpStatus::Parse,
        }
    })
}

/// Release a model handle; null is a no-op.
///
/// # Safety
/// `model` must be a handle returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn mp_model_free(model: *mut MpModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Expected input image size in pixels.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mp_model_input_size(
    model: *const MpModel,
    out_height: *mut u32,
    out_width: *mut u32,
) -> MpStatus {
    guard(|| {
        if model.is_null() || out_height.is_null() || out_width.is_null() {
            return MpStatus::NullArgument;
        }
        let (h, w) = unsafe { &*model }.0.config.input_size;
        unsafe {
            *out_height = h;
            *out_width = w;
        }
        MpStatus::Ok
    })
}

/// # Safety
/// `model` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mp_model_parameter_count(model: *const MpModel) -> u64 {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.0.parameter_count() as u64
}

/// Predict the camera pose from one 8-bit grayscale frame (row-major,
/// `width × height` bytes). Writes 12 doubles to `out_pose`: the recovered
/// rotation (9, row-major) and translation in mm (3).
///
/// # Safety
/// `pixels` must point to `width*height` bytes; `out_pose` to 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn mp_predict_pose(
    model: *const MpModel,
    pixels: *const u8,
    width: u32,
    height: u32,
    out_pose: *mut f64,
) -> MpStatus {
    guard(|| {
        if model.is_null() || pixels.is_null() || out_pose.is_null() {
            return MpStatus::NullArgument;
        }
        let model = &unsafe { &*model }.0;
        let n = width as usize * height as usize;
        let bytes = unsafe { std::slice::from_raw_parts(pixels, n) };
        let image = Image::from_u8(width, height, bytes);
        match model.predict_pose(&image) {
            Ok(pose) => {
                write_pose(out_pose, &pose);
                MpStatus::Ok
            }
            Err(meshpose::model::ModelError::ShapeMismatch { .. }) => MpStatus::ShapeMismatch,
            Err(meshpose::model::ModelError::Degenerate(_)) => MpStatus::Degenerate,
            Err(_) => MpStatus::Internal,
        }
    })
}

fn write_pose(out_pose: *mut f64, pose: &Pose) {
    let out = unsafe { std::slice::from_raw_parts_mut(out_pose, 12) };
    out[..9].copy_from_slice(&pose.rotation.to_row_major());
    out[9] = pose.translation.x;
    out[10] = pose.translation.y;
    out[11] = pose.translation.z;
}

fn read_pose(pose: *const f64) -> Result<Pose, MpStatus> {
    let v = unsafe { std::slice::from_raw_parts(pose, 12) };
    let mut rot = [0.0; 9];
    rot.copy_from_slice(&v[..9]);
    let rotation = RotationMatrix::from_row_major(rot).map_err(|_| MpStatus::InvalidArgument)?;
    Ok(Pose::new(rotation, Vector3::new(v[9], v[10], v[11])))
}

/// Recover a rotation matrix from the 6D representation by Gram–Schmidt.
/// `r6` holds the flattened first two columns; `out_rotation` receives 9
/// row-major entries.
///
/// # Safety
/// `r6` must point to 6 doubles, `out_rotation` to 9.
#[no_mangle]
pub unsafe extern "C" fn mp_r6_to_rotation(r6: *const f64, out_rotation: *mut f64) -> MpStatus {
    guard(|| {
        if r6.is_null() || out_rotation.is_null() {
            return MpStatus::NullArgument;
        }
        let v = unsafe { std::slice::from_raw_parts(r6, 6) };
        let mut arr = [0.0; 6];
        arr.copy_from_slice(v);
        match r6_to_rotation(Rot6(arr)) {
            Ok(rot) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_rotation, 9) };
                out.copy_from_slice(&rot.to_row_major());
                MpStatus::Ok
            }
            Err(_) => MpStatus::Degenerate,
        }
    })
}

/// Flatten the first two columns of a rotation matrix into the 6D form.
///
/// # Safety
/// `rotation` must point to 9 row-major doubles, `out_r6` to 6.
#[no_mangle]
pub unsafe extern "C" fn mp_rotation_to_r6(rotation: *const f64, out_r6: *mut f64) -> MpStatus {
    guard(|| {
        if rotation.is_null() || out_r6.is_null() {
            return MpStatus::NullArgument;
        }
        let v = unsafe { std::slice::from_raw_parts(rotation, 9) };
        let mut arr = [0.0; 9];
        arr.copy_from_slice(v);
        match RotationMatrix::from_row_major(arr) {
            Ok(rot) => {
                let out = unsafe { std::slice::from_raw_parts_mut(out_r6, 6) };
                out.copy_from_slice(&rotation_to_r6(&rot).0);
                MpStatus::Ok
            }
            Err(_) => MpStatus::InvalidArgument,
        }
    })
}

/// Geodesic angular distance between two rotations, in degrees.
///
/// # Safety
/// `rot_a` and `rot_b` must point to 9 row-major doubles each.
#[no_mangle]
pub unsafe extern "C" fn mp_rotation_geodesic_deg(
    rot_a: *const f64,
    rot_b: *const f64,
    out_deg: *mut f64,
) -> MpStatus {
    guard(|| {
        if rot_a.is_null() || rot_b.is_null() || out_deg.is_null() {
            return MpStatus::NullArgument;
        }
        let read = |p: *const f64| -> Result<RotationMatrix, MpStatus> {
            let v = unsafe { std::slice::from_raw_parts(p, 9) };
            let mut arr = [0.0; 9];
            arr.copy_from_slice(v);
            RotationMatrix::from_row_major(arr).map_err(|_| MpStatus::InvalidArgument)
        };
        let (a, b) = match (read(rot_a), read(rot_b)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        unsafe { *out_deg = rotation_geodesic_distance(&a, &b).to_degrees() };
        MpStatus::Ok
    })
}

/// Euclidean translation error in mm, with the per-axis absolute
/// differences in `out_axis_mm[3]`.
///
/// # Safety
/// `t_a`, `t_b`, and `out_axis_mm` must point to 3 doubles each.
#[no_mangle]
pub unsafe extern "C" fn mp_translation_error_mm(
    t_a: *const f64,
    t_b: *const f64,
    out_total_mm: *mut f64,
    out_axis_mm: *mut f64,
) -> MpStatus {
    guard(|| {
        if t_a.is_null() || t_b.is_null() || out_total_mm.is_null() || out_axis_mm.is_null() {
            return MpStatus::NullArgument;
        }
        let a = unsafe { std::slice::from_raw_parts(t_a, 3) };
        let b = unsafe { std::slice::from_raw_parts(t_b, 3) };
        let err = translation_error(
            Vector3::new(a[0], a[1], a[2]),
            Vector3::new(b[0], b[1], b[2]),
        );
        unsafe {
            *out_total_mm = err.total;
            let axis = std::slice::from_raw_parts_mut(out_axis_mm, 3);
            axis.copy_from_slice(&[err.per_axis.x, err.per_axis.y, err.per_axis.z]);
        }
        MpStatus::Ok
    })
}

/// ADD metric: mean distance in mm between the mesh vertices transformed by
/// two poses (each 12 doubles: 9 row-major rotation + 3 translation).
///
/// # Safety
/// `mesh` must be a valid handle; `pose_a`/`pose_b` must point to 12
/// doubles each.
#[no_mangle]
pub unsafe extern "C" fn mp_add_metric_mm(
    mesh: *const MpMesh,
    pose_a: *const f64,
    pose_b: *const f64,
    out_mm: *mut f64,
) -> MpStatus {
    guard(|| {
        if mesh.is_null() || pose_a.is_null() || pose_b.is_null() || out_mm.is_null() {
            return MpStatus::NullArgument;
        }
        let (a, b) = match (read_pose(pose_a), read_pose(pose_b)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let mesh = &unsafe { &*mesh }.0;
        unsafe { *out_mm = meshpose::evaluation::add_metric(&mesh.vertices, &a, &b) };
        MpStatus::Ok
    })
}

