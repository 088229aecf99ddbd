//! Call-through tests of the C ABI surface.

use meshpose_ffi::*;
use std::ffi::CString;
use std::ptr;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn version_is_static() {
    let v = mp_version();
    assert!(!v.is_null());
    let s = unsafe { std::ffi::CStr::from_ptr(v) }.to_str().unwrap();
    assert!(s.starts_with("meshpose-ffi"));
}

#[test]
fn builtin_mesh_lifecycle() {
    let mut mesh: *mut MpMesh = ptr::null_mut();
    let name = c("sphere");
    let status = unsafe { mp_mesh_builtin(name.as_ptr(), 25.0, &mut mesh) };
    assert_eq!(status, MpStatus::Ok);
    assert!(!mesh.is_null());
    assert_eq!(unsafe { mp_mesh_vertex_count(mesh) }, 642);
    assert_eq!(unsafe { mp_mesh_face_count(mesh) }, 1280);

    let mut centroid = [0.0f64; 3];
    assert_eq!(
        unsafe { mp_mesh_centroid(mesh, centroid.as_mut_ptr()) },
        MpStatus::Ok
    );
    assert!(centroid.iter().all(|v| v.abs() < 1e-9));
    unsafe { mp_mesh_free(mesh) };

    let bad = c("teapot");
    let mut out: *mut MpMesh = ptr::null_mut();
    assert_eq!(
        unsafe { mp_mesh_builtin(bad.as_ptr(), 25.0, &mut out) },
        MpStatus::InvalidArgument
    );
}

#[test]
fn mesh_load_missing_file_is_io() {
    let mut mesh: *mut MpMesh = ptr::null_mut();
    let path = c("/nonexistent/missing.ply");
    assert_eq!(
        unsafe { mp_mesh_load(path.as_ptr(), &mut mesh) },
        MpStatus::Io
    );
    assert_eq!(
        unsafe { mp_mesh_load(ptr::null(), &mut mesh) },
        MpStatus::NullArgument
    );
}

#[test]
fn rotation_round_trip_through_abi() {
    // Identity 6D input.
    let r6 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let mut rot = [0.0f64; 9];
    assert_eq!(
        unsafe { mp_r6_to_rotation(r6.as_ptr(), rot.as_mut_ptr()) },
        MpStatus::Ok
    );
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert_eq!(rot, identity);

    let mut back = [0.0f64; 6];
    assert_eq!(
        unsafe { mp_rotation_to_r6(rot.as_ptr(), back.as_mut_ptr()) },
        MpStatus::Ok
    );
    assert_eq!(back, r6);

    // Degenerate first column.
    let degenerate = [0.0; 6];
    assert_eq!(
        unsafe { mp_r6_to_rotation(degenerate.as_ptr(), rot.as_mut_ptr()) },
        MpStatus::Degenerate
    );

    // Garbage rotation rejected.
    let not_rot = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert_eq!(
        unsafe { mp_rotation_to_r6(not_rot.as_ptr(), back.as_mut_ptr()) },
        MpStatus::InvalidArgument
    );
}

#[test]
fn geodesic_half_turn_is_180_degrees() {
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    // 180° about z.
    let flip = [-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0];
    let mut deg = 0.0f64;
    assert_eq!(
        unsafe { mp_rotation_geodesic_deg(identity.as_ptr(), flip.as_ptr(), &mut deg) },
        MpStatus::Ok
    );
    assert!((deg - 180.0).abs() < 1e-9);
}

#[test]
fn translation_error_345() {
    let a = [0.0, 0.0, 0.0];
    let b = [3.0, 4.0, 0.0];
    let mut total = 0.0f64;
    let mut axis = [0.0f64; 3];
    assert_eq!(
        unsafe {
            mp_translation_error_mm(a.as_ptr(), b.as_ptr(), &mut total, axis.as_mut_ptr())
        },
        MpStatus::Ok
    );
    assert!((total - 5.0).abs() < 1e-12);
    assert_eq!(axis, [3.0, 4.0, 0.0]);
}

#[test]
fn add_metric_translation_offset() {
    let mut mesh: *mut MpMesh = ptr::null_mut();
    let name = c("cavity");
    assert_eq!(
        unsafe { mp_mesh_builtin(name.as_ptr(), 20.0, &mut mesh) },
        MpStatus::Ok
    );
    let pose_a = [
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, // identity rotation
        0.0, 0.0, 100.0,
    ];
    let pose_b = [
        1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, //
        1.0, -2.0, 102.0,
    ];
    let mut add = 0.0f64;
    assert_eq!(
        unsafe { mp_add_metric_mm(mesh, pose_a.as_ptr(), pose_b.as_ptr(), &mut add) },
        MpStatus::Ok
    );
    // Pure translation offset: ADD is exactly its norm, 3.
    assert!((add - 3.0).abs() < 1e-12, "ADD {add}");
    unsafe { mp_mesh_free(mesh) };
}

#[test]
fn model_load_predict_through_abi() {
    use meshpose::model::{init_model, ModelConfig};

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("tiny.p6ck");
    let mut cfg = ModelConfig::default_for((32, 32));
    cfg.conv_blocks.truncate(3);
    let model = init_model(&cfg, 5).unwrap();
    model.save_checkpoint(&ckpt).unwrap();

    let mut handle: *mut MpModel = ptr::null_mut();
    let path = c(ckpt.to_str().unwrap());
    assert_eq!(
        unsafe { mp_model_load(path.as_ptr(), &mut handle) },
        MpStatus::Ok
    );
    let (mut h, mut w) = (0u32, 0u32);
    assert_eq!(
        unsafe { mp_model_input_size(handle, &mut h, &mut w) },
        MpStatus::Ok
    );
    assert_eq!((h, w), (32, 32));
    assert!(unsafe { mp_model_parameter_count(handle) } > 0);

    let pixels: Vec<u8> = (0..32 * 32).map(|i| (i % 251) as u8).collect();
    let mut pose = [0.0f64; 12];
    assert_eq!(
        unsafe { mp_predict_pose(handle, pixels.as_ptr(), 32, 32, pose.as_mut_ptr()) },
        MpStatus::Ok
    );
    // Recovered rotation satisfies orthonormality through the ABI.
    let r = &pose[..9];
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k * 3 + i] * r[k * 3 + j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((dot - expected).abs() < 1e-9);
        }
    }

    // Wrong image size.
    let small: Vec<u8> = vec![0; 16 * 16];
    assert_eq!(
        unsafe { mp_predict_pose(handle, small.as_ptr(), 16, 16, pose.as_mut_ptr()) },
        MpStatus::ShapeMismatch
    );
    unsafe { mp_model_free(handle) };

    // Corrupt checkpoint surfaces as a parse failure.
    let bad = dir.path().join("bad.p6ck");
    std::fs::write(&bad, b"P6CKgarbage").unwrap();
    let bad_path = c(bad.to_str().unwrap());
    let mut out: *mut MpModel = ptr::null_mut();
    assert_eq!(
        unsafe { mp_model_load(bad_path.as_ptr(), &mut out) },
        MpStatus::Parse
    );
}
