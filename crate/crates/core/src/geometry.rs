//! SO(3)/SE(3) numerics for pose regression.
//!
//! Rotations are plain 3×3 matrices; the continuous 6D representation is the
//! flattened first two *columns* of the matrix, recovered via Gram–Schmidt.
//! Translations are millimetres throughout. Angular quantities are radians
//! internally; reports convert to degrees at the edge.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column orthonormality / determinant tolerance for a valid rotation.
pub const ROTATION_TOL: f64 = 1e-9;

/// Gram–Schmidt degeneracy threshold: far above f64 noise, far below any
/// sampled input.
pub const DEGENERACY_EPS: f64 = 1e-8;

/// Orthonormality drift above which composed rotations are re-orthonormalized.
const COMPOSE_DRIFT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    /// The 6D vector cannot be orthonormalized (near-zero first column, or
    /// second column parallel to the first).
    #[error("degenerate 6D rotation input: {0}")]
    DegenerateInput(&'static str),
    /// Point projects from behind the camera (non-positive depth).
    #[error("point behind camera: z_c = {z_c} mm")]
    BehindCamera { z_c: f64 },
    /// A 3×3 matrix failed the rotation invariants.
    #[error("matrix is not a rotation: {0}")]
    NotARotation(&'static str),
}

/// A member of SO(3): orthonormal columns, determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validate and wrap a matrix. Fails if columns are not orthonormal or
    /// the determinant is not +1, both within [`ROTATION_TOL`].
    pub fn try_new(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let gram = m.transpose() * m;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if !ortho_err.is_finite() || ortho_err > ROTATION_TOL {
            return Err(GeometryError::NotARotation("columns not orthonormal"));
        }
        if (m.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::NotARotation("determinant != +1"));
        }
        Ok(Self(m))
    }

    /// Wrap without validation. Caller guarantees the invariants hold.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Rotation about a (not necessarily unit) axis by `angle` radians.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let unit = nalgebra::Unit::new_normalize(axis);
        Self(nalgebra::Rotation3::from_axis_angle(&unit, angle).into_inner())
    }

    /// Intrinsic x·y·z Euler composition: `Rx(ax) · Ry(ay) · Rz(az)`.
    pub fn from_euler_xyz(ax: f64, ay: f64, az: f64) -> Self {
        let rx = Self::from_axis_angle(Vector3::x(), ax);
        let ry = Self::from_axis_angle(Vector3::y(), ay);
        let rz = Self::from_axis_angle(Vector3::z(), az);
        Self(rx.0 * ry.0 * rz.0)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Apply to a point/vector.
    pub fn rotate(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Row-major element dump, used by the manifest format.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(e: [f64; 9]) -> Result<Self, GeometryError> {
        Self::try_new(Matrix3::new(
            e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8],
        ))
    }

    /// Maximum deviation of `RᵀR` from the identity.
    pub fn orthonormality_drift(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

/// The continuous 6D rotation representation: the first two columns of a
/// rotation matrix, flattened as `[r1x, r1y, r1z, r2x, r2y, r2z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rot6(pub [f64; 6]);

impl Rot6 {
    pub fn first(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn second(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }
}

/// Camera extrinsics `[R|t]`: world point `v` maps to camera space as
/// `R·v + t`, with `t` in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: RotationMatrix::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Map a world-space point into camera space.
    pub fn transform_point(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(v) + self.translation
    }

    pub fn to_transform(&self) -> Transform {
        Transform::from_rotation_translation(self.rotation, self.translation)
    }
}

// The manifest stores poses as 9 row-major rotation entries + 3 translation
// entries (mm); keep the wire form explicit rather than leaking matrix layout.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation_row_major: [f64; 9],
    translation_mm: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            rotation_row_major: self.rotation.to_row_major(),
            translation_mm: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(de)?;
        let rotation = RotationMatrix::from_row_major(repr.rotation_row_major)
            .map_err(serde::de::Error::custom)?;
        Ok(Pose {
            rotation,
            translation: Vector3::new(
                repr.translation_mm[0],
                repr.translation_mm[1],
                repr.translation_mm[2],
            ),
        })
    }
}

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Moderate-field-of-view default for a `width`×`height` image: focal
    /// length 1.2× the larger dimension, principal point at the center.
    pub fn default_for_size(width: u32, height: u32) -> Self {
        let f = 1.2 * f64::from(width.max(height));
        Self {
            fx: f,
            fy: f,
            cx: f64::from(width) / 2.0,
            cy: f64::from(height) / 2.0,
        }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::NotARotation("focal lengths must be positive"));
        }
        let (w, h) = (f64::from(width), f64::from(height));
        if !(0.0..w).contains(&self.cx) || !(0.0..h).contains(&self.cy) {
            return Err(GeometryError::NotARotation("principal point outside image"));
        }
        Ok(())
    }
}

/// A 4×4 homogeneous rigid transform; the bottom row is exactly `[0,0,0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform(Matrix4<f64>);

impl Transform {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_rotation_translation(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self(m)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_rotation_translation(RotationMatrix::identity(), translation)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn transform_point(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rotation() * v + self.translation()
    }
}

impl std::ops::Mul for Transform {
    type Output = Transform;

    fn mul(self, rhs: Self) -> Self {
        // Compose rotation/translation blocks directly so the bottom row
        // stays exactly [0,0,0,1].
        let r = self.rotation() * rhs.rotation();
        let t = self.rotation() * rhs.translation() + self.translation();
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self(m)
    }
}

fn normalize_checked(v: Vector3<f64>, what: &'static str) -> Result<Vector3<f64>, GeometryError> {
    let n = v.norm();
    if !n.is_finite() || n < DEGENERACY_EPS {
        return Err(GeometryError::DegenerateInput(what));
    }
    Ok(v / n)
}

/// Recover a rotation matrix from the 6D representation by Gram–Schmidt:
/// `b1 = μ(r1)`, `b2 = μ(r2 − (b1·r2) b1)`, `b3 = b1 × b2`, assembled as
/// columns `[b1 | b2 | b3]`.
pub fn r6_to_rotation(r6: Rot6) -> Result<RotationMatrix, GeometryError> {
    let b1 = normalize_checked(r6.first(), "first column near zero")?;
    let r2 = r6.second();
    let residual = r2 - b1.dot(&r2) * b1;
    let b2 = normalize_checked(residual, "second column parallel to first")?;
    let b3 = b1.cross(&b2);
    Ok(RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(
        &[b1, b2, b3],
    )))
}

/// Flatten the first two columns of a rotation matrix into the 6D form.
pub fn rotation_to_r6(rotation: &RotationMatrix) -> Rot6 {
    let m = rotation.matrix();
    Rot6([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ])
}

/// Geodesic distance on SO(3) in radians: `arccos((Tr(RaᵀRb) − 1) / 2)`,
/// with the arccos argument clamped to [−1, 1] to absorb round-off.
pub fn rotation_geodesic_distance(ra: &RotationMatrix, rb: &RotationMatrix) -> f64 {
    let trace = (ra.matrix().transpose() * rb.matrix()).trace();
    let arg = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    arg.acos()
}

/// Squared Frobenius distance `‖Rb − Ra‖²_F`.
pub fn rotation_frobenius_sq(ra: &RotationMatrix, rb: &RotationMatrix) -> f64 {
    let d = rb.matrix() - ra.matrix();
    d.iter().map(|x| x * x).sum()
}

/// Translation error decomposition, in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslationError {
    /// Euclidean norm of the difference.
    pub total: f64,
    /// Absolute per-axis differences, for the depth-dominance analysis.
    pub per_axis: Vector3<f64>,
}

pub fn translation_error(ta: Vector3<f64>, tb: Vector3<f64>) -> TranslationError {
    let d = tb - ta;
    TranslationError {
        total: d.norm(),
        per_axis: d.abs(),
    }
}

/// Re-orthonormalize by Gram–Schmidt on the first two columns. Only used to
/// undo sub-1e-12 drift, where the first-column bias is negligible.
fn reorthonormalize(m: Matrix3<f64>) -> RotationMatrix {
    let r6 = Rot6([
        m[(0, 0)],
        m[(1, 0)],
        m[(2, 0)],
        m[(0, 1)],
        m[(1, 1)],
        m[(2, 1)],
    ]);
    r6_to_rotation(r6).expect("drifted rotation is far from degenerate")
}

/// Apply a rigid transform to a pose: the homogeneous product `T · P`,
/// re-split into rotation + translation.
pub fn compose_pose(transform: &Transform, pose: &Pose) -> Pose {
    let r = transform.rotation() * pose.rotation.matrix();
    let t = transform.rotation() * pose.translation + transform.translation();
    let candidate = RotationMatrix::from_matrix_unchecked(r);
    let rotation = if candidate.orthonormality_drift() > COMPOSE_DRIFT_TOL {
        reorthonormalize(r)
    } else {
        candidate
    };
    Pose::new(rotation, t)
}

/// A rotation about `centroid` followed by a translation offset:
/// `translate(centroid + jitter) · rotate · translate(−centroid)`.
/// With zero jitter the centroid is a fixed point.
pub fn centroid_centered_transform(
    rotation: RotationMatrix,
    centroid: Vector3<f64>,
    translation_jitter: Vector3<f64>,
) -> Transform {
    let pre = Transform::from_translation(-centroid);
    let rot = Transform::from_rotation_translation(rotation, Vector3::zeros());
    let post = Transform::from_translation(centroid + translation_jitter);
    post * rot * pre
}

/// Project a world-space point through pose and intrinsics to pixel
/// coordinates `(fx·x/z + cx, fy·y/z + cy)`.
pub fn project_point(
    intrinsics: &Intrinsics,
    pose: &Pose,
    v: Vector3<f64>,
) -> Result<(f64, f64), GeometryError> {
    let cam = pose.transform_point(v);
    if cam.z <= 0.0 {
        return Err(GeometryError::BehindCamera { z_c: cam.z });
    }
    Ok((
        intrinsics.fx * cam.x / cam.z + intrinsics.cx,
        intrinsics.fy * cam.y / cam.z + intrinsics.cy,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent random-rotation oracle: normalized quaternion → matrix.
    pub(crate) fn random_rotation(rng: &mut impl Rng) -> RotationMatrix {
        loop {
            let q = [
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0f64),
            ];
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-3 {
                continue;
            }
            let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
            // Standard quaternion-to-matrix expansion.
            let m = Matrix3::new(
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            );
            return RotationMatrix::from_matrix_unchecked(m);
        }
    }

    /// Quaternion angle oracle: 2·arccos(|⟨qa,qb⟩|) via nalgebra conversion.
    pub(crate) fn quaternion_angle(ra: &RotationMatrix, rb: &RotationMatrix) -> f64 {
        let qa = nalgebra::UnitQuaternion::from_matrix(ra.matrix());
        let qb = nalgebra::UnitQuaternion::from_matrix(rb.matrix());
        let dot = qa.coords.dot(&qb.coords).abs().clamp(0.0, 1.0);
        2.0 * dot.acos()
    }

    #[test]
    fn r6_identity_basis() {
        let r = r6_to_rotation(Rot6([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(r.matrix(), &Matrix3::identity());
    }

    #[test]
    fn r6_removes_scale_and_skew() {
        // Hand Gram–Schmidt: [2,0,0] normalizes to e1; [1,1,0] minus its
        // e1 component leaves [0,1,0]; cross gives e3.
        let r = r6_to_rotation(Rot6([2.0, 0.0, 0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_relative_eq!(r.matrix(), &Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn r6_zero_first_column_degenerate() {
        let err = r6_to_rotation(Rot6([0.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateInput(_)));
    }

    #[test]
    fn r6_parallel_columns_degenerate() {
        let err = r6_to_rotation(Rot6([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateInput(_)));
    }

    #[test]
    fn rotation_to_r6_identity() {
        let r6 = rotation_to_r6(&RotationMatrix::identity());
        assert_eq!(r6.0, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn rotation_to_r6_z90() {
        // 90° about z maps e1→e2 and e2→−e1; columns read accordingly.
        let r = RotationMatrix::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2);
        let r6 = rotation_to_r6(&r);
        let expected = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        for (a, b) in r6.0.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn r6_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let r = random_rotation(&mut rng);
            let back = r6_to_rotation(rotation_to_r6(&r)).unwrap();
            let err = (back.matrix() - r.matrix()).abs().max();
            assert!(err < 1e-9, "round-trip error {err}");
            assert!(back.orthonormality_drift() < 1e-9);
            assert!((back.matrix().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn geodesic_identity_and_pi() {
        let i = RotationMatrix::identity();
        assert_eq!(rotation_geodesic_distance(&i, &i), 0.0);
        let flip = RotationMatrix::from_axis_angle(Vector3::x(), std::f64::consts::PI);
        assert_relative_eq!(
            rotation_geodesic_distance(&i, &flip),
            std::f64::consts::PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn geodesic_matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let ra = random_rotation(&mut rng);
            let rb = random_rotation(&mut rng);
            let d = rotation_geodesic_distance(&ra, &rb);
            let oracle = quaternion_angle(&ra, &rb);
            assert!((d - oracle).abs() < 1e-6, "d={d} oracle={oracle}");
            assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&d));
            // Symmetry.
            assert_relative_eq!(d, rotation_geodesic_distance(&rb, &ra), epsilon = 1e-12);
        }
    }

    #[test]
    fn frobenius_cases() {
        let i = RotationMatrix::identity();
        assert_eq!(rotation_frobenius_sq(&i, &i), 0.0);
        // 180° about z is diag(−1,−1,1): two entries differ by 2.
        let flip = RotationMatrix::from_axis_angle(Vector3::z(), std::f64::consts::PI);
        assert_relative_eq!(rotation_frobenius_sq(&i, &flip), 8.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ra = random_rotation(&mut rng);
        let rb = random_rotation(&mut rng);
        let brute: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| {
                let d = rb.matrix()[(i, j)] - ra.matrix()[(i, j)];
                d * d
            })
            .sum();
        assert_relative_eq!(rotation_frobenius_sq(&ra, &rb), brute, epsilon = 1e-14);
    }

    #[test]
    fn translation_error_cases() {
        let e = translation_error(Vector3::zeros(), Vector3::zeros());
        assert_eq!(e.total, 0.0);
        assert_eq!(e.per_axis, Vector3::zeros());

        let e = translation_error(Vector3::zeros(), Vector3::new(3.0, 4.0, 0.0));
        assert_relative_eq!(e.total, 5.0, epsilon = 1e-15);
        assert_eq!(e.per_axis, Vector3::new(3.0, 4.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ta = Vector3::new(
            rng.random_range(-50.0..50.0f64),
            rng.random_range(-50.0..50.0f64),
            rng.random_range(-50.0..50.0f64),
        );
        let tb = Vector3::new(
            rng.random_range(-50.0..50.0f64),
            rng.random_range(-50.0..50.0f64),
            rng.random_range(-50.0..50.0f64),
        );
        let brute = ((tb[0] - ta[0]).powi(2) + (tb[1] - ta[1]).powi(2) + (tb[2] - ta[2]).powi(2))
            .sqrt();
        assert_relative_eq!(translation_error(ta, tb).total, brute, epsilon = 1e-14);
    }

    #[test]
    fn compose_pose_cases() {
        let p = Pose::new(
            RotationMatrix::from_axis_angle(Vector3::y(), 0.3),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let composed = compose_pose(&Transform::identity(), &p);
        assert_eq!(composed, p);

        let d = Vector3::new(5.0, -1.0, 2.0);
        let shifted = compose_pose(&Transform::from_translation(d), &Pose::identity());
        assert_eq!(shifted.translation, d);
        assert_eq!(shifted.rotation, RotationMatrix::identity());
    }

    #[test]
    fn compose_pose_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let t = Transform::from_rotation_translation(
                random_rotation(&mut rng),
                Vector3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ),
            );
            let p = Pose::new(
                random_rotation(&mut rng),
                Vector3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ),
            );
            let composed = compose_pose(&t, &p);
            let oracle = t.matrix() * p.to_transform().matrix();
            let got = composed.to_transform();
            let err = (got.matrix() - oracle).abs().max();
            assert!(err < 1e-12, "compose error {err}");
        }
    }

    #[test]
    fn compose_associative_with_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = Transform::from_rotation_translation(
                random_rotation(&mut rng),
                Vector3::new(rng.random_range(-5.0..5.0), 0.3, -1.0),
            );
            let b = Transform::from_rotation_translation(
                random_rotation(&mut rng),
                Vector3::new(0.1, rng.random_range(-5.0..5.0), 2.0),
            );
            let p = Pose::new(random_rotation(&mut rng), Vector3::new(0.0, 1.0, 4.0));
            let left = compose_pose(&a, &compose_pose(&b, &p));
            let right = compose_pose(&(a * b), &p);
            let err = (left.to_transform().matrix() - right.to_transform().matrix())
                .abs()
                .max();
            assert!(err < 1e-9, "associativity error {err}");
        }
    }

    #[test]
    fn centroid_transform_identity_and_fixed_point() {
        let t = centroid_centered_transform(
            RotationMatrix::identity(),
            Vector3::new(3.0, -2.0, 7.0),
            Vector3::zeros(),
        );
        assert_eq!(t, Transform::identity());

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let c = Vector3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            );
            let t = centroid_centered_transform(random_rotation(&mut rng), c, Vector3::zeros());
            let moved = t.transform_point(c);
            assert!((moved - c).norm() < 1e-9, "centroid moved by {}", (moved - c).norm());
        }
    }

    #[test]
    fn centroid_transform_hand_example() {
        // 90° about z pivoting on (1,0,0): the point (2,0,0) sits one unit
        // along +x of the pivot and ends one unit along +y of it.
        let t = centroid_centered_transform(
            RotationMatrix::from_axis_angle(Vector3::z(), std::f64::consts::FRAC_PI_2),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::zeros(),
        );
        let p = t.transform_point(Vector3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(p, Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn project_point_cases() {
        let k = Intrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 64.0,
        };
        // On the optical axis: lands on the principal point.
        let (x, y) = project_point(&k, &Pose::identity(), Vector3::new(0.0, 0.0, 50.0)).unwrap();
        assert_eq!((x, y), (64.0, 64.0));

        // With the long microscope focal length: 18466 * 1/100 px offset.
        let k_paper = Intrinsics {
            fx: 18466.0,
            fy: 19172.0,
            cx: 128.0,
            cy: 128.0,
        };
        let (x, _) =
            project_point(&k_paper, &Pose::identity(), Vector3::new(1.0, 0.0, 100.0)).unwrap();
        assert_relative_eq!(x, 128.0 + 184.66, epsilon = 1e-9);

        let err = project_point(&k, &Pose::identity(), Vector3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert!(matches!(err, GeometryError::BehindCamera { .. }));
    }

    #[test]
    fn project_point_scale_consistent() {
        let k = Intrinsics {
            fx: 320.0,
            fy: 300.0,
            cx: 120.0,
            cy: 130.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let v = Vector3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(20.0..80.0),
            );
            let s = rng.random_range(0.5..4.0);
            let a = project_point(&k, &Pose::identity(), v).unwrap();
            let b = project_point(&k, &Pose::identity(), v * s).unwrap();
            assert_relative_eq!(a.0, b.0, epsilon = 1e-9);
            assert_relative_eq!(a.1, b.1, epsilon = 1e-9);
        }
    }

    #[test]
    fn pose_serde_round_trip() {
        let p = Pose::new(
            RotationMatrix::from_euler_xyz(0.2, -0.4, 1.1),
            Vector3::new(4.0, -2.5, 90.0),
        );
        let json = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn rotation_validation_rejects_garbage() {
        let bad = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix::try_new(bad).is_err());
        // Reflections have det −1.
        let mirror = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(RotationMatrix::try_new(mirror).is_err());
    }
}
