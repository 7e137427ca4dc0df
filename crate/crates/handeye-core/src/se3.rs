//! SE(3) rigid-body transforms, roll-pitch-yaw conversions, and pose-error
//! decomposition.
//!
//! Every frame change in the toolkit goes through [`RigidTransform`]. All
//! angles are radians and all lengths meters; millimeters/degrees appear only
//! in the reporting type [`PoseError`].

#[allow(unused_imports)]
use num_traits::Float;

use core::f64::consts::{PI, TAU};
use nalgebra::{Matrix3, Matrix4, Vector3};

/// Tolerance for the orthonormality and determinant invariants.
pub const ROTATION_TOL: f64 = 1e-9;

/// A proper rigid transform: orthonormal rotation (det = +1) plus a
/// translation in meters.
///
/// Composition follows homogeneous-matrix semantics: `a.compose(&b)` maps a
/// point first through `b`, then through `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    /// 3×3 orthonormal rotation matrix.
    pub rotation: Matrix3<f64>,
    /// Translation vector, meters.
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    /// The identity transform.
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from rotation and translation parts.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a transform from roll-pitch-yaw angles and a translation.
    pub fn from_rpy(rpy: RpyAngles, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation_from_rpy(rpy),
            translation,
        }
    }

    /// Checks the rotation invariants: `‖RᵀR − I‖_max < 1e-9` and
    /// `|det(R) − 1| < 1e-9`.
    pub fn is_valid(&self) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).amax();
        dev < ROTATION_TOL && (self.rotation.determinant() - 1.0).abs() < ROTATION_TOL
    }

    /// Homogeneous-matrix product `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// The inverse transform: `t.compose(&t.invert())` is the identity.
    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Applies the transform to a point: `R·p + t`.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// The 4×4 homogeneous matrix form.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Extracts rotation and translation from a homogeneous matrix.
    ///
    /// The caller is responsible for the matrix actually being rigid; use
    /// [`RigidTransform::is_valid`] to check.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Geodesic rotation angle of the rotation part, radians in [0, π].
    pub fn rotation_angle(&self) -> f64 {
        let c = (self.rotation.trace() - 1.0) / 2.0;
        c.clamp(-1.0, 1.0).acos()
    }
}

/// Roll-pitch-yaw angles in radians, each normalized into `(−π, π]`.
///
/// Convention: extrinsic (fixed-axis) XYZ. Roll rotates about x, pitch about
/// y, yaw about z, and the matrix is `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpyAngles {
    /// Rotation about the x axis, radians.
    pub roll: f64,
    /// Rotation about the y axis, radians.
    pub pitch: f64,
    /// Rotation about the z axis, radians.
    pub yaw: f64,
}

impl RpyAngles {
    /// Builds the angle triple, wrapping each component into `(−π, π]`.
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(yaw),
        }
    }

    /// The zero rotation.
    pub fn zero() -> Self {
        Self {
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }

    /// Components as `[roll, pitch, yaw]` in degrees.
    pub fn to_degrees(&self) -> [f64; 3] {
        [
            self.roll.to_degrees(),
            self.pitch.to_degrees(),
            self.yaw.to_degrees(),
        ]
    }
}

/// Wraps an angle into `(−π, π]`.
fn wrap_angle(x: f64) -> f64 {
    let mut a = x % TAU;
    if a > PI {
        a -= TAU;
    }
    if a <= -PI {
        a += TAU;
    }
    a
}

/// Rotation matrix for extrinsic-XYZ roll-pitch-yaw:
/// `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn rotation_from_rpy(rpy: RpyAngles) -> Matrix3<f64> {
    let (sr, cr) = rpy.roll.sin_cos();
    let (sp, cp) = rpy.pitch.sin_cos();
    let (sy, cy) = rpy.yaw.sin_cos();
    Matrix3::new(
        cp * cy,
        cy * sr * sp - cr * sy,
        cr * cy * sp + sr * sy,
        cp * sy,
        cr * cy + sr * sp * sy,
        cr * sp * sy - cy * sr,
        -sp,
        cp * sr,
        cr * cp,
    )
}

/// Extracts roll-pitch-yaw from a rotation matrix.
///
/// Returns the angles and a gimbal-lock flag. The flag is set when `|pitch|`
/// is within 1e-6 of π/2; roll and yaw are then no longer independent and
/// the split is fixed by the convention `roll = 0`.
pub fn rpy_from_rotation(m: &Matrix3<f64>) -> (RpyAngles, bool) {
    let sp = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    let locked = (pitch.abs() - PI / 2.0).abs() < 1e-6;
    if locked {
        // cos(pitch) ≈ 0: only roll ∓ yaw is observable; report roll = 0.
        let yaw = if pitch > 0.0 {
            -m[(0, 1)].atan2(m[(0, 2)])
        } else {
            (-m[(0, 1)]).atan2(-m[(0, 2)])
        };
        (RpyAngles::new(0.0, pitch, yaw), true)
    } else {
        let roll = m[(2, 1)].atan2(m[(2, 2)]);
        let yaw = m[(1, 0)].atan2(m[(0, 0)]);
        (RpyAngles::new(roll, pitch, yaw), false)
    }
}

/// Pose-error decomposition of a relative error transform, in reporting
/// units: translation in millimeters, rotation as roll-pitch-yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Translation error `[x, y, z]`, millimeters.
    pub delta_t: [f64; 3],
    /// Rotation error `[roll, pitch, yaw]`, degrees.
    pub delta_rpy: [f64; 3],
}

impl PoseError {
    /// All-zero error.
    pub fn zero() -> Self {
        Self {
            delta_t: [0.0; 3],
            delta_rpy: [0.0; 3],
        }
    }
}

/// Decomposes a relative error transform (e.g. `Ĥ⁻¹ · H_true`) into
/// translation (mm) and roll-pitch-yaw (degrees) components.
pub fn pose_error(t: &RigidTransform) -> PoseError {
    let (rpy, _) = rpy_from_rotation(&t.rotation);
    PoseError {
        delta_t: [
            t.translation.x * 1000.0,
            t.translation.y * 1000.0,
            t.translation.z * 1000.0,
        ],
        delta_rpy: rpy.to_degrees(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// Seeded random transform with |angles| < limit and |translation| < 1 m.
    fn random_transform(rng: &mut ChaCha12Rng, angle_limit: f64) -> RigidTransform {
        let rpy = RpyAngles::new(
            rng.random_range(-angle_limit..angle_limit),
            rng.random_range(-angle_limit..angle_limit),
            rng.random_range(-angle_limit..angle_limit),
        );
        let t = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        RigidTransform::from_rpy(rpy, t)
    }

    fn rz(angle: f64) -> Matrix3<f64> {
        rotation_from_rpy(RpyAngles::new(0.0, 0.0, angle))
    }

    #[test]
    fn compose_with_identity_is_noop() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let t = random_transform(&mut rng, 3.0);
        let id = RigidTransform::identity();
        assert_relative_eq!(
            t.compose(&id).to_homogeneous(),
            t.to_homogeneous(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            id.compose(&t).to_homogeneous(),
            t.to_homogeneous(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn compose_with_inverse_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = random_transform(&mut rng, 3.0);
            let loop_closed = t.compose(&t.invert());
            assert_relative_eq!(
                loop_closed.to_homogeneous(),
                Matrix4::identity(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn compose_matches_hand_multiplied_matrices() {
        // Oracle: the 4×4 product of Rz(90°)+t=(1,0,0) and Rz(90°)+t=0,
        // multiplied out by hand:
        //   [0 -1 0 1]   [0 -1 0 0]   [-1  0 0 1]
        //   [1  0 0 0] · [1  0 0 0] = [ 0 -1 0 0]
        //   [0  0 1 0]   [0  0 1 0]   [ 0  0 1 0]
        //   [0  0 0 1]   [0  0 0 1]   [ 0  0 0 1]
        // i.e. Rz(180°) with translation (1,0,0).
        let a = RigidTransform::new(rz(PI / 2.0), Vector3::new(1.0, 0.0, 0.0));
        let b = RigidTransform::new(rz(PI / 2.0), Vector3::zeros());
        let expected = Matrix4::new(
            -1.0, 0.0, 0.0, 1.0, //
            0.0, -1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        assert_relative_eq!(a.compose(&b).to_homogeneous(), expected, epsilon = 1e-12);
    }

    #[test]
    fn invert_identity_and_pure_translation() {
        let id = RigidTransform::identity();
        assert_relative_eq!(
            id.invert().to_homogeneous(),
            Matrix4::identity(),
            epsilon = 1e-15
        );

        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0));
        let inv = t.invert();
        assert_relative_eq!(inv.rotation, Matrix3::identity(), epsilon = 1e-15);
        assert_relative_eq!(inv.translation, Vector3::new(-1.0, -2.0, -3.0), epsilon = 1e-15);
    }

    #[test]
    fn transform_point_examples() {
        let id = RigidTransform::identity();
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_relative_eq!(id.transform_point(&p), p, epsilon = 1e-15);

        // Rotation by 90° about z maps x̂ to ŷ.
        let r = RigidTransform::new(rz(PI / 2.0), Vector3::zeros());
        assert_relative_eq!(
            r.transform_point(&Vector3::new(1.0, 0.0, 0.0)),
            Vector3::new(0.0, 1.0, 0.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn transform_point_ground_truth_translation() {
        // The simulation ground-truth camera-mount matrix: applying it to the
        // origin must return exactly its translation column.
        let h = RigidTransform::new(
            Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0),
            Vector3::new(0.6, -0.0125, 1.0),
        );
        assert!(h.is_valid());
        assert_relative_eq!(
            h.transform_point(&Vector3::zeros()),
            Vector3::new(0.6, -0.0125, 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rpy_zero_is_identity() {
        assert_relative_eq!(
            rotation_from_rpy(RpyAngles::zero()),
            Matrix3::identity(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rpy_matches_camera_mount_rotation() {
        // Roll ≈ π, yaw ≈ −π/2 (truncated decimals) produce a matrix within
        // ~1e-3 of rows (0,−1,0 / −1,0,0 / 0,0,−1); the residual comes from
        // the 0.0008-rad truncation of π and π/2 in the angle values.
        let m = rotation_from_rpy(RpyAngles::new(3.1415, 0.0, -1.57));
        let target = Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        assert!((m - target).amax() < 1.5e-3, "deviation {}", (m - target).amax());
    }

    #[test]
    fn rpy_round_trip_away_from_gimbal_lock() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let rpy = RpyAngles::new(
                rng.random_range(-PI..PI),
                rng.random_range(-1.4..1.4),
                rng.random_range(-PI..PI),
            );
            let (back, locked) = rpy_from_rotation(&rotation_from_rpy(rpy));
            assert!(!locked);
            assert_relative_eq!(back.roll, rpy.roll, epsilon = 1e-9);
            assert_relative_eq!(back.pitch, rpy.pitch, epsilon = 1e-9);
            assert_relative_eq!(back.yaw, rpy.yaw, epsilon = 1e-9);
        }
    }

    #[test]
    fn rpy_gimbal_lock_flags_and_reconstructs() {
        // At pitch = ±π/2 only roll∓yaw is observable; the convention pins
        // roll = 0 and the reconstructed matrix must still match.
        for &pitch in &[PI / 2.0, -PI / 2.0] {
            let rpy = RpyAngles::new(0.3, pitch, -0.8);
            let m = rotation_from_rpy(rpy);
            let (back, locked) = rpy_from_rotation(&m);
            assert!(locked);
            assert_eq!(back.roll, 0.0);
            assert_relative_eq!(rotation_from_rpy(back), m, epsilon = 1e-9);
        }
    }

    #[test]
    fn angles_wrap_into_half_open_interval() {
        let a = RpyAngles::new(3.0 * PI, -PI, TAU + 0.25);
        assert_relative_eq!(a.roll, PI, epsilon = 1e-12);
        assert_relative_eq!(a.pitch, PI, epsilon = 1e-12); // −π maps to π
        assert_relative_eq!(a.yaw, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn pose_error_examples() {
        assert_eq!(pose_error(&RigidTransform::identity()), PoseError::zero());

        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(0.001, 0.0, 0.0));
        let e = pose_error(&t);
        assert_relative_eq!(e.delta_t[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.delta_t[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(e.delta_t[2], 0.0, epsilon = 1e-12);

        let r = RigidTransform::new(rz(0.2_f64.to_radians()), Vector3::zeros());
        let e = pose_error(&r);
        assert_relative_eq!(e.delta_rpy[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(e.delta_rpy[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(e.delta_rpy[2], 0.2, epsilon = 1e-9);
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = random_transform(&mut rng, 3.0);
            let b = random_transform(&mut rng, 3.0);
            let c = random_transform(&mut rng, 3.0);
            assert_relative_eq!(
                a.compose(&b).compose(&c).to_homogeneous(),
                a.compose(&b.compose(&c)).to_homogeneous(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn transform_is_an_isometry() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t = random_transform(&mut rng, 3.0);
            let p = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let q = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let d0 = (p - q).norm();
            let d1 = (t.transform_point(&p) - t.transform_point(&q)).norm();
            assert_relative_eq!(d0, d1, epsilon = 1e-9);
        }
    }

    #[test]
    fn frame_chain_closes_around_a_loop() {
        // Closed-loop identity: hopping a → b → c → d → a through relative
        // transforms built from consistent world poses composes to identity.
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..20 {
            let poses: alloc::vec::Vec<RigidTransform> =
                (0..4).map(|_| random_transform(&mut rng, 3.0)).collect();
            let rel = |i: usize, j: usize| poses[i].invert().compose(&poses[j]);
            let chain = rel(0, 1)
                .compose(&rel(1, 2))
                .compose(&rel(2, 3))
                .compose(&rel(3, 0));
            assert_relative_eq!(
                chain.to_homogeneous(),
                Matrix4::identity(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn random_transforms_satisfy_rotation_invariants() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..100 {
            let t = random_transform(&mut rng, 3.0);
            assert!(t.is_valid());
            assert!(t.invert().is_valid());
        }
    }

    #[test]
    fn rotation_angle_measures_geodesic_distance() {
        assert_relative_eq!(RigidTransform::identity().rotation_angle(), 0.0);
        let r = RigidTransform::new(rz(0.3), Vector3::zeros());
        assert_relative_eq!(r.rotation_angle(), 0.3, epsilon = 1e-12);
    }
}
