//! Closed-form least-squares estimation of a rigid (optionally scaled)
//! transform from paired 3D points.
//!
//! Solves `min Σ ‖c·R·p_cam + t − p_base‖²` by SVD of the cross-covariance,
//! with a reflection guard keeping `det(R) = +1`.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::string::String;
use nalgebra::{Matrix3, Vector3};

use crate::error::Error;
use crate::se3::RigidTransform;

/// Coplanarity gate: the smallest singular value of the centered base-point
/// matrix must exceed this.
pub const COPLANARITY_TOL: f64 = 1e-9;

/// One calibration observation: the same physical TCP seen in the camera
/// frame and in the robot-base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    /// TCP position measured by the camera, camera frame, meters.
    pub p_cam: Vector3<f64>,
    /// TCP position reported by the robot, base frame, meters. For a flange
    /// TCP this equals the robot pose's translation.
    pub p_base: Vector3<f64>,
    /// Flange pose in the base frame at the time of capture.
    pub robot_pose: RigidTransform,
    /// Optional identifier of the source cloud (file name or index).
    pub cloud_ref: Option<String>,
}

impl SamplePair {
    /// Builds a pair from a robot pose and the camera-side TCP observation;
    /// the base-side point is the pose translation.
    pub fn from_pose(robot_pose: RigidTransform, p_cam: Vector3<f64>) -> Self {
        Self {
            p_cam,
            p_base: robot_pose.translation,
            robot_pose,
            cloud_ref: None,
        }
    }
}

/// Result of a rigid/similarity fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Estimated camera-to-base transform.
    pub transform: RigidTransform,
    /// Estimated scale factor; exactly 1 when fitted without scale.
    pub scale: f64,
    /// Root of the mean squared per-pair residual, meters.
    pub residual_rms: f64,
}

/// Least-squares rigid fit of `p_base ≈ c·R·p_cam + t` over ≥ 4 non-coplanar
/// pairs.
///
/// The rotation is `R = U·S·Vᵀ` from the SVD of the cross-covariance
/// `Σ = (1/n) Σ (b−μ_b)(c−μ_c)ᵀ`, with `S = diag(1,1,−1)` when `det(Σ) < 0`
/// so the result is always a proper rotation. With `with_scale` the scale is
/// `c = tr(D·S) / σ²_cam`; otherwise `c = 1` exactly.
pub fn fit_rigid(pairs: &[SamplePair], with_scale: bool) -> Result<FitResult, Error> {
    let n = pairs.len();
    if n < 4 {
        return Err(Error::DegenerateConfiguration {
            reason: "fewer than 4 pairs",
        });
    }

    let nf = n as f64;
    let mu_base: Vector3<f64> = pairs.iter().map(|p| p.p_base).sum::<Vector3<f64>>() / nf;
    let mu_cam: Vector3<f64> = pairs.iter().map(|p| p.p_cam).sum::<Vector3<f64>>() / nf;

    // Coplanarity test: smallest singular value of the 3×n centered
    // base-point matrix, via the eigenvalues of its 3×3 Gram matrix.
    let mut gram = Matrix3::zeros();
    for p in pairs {
        let d = p.p_base - mu_base;
        gram += d * d.transpose();
    }
    let min_eig = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if min_eig.max(0.0).sqrt() <= COPLANARITY_TOL {
        return Err(Error::DegenerateConfiguration {
            reason: "base points are coplanar",
        });
    }

    let mut sigma = Matrix3::zeros();
    let mut var_cam = 0.0;
    for p in pairs {
        let db = p.p_base - mu_base;
        let dc = p.p_cam - mu_cam;
        sigma += db * dc.transpose() / nf;
        var_cam += dc.norm_squared() / nf;
    }

    let svd = sigma.svd(true, true);
    let (u, d, v_t) = sorted_svd(&svd);
    let reflect = sigma.determinant() < 0.0;
    let s_last = if reflect { -1.0 } else { 1.0 };
    let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s_last));

    let rotation = u * s * v_t;
    let scale = if with_scale {
        (d.x + d.y + s_last * d.z) / var_cam
    } else {
        1.0
    };
    let translation = mu_base - scale * (rotation * mu_cam);
    let transform = RigidTransform::new(rotation, translation);

    let fit = FitResult {
        transform,
        scale,
        residual_rms: 0.0,
    };
    let residual_rms = residual_rms(pairs, &fit);
    Ok(FitResult {
        residual_rms,
        ..fit
    })
}

/// Returns `(U, singular values, Vᵀ)` with singular values sorted
/// descending, columns permuted consistently.
fn sorted_svd(
    svd: &nalgebra::SVD<f64, nalgebra::Const<3>, nalgebra::Const<3>>,
) -> (Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let u = svd.u.expect("SVD requested with u");
    let v_t = svd.v_t.expect("SVD requested with v_t");
    let sv = svd.singular_values;
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
    let mut u2 = Matrix3::zeros();
    let mut vt2 = Matrix3::zeros();
    let mut d = Vector3::zeros();
    for (new, &old) in idx.iter().enumerate() {
        u2.set_column(new, &u.column(old));
        vt2.set_row(new, &v_t.row(old));
        d[new] = sv[old];
    }
    (u2, d, vt2)
}

/// Root of the mean squared per-pair residual
/// `‖c·R·p_cam + t − p_base‖` under a fit.
pub fn residual_rms(pairs: &[SamplePair], fit: &FitResult) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            let predicted = fit.scale * (fit.transform.rotation * p.p_cam)
                + fit.transform.translation;
            (predicted - p.p_base).norm_squared()
        })
        .sum();
    (sum / pairs.len() as f64).sqrt()
}

/// Rotation + translation from ≥ 3 point correspondences, tolerating
/// coplanar (rank-2) configurations — the inner solver for ICP, where
/// matched clouds are often planar.
///
/// Uses the `S = diag(1,1,det(U)·det(V))` rule, which picks the proper
/// rotation even when the smallest singular value vanishes. Returns `None`
/// for fewer than 3 correspondences or rank < 2 (e.g. collinear points).
pub(crate) fn kabsch(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> Option<RigidTransform> {
    let n = pairs.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mu_src: Vector3<f64> = pairs.iter().map(|p| p.0).sum::<Vector3<f64>>() / nf;
    let mu_dst: Vector3<f64> = pairs.iter().map(|p| p.1).sum::<Vector3<f64>>() / nf;
    let mut sigma = Matrix3::zeros();
    for (s, t) in pairs {
        sigma += (t - mu_dst) * (s - mu_src).transpose() / nf;
    }
    let svd = sigma.svd(true, true);
    let (u, d, v_t) = sorted_svd(&svd);
    if d.y <= 1e-15 {
        return None; // rank < 2: rotation not determined
    }
    let sign = (u.determinant() * v_t.determinant()).signum();
    let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * s * v_t;
    let translation = mu_dst - rotation * mu_src;
    Some(RigidTransform::new(rotation, translation))
}
