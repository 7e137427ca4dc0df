//! Point-to-point ICP registration and the cloud-based calibration error
//! metric.
//!
//! The verification-time error of an estimated camera-to-base transform is
//! measured by registering the camera's measured flange cloud onto the cloud
//! *predicted* from the estimate: the registration transform equals
//! `estimate⁻¹ ∘ truth`, so a perfect estimate registers with the identity.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;
use nalgebra::Vector3;

use crate::cloud::PointCloud;
use crate::error::Error;
use crate::kdtree::KdTree;
use crate::rigid::kabsch;
use crate::se3::{pose_error, rpy_from_rotation, PoseError, RigidTransform};

/// ICP configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    /// Iteration budget.
    pub max_iterations: usize,
    /// Correspondence gate: source points farther than this from every
    /// target point are dropped for the iteration, meters.
    pub max_correspondence_distance: f64,
    /// Convergence test on the change of the correspondence RMS between
    /// iterations, meters.
    pub convergence_eps: f64,
    /// Registrations whose final RMS exceeds this are reported as failed,
    /// meters.
    pub failure_rms: f64,
    /// Trust radius on a verification delta, meters: a registration that
    /// has to move the measurement farther than this no longer verifies the
    /// transform under test — it is reported as a failed metric instead.
    pub max_delta: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            max_correspondence_distance: 0.010,
            convergence_eps: 1e-6,
            failure_rms: 0.005,
            max_delta: 1.0,
        }
    }
}

/// Outcome of a successful ICP run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// Cumulative source-to-target transform.
    pub transform: RigidTransform,
    /// RMS correspondence distance at the final iteration, meters.
    pub rms: f64,
    /// Iterations performed.
    pub iterations: usize,
    /// Whether the RMS change fell below `convergence_eps` in budget.
    pub converged: bool,
}

/// Registers `source` onto `target`, starting from `initial`.
///
/// Each iteration matches every transformed source point to its nearest
/// target point inside the correspondence gate, solves the least-squares
/// rigid update over those matches, and accumulates it. Planar clouds are
/// fine: the inner solver tolerates rank-2 correspondence sets.
pub fn icp_register(
    source: &PointCloud,
    target: &PointCloud,
    initial: &RigidTransform,
    params: &IcpParams,
) -> Result<Registration, Error> {
    let tree = KdTree::build(&target.points);
    let mut current = *initial;
    let mut prev_rms = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..params.max_iterations {
        iterations = iter + 1;
        let mut pairs: Vec<(Vector3<f64>, Vector3<f64>)> = Vec::with_capacity(source.len());
        for p in &source.points {
            let moved = current.transform_point(p);
            if let Some((idx, _)) = tree.nearest(&moved, params.max_correspondence_distance) {
                pairs.push((moved, target.points[idx]));
            }
        }
        if pairs.len() < 3 {
            return Err(Error::RegistrationFailed {
                reason: "fewer than 3 correspondences inside the gate",
            });
        }
        let update = kabsch(&pairs).ok_or(Error::RegistrationFailed {
            reason: "degenerate correspondence set",
        })?;
        current = update.compose(&current);

        let mut sq = 0.0;
        for (src, dst) in &pairs {
            sq += (update.transform_point(src) - dst).norm_squared();
        }
        let rms = (sq / pairs.len() as f64).sqrt();
        if (prev_rms - rms).abs() < params.convergence_eps {
            prev_rms = rms;
            converged = true;
            break;
        }
        prev_rms = rms;
    }

    if prev_rms > params.failure_rms {
        return Err(Error::RegistrationFailed {
            reason: "residual above the failure threshold",
        });
    }
    Ok(Registration {
        transform: current,
        rms: prev_rms,
        iterations,
        converged,
    })
}

/// Calibration error expressed as a rigid transform (`estimate⁻¹ ∘ truth`)
/// plus its translation/rotation breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpErrorMetric {
    /// The error transform; identity means a perfect estimate.
    pub delta: RigidTransform,
    /// The error split into millimeters and degrees.
    pub pose_error: PoseError,
    /// True when the metric could not be evaluated (failed registration);
    /// any cost of a failed metric is infinite.
    pub failed: bool,
}

impl IcpErrorMetric {
    /// Metric for a successfully determined error transform.
    pub fn from_delta(delta: RigidTransform) -> Self {
        Self {
            delta,
            pose_error: pose_error(&delta),
            failed: false,
        }
    }

    /// Sentinel for an unevaluable error (its cost is infinite).
    pub fn failed_metric() -> Self {
        Self {
            delta: RigidTransform::identity(),
            pose_error: PoseError::zero(),
            failed: true,
        }
    }
}

/// Scalar cost extracted from an error metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind {
    /// Norm of the translation error, meters.
    TranslationNorm,
    /// Translation error combined with rotation error scaled by a lever-arm
    /// radius (meters): ‖(δt, r·δroll, r·δpitch, r·δyaw)‖.
    CombinedWithRadius(f64),
    /// Norm of the in-plane (x, y) translation error, meters.
    XyOnly,
}

/// Evaluates a cost; failed metrics are infinitely bad.
pub fn cost(metric: &IcpErrorMetric, kind: CostKind) -> f64 {
    if metric.failed {
        return f64::INFINITY;
    }
    let t = metric.delta.translation;
    match kind {
        CostKind::TranslationNorm => t.norm(),
        CostKind::CombinedWithRadius(r) => {
            let (rpy, _) = rpy_from_rotation(&metric.delta.rotation);
            (t.norm_squared()
                + (r * rpy.roll).powi(2)
                + (r * rpy.pitch).powi(2)
                + (r * rpy.yaw).powi(2))
            .sqrt()
        }
        CostKind::XyOnly => (t.x * t.x + t.y * t.y).sqrt(),
    }
}

/// Cloud-based calibration error.
///
/// * `h_est` — estimated camera-to-base transform under test.
/// * `h_v` — robot flange pose (base frame) at the verification shot.
/// * `p_true` — flange surface model in the flange frame.
/// * `p_v_cam` — the cloud the camera measured at that pose.
///
/// The model cloud is placed where the *estimate* predicts it in camera
/// coordinates (`h_est⁻¹ ∘ h_v`), and the measured cloud is registered onto
/// that prediction. Measurement and prediction differ exactly by
/// `h_est⁻¹ ∘ h_truth`, which is what the registration recovers.
pub fn calibration_error(
    h_est: &RigidTransform,
    h_v: &RigidTransform,
    p_true: &PointCloud,
    p_v_cam: &PointCloud,
    params: &IcpParams,
) -> IcpErrorMetric {
    let predicted = p_true.transformed(&h_est.invert().compose(h_v));
    let initial = match (p_v_cam.centroid(), predicted.centroid()) {
        (Some(src), Some(dst)) => RigidTransform::new(nalgebra::Matrix3::identity(), dst - src),
        _ => return IcpErrorMetric::failed_metric(),
    };
    match icp_register(p_v_cam, &predicted, &initial, params) {
        Ok(reg) if reg.transform.translation.norm() <= params.max_delta => {
            IcpErrorMetric::from_delta(reg.transform)
        }
        _ => IcpErrorMetric::failed_metric(),
    }
}

/// Simulation-mode calibration error: with the true transform in hand the
/// error transform is formed directly, no registration needed.
pub fn calibration_error_sim(h_est: &RigidTransform, h_true: &RigidTransform) -> IcpErrorMetric {
    IcpErrorMetric::from_delta(h_est.invert().compose(h_true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::RpyAngles;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn box_cloud(n: usize, extent: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-extent..extent),
                        rng.random_range(-extent..extent),
                        rng.random_range(-extent..extent),
                    )
                })
                .collect(),
        )
    }

    fn disc_cloud(n: usize, radius: f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut pts = Vec::with_capacity(n);
        while pts.len() < n {
            let x = rng.random_range(-radius..radius);
            let y = rng.random_range(-radius..radius);
            if x * x + y * y <= radius * radius {
                pts.push(Vector3::new(x, y, 0.0));
            }
        }
        PointCloud::new(pts)
    }

    fn small_delta() -> RigidTransform {
        RigidTransform::from_rpy(
            RpyAngles::new(0.004, -0.003, 0.005),
            Vector3::new(0.8e-3, -0.5e-3, 0.3e-3),
        )
    }

    fn assert_transforms_close(a: &RigidTransform, b: &RigidTransform, tol: f64) {
        assert!(
            (a.translation - b.translation).norm() < tol,
            "translation differs by {}",
            (a.translation - b.translation).norm()
        );
        let residual = a.invert().compose(b).rotation_angle();
        assert!(residual < tol, "rotation differs by {residual} rad");
    }

    #[test]
    fn identical_clouds_register_as_identity() {
        let cloud = box_cloud(120, 0.05, 1);
        let reg = icp_register(
            &cloud,
            &cloud,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        assert_transforms_close(&reg.transform, &RigidTransform::identity(), 1e-12);
        assert!(reg.rms < 1e-12);
        assert!(reg.converged);
    }

    #[test]
    fn recovers_a_known_small_motion_exactly() {
        // Oracle by construction: target is the source moved by a known
        // transform; exact correspondences exist, so ICP must recover it to
        // numerical precision.
        let source = box_cloud(150, 0.05, 2);
        let truth = small_delta();
        let target = source.transformed(&truth);
        let reg = icp_register(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        assert_transforms_close(&reg.transform, &truth, 1e-9);
        assert!(reg.rms < 1e-9);
    }

    #[test]
    fn planar_clouds_register_despite_rank_two_geometry() {
        let source = disc_cloud(200, 0.031, 3);
        let truth = small_delta();
        let target = source.transformed(&truth);
        let reg = icp_register(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        assert_transforms_close(&reg.transform, &truth, 1e-9);
    }

    #[test]
    fn partial_overlap_still_recovers_the_motion() {
        let full = box_cloud(200, 0.05, 4);
        let source = PointCloud::new(full.points[..140].to_vec());
        let truth = small_delta();
        let target = full.transformed(&truth);
        let reg = icp_register(
            &source,
            &target,
            &RigidTransform::identity(),
            &IcpParams::default(),
        )
        .unwrap();
        assert_transforms_close(&reg.transform, &truth, 1e-9);
    }

    #[test]
    fn disjoint_clouds_fail_with_no_correspondences() {
        let source = box_cloud(50, 0.02, 5);
        let target = PointCloud::new(
            source
                .points
                .iter()
                .map(|p| p + Vector3::new(1.0, 0.0, 0.0))
                .collect(),
        );
        assert!(matches!(
            icp_register(
                &source,
                &target,
                &RigidTransform::identity(),
                &IcpParams::default()
            ),
            Err(Error::RegistrationFailed { .. })
        ));
    }

    #[test]
    fn final_rms_above_threshold_is_a_failure() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let source = box_cloud(100, 0.05, 6);
        let target = PointCloud::new(
            source
                .points
                .iter()
                .map(|p| {
                    p + Vector3::new(
                        rng.random_range(-1e-4..1e-4),
                        rng.random_range(-1e-4..1e-4),
                        rng.random_range(-1e-4..1e-4),
                    )
                })
                .collect(),
        );
        let strict = IcpParams {
            failure_rms: 1e-9,
            ..IcpParams::default()
        };
        assert!(matches!(
            icp_register(&source, &target, &RigidTransform::identity(), &strict),
            Err(Error::RegistrationFailed { .. })
        ));
    }

    #[test]
    fn sim_error_inverts_the_injected_estimate_offset() {
        let h_true = crate::sim::ground_truth_transform();
        let d = small_delta();
        let h_est = h_true.compose(&d);
        let metric = calibration_error_sim(&h_est, &h_true);
        // h_est⁻¹ ∘ h_true = d⁻¹.
        assert_transforms_close(&metric.delta, &d.invert(), 1e-12);
        assert!(!metric.failed);
    }

    #[test]
    fn cloud_error_matches_the_closed_form_error() {
        // Noiseless end-to-end oracle: simulate the measurement with the
        // true transform, evaluate with a perturbed estimate, and compare
        // the registered error against the closed-form h_est⁻¹ ∘ h_true.
        let h_true = crate::sim::ground_truth_transform();
        let d = small_delta();
        let h_est = h_true.compose(&d);
        let h_v = RigidTransform::from_rpy(
            RpyAngles::new(0.1, -0.2, 0.3),
            Vector3::new(0.45, -0.05, 0.40),
        );
        // Asymmetric flange-frame model: planar disc plus off-plane studs so
        // the registration locks all six degrees of freedom.
        let mut model = disc_cloud(220, 0.031, 7);
        model.points.push(Vector3::new(0.018, 0.0, 0.006));
        model.points.push(Vector3::new(-0.011, 0.013, 0.009));
        model.points.push(Vector3::new(0.002, -0.02, 0.012));
        let measured = model.transformed(&h_true.invert().compose(&h_v));

        let metric = calibration_error(&h_est, &h_v, &model, &measured, &IcpParams::default());
        assert!(!metric.failed);
        let oracle = calibration_error_sim(&h_est, &h_true);
        assert_transforms_close(&metric.delta, &oracle.delta, 1e-9);
    }

    #[test]
    fn perfect_estimate_has_identity_error_and_zero_cost() {
        let h_true = crate::sim::ground_truth_transform();
        let h_v = RigidTransform::from_rpy(
            RpyAngles::new(-0.1, 0.15, 0.2),
            Vector3::new(0.5, 0.0, 0.45),
        );
        let model = disc_cloud(180, 0.031, 8);
        let measured = model.transformed(&h_true.invert().compose(&h_v));
        let metric = calibration_error(&h_true, &h_v, &model, &measured, &IcpParams::default());
        assert!(!metric.failed);
        assert!(cost(&metric, CostKind::TranslationNorm) < 1e-9);
    }

    #[test]
    fn deltas_beyond_the_trust_radius_report_failure() {
        // A measurement sitting meters from the prediction registers fine
        // shape-wise (the centroid seed bridges any offset), but the delta
        // no longer verifies anything — the metric must report failure.
        let h_true = crate::sim::ground_truth_transform();
        let h_v = RigidTransform::from_rpy(
            RpyAngles::new(0.05, -0.1, 0.2),
            Vector3::new(0.45, -0.05, 0.5),
        );
        let model = disc_cloud(180, 0.031, 9);
        let mut measured = model.transformed(&h_true.invert().compose(&h_v));
        for p in &mut measured.points {
            p.x += 10.0;
        }
        let metric = calibration_error(&h_true, &h_v, &model, &measured, &IcpParams::default());
        assert!(metric.failed, "a 10 m displacement is not a verification");

        // Widening the trust radius past the displacement turns the same
        // registration back into a finite (if enormous) metric.
        let wide = IcpParams {
            max_delta: 20.0,
            ..IcpParams::default()
        };
        let metric = calibration_error(&h_true, &h_v, &model, &measured, &wide);
        assert!(!metric.failed);
        assert!(Vector3::from(metric.pose_error.delta_t).norm() > 9_000.0); // mm
    }

    #[test]
    fn cost_kinds_match_hand_computed_values() {
        let delta = RigidTransform::from_rpy(
            RpyAngles::new(0.0, 0.0, 0.01),
            Vector3::new(3e-3, 4e-3, 12e-3),
        );
        let metric = IcpErrorMetric::from_delta(delta);
        assert_relative_eq!(
            cost(&metric, CostKind::TranslationNorm),
            13e-3, // 3-4-12 triple
            epsilon = 1e-12
        );
        assert_relative_eq!(cost(&metric, CostKind::XyOnly), 5e-3, epsilon = 1e-12);
        let r = 0.031;
        assert_relative_eq!(
            cost(&metric, CostKind::CombinedWithRadius(r)),
            (13e-3f64.powi(2) + (r * 0.01).powi(2)).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn failed_metric_costs_are_infinite() {
        let metric = IcpErrorMetric::failed_metric();
        assert_eq!(cost(&metric, CostKind::TranslationNorm), f64::INFINITY);
        assert_eq!(cost(&metric, CostKind::XyOnly), f64::INFINITY);
        assert_eq!(
            cost(&metric, CostKind::CombinedWithRadius(0.031)),
            f64::INFINITY
        );
    }

    #[test]
    fn pose_error_fields_are_in_millimeters_and_degrees() {
        let delta = RigidTransform::from_rpy(
            RpyAngles::new(0.0, 0.0, 0.2f64.to_radians()),
            Vector3::new(1e-3, 0.0, 0.0),
        );
        let metric = IcpErrorMetric::from_delta(delta);
        assert_relative_eq!(metric.pose_error.delta_t[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(metric.pose_error.delta_rpy[2], 0.2, epsilon = 1e-9);
    }
}
