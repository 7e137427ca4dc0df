//! RANSAC estimation of the flange's outer circle in 3D, yielding the
//! camera-frame tool center point.
//!
//! Candidates are circumscribed circles of random point triples. A radius
//! model check (`|radius − expected| ≤ tolerance`) rejects candidates before
//! the expensive inlier count, and the best candidate is polished by a
//! fixed-iteration Gauss-Newton fit over its inliers.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;
use nalgebra::{Cholesky, SMatrix, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::cloud::{
    euclidean_clusters, pass_through, remove_statistical_outliers, ClusterParams,
    OutlierParams, PassThroughBox, PointCloud,
};
use crate::error::Error;

/// RANSAC configuration for circle fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    /// Points per candidate; 3 is the minimum that defines a circle.
    pub sample_size: usize,
    /// Inlier gate on the 3D point-to-circle distance, meters.
    pub distance_threshold: f64,
    /// Model check: candidate radius must be within this of
    /// `expected_radius`, meters.
    pub radius_tolerance: f64,
    /// The known flange outer radius, meters.
    pub expected_radius: f64,
    /// Iteration budget.
    pub max_iterations: usize,
    /// Minimum inlier share of the input cloud for a model to count.
    pub min_inlier_fraction: f64,
    /// Seed for the candidate sampler.
    pub rng_seed: u64,
}

impl Default for RansacParams {
    /// Defaults for ring-like input (arcs, edges): 0.3 mm distance gate,
    /// 1 mm radius tolerance around the 31 mm flange, 10 000 iterations,
    /// and a 0.3 inlier fraction that tolerates half-visible circles.
    fn default() -> Self {
        Self {
            sample_size: 3,
            distance_threshold: 0.3e-3,
            radius_tolerance: 1e-3,
            expected_radius: 0.031,
            max_iterations: 10_000,
            min_inlier_fraction: 0.3,
            rng_seed: 0,
        }
    }
}

impl RansacParams {
    /// Profile for full flange-surface clouds, where the rim is a thin
    /// band of the cluster.
    ///
    /// On a uniformly sampled annulus face (inner 10 mm, outer 31 mm) the
    /// points within 0.3 mm of the rim circle are roughly
    /// `2·R·e_d / (R² − r_inner²) ≈ 2.2%` of the cluster, plus the sampled
    /// rim edge itself; the ring-profile fraction of 0.3 would reject every
    /// correct model, so scene mode gates at 0.5%.
    pub fn for_flange_scene() -> Self {
        Self {
            min_inlier_fraction: 0.005,
            ..Self::default()
        }
    }
}

/// A fitted circle in 3D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    /// Circle center, meters.
    pub center: Vector3<f64>,
    /// Unit plane normal with canonical sign (positive z, ties broken by
    /// positive y, then positive x).
    pub normal: Vector3<f64>,
    /// Circle radius, meters.
    pub radius: f64,
    /// Number of points within the distance threshold of the circle.
    pub inlier_count: usize,
    /// Root-mean-square point-to-circle distance over the inliers, meters.
    pub rms_residual: f64,
}

/// Flips a unit normal into the canonical half-space: positive z component,
/// ties broken by positive y, then positive x.
fn canonical_normal(n: Vector3<f64>) -> Vector3<f64> {
    if n.z != 0.0 {
        return if n.z > 0.0 { n } else { -n };
    }
    if n.y != 0.0 {
        return if n.y > 0.0 { n } else { -n };
    }
    if n.x < 0.0 {
        -n
    } else {
        n
    }
}

/// Distance from a point to a circle in 3D: the out-of-plane offset and the
/// in-plane ring offset combined in quadrature.
pub fn point_circle_distance(p: &Vector3<f64>, circle: &CircleFit) -> f64 {
    let d = p - circle.center;
    let out_of_plane = circle.normal.dot(&d);
    let in_plane = (d - out_of_plane * circle.normal).norm() - circle.radius;
    (out_of_plane * out_of_plane + in_plane * in_plane).sqrt()
}

/// The unique circle through three non-collinear points.
///
/// The normal is the normalized cross product with canonical sign;
/// `inlier_count` and `rms_residual` are left at the trivial values for a
/// three-point construction.
pub fn circle_through_three(
    p1: &Vector3<f64>,
    p2: &Vector3<f64>,
    p3: &Vector3<f64>,
) -> Result<CircleFit, Error> {
    let a = p1 - p3;
    let b = p2 - p3;
    let cross = a.cross(&b);
    // Triangle area = ‖cross‖ / 2 must exceed 1e-12 m².
    if cross.norm() / 2.0 <= 1e-12 {
        return Err(Error::DegenerateSample);
    }
    let cross2 = cross.norm_squared();
    let center = p3 + (a.norm_squared() * b - b.norm_squared() * a).cross(&cross) / (2.0 * cross2);
    let radius = (p1 - center).norm();
    Ok(CircleFit {
        center,
        normal: canonical_normal(cross / cross.norm()),
        radius,
        inlier_count: 3,
        rms_residual: 0.0,
    })
}

/// RANSAC circle estimation with the radius model check.
///
/// Deterministic for a fixed `rng_seed`; candidates are compared by inlier
/// count with earlier iterations winning ties, and the search exits early
/// once a candidate captures more than 90% of the cloud.
pub fn ransac_circle(cloud: &PointCloud, params: &RansacParams) -> Result<CircleFit, Error> {
    let n = cloud.len();
    if n < params.sample_size {
        return Err(Error::NoModelFound);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(params.rng_seed);
    let mut best: Option<CircleFit> = None;

    for _ in 0..params.max_iterations {
        let (i, j, k) = distinct_triple(&mut rng, n);
        let candidate = match circle_through_three(
            &cloud.points[i],
            &cloud.points[j],
            &cloud.points[k],
        ) {
            Ok(c) => c,
            Err(_) => continue,
        };
        // Model check before verification: only plausible radii are scored.
        if (candidate.radius - params.expected_radius).abs() > params.radius_tolerance {
            continue;
        }
        let inliers = count_inliers(cloud, &candidate, params.distance_threshold);
        if best.as_ref().map_or(true, |b| inliers > b.inlier_count) {
            best = Some(CircleFit {
                inlier_count: inliers,
                ..candidate
            });
            if inliers as f64 > 0.9 * n as f64 {
                break;
            }
        }
    }

    let best = best.ok_or(Error::NoModelFound)?;
    if (best.inlier_count as f64) < params.min_inlier_fraction * n as f64 {
        return Err(Error::NoModelFound);
    }

    // Polish on the inliers; keep the refinement only if it still passes the
    // model check, so the radius guarantee survives.
    let inlier_points: Vec<Vector3<f64>> = cloud
        .points
        .iter()
        .filter(|p| point_circle_distance(p, &best) <= params.distance_threshold)
        .copied()
        .collect();
    let refined = gauss_newton_circle(&inlier_points, &best);
    let polished = if (refined.radius - params.expected_radius).abs() <= params.radius_tolerance
    {
        refined
    } else {
        best
    };

    let final_count = count_inliers(cloud, &polished, params.distance_threshold);
    let mut sq_sum = 0.0;
    for p in &cloud.points {
        let d = point_circle_distance(p, &polished);
        if d <= params.distance_threshold {
            sq_sum += d * d;
        }
    }
    let rms = if final_count > 0 {
        (sq_sum / final_count as f64).sqrt()
    } else {
        0.0
    };
    Ok(CircleFit {
        inlier_count: final_count,
        rms_residual: rms,
        ..polished
    })
}

fn distinct_triple(rng: &mut ChaCha12Rng, n: usize) -> (usize, usize, usize) {
    let i = rng.random_range(0..n);
    let j = loop {
        let c = rng.random_range(0..n);
        if c != i {
            break c;
        }
    };
    let k = loop {
        let c = rng.random_range(0..n);
        if c != i && c != j {
            break c;
        }
    };
    (i, j, k)
}

fn count_inliers(cloud: &PointCloud, circle: &CircleFit, threshold: f64) -> usize {
    cloud
        .points
        .iter()
        .filter(|p| point_circle_distance(p, circle) <= threshold)
        .count()
}

/// Three fixed Gauss-Newton iterations on (center, normal tilt, radius),
/// minimizing the squared out-of-plane and ring residuals over the inliers.
fn gauss_newton_circle(points: &[Vector3<f64>], start: &CircleFit) -> CircleFit {
    if points.len() < 6 {
        return *start; // fewer residual rows than parameters
    }
    let mut center = start.center;
    let mut normal = start.normal;
    let mut radius = start.radius;

    for _ in 0..3 {
        // Local frame for the normal tilt parameters.
        let seed = if normal.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let u = normal.cross(&seed).normalize();
        let v = normal.cross(&u);

        let eval = |delta: &SVector<f64, 6>, p: &Vector3<f64>| -> (f64, f64) {
            let c = center + Vector3::new(delta[0], delta[1], delta[2]);
            let n = (normal + delta[3] * u + delta[4] * v).normalize();
            let r = radius + delta[5];
            let d = p - c;
            let out = n.dot(&d);
            let ring = (d - out * n).norm() - r;
            (out, ring)
        };

        let mut jtj = SMatrix::<f64, 6, 6>::zeros();
        let mut jtr = SVector::<f64, 6>::zeros();
        let h = 1e-7;
        for p in points {
            let zero = SVector::<f64, 6>::zeros();
            let (r1, r2) = eval(&zero, p);
            let mut rows = [[0.0; 6]; 2];
            for param in 0..6 {
                let mut step = zero;
                step[param] = h;
                let (q1, q2) = eval(&step, p);
                rows[0][param] = (q1 - r1) / h;
                rows[1][param] = (q2 - r2) / h;
            }
            for (row, res) in rows.iter().zip([r1, r2]) {
                let jrow = SVector::<f64, 6>::from_column_slice(row);
                jtj += jrow * jrow.transpose();
                jtr += res * jrow;
            }
        }
        let Some(chol) = Cholesky::new(jtj) else {
            break;
        };
        let delta = chol.solve(&(-jtr));
        center += Vector3::new(delta[0], delta[1], delta[2]);
        normal = (normal + delta[3] * u + delta[4] * v).normalize();
        radius += delta[5];
    }

    CircleFit {
        center,
        normal: canonical_normal(normal),
        radius,
        inlier_count: start.inlier_count,
        rms_residual: start.rms_residual,
    }
}

/// Full scene-to-TCP pipeline: crop, outlier removal, clustering, then
/// circle fitting on clusters largest-first; the first passing circle's
/// center is the camera-frame TCP.
///
/// Reliability depends on sampling density. On a filled flange face the
/// true rim circle only beats circles of the same radius that cut across
/// the face interior by a modest inlier margin (the rim band is truncated
/// at the physical edge, interior bands are not). Below roughly
/// 10⁶ points/m² that margin drops into Poisson noise and the fit can lock
/// onto an interior circle a centimeter or two off; keep clouds at sensor
/// resolution (the simulator's default 4·10⁶ points/m²) rather than
/// downsampling before this step.
pub fn flange_tcp_from_scene(
    scene: &PointCloud,
    bbox: &PassThroughBox,
    outlier: &OutlierParams,
    cluster: &ClusterParams,
    ransac: &RansacParams,
) -> Result<Vector3<f64>, Error> {
    let cropped = pass_through(scene, bbox);
    let cleaned =
        remove_statistical_outliers(&cropped, outlier).map_err(|_| Error::SegmentationFailed)?;
    let clusters = euclidean_clusters(&cleaned, cluster);
    for candidate in &clusters {
        if let Ok(circle) = ransac_circle(candidate, ransac) {
            return Ok(circle.center);
        }
    }
    Err(Error::SegmentationFailed)
}
