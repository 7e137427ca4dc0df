//! Synthetic data factory: parametric flange/scene point clouds, pose-grid
//! sampling, the Gaussian disturbance model, and the Monte-Carlo sweep
//! harness comparing the all-points fit against the iterative loop.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::calib::{self, CalibConfig, Verification};
use crate::cloud::PointCloud;
use crate::error::Error;
use crate::icp::calibration_error_sim;
use crate::rigid::{fit_rigid, SamplePair};
use crate::se3::{PoseError, RigidTransform, RpyAngles};

/// Parametric tool-flange face: an annulus with a bolt circle of through
/// holes, matching a 31 mm-radius ISO mounting flange by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlangeModel {
    /// Outer radius of the flange face, meters.
    pub outer_radius: f64,
    /// Radius of the bolt circle the holes sit on, meters.
    pub bolt_circle_radius: f64,
    /// Radius of each through hole, meters.
    pub hole_radius: f64,
    /// Number of holes, equally spaced on the bolt circle.
    pub hole_count: usize,
    /// Inner radius of the annulus (the center bore), meters.
    pub annulus_inner_radius: f64,
    /// Surface sample density, points per m².
    pub sample_density: f64,
}

impl Default for FlangeModel {
    fn default() -> Self {
        Self {
            outer_radius: 0.031,
            bolt_circle_radius: 0.025,
            hole_radius: 0.0033,
            hole_count: 4,
            annulus_inner_radius: 0.010,
            sample_density: 4e6,
        }
    }
}

/// The fixed camera-to-base transform used throughout the simulations: the
/// camera hangs above the workspace looking down, axes crossed.
pub fn ground_truth_transform() -> RigidTransform {
    RigidTransform::new(
        Matrix3::new(
            0.0, -1.0, 0.0, //
            -1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0,
        ),
        Vector3::new(0.6, -0.0125, 1.0),
    )
}

/// Samples the flange face in its own frame (z = 0, TCP at the origin).
///
/// The outer edge is emitted as an exact, densely spaced ring (as a CAD
/// tessellation's boundary polyline is), and the interior is stratified
/// jittered sampling that keeps one grid spacing clear of the edge, the way
/// boundary-preserving surface samplers do. Edge-based circle fits on the
/// noiseless cloud are therefore exact: the edge ring is both the densest
/// structure near the rim and the only one within the fit's inlier gate.
fn sample_flange_face(model: &FlangeModel, rng: &mut ChaCha12Rng) -> Vec<Vector3<f64>> {
    let h = 1.0 / model.sample_density.sqrt();
    let r_out = model.outer_radius;
    let r_in = model.annulus_inner_radius;
    let tau = core::f64::consts::TAU;

    let hole_centers: Vec<Vector3<f64>> = (0..model.hole_count)
        .map(|k| {
            let a = tau * k as f64 / model.hole_count.max(1) as f64;
            Vector3::new(
                model.bolt_circle_radius * a.cos(),
                model.bolt_circle_radius * a.sin(),
                0.0,
            )
        })
        .collect();
    let in_hole = |p: &Vector3<f64>| {
        hole_centers
            .iter()
            .any(|c| (p - c).norm() < model.hole_radius)
    };

    let mut pts = Vec::new();

    // Interior: radial strata of width h covering [r_in, r_out − h].
    let n_bins = (((r_out - h) - r_in) / h + 1e-9).floor() as usize;
    for i in 0..n_bins {
        let rho_c = r_in + (i as f64 + 0.5) * h;
        let n_cells = ((tau * rho_c / h).round() as usize).max(1);
        for j in 0..n_cells {
            let theta = (j as f64 + rng.random_range(0.0..1.0)) * tau / n_cells as f64;
            let rho = rho_c + (rng.random_range(0.0..1.0) - 0.5) * h;
            let p = Vector3::new(rho * theta.cos(), rho * theta.sin(), 0.0);
            if !in_hole(&p) {
                pts.push(p);
            }
        }
    }

    // Exact outer edge at quarter spacing.
    let n_rim = (4.0 * tau * r_out / h).ceil() as usize;
    for k in 0..n_rim {
        let a = tau * k as f64 / n_rim as f64;
        pts.push(Vector3::new(r_out * a.cos(), r_out * a.sin(), 0.0));
    }

    pts
}

fn add_sensor_noise(points: &mut [Vector3<f64>], sigma: f64, rng: &mut ChaCha12Rng) {
    if sigma <= 0.0 {
        return;
    }
    let dist = Normal::new(0.0, sigma).expect("sigma is non-negative");
    for p in points.iter_mut() {
        *p += Vector3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng));
    }
}

/// Generates a flange cloud as a camera would see it.
///
/// The face is sampled in the flange frame, placed by `pose_cam`
/// (flange-to-camera), and disturbed by isotropic Gaussian noise of
/// `sensor_sigma` per coordinate. Returns the cloud and the true TCP (the
/// face center) in the camera frame. Deterministic per seed.
pub fn generate_flange_cloud(
    model: &FlangeModel,
    pose_cam: &RigidTransform,
    sensor_sigma: f64,
    seed: u64,
) -> (PointCloud, Vector3<f64>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pts: Vec<Vector3<f64>> = sample_flange_face(model, &mut rng)
        .into_iter()
        .map(|p| pose_cam.transform_point(&p))
        .collect();
    add_sensor_noise(&mut pts, sensor_sigma, &mut rng);
    let mut cloud = PointCloud::new(pts);
    cloud.frame_tag = String::from("cam");
    cloud.source = String::from("sim-flange");
    (cloud, pose_cam.translation)
}

/// Point counts of the three parts of a generated scene, in emission order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenePartCounts {
    /// Background plane points (emitted first).
    pub floor: usize,
    /// Wrist cylinder points (emitted second).
    pub wrist: usize,
    /// Flange face points (emitted last).
    pub flange: usize,
}

/// Generates a full synthetic scene: a floor plane at z = 0 (camera frame),
/// a wrist cylinder hanging behind the flange face, and the flange itself at
/// `pose_cam`. Returns the cloud, the true TCP, and the per-part counts.
pub fn generate_scene(
    model: &FlangeModel,
    pose_cam: &RigidTransform,
    sensor_sigma: f64,
    seed: u64,
) -> (PointCloud, Vector3<f64>, ScenePartCounts) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pts = Vec::new();

    // Floor: a 0.6 × 0.6 m plane gridded at 5 mm.
    let floor_step = 0.005;
    let floor_n = 121;
    for i in 0..floor_n {
        for j in 0..floor_n {
            pts.push(Vector3::new(
                -0.3 + i as f64 * floor_step,
                -0.3 + j as f64 * floor_step,
                0.0,
            ));
        }
    }
    let n_floor = pts.len();

    // Wrist: a cylinder shell behind the flange plane (flange frame
    // z ∈ [−35, −5] mm), sampled at about 2 mm, then placed with the flange.
    let wrist_radius = model.bolt_circle_radius;
    let wrist_step = 0.002;
    let n_angles = (core::f64::consts::TAU * wrist_radius / wrist_step).ceil() as usize;
    let n_levels = 16;
    for lvl in 0..n_levels {
        let z = -0.005 - 0.030 * lvl as f64 / (n_levels - 1) as f64;
        for a in 0..n_angles {
            let t = core::f64::consts::TAU * a as f64 / n_angles as f64;
            let p = Vector3::new(wrist_radius * t.cos(), wrist_radius * t.sin(), z);
            pts.push(pose_cam.transform_point(&p));
        }
    }
    let n_wrist = pts.len() - n_floor;

    for p in sample_flange_face(model, &mut rng) {
        pts.push(pose_cam.transform_point(&p));
    }
    let n_flange = pts.len() - n_floor - n_wrist;

    add_sensor_noise(&mut pts, sensor_sigma, &mut rng);
    let mut cloud = PointCloud::new(pts);
    cloud.frame_tag = String::from("cam");
    cloud.source = String::from("sim-scene");
    (
        cloud,
        pose_cam.translation,
        ScenePartCounts {
            floor: n_floor,
            wrist: n_wrist,
            flange: n_flange,
        },
    )
}

/// Builds a verification measurement for cloud-mode calibration: the flange
/// model cloud in its own frame plus the same sampling as the camera would
/// measure it at robot pose `h_v` under the true transform. Using one
/// sampling for both sides keeps the registration well-posed at any density.
pub fn simulate_verification(
    model: &FlangeModel,
    h_true: &RigidTransform,
    h_v: &RigidTransform,
    sensor_sigma: f64,
    seed: u64,
) -> (PointCloud, PointCloud) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let face = sample_flange_face(model, &mut rng);
    let mut p_true = PointCloud::new(face.clone());
    p_true.frame_tag = String::from("flange");
    p_true.source = String::from("sim-flange-model");

    let placement = h_true.invert().compose(h_v);
    let mut measured: Vec<Vector3<f64>> =
        face.iter().map(|p| placement.transform_point(p)).collect();
    add_sensor_noise(&mut measured, sensor_sigma, &mut rng);
    let mut p_v_cam = PointCloud::new(measured);
    p_v_cam.frame_tag = String::from("cam");
    p_v_cam.source = String::from("sim-verification");
    (p_true, p_v_cam)
}

/// Monte-Carlo scenario description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimScenario {
    /// True camera-to-base transform.
    pub h_true: RigidTransform,
    /// Workspace box center, base frame, meters.
    pub workspace_center: Vector3<f64>,
    /// Workspace box edge lengths, meters.
    pub workspace_extents: Vector3<f64>,
    /// Number of poses on the grid.
    pub n_poses: usize,
    /// Bound on each of |roll|, |pitch|, |yaw| of the sampled poses, radians.
    pub orientation_limit: f64,
    /// Per-coordinate measurement noise, meters.
    pub noise_sigma: f64,
    /// Realizations per noise level.
    pub n_realizations: usize,
    /// Master seed; every realization derives its own stream from it.
    pub rng_seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            h_true: ground_truth_transform(),
            workspace_center: Vector3::new(0.45, -0.0125, 0.45),
            workspace_extents: Vector3::new(0.3, 0.3, 0.2),
            n_poses: 75,
            orientation_limit: 0.3,
            noise_sigma: 1e-3,
            n_realizations: 100,
            rng_seed: 0,
        }
    }
}

/// Near-cubic lattice dimensions: per-axis counts proportional to the axis
/// extents, grown along the coarsest axis until the node count suffices.
fn lattice_counts(n: usize, extents: &Vector3<f64>) -> [usize; 3] {
    let mut counts = [1usize; 3];
    if extents.x > 0.0 && extents.y > 0.0 && extents.z > 0.0 {
        let cbrt = (n as f64).powf(1.0 / 3.0);
        let geomean = (extents.x * extents.y * extents.z).powf(1.0 / 3.0);
        for (axis, s) in [extents.x, extents.y, extents.z].iter().enumerate() {
            counts[axis] = ((cbrt * s / geomean).round() as usize).max(1);
        }
    }
    while counts[0] * counts[1] * counts[2] < n {
        // Grow the axis with the coarsest spacing; ties go to x first.
        let mut best = 0;
        let mut best_step = f64::NEG_INFINITY;
        for axis in 0..3 {
            let step = extents[axis] / counts[axis] as f64;
            if step > best_step {
                best_step = step;
                best = axis;
            }
        }
        counts[best] += 1;
    }
    counts
}

fn axis_positions(center: f64, extent: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return alloc::vec![center];
    }
    (0..count)
        .map(|i| center - extent / 2.0 + extent * i as f64 / (count - 1) as f64)
        .collect()
}

/// Samples the pose grid: lattice positions filling the workspace box
/// (x varying fastest) with seeded uniform random orientations inside the
/// limit.
pub fn sample_poses(scenario: &SimScenario) -> Vec<RigidTransform> {
    let counts = lattice_counts(scenario.n_poses, &scenario.workspace_extents);
    let xs = axis_positions(
        scenario.workspace_center.x,
        scenario.workspace_extents.x,
        counts[0],
    );
    let ys = axis_positions(
        scenario.workspace_center.y,
        scenario.workspace_extents.y,
        counts[1],
    );
    let zs = axis_positions(
        scenario.workspace_center.z,
        scenario.workspace_extents.z,
        counts[2],
    );

    let mut rng = ChaCha12Rng::seed_from_u64(scenario.rng_seed);
    let lim = scenario.orientation_limit;
    let mut poses = Vec::with_capacity(scenario.n_poses);
    'grid: for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                let rpy = if lim > 0.0 {
                    RpyAngles::new(
                        rng.random_range(-lim..lim),
                        rng.random_range(-lim..lim),
                        rng.random_range(-lim..lim),
                    )
                } else {
                    RpyAngles::zero()
                };
                poses.push(RigidTransform::from_rpy(rpy, Vector3::new(x, y, z)));
                if poses.len() == scenario.n_poses {
                    break 'grid;
                }
            }
        }
    }
    poses
}

/// Maps a base-frame point into the camera frame through the inverse of the
/// true transform and adds i.i.d. Gaussian noise per coordinate.
pub fn disturb_point_with<R: Rng>(
    p_base: &Vector3<f64>,
    h_true: &RigidTransform,
    sigma: f64,
    rng: &mut R,
) -> Vector3<f64> {
    let exact = h_true.invert().transform_point(p_base);
    if sigma <= 0.0 {
        return exact;
    }
    let dist = Normal::new(0.0, sigma).expect("sigma is non-negative");
    exact + Vector3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng))
}

/// Seeded convenience form of [`disturb_point_with`].
pub fn disturb_point(
    p_base: &Vector3<f64>,
    h_true: &RigidTransform,
    sigma: f64,
    seed: u64,
) -> Vector3<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    disturb_point_with(p_base, h_true, sigma, &mut rng)
}

/// Derives an independent stream seed from a master seed and two indices,
/// so parallel and serial sweeps agree bit-exactly.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ a) ^ b)
}

/// Builds one observation per pose: the base-side TCP is the pose
/// translation, the camera side is the disturbed mapping of it.
pub fn make_pairs<R: Rng>(
    poses: &[RigidTransform],
    h_true: &RigidTransform,
    sigma: f64,
    rng: &mut R,
) -> Vec<SamplePair> {
    poses
        .iter()
        .map(|pose| {
            SamplePair::from_pose(
                *pose,
                disturb_point_with(&pose.translation, h_true, sigma, rng),
            )
        })
        .collect()
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Shuffles a pair stream, re-drawing until the first four pairs admit a
/// rigid fit (an operator collecting the initial pool would never pick four
/// coplanar poses on purpose).
pub fn shuffle_stream<R: Rng>(pairs: &mut Vec<SamplePair>, rng: &mut R) {
    for _ in 0..100 {
        shuffle(pairs.as_mut_slice(), rng);
        if pairs.len() < 4 || fit_rigid(&pairs[..4], false).is_ok() {
            return;
        }
    }
}

/// One noisy, shuffled observation stream: noise drawn in pose order, then
/// the stream order randomized (with a fit-capable head).
pub fn realize_pairs(
    poses: &[RigidTransform],
    h_true: &RigidTransform,
    sigma: f64,
    seed: u64,
) -> Vec<SamplePair> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pairs = make_pairs(poses, h_true, sigma, &mut rng);
    shuffle_stream(&mut pairs, &mut rng);
    pairs
}

/// Corrupts `magnitudes.len()` distinct pairs by shifting their camera-side
/// points in seeded random directions by the given magnitudes (meters),
/// mimicking gross segmentation failures. Returns the affected indices, in
/// `magnitudes` order.
pub fn add_gross_outliers<R: Rng>(
    pairs: &mut [SamplePair],
    magnitudes: &[f64],
    rng: &mut R,
) -> Vec<usize> {
    assert!(magnitudes.len() <= pairs.len());
    let mut chosen: Vec<usize> = Vec::with_capacity(magnitudes.len());
    for &magnitude in magnitudes {
        let idx = loop {
            let c = rng.random_range(0..pairs.len());
            if !chosen.contains(&c) {
                break c;
            }
        };
        chosen.push(idx);
        let dir: [f64; 3] = UnitSphere.sample(rng);
        pairs[idx].p_cam += magnitude * Vector3::new(dir[0], dir[1], dir[2]);
    }
    chosen
}

/// Calibration method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// One least-squares rigid fit over every pair.
    AllPoints,
    /// The iterative four-pair pool loop.
    Iterative,
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Method::AllPoints => write!(f, "all-points"),
            Method::Iterative => write!(f, "iterative"),
        }
    }
}

/// Error components of a pose error as `[δx, δy, δz, δroll, δpitch, δyaw]`
/// in millimeters and degrees.
pub fn error_components(pe: &PoseError) -> [f64; 6] {
    [
        pe.delta_t[0],
        pe.delta_t[1],
        pe.delta_t[2],
        pe.delta_rpy[0],
        pe.delta_rpy[1],
        pe.delta_rpy[2],
    ]
}

/// Mean and population standard deviation per error component across
/// realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    /// Noise level, meters.
    pub sigma: f64,
    /// Which estimator produced the errors.
    pub method: Method,
    /// Component means, millimeters / degrees.
    pub mean: [f64; 6],
    /// Component standard deviations, millimeters / degrees.
    pub std: [f64; 6],
}

/// Per-step aggregate of the iterative loop's error across realizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    /// Total pairs consumed (4 at initialization).
    pub pairs_consumed: usize,
    /// Component means, millimeters / degrees.
    pub mean: [f64; 6],
    /// Component standard deviations, millimeters / degrees.
    pub std: [f64; 6],
}

fn summarize(samples: &[[f64; 6]]) -> ([f64; 6], [f64; 6]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 6];
    for s in samples {
        for c in 0..6 {
            mean[c] += s[c] / n;
        }
    }
    let mut std = [0.0; 6];
    for s in samples {
        for c in 0..6 {
            std[c] += (s[c] - mean[c]) * (s[c] - mean[c]) / n;
        }
    }
    for c in &mut std {
        *c = c.sqrt();
    }
    (mean, std)
}

/// Runs both methods over a range of noise levels.
///
/// The pose grid is sampled once; each (sigma, realization) cell derives its
/// own noise/shuffle stream from the master seed, so results are independent
/// of evaluation order. The iterative method is scored by its verification
/// error against the true transform (simulation mode); pass a config whose
/// threshold keeps the loop running if full convergence traces matter.
pub fn run_sweep(
    scenario: &SimScenario,
    sigmas: &[f64],
    cfg: &CalibConfig,
) -> Result<Vec<SweepRow>, Error> {
    let poses = sample_poses(scenario);
    let verification = Verification::Simulation {
        h_true: scenario.h_true,
    };
    let mut rows = Vec::with_capacity(sigmas.len() * 2);
    for (si, &sigma) in sigmas.iter().enumerate() {
        let mut all_points = Vec::with_capacity(scenario.n_realizations);
        let mut iterative = Vec::with_capacity(scenario.n_realizations);
        for r in 0..scenario.n_realizations {
            let seed = derive_seed(scenario.rng_seed, si as u64, r as u64);
            let pairs = realize_pairs(&poses, &scenario.h_true, sigma, seed);

            let fit = fit_rigid(&pairs, false)?;
            let metric = calibration_error_sim(&fit.transform, &scenario.h_true);
            all_points.push(error_components(&metric.pose_error));

            let outcome = calib::run(&pairs, verification.clone(), *cfg)?;
            iterative.push(error_components(&outcome.e_optimal.pose_error));
        }
        let (mean, std) = summarize(&all_points);
        rows.push(SweepRow {
            sigma,
            method: Method::AllPoints,
            mean,
            std,
        });
        let (mean, std) = summarize(&iterative);
        rows.push(SweepRow {
            sigma,
            method: Method::Iterative,
            mean,
            std,
        });
    }
    Ok(rows)
}

/// Seed-stream index reserved for convergence traces, so they never collide
/// with sweep realizations of the same master seed.
const CONVERGENCE_STREAM: u64 = u64::MAX;

/// Traces the iterative loop's error as a function of pairs consumed, at one
/// noise level, aggregated across realizations.
///
/// The loop is forced to consume the entire stream (threshold effectively
/// zero) so every trace has one entry per pair from 4 to `n_poses`.
pub fn run_convergence(
    scenario: &SimScenario,
    sigma: f64,
    cfg: &CalibConfig,
) -> Result<Vec<ConvergenceRow>, Error> {
    let poses = sample_poses(scenario);
    let verification = Verification::Simulation {
        h_true: scenario.h_true,
    };
    let full_run = CalibConfig {
        e_required_mm: f64::MIN_POSITIVE,
        k_max: usize::MAX,
        ..*cfg
    };
    let steps = poses.len() - 3;
    let mut per_step: Vec<Vec<[f64; 6]>> = alloc::vec![Vec::with_capacity(scenario.n_realizations); steps];
    for r in 0..scenario.n_realizations {
        let seed = derive_seed(scenario.rng_seed, CONVERGENCE_STREAM, r as u64);
        let pairs = realize_pairs(&poses, &scenario.h_true, sigma, seed);
        let outcome = calib::run(&pairs, verification.clone(), full_run)?;
        debug_assert_eq!(outcome.history.len(), steps);
        for (s, entry) in outcome.history.iter().enumerate() {
            per_step[s].push(error_components(&entry.pose_error));
        }
    }
    Ok(per_step
        .iter()
        .enumerate()
        .map(|(s, samples)| {
            let (mean, std) = summarize(samples);
            ConvergenceRow {
                pairs_consumed: 4 + s,
                mean,
                std,
            }
        })
        .collect())
}
