//! Planar seam-tracking servo simulator: a compliant probe rides one wall of
//! a seam while the robot feeds along a noisy planned path, the contact
//! point stream is recorded as the refined path, and the trailing torch's
//! heading is steered so its implicated velocity stays tangent to that
//! refined path.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;

/// Which side of the seam the probe rides; the seam-frame normal points
/// toward this side, so steady contact keeps the normal deformation
/// positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactSide {
    /// Left of the direction of travel.
    Left,
    /// Right of the direction of travel.
    Right,
}

/// Robot end-effector state in the working plane: position plus the tool
/// heading that orients the probe-to-torch link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolState2D {
    /// End-effector (probe base) position, meters.
    pub p_r: Vector2<f64>,
    /// Tool heading, radians.
    pub alpha: f64,
}

impl ToolState2D {
    /// Unit vector along the tool link, `(cos α, sin α)`.
    pub fn t_d(&self) -> Vector2<f64> {
        Vector2::new(self.alpha.cos(), self.alpha.sin())
    }

    /// Unit vector normal to the tool link, `(−sin α, cos α)`.
    pub fn n_d(&self) -> Vector2<f64> {
        Vector2::new(-self.alpha.sin(), self.alpha.cos())
    }
}

/// Work-cell description: the ground-truth seam wall, the noisy planned
/// path a vision system produced, and the rigid probe-to-torch geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SeamWorld {
    /// Ground-truth seam polyline, meters.
    pub true_seam: Vec<Vector2<f64>>,
    /// Planned path polyline from vision, meters.
    pub planned_path: Vec<Vector2<f64>>,
    /// Distance between end effector and torch, meters; positive.
    pub tool_offset_norm: f64,
    /// Which seam wall the probe contacts.
    pub contact_side: ContactSide,
    /// Beyond this anchor-to-seam distance the probe is out of reach and
    /// contact is lost, meters.
    pub max_engagement: f64,
}

impl SeamWorld {
    /// Builds a world with the default 10 mm engagement range.
    pub fn new(
        true_seam: Vec<Vector2<f64>>,
        planned_path: Vec<Vector2<f64>>,
        tool_offset_norm: f64,
        contact_side: ContactSide,
    ) -> Self {
        assert!(!planned_path.is_empty(), "planned path must be non-empty");
        assert!(tool_offset_norm > 0.0, "tool offset must be positive");
        Self {
            true_seam,
            planned_path,
            tool_offset_norm,
            contact_side,
            max_engagement: 0.010,
        }
    }
}

/// Servo gains and integration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoParams {
    /// Proportional gain on the normal-deformation error, 1/seconds.
    pub k_p: f64,
    /// Desired normal deformation, meters.
    pub delta_d: f64,
    /// Feed speed along the planned tangent, meters/second.
    pub v_const: f64,
    /// Integration step, seconds.
    pub dt: f64,
    /// Step budget before the run is cut off.
    pub max_steps: usize,
}

impl Default for ServoParams {
    fn default() -> Self {
        Self {
            k_p: 10.0,
            delta_d: 0.002,
            v_const: 0.010,
            dt: 1e-3,
            max_steps: 200_000,
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The probe reached the final planned point.
    PathEnd,
    /// The step budget ran out first.
    MaxSteps,
    /// The heading constraint became singular (tool normal perpendicular
    /// to the refined-path normal, or one step would rotate more than 45°).
    Singularity,
}

/// One integration step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    /// Time since the start of the run, seconds.
    pub t: f64,
    /// End-effector position.
    pub p_r: Vector2<f64>,
    /// Probe tip position (closest seam-wall point).
    pub p_s: Vector2<f64>,
    /// Torch position.
    pub p_t: Vector2<f64>,
    /// Measured deformation along the seam tangent, meters (zero while
    /// disengaged).
    pub delta_t_s: f64,
    /// Measured deformation along the seam normal, meters (zero while
    /// disengaged).
    pub delta_n_s: f64,
    /// Commanded heading rate, radians/second.
    pub omega: f64,
    /// Component of the torch's implicated velocity along the refined-path
    /// normal; the heading rate is chosen to null it.
    pub v_t_normal: f64,
    /// Whether the probe was in contact this step.
    pub engaged: bool,
}

/// Full record of a tracking run.
#[derive(Debug, Clone, PartialEq)]
pub struct WeldTrace {
    /// Per-step states, in time order.
    pub steps: Vec<TraceStep>,
    /// Recorded contact points, in acquisition order — the refined path the
    /// torch is steered along.
    pub refined: Vec<Vector2<f64>>,
    /// Why the run ended.
    pub termination: Termination,
    /// Whether contact was ever lost (after which the deformation
    /// reference is reset to zero for the rest of the run).
    pub contact_lost: bool,
}

// ---------------------------------------------------------------------------
// Polyline geometry
// ---------------------------------------------------------------------------

/// Index of the polyline vertex closest to `q`; ties keep the lower index.
pub fn nearest_vertex(path: &[Vector2<f64>], q: &Vector2<f64>) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in path.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Closest point on the polyline to `q`, with the index of the segment it
/// lies on; ties keep the lower segment index. Zero-length segments are
/// skipped; a single-vertex polyline returns that vertex with segment 0.
pub fn closest_point_on_polyline(
    path: &[Vector2<f64>],
    q: &Vector2<f64>,
) -> (Vector2<f64>, usize) {
    assert!(!path.is_empty());
    if path.len() == 1 {
        return (path[0], 0);
    }
    let mut best = path[0];
    let mut best_seg = 0;
    let mut best_d = f64::INFINITY;
    for i in 0..path.len() - 1 {
        let a = path[i];
        let b = path[i + 1];
        let ab = b - a;
        let len2 = ab.norm_squared();
        if len2 == 0.0 {
            continue;
        }
        let s = ((q - a).dot(&ab) / len2).clamp(0.0, 1.0);
        let p = a + ab * s;
        let d = (p - q).norm_squared();
        if d < best_d {
            best_d = d;
            best = p;
            best_seg = i;
        }
    }
    (best, best_seg)
}

/// Local orthonormal frame `(tangent, normal)` at vertex `j`, from a
/// principal-direction fit over a ±3-vertex window; the tangent points
/// along increasing index and the normal toward the contact side.
pub fn polyline_frame(
    path: &[Vector2<f64>],
    j: usize,
    side: ContactSide,
) -> (Vector2<f64>, Vector2<f64>) {
    assert!(path.len() >= 2);
    let lo = j.saturating_sub(3);
    let hi = (j + 3).min(path.len() - 1);
    let n = (hi - lo + 1) as f64;
    let mut mean = Vector2::zeros();
    for p in &path[lo..=hi] {
        mean += p / n;
    }
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in &path[lo..=hi] {
        let d = p - mean;
        a += d.x * d.x;
        b += d.x * d.y;
        c += d.y * d.y;
    }
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let mut t = Vector2::new(theta.cos(), theta.sin());
    if t.dot(&(path[hi] - path[lo])) < 0.0 {
        t = -t;
    }
    let n_vec = match side {
        ContactSide::Left => Vector2::new(-t.y, t.x),
        ContactSide::Right => Vector2::new(t.y, -t.x),
    };
    (t, n_vec)
}

/// Seam-wall frame at a point on segment `seg`: the segment direction and
/// the side-facing normal.
fn seam_frame(path: &[Vector2<f64>], seg: usize, side: ContactSide) -> (Vector2<f64>, Vector2<f64>) {
    let mut t = path[seg + 1] - path[seg];
    // A zero-length segment cannot be returned by the closest-point search
    // unless the polyline is degenerate; fall back to +x to stay finite.
    if t.norm_squared() == 0.0 {
        t = Vector2::new(1.0, 0.0);
    }
    let t = t.normalize();
    let n = match side {
        ContactSide::Left => Vector2::new(-t.y, t.x),
        ContactSide::Right => Vector2::new(t.y, -t.x),
    };
    (t, n)
}

/// Root-mean-square distance from a point set to a polyline.
pub fn rms_distance_to_polyline(points: &[Vector2<f64>], path: &[Vector2<f64>]) -> f64 {
    assert!(!points.is_empty());
    let sum: f64 = points
        .iter()
        .map(|q| {
            let (p, _) = closest_point_on_polyline(path, q);
            (p - q).norm_squared()
        })
        .sum();
    (sum / points.len() as f64).sqrt()
}

// ---------------------------------------------------------------------------
// Seam and plan generators
// ---------------------------------------------------------------------------

/// Straight seam of the given length along +x, starting at the origin.
pub fn straight_seam(length: f64, spacing: f64) -> Vec<Vector2<f64>> {
    let n = (length / spacing).ceil() as usize;
    (0..=n)
        .map(|i| Vector2::new(length * i as f64 / n as f64, 0.0))
        .collect()
}

/// Circular-arc seam starting at the origin with initial tangent +x,
/// turning left through `sweep` radians.
pub fn arc_seam(radius: f64, sweep: f64, spacing: f64) -> Vec<Vector2<f64>> {
    let n = ((radius * sweep / spacing).ceil() as usize).max(1);
    let center = Vector2::new(0.0, radius);
    (0..=n)
        .map(|i| {
            let th = sweep * i as f64 / n as f64;
            center + radius * Vector2::new(th.sin(), -th.cos())
        })
        .collect()
}

/// S-shaped seam: one full sine period of the given amplitude over
/// `length` along +x.
pub fn s_curve_seam(length: f64, amplitude: f64, spacing: f64) -> Vec<Vector2<f64>> {
    let n = (length / spacing).ceil() as usize;
    (0..=n)
        .map(|i| {
            let x = length * i as f64 / n as f64;
            Vector2::new(
                x,
                amplitude * (core::f64::consts::TAU * x / length).sin(),
            )
        })
        .collect()
}

/// Resamples a seam at the planner's coarser spacing and adds i.i.d.
/// Gaussian noise per coordinate — the synthetic "vision" path. The final
/// seam point is always included. Deterministic per seed.
pub fn plan_from_seam(
    seam: &[Vector2<f64>],
    spacing: f64,
    noise_sigma: f64,
    seed: u64,
) -> Vec<Vector2<f64>> {
    assert!(seam.len() >= 2);
    let mut planned = Vec::new();
    let mut next_at = 0.0;
    let mut travelled = 0.0;
    for i in 0..seam.len() - 1 {
        let a = seam[i];
        let b = seam[i + 1];
        let seg = (b - a).norm();
        while next_at <= travelled + seg {
            let s = if seg > 0.0 { (next_at - travelled) / seg } else { 0.0 };
            planned.push(a + (b - a) * s);
            next_at += spacing;
        }
        travelled += seg;
    }
    let last = *seam.last().unwrap();
    if planned
        .last()
        .is_none_or(|p| (p - last).norm() > 1e-12)
    {
        planned.push(last);
    }
    if noise_sigma > 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, noise_sigma).expect("sigma is non-negative");
        for p in &mut planned {
            *p += Vector2::new(dist.sample(&mut rng), dist.sample(&mut rng));
        }
    }
    planned
}

// ---------------------------------------------------------------------------
// Contact, servo, and heading laws
// ---------------------------------------------------------------------------

/// Contact geometry shared by [`srm_contact`] and the run loop: the closest
/// seam-wall point, the deformation split into seam-frame components, the
/// seam frame, and the raw distance.
fn contact_geometry(
    world: &SeamWorld,
    p_r: &Vector2<f64>,
) -> (Vector2<f64>, Vector2<f64>, (Vector2<f64>, Vector2<f64>), f64) {
    let (p_s, seg) = closest_point_on_polyline(&world.true_seam, p_r);
    let frame = seam_frame(&world.true_seam, seg, world.contact_side);
    let raw = p_r - p_s;
    let delta = Vector2::new(raw.dot(&frame.0), raw.dot(&frame.1));
    (p_s, delta, frame, raw.norm())
}

/// Simulates the compliant probe pressed against the seam wall: the tip
/// rides the closest wall point and the marker displacement is the anchor's
/// offset from it, reported in the wall's local (tangent, normal)
/// components.
///
/// The tool heading does not enter this reduced kinematic model; the
/// parameter is kept so call sites read like the stepping loop.
pub fn srm_contact(
    p_r: &Vector2<f64>,
    _alpha: f64,
    world: &SeamWorld,
) -> Result<(Vector2<f64>, Vector2<f64>), Error> {
    let (p_s, delta, _, dist) = contact_geometry(world, p_r);
    if dist > world.max_engagement {
        return Err(Error::ContactLost { distance_m: dist });
    }
    Ok((p_s, delta))
}

/// Velocity command: constant feed along the planned-path tangent at the
/// nearest planned point, plus a proportional correction along the planned
/// normal that drives the measured normal deformation to the desired value.
/// The tangential part is exactly `v_const` by construction.
pub fn servo_velocity(
    p_r: &Vector2<f64>,
    delta_n: &Vector2<f64>,
    world: &SeamWorld,
    params: &ServoParams,
) -> Vector2<f64> {
    assert!(world.planned_path.len() >= 2, "planned path too short");
    let i = nearest_vertex(&world.planned_path, p_r);
    let (t_v, n_v) = polyline_frame(&world.planned_path, i, world.contact_side);
    let mismatch = delta_n.dot(&n_v) - params.delta_d;
    params.v_const * t_v - params.k_p * mismatch * n_v
}

fn heading_vectors(alpha: f64) -> (Vector2<f64>, Vector2<f64>) {
    let state = ToolState2D {
        p_r: Vector2::zeros(),
        alpha,
    };
    (state.t_d(), state.n_d())
}

/// Heading rate that nulls the normal component of the torch's implicated
/// velocity along the refined-path normal `n_hat_t`:
/// `ω = −(V_r·n̂_t) / (‖d‖ · (n_d·n̂_t))`.
pub fn torch_omega(
    v_r: &Vector2<f64>,
    alpha: f64,
    d_norm: f64,
    n_hat_t: &Vector2<f64>,
) -> Result<f64, Error> {
    let (_, n_d) = heading_vectors(alpha);
    let denom = n_d.dot(n_hat_t);
    if denom.abs() <= 1e-3 {
        return Err(Error::KinematicSingularity);
    }
    Ok(-v_r.dot(n_hat_t) / (d_norm * denom))
}

/// Implicated torch velocity for a given command:
/// `V_t = V_r + ω‖d‖·n_d`.
pub fn torch_velocity(
    v_r: &Vector2<f64>,
    omega: f64,
    d_norm: f64,
    alpha: f64,
) -> Vector2<f64> {
    let (_, n_d) = heading_vectors(alpha);
    v_r + omega * d_norm * n_d
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

/// Minimum spacing between recorded refined-path points; denser contact
/// samples add nothing to the torch's nearest-point steering.
const REFINED_SPACING: f64 = 0.5e-3;

/// One-step heading rotation above which the explicit-Euler update is no
/// longer meaningful; treated as hitting the singularity.
const MAX_STEP_ROTATION: f64 = core::f64::consts::FRAC_PI_4;

/// Runs the tracking loop: contact → record refined point → servo →
/// heading solve → integrate, until the planned path ends, the step budget
/// runs out, or the heading constraint becomes singular.
///
/// The probe starts on the first planned point with the tool aligned to
/// the planned tangent; if that anchor cannot reach the seam the run never
/// starts. Losing contact later is survivable: the deformation reference
/// resets to zero (and stays there), the servo feeds along the planned
/// tangent, and tracking resumes if the wall comes back into reach.
pub fn run_weld(world: &SeamWorld, params: &ServoParams) -> Result<WeldTrace, Error> {
    assert!(world.planned_path.len() >= 2, "planned path too short");
    assert!(world.true_seam.len() >= 2, "seam too short");
    assert!(params.k_p > 0.0 && params.dt > 0.0 && params.v_const > 0.0);

    let mut p_r = world.planned_path[0];
    let (t0, _) = polyline_frame(&world.planned_path, 0, world.contact_side);
    let mut alpha = t0.y.atan2(t0.x);
    let d_norm = world.tool_offset_norm;

    {
        let (_, _, _, dist) = contact_geometry(world, &p_r);
        if dist > world.max_engagement {
            return Err(Error::NeverEngaged);
        }
    }

    let mut delta_d_live = params.delta_d;
    let mut contact_lost = false;
    let mut refined: Vec<Vector2<f64>> = Vec::new();
    let mut steps: Vec<TraceStep> = Vec::new();
    let termination;

    loop {
        if steps.len() >= params.max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        if nearest_vertex(&world.planned_path, &p_r) == world.planned_path.len() - 1 {
            termination = Termination::PathEnd;
            break;
        }

        // Contact and refined-path recording.
        let (p_s, delta, seam_fr, dist) = contact_geometry(world, &p_r);
        let engaged = dist <= world.max_engagement;
        let delta_eff = if engaged {
            if refined
                .last()
                .is_none_or(|last| (last - p_s).norm() >= REFINED_SPACING)
            {
                refined.push(p_s);
            }
            delta
        } else {
            if !contact_lost {
                contact_lost = true;
            }
            delta_d_live = 0.0;
            Vector2::zeros()
        };

        // Servo from the measured normal deformation.
        let servo_params = ServoParams {
            delta_d: delta_d_live,
            ..*params
        };
        let delta_n_vec = delta_eff.y * seam_fr.1;
        let v_r = servo_velocity(&p_r, &delta_n_vec, world, &servo_params);

        // Torch station and its refined-path frame.
        let (t_d, _) = heading_vectors(alpha);
        let p_t = p_r - d_norm * t_d;
        let n_hat_t = if refined.len() >= 2 {
            let j = nearest_vertex(&refined, &p_t);
            polyline_frame(&refined, j, world.contact_side).1
        } else {
            let j = nearest_vertex(&world.planned_path, &p_t);
            polyline_frame(&world.planned_path, j, world.contact_side).1
        };

        let omega = match torch_omega(&v_r, alpha, d_norm, &n_hat_t) {
            Ok(w) if (w * params.dt).abs() <= MAX_STEP_ROTATION => w,
            _ => {
                termination = Termination::Singularity;
                break;
            }
        };
        let v_t = torch_velocity(&v_r, omega, d_norm, alpha);

        steps.push(TraceStep {
            t: steps.len() as f64 * params.dt,
            p_r,
            p_s,
            p_t,
            delta_t_s: delta_eff.x,
            delta_n_s: delta_eff.y,
            omega,
            v_t_normal: v_t.dot(&n_hat_t),
            engaged,
        });

        p_r += v_r * params.dt;
        alpha += omega * params.dt;
    }

    Ok(WeldTrace {
        steps,
        refined,
        termination,
        contact_lost,
    })
}
