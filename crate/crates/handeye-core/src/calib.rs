//! Online iterative hand-eye calibration with an optimal pool of four
//! sample pairs, plus error compensation.
//!
//! The loop maintains the four pairs whose rigid fit scores best against a
//! fixed verification measurement. Each incoming pair is tried in every pool
//! slot; the best strictly-improving substitution is kept, so the
//! verification cost never increases. Gross outliers in the stream can
//! therefore never displace good pool members, and an outlier that slipped
//! into the initial pool is evicted as soon as a better pair arrives.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec::Vec;

use crate::cloud::PointCloud;
use crate::error::Error;
use crate::icp::{calibration_error, calibration_error_sim, cost, CostKind, IcpErrorMetric, IcpParams};
use crate::rigid::{fit_rigid, SamplePair};
use crate::se3::{PoseError, RigidTransform};

/// How an incoming pair is offered to the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplacementMode {
    /// Evaluate all four substitutions from the same starting pool and keep
    /// the single best strictly-improving one (order-independent; default).
    BestOfFour,
    /// Try the slots in order, committing each improvement before trying the
    /// next slot.
    Sequential,
}

/// Configuration of the iterative loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibConfig {
    /// Stop once the verification cost falls to this level, in millimeters
    /// (cost values are meters internally).
    pub e_required_mm: f64,
    /// Maximum number of new pairs consumed after the initial four.
    pub k_max: usize,
    /// Scalar cost extracted from the verification error.
    pub cost_kind: CostKind,
    /// Substitution strategy.
    pub replacement: ReplacementMode,
    /// Seed reserved for stochastic extensions; the loop itself is
    /// deterministic in the stream order.
    pub rng_seed: u64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        Self {
            e_required_mm: 0.2,
            k_max: 100,
            cost_kind: CostKind::TranslationNorm,
            replacement: ReplacementMode::BestOfFour,
            rng_seed: 0,
        }
    }
}

/// The fixed verification measurement every candidate transform is scored
/// against. Collected once, before the loop starts.
#[derive(Debug, Clone)]
pub enum Verification {
    /// Simulation mode: the ground-truth transform is known, so the error
    /// transform is `estimate⁻¹ ∘ truth` directly.
    Simulation {
        /// True camera-to-base transform.
        h_true: RigidTransform,
    },
    /// Measurement mode: the error is recovered by registering the measured
    /// verification cloud onto the cloud predicted from the estimate.
    Cloud {
        /// Robot flange pose at the verification shot, base frame.
        robot_pose_v: RigidTransform,
        /// Flange surface model, flange frame.
        p_true: PointCloud,
        /// Measured verification cloud, camera frame.
        p_v_cam: PointCloud,
        /// Registration settings.
        icp: IcpParams,
    },
}

impl Verification {
    /// Scores a candidate transform against the verification data.
    pub fn evaluate(&self, h_est: &RigidTransform) -> IcpErrorMetric {
        match self {
            Verification::Simulation { h_true } => calibration_error_sim(h_est, h_true),
            Verification::Cloud {
                robot_pose_v,
                p_true,
                p_v_cam,
                icp,
            } => calibration_error(h_est, robot_pose_v, p_true, p_v_cam, icp),
        }
    }
}

/// One line of the run log: the loop state after consuming a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    /// New pairs consumed so far; 0 is the state right after initialization.
    pub iteration: usize,
    /// Whether this pair was accepted into the pool (initialization counts
    /// as accepted).
    pub accepted: bool,
    /// Verification cost after this iteration, meters (infinite while the
    /// pool cannot be fitted or verified).
    pub cost: f64,
    /// Verification error breakdown after this iteration.
    pub pose_error: PoseError,
}

/// Loop state: the pool, the best transform so far, and the log.
#[derive(Debug, Clone)]
pub struct CalibState {
    /// Exactly four sample pairs at all times.
    pub pool: Vec<SamplePair>,
    /// Best transform found so far.
    pub h_optimal: RigidTransform,
    /// Verification error of `h_optimal`.
    pub e_optimal: IcpErrorMetric,
    /// One entry per consumed pair, initialization included.
    pub history: Vec<HistoryEntry>,
    cfg: CalibConfig,
    verification: Verification,
}

/// Final result of a calibration run.
#[derive(Debug, Clone)]
pub struct CalibOutcome {
    /// Best transform found by the loop.
    pub h_optimal: RigidTransform,
    /// `h_optimal` with the measured residual error folded in; equals
    /// `h_optimal` when the error metric is failed/infinite.
    pub h_compensated: RigidTransform,
    /// Verification error of `h_optimal`.
    pub e_optimal: IcpErrorMetric,
    /// New pairs consumed after the initial four.
    pub iterations_used: usize,
    /// Per-iteration log, initialization included.
    pub history: Vec<HistoryEntry>,
    /// The four pairs `h_optimal` was fitted from.
    pub pool: Vec<SamplePair>,
}

/// Initializes the loop from exactly four pairs.
///
/// The initial cost may legitimately be infinite (a failed verification on
/// noisy data); that state is still steppable and repairs itself as better
/// pairs arrive. A coplanar initial pool, however, is reported as
/// `DegenerateConfiguration` so callers can decide; [`run`] converts it into
/// the infinite-cost state instead of failing.
pub fn init(
    pairs4: &[SamplePair],
    verification: Verification,
    cfg: CalibConfig,
) -> Result<CalibState, Error> {
    assert_eq!(pairs4.len(), 4, "the pool holds exactly four pairs");
    let fit = fit_rigid(pairs4, false)?;
    let e = verification.evaluate(&fit.transform);
    let c = cost(&e, cfg.cost_kind);
    Ok(CalibState {
        pool: pairs4.to_vec(),
        h_optimal: fit.transform,
        e_optimal: e,
        history: alloc::vec![HistoryEntry {
            iteration: 0,
            accepted: true,
            cost: c,
            pose_error: e.pose_error,
        }],
        cfg,
        verification,
    })
}

/// The infinite-cost fallback state used by [`run`] when the initial four
/// pairs cannot be fitted.
fn unfitted_state(
    pairs4: &[SamplePair],
    verification: Verification,
    cfg: CalibConfig,
) -> CalibState {
    let e = IcpErrorMetric::failed_metric();
    CalibState {
        pool: pairs4.to_vec(),
        h_optimal: RigidTransform::identity(),
        e_optimal: e,
        history: alloc::vec![HistoryEntry {
            iteration: 0,
            accepted: true,
            cost: f64::INFINITY,
            pose_error: e.pose_error,
        }],
        cfg,
        verification,
    }
}

impl CalibState {
    /// Current verification cost, meters.
    pub fn current_cost(&self) -> f64 {
        cost(&self.e_optimal, self.cfg.cost_kind)
    }

    /// Fits and scores one trial pool; infinite cost when the fit or the
    /// verification fails.
    fn score(&self, pool: &[SamplePair]) -> (f64, Option<(RigidTransform, IcpErrorMetric)>) {
        match fit_rigid(pool, false) {
            Ok(fit) => {
                let e = self.verification.evaluate(&fit.transform);
                let c = cost(&e, self.cfg.cost_kind);
                (c, Some((fit.transform, e)))
            }
            Err(_) => (f64::INFINITY, None),
        }
    }

    /// Offers one new pair to the pool.
    ///
    /// Tries the pair in each of the four slots and keeps a substitution
    /// only if it strictly lowers the verification cost; ties keep the
    /// incumbent pool. Fit failures during trials score as infinite cost
    /// rather than erroring. Appends one history entry either way.
    pub fn step(&mut self, new_pair: SamplePair) {
        let iteration = self.history.last().map_or(0, |h| h.iteration) + 1;
        let mut accepted = false;

        match self.cfg.replacement {
            ReplacementMode::BestOfFour => {
                let mut best: Option<(f64, usize, RigidTransform, IcpErrorMetric)> = None;
                for slot in 0..4 {
                    let mut trial = self.pool.clone();
                    trial[slot] = new_pair.clone();
                    let (c, fitted) = self.score(&trial);
                    if let Some((h, e)) = fitted {
                        if best.as_ref().map_or(true, |(bc, ..)| c < *bc) {
                            best = Some((c, slot, h, e));
                        }
                    }
                }
                if let Some((c, slot, h, e)) = best {
                    if c < self.current_cost() {
                        self.pool[slot] = new_pair;
                        self.h_optimal = h;
                        self.e_optimal = e;
                        accepted = true;
                    }
                }
            }
            ReplacementMode::Sequential => {
                for slot in 0..4 {
                    let mut trial = self.pool.clone();
                    trial[slot] = new_pair.clone();
                    let (c, fitted) = self.score(&trial);
                    if let Some((h, e)) = fitted {
                        if c < self.current_cost() {
                            self.pool = trial;
                            self.h_optimal = h;
                            self.e_optimal = e;
                            accepted = true;
                        }
                    }
                }
            }
        }

        let c = self.current_cost();
        self.history.push(HistoryEntry {
            iteration,
            accepted,
            cost: c,
            pose_error: self.e_optimal.pose_error,
        });
    }

    /// Finalizes the state into an outcome with compensation applied.
    pub fn into_outcome(self) -> CalibOutcome {
        let h_compensated = if self.e_optimal.failed {
            self.h_optimal
        } else {
            self.h_optimal.compose(&self.e_optimal.delta)
        };
        CalibOutcome {
            h_optimal: self.h_optimal,
            h_compensated,
            e_optimal: self.e_optimal,
            iterations_used: self.history.last().map_or(0, |h| h.iteration),
            history: self.history,
            pool: self.pool,
        }
    }
}

/// Runs the full loop over a pair stream.
///
/// Initializes from the first four pairs (an unfittable initial pool becomes
/// the infinite-cost state and is repaired by the loop), then consumes pairs
/// while the cost exceeds `e_required_mm` and fewer than `k_max` new pairs
/// have been used.
pub fn run(
    stream: &[SamplePair],
    verification: Verification,
    cfg: CalibConfig,
) -> Result<CalibOutcome, Error> {
    if stream.len() < 4 {
        return Err(Error::StreamExhausted {
            actual: stream.len(),
        });
    }
    let mut state = match init(&stream[..4], verification.clone(), cfg) {
        Ok(s) => s,
        Err(Error::DegenerateConfiguration { .. }) => {
            unfitted_state(&stream[..4], verification, cfg)
        }
        Err(e) => return Err(e),
    };

    let threshold = cfg.e_required_mm * 1e-3;
    for (consumed, pair) in stream[4..].iter().enumerate() {
        if state.current_cost() <= threshold || consumed >= cfg.k_max {
            break;
        }
        state.step(pair.clone());
    }
    Ok(state.into_outcome())
}

/// Folds the measured residual error into the estimate:
/// `H ∘ δ` re-scores as identity against the same verification data.
pub fn compensate(
    h_optimal: &RigidTransform,
    e_optimal: &IcpErrorMetric,
) -> Result<RigidTransform, Error> {
    if e_optimal.failed {
        return Err(Error::CannotCompensate);
    }
    Ok(h_optimal.compose(&e_optimal.delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::RpyAngles;
    use crate::sim;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn noiseless_pair(h_true: &RigidTransform, p_base: Vector3<f64>) -> SamplePair {
        let pose = RigidTransform::new(nalgebra::Matrix3::identity(), p_base);
        SamplePair::from_pose(pose, h_true.invert().transform_point(&p_base))
    }

    fn tetra_positions() -> [Vector3<f64>; 4] {
        [
            Vector3::new(0.35, -0.10, 0.40),
            Vector3::new(0.55, 0.10, 0.40),
            Vector3::new(0.55, -0.15, 0.55),
            Vector3::new(0.40, 0.08, 0.52),
        ]
    }

    fn noiseless_pool(h_true: &RigidTransform) -> Vec<SamplePair> {
        tetra_positions()
            .iter()
            .map(|p| noiseless_pair(h_true, *p))
            .collect()
    }

    fn sim_verification() -> Verification {
        Verification::Simulation {
            h_true: sim::ground_truth_transform(),
        }
    }

    #[test]
    fn noiseless_init_has_near_zero_cost_and_run_stops_immediately() {
        let h_true = sim::ground_truth_transform();
        let pool = noiseless_pool(&h_true);
        let state = init(&pool, sim_verification(), CalibConfig::default()).unwrap();
        assert!(state.current_cost() < 1e-9);

        // A fifth pair is available but never consumed: the threshold is
        // already met after initialization.
        let mut stream = pool;
        stream.push(noiseless_pair(&h_true, Vector3::new(0.45, 0.0, 0.45)));
        let outcome = run(&stream, sim_verification(), CalibConfig::default()).unwrap();
        assert_eq!(outcome.iterations_used, 0);
        assert_eq!(outcome.history.len(), 1);
    }

    #[test]
    fn outlier_in_initial_pool_gives_finite_large_cost() {
        let h_true = sim::ground_truth_transform();
        let mut pool = noiseless_pool(&h_true);
        pool[2].p_cam += Vector3::new(0.010, 0.0, 0.0); // 10 mm gross error
        let state = init(&pool, sim_verification(), CalibConfig::default()).unwrap();
        let c = state.current_cost();
        assert!(c.is_finite());
        assert!(c > 1e-3, "cost {c} should reflect the 10 mm outlier");
    }

    #[test]
    fn coplanar_initial_pairs_are_degenerate_for_init() {
        let h_true = sim::ground_truth_transform();
        let coplanar: Vec<SamplePair> = [
            Vector3::new(0.35, -0.10, 0.40),
            Vector3::new(0.55, 0.10, 0.40),
            Vector3::new(0.55, -0.15, 0.40),
            Vector3::new(0.40, 0.08, 0.40),
        ]
        .iter()
        .map(|p| noiseless_pair(&h_true, *p))
        .collect();
        assert!(matches!(
            init(&coplanar, sim_verification(), CalibConfig::default()),
            Err(Error::DegenerateConfiguration { .. })
        ));
    }

    #[test]
    fn run_repairs_a_coplanar_initial_pool() {
        // First four pairs share a plane; the loop must start from the
        // infinite-cost state and still converge once off-plane pairs arrive.
        let h_true = sim::ground_truth_transform();
        let mut stream: Vec<SamplePair> = [
            Vector3::new(0.35, -0.10, 0.40),
            Vector3::new(0.55, 0.10, 0.40),
            Vector3::new(0.55, -0.15, 0.40),
            Vector3::new(0.40, 0.08, 0.40),
        ]
        .iter()
        .map(|p| noiseless_pair(&h_true, *p))
        .collect();
        stream.push(noiseless_pair(&h_true, Vector3::new(0.45, 0.02, 0.55)));
        stream.push(noiseless_pair(&h_true, Vector3::new(0.50, -0.05, 0.50)));

        let outcome = run(&stream, sim_verification(), CalibConfig::default()).unwrap();
        assert!(outcome.history[0].cost.is_infinite());
        assert!(
            outcome.e_optimal.delta.translation.norm() < 1e-9,
            "loop failed to repair the degenerate pool"
        );
    }

    /// Exhaustive oracle: recompute all four substitutions plus "keep" and
    /// assert the step chose the minimum-cost candidate (strict improvement
    /// only, ties keep the incumbent).
    fn assert_step_matches_oracle(state_before: &CalibState, new_pair: &SamplePair, state_after: &CalibState) {
        let incumbent = state_before.current_cost();
        let mut best_cost = incumbent;
        let mut best_slot: Option<usize> = None;
        for slot in 0..4 {
            let mut trial = state_before.pool.clone();
            trial[slot] = new_pair.clone();
            let (c, _) = state_before.score(&trial);
            if c < best_cost {
                best_cost = c;
                best_slot = Some(slot);
            }
        }
        match best_slot {
            Some(slot) => {
                assert!(state_after.history.last().unwrap().accepted);
                assert_eq!(state_after.pool[slot], *new_pair);
                assert!((state_after.current_cost() - best_cost).abs() <= 1e-15);
            }
            None => {
                assert!(!state_after.history.last().unwrap().accepted);
                assert_eq!(state_after.pool, state_before.pool);
            }
        }
    }

    #[test]
    fn every_step_matches_the_exhaustive_oracle() {
        let h_true = sim::ground_truth_transform();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for case in 0..30 {
            // Noisy pool with an occasional gross outlier.
            let mut pool = noiseless_pool(&h_true);
            for pair in pool.iter_mut() {
                pair.p_cam += Vector3::new(
                    rng.random_range(-1e-3..1e-3),
                    rng.random_range(-1e-3..1e-3),
                    rng.random_range(-1e-3..1e-3),
                );
            }
            if case % 3 == 0 {
                pool[case % 4].p_cam += Vector3::new(0.02, -0.01, 0.015);
            }
            let mut state = init(&pool, sim_verification(), CalibConfig::default()).unwrap();
            for _ in 0..5 {
                let p_base = Vector3::new(
                    rng.random_range(0.3..0.6),
                    rng.random_range(-0.16..0.14),
                    rng.random_range(0.35..0.55),
                );
                let mut new_pair = noiseless_pair(&h_true, p_base);
                new_pair.p_cam += Vector3::new(
                    rng.random_range(-1e-3..1e-3),
                    rng.random_range(-1e-3..1e-3),
                    rng.random_range(-1e-3..1e-3),
                );
                let before = state.clone();
                state.step(new_pair.clone());
                assert_step_matches_oracle(&before, &new_pair, &state);
                assert_eq!(state.pool.len(), 4);
            }
        }
    }

    #[test]
    fn clean_pair_evicts_the_outlier_slot() {
        let h_true = sim::ground_truth_transform();
        let mut pool = noiseless_pool(&h_true);
        pool[1].p_cam += Vector3::new(0.0, 0.012, 0.0);
        let mut state = init(&pool, sim_verification(), CalibConfig::default()).unwrap();
        let before = state.current_cost();

        let clean = noiseless_pair(&h_true, Vector3::new(0.48, -0.02, 0.50));
        state.step(clean.clone());
        assert!(state.history.last().unwrap().accepted);
        assert_eq!(state.pool[1], clean, "the outlier slot must be replaced");
        assert!(state.current_cost() < before);
    }

    #[test]
    fn duplicate_pair_is_not_accepted() {
        let h_true = sim::ground_truth_transform();
        let pool = noiseless_pool(&h_true);
        let mut state = init(&pool, sim_verification(), CalibConfig::default()).unwrap();
        let duplicate = pool[0].clone();
        state.step(duplicate);
        assert!(!state.history.last().unwrap().accepted);
        assert_eq!(state.pool, pool);
    }

    #[test]
    fn optimal_pool_is_left_unchanged() {
        let h_true = sim::ground_truth_transform();
        let pool = noiseless_pool(&h_true);
        let mut state = init(&pool, sim_verification(), CalibConfig::default()).unwrap();
        let newcomer = noiseless_pair(&h_true, Vector3::new(0.52, 0.05, 0.42));
        state.step(newcomer);
        assert!(!state.history.last().unwrap().accepted);
        assert_eq!(state.pool, pool);
    }

    #[test]
    fn cost_is_non_increasing_along_history() {
        let h_true = sim::ground_truth_transform();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let scenario = sim::SimScenario {
            noise_sigma: 1e-3,
            ..sim::SimScenario::default()
        };
        let poses = sim::sample_poses(&scenario);
        let pairs = sim::make_pairs(&poses, &h_true, 1e-3, &mut rng);
        let cfg = CalibConfig {
            e_required_mm: 1e-9,
            k_max: 1000,
            ..CalibConfig::default()
        };
        let outcome = run(&pairs, sim_verification(), cfg).unwrap();
        assert_eq!(outcome.history.len(), pairs.len() - 3);
        for w in outcome.history.windows(2) {
            assert!(
                w[1].cost <= w[0].cost,
                "cost increased: {} -> {}",
                w[0].cost,
                w[1].cost
            );
        }
    }

    #[test]
    fn identical_streams_give_identical_outcomes() {
        let h_true = sim::ground_truth_transform();
        let scenario = sim::SimScenario::default();
        let poses = sim::sample_poses(&scenario);
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let pairs = sim::make_pairs(&poses, &h_true, 0.5e-3, &mut rng);
        let cfg = CalibConfig {
            e_required_mm: 1e-9,
            k_max: 1000,
            ..CalibConfig::default()
        };
        let a = run(&pairs, sim_verification(), cfg).unwrap();
        let b = run(&pairs, sim_verification(), cfg).unwrap();
        assert_eq!(a.h_optimal, b.h_optimal);
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.cost.to_bits(), y.cost.to_bits());
        }
    }

    #[test]
    fn sequential_mode_also_only_improves() {
        let h_true = sim::ground_truth_transform();
        let scenario = sim::SimScenario::default();
        let poses = sim::sample_poses(&scenario);
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let pairs = sim::make_pairs(&poses, &h_true, 1e-3, &mut rng);
        let cfg = CalibConfig {
            e_required_mm: 1e-9,
            k_max: 1000,
            replacement: ReplacementMode::Sequential,
            ..CalibConfig::default()
        };
        let outcome = run(&pairs, sim_verification(), cfg).unwrap();
        for w in outcome.history.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn short_streams_are_rejected() {
        let h_true = sim::ground_truth_transform();
        let pairs = noiseless_pool(&h_true);
        assert_eq!(
            run(&pairs[..3], sim_verification(), CalibConfig::default()).unwrap_err(),
            Error::StreamExhausted { actual: 3 }
        );
    }

    #[test]
    fn compensation_with_identity_error_changes_nothing() {
        let h = sim::ground_truth_transform();
        let e = IcpErrorMetric::from_delta(RigidTransform::identity());
        let compensated = compensate(&h, &e).unwrap();
        assert_eq!(compensated.translation, h.translation);
    }

    #[test]
    fn compensation_cancels_a_known_offset_exactly() {
        let h_true = sim::ground_truth_transform();
        let offset = RigidTransform::from_rpy(
            RpyAngles::new(0.0, 0.0, 0.0),
            Vector3::new(1e-3, 2e-3, 3e-3),
        );
        let h_est = h_true.compose(&offset);
        let e = calibration_error_sim(&h_est, &h_true);
        let compensated = compensate(&h_est, &e).unwrap();
        assert!((compensated.translation - h_true.translation).norm() < 1e-9);
        assert!(
            compensated.invert().compose(&h_true).rotation_angle() < 1e-9
        );
    }

    #[test]
    fn failed_error_cannot_compensate() {
        let h = sim::ground_truth_transform();
        assert_eq!(
            compensate(&h, &IcpErrorMetric::failed_metric()),
            Err(Error::CannotCompensate)
        );
    }

    #[test]
    fn large_injected_error_compensates_back_to_truth() {
        // Error magnitudes of a consumer depth-camera calibration:
        // about (-11.11, 3.90, 7.15) mm and (-0.15, 0.92, 1.56) degrees.
        let h_true = sim::ground_truth_transform();
        let err = RigidTransform::from_rpy(
            RpyAngles::new(
                (-0.15f64).to_radians(),
                0.92f64.to_radians(),
                1.56f64.to_radians(),
            ),
            Vector3::new(-11.11e-3, 3.90e-3, 7.15e-3),
        );
        let h_est = h_true.compose(&err);
        let e = calibration_error_sim(&h_est, &h_true);
        let compensated = compensate(&h_est, &e).unwrap();
        let residual = calibration_error_sim(&compensated, &h_true);
        assert!(cost(&residual, CostKind::TranslationNorm) < 1e-9);
        assert!(residual.delta.rotation_angle() < 1e-9);
    }
}
