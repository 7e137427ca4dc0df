//! Error type shared by all core modules.

use thiserror::Error;

/// Errors produced by the calibration and simulation pipelines.
///
/// Recoverable conditions that an algorithm handles internally (e.g. a trial
/// fit failing during pool substitution) are *not* surfaced here; these are
/// the failures a caller must react to.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Statistical outlier removal needs at least `k_neighbors + 1` points.
    #[error("need at least {required} points, got {actual}")]
    InsufficientPoints {
        /// Minimum number of points the operation requires.
        required: usize,
        /// Number of points actually supplied.
        actual: usize,
    },

    /// Three collinear points do not define a circle.
    #[error("sample points are collinear; no unique circle")]
    DegenerateSample,

    /// RANSAC exhausted its iteration budget without a circle that passes
    /// the radius model check and the inlier-fraction requirement.
    #[error("no circle model found within the iteration budget")]
    NoModelFound,

    /// No cluster in the scene produced an acceptable circle fit.
    #[error("flange segmentation failed: no cluster yielded a circle")]
    SegmentationFailed,

    /// Rigid fitting needs at least four non-coplanar point pairs.
    #[error("degenerate point configuration: {reason}")]
    DegenerateConfiguration {
        /// Which precondition failed.
        reason: &'static str,
    },

    /// ICP could not align the clouds (too few correspondences, or the
    /// converged residual exceeds the failure threshold).
    #[error("ICP registration failed: {reason}")]
    RegistrationFailed {
        /// Which failure branch triggered.
        reason: &'static str,
    },

    /// The calibration pair stream ended before four pairs were available.
    #[error("pair stream exhausted: need at least 4 pairs, got {actual}")]
    StreamExhausted {
        /// Number of pairs the stream yielded.
        actual: usize,
    },

    /// Error compensation requires a finite error metric.
    #[error("cannot compensate: error metric is infinite (ICP failed)")]
    CannotCompensate,

    /// The touch probe is too far from the seam to be in contact.
    #[error("probe lost contact with the seam (distance {distance_m} m)")]
    ContactLost {
        /// Anchor-to-seam distance at the failure, meters.
        distance_m: f64,
    },

    /// The torch orientation is perpendicular to the seam normal; the
    /// angular velocity that keeps the torch on the seam is unbounded.
    #[error("kinematic singularity: tool normal is perpendicular to seam normal")]
    KinematicSingularity,

    /// The initial tool placement never made contact with the seam.
    #[error("initial tool pose is not engaged with the seam")]
    NeverEngaged,
}
