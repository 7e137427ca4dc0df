//! Result records: the JSON file the calibration, verification, and
//! compensation commands exchange.
//!
//! The transform is stored as a row-major 4×4 array; the error block uses
//! reporting units (millimeters and degrees) in the fixed column order
//! x, y, z, roll, pitch, yaw. JSON cannot carry infinities, so a failed
//! metric is recorded by omitting `error`, `error_delta`, and `cost_mm`.

use std::fs;
use std::path::Path;

use handeye_core::se3::{PoseError, RigidTransform};
use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::IoError;

/// Error components in reporting units, table column order.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ErrorBlock {
    /// δx, δy, δz in millimeters.
    pub translation_mm: [f64; 3],
    /// δroll, δpitch, δyaw in degrees.
    pub rotation_deg: [f64; 3],
}

impl ErrorBlock {
    /// Converts a pose error (already mm / degrees).
    pub fn from_pose_error(pe: &PoseError) -> Self {
        Self {
            translation_mm: pe.delta_t,
            rotation_deg: pe.delta_rpy,
        }
    }

    /// Euclidean norm of the translation components, millimeters.
    pub fn translation_norm_mm(&self) -> f64 {
        Vector3::from(self.translation_mm).norm()
    }
}

/// On-disk record of a calibration, verification, or compensation run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    /// Schema version; this reader supports version 1.
    pub version: u32,
    /// The estimated camera-to-base transform, row-major homogeneous.
    pub h_optimal: [[f64; 4]; 4],
    /// `h_optimal` with the measured residual folded in, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_compensated: Option<[[f64; 4]; 4]>,
    /// Verification error of the estimate; absent when the metric failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBlock>,
    /// The residual error transform itself (row-major homogeneous), as
    /// consumed by the compensation command; absent when the metric failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_delta: Option<[[f64; 4]; 4]>,
    /// Scalar verification cost, millimeters; absent when infinite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_mm: Option<f64>,
    /// Pairs consumed by the iterative loop after initialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_used: Option<usize>,
    /// Reference fit over every pair at once, for comparison runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_all_points: Option<[[f64; 4]; 4]>,
    /// Verification error of `h_all_points`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_all_points: Option<ErrorBlock>,
}

impl ResultsFile {
    /// A record holding only an estimate, everything else pending.
    pub fn new(h: &RigidTransform) -> Self {
        Self {
            version: 1,
            h_optimal: matrix_rows(h),
            h_compensated: None,
            error: None,
            error_delta: None,
            cost_mm: None,
            iterations_used: None,
            h_all_points: None,
            error_all_points: None,
        }
    }
}

/// Row-major 4×4 array of a transform.
pub fn matrix_rows(t: &RigidTransform) -> [[f64; 4]; 4] {
    let m = t.to_homogeneous();
    let mut rows = [[0.0; 4]; 4];
    for (r, row) in rows.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    rows
}

/// Rebuilds a transform from a row-major 4×4 array, rejecting matrices that
/// are not rigid.
pub fn transform_from_rows(rows: &[[f64; 4]; 4]) -> Result<RigidTransform, IoError> {
    let mut m = Matrix4::zeros();
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    let t = RigidTransform::from_homogeneous(&m);
    if !t.is_valid() || rows[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(IoError::Schema(
            "matrix is not a rigid transform (orthonormal rotation, bottom row 0 0 0 1)"
                .to_string(),
        ));
    }
    Ok(t)
}

/// Reads a results record, checking the schema version.
pub fn read_results(path: &Path) -> Result<ResultsFile, IoError> {
    let text = fs::read_to_string(path)?;
    let results: ResultsFile = serde_json::from_str(&text)
        .map_err(|e| IoError::Schema(format!("{}: {e}", path.display())))?;
    if results.version != 1 {
        return Err(IoError::Schema(format!(
            "{}: unsupported results version {} (this reader supports 1)",
            path.display(),
            results.version
        )));
    }
    Ok(results)
}

/// Writes a results record as pretty-printed JSON.
pub fn write_results(path: &Path, results: &ResultsFile) -> Result<(), IoError> {
    let mut text =
        serde_json::to_string_pretty(results).map_err(|e| IoError::Schema(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Reads a transform argument: either a bare row-major 4×4 JSON array, or a
/// results record — in which case the compensated matrix is preferred over
/// the raw estimate, so command chains always act on the latest transform.
pub fn read_transform_arg(path: &Path) -> Result<RigidTransform, IoError> {
    let text = fs::read_to_string(path)?;
    if let Ok(rows) = serde_json::from_str::<[[f64; 4]; 4]>(&text) {
        return transform_from_rows(&rows);
    }
    let results = read_results(path)?;
    let rows = results.h_compensated.unwrap_or(results.h_optimal);
    transform_from_rows(&rows)
}

/// Reads an error-transform argument: a bare row-major 4×4 JSON array, or a
/// results record whose `error_delta` is present.
pub fn read_error_arg(path: &Path) -> Result<RigidTransform, IoError> {
    let text = fs::read_to_string(path)?;
    if let Ok(rows) = serde_json::from_str::<[[f64; 4]; 4]>(&text) {
        return transform_from_rows(&rows);
    }
    let results = read_results(path)?;
    match results.error_delta {
        Some(rows) => transform_from_rows(&rows),
        None => Err(IoError::Schema(format!(
            "{}: no error_delta to compensate with (the verification metric failed)",
            path.display()
        ))),
    }
}
