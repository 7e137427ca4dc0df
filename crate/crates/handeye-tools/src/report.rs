//! Error-table reporting and the measured hardware reference fixtures.
//!
//! Every error table — whether its rows come from hardware reference data
//! or from a simulation run — goes through the same formatter, with the
//! fixed column order x, y, z (mm), roll, pitch, yaw (deg) and two-decimal
//! values.

use std::fmt::Write as _;

use handeye_core::se3::PoseError;

/// One labelled row of an error table (millimeters / degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// Row label (rig name, pair count, …).
    pub label: String,
    /// δx, δy, δz in millimeters.
    pub translation_mm: [f64; 3],
    /// δroll, δpitch, δyaw in degrees.
    pub rotation_deg: [f64; 3],
}

impl ReportRow {
    /// Builds a row from literal values.
    pub fn new(label: &str, translation_mm: [f64; 3], rotation_deg: [f64; 3]) -> Self {
        Self {
            label: label.to_string(),
            translation_mm,
            rotation_deg,
        }
    }

    /// Builds a row from a computed pose error (already mm / degrees).
    pub fn from_pose_error(label: &str, pe: &PoseError) -> Self {
        Self::new(label, pe.delta_t, pe.delta_rpy)
    }
}

/// Header of every error table: fixed column order, reporting units.
pub const ERROR_TABLE_HEADER: &str = "setup,x_mm,y_mm,z_mm,roll_deg,pitch_deg,yaw_deg";

/// Renders rows under [`ERROR_TABLE_HEADER`] with two-decimal values.
pub fn format_error_table(rows: &[ReportRow]) -> String {
    let mut out = String::from(ERROR_TABLE_HEADER);
    out.push('\n');
    for row in rows {
        let t = row.translation_mm;
        let r = row.rotation_deg;
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
            row.label, t[0], t[1], t[2], r[0], r[1], r[2]
        );
    }
    out
}

/// Measured hardware reference: single-shot fit over every sample point
/// (no iterative optimization) for four robot / structured-light scanner
/// rigs. Not reproducible without the hardware; kept as the reporting
/// fixture the simulation results are formatted against.
pub fn hardware_all_points_reference() -> Vec<ReportRow> {
    vec![
        ReportRow::new("UR5 & PhoXi M", [11.60, 2.81, 5.55], [0.49, -0.89, -0.47]),
        ReportRow::new("UR10e & PhoXi M", [0.60, 1.75, -0.41], [0.10, -0.04, -0.23]),
        ReportRow::new(
            "Franka Emika & PhoXi M",
            [4.34, -4.06, -0.13],
            [-0.30, -0.34, -0.07],
        ),
        ReportRow::new("AUBO i5 & PhoXi S", [-0.26, -0.27, -0.35], [0.14, 0.04, 0.01]),
    ]
}

/// Measured hardware reference: commercial sphere-target calibration
/// software on the UR10e / structured-light rig, by number of collected
/// pose pairs.
pub fn sphere_software_reference() -> Vec<ReportRow> {
    vec![
        ReportRow::new("4 pairs", [-1.94, -0.90, -0.86], [-0.07, 0.04, -0.10]),
        ReportRow::new("16 pairs", [-0.98, -1.01, -0.83], [-0.07, 0.09, -0.11]),
    ]
}

/// Measured hardware reference: single-shot fit over 50 pairs using a
/// consumer time-of-flight depth camera reading the UR10e's 90 mm wrist
/// circle (the tool flange itself is too noisy for time-of-flight on
/// metal).
pub fn tof_wrist_circle_reference() -> Vec<ReportRow> {
    vec![ReportRow::new(
        "UR10e & Azure Kinect DK",
        [-11.11, 3.90, 7.15],
        [-0.15, 0.92, 1.56],
    )]
}

/// Convergence envelope the iterative method settled under on hardware,
/// per rig, over 50 shuffled replays of the recorded stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceBound {
    /// Rig label.
    pub label: &'static str,
    /// Upper bound on the converged translation error, millimeters.
    pub translation_mm: f64,
    /// Upper bound on the converged rotation error, degrees.
    pub rotation_deg: f64,
}

/// Measured hardware reference: iterative-method convergence bounds.
pub fn iterative_convergence_reference() -> Vec<ConvergenceBound> {
    vec![
        ConvergenceBound {
            label: "UR5 & PhoXi M",
            translation_mm: 0.28,
            rotation_deg: 0.25,
        },
        ConvergenceBound {
            label: "UR10e & PhoXi M",
            translation_mm: 0.28,
            rotation_deg: 0.25,
        },
        ConvergenceBound {
            label: "AUBO i5 & PhoXi S",
            translation_mm: 0.28,
            rotation_deg: 0.25,
        },
        ConvergenceBound {
            label: "Franka Emika & PhoXi M",
            translation_mm: 0.40,
            rotation_deg: 0.60,
        },
    ]
}
