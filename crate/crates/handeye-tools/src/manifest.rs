//! Dataset manifests: the JSON record binding recorded clouds, robot poses,
//! the flange description, and a unit declaration into one loadable set.
//!
//! Schema version 1. All lengths inside the manifest are in the declared
//! unit (`"m"` or `"mm"`) and converted to meters on load; referenced cloud
//! files are resolved relative to the manifest's directory and must exist
//! at load time.

use std::fs;
use std::path::{Path, PathBuf};

use handeye_core::cloud::PointCloud;
use handeye_core::se3::{rotation_from_rpy, rpy_from_rotation, RigidTransform, RpyAngles};
use handeye_core::sim::FlangeModel;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud_io::{read_cloud_as_meters, Unit};
use crate::error::IoError;

/// A robot pose as recorded on disk: translation in manifest units plus
/// exactly one rotation form (unit quaternion or roll-pitch-yaw radians).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// Translation, manifest units.
    pub translation: [f64; 3],
    /// Unit quaternion as (w, x, y, z); mutually exclusive with `rpy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
    /// Roll-pitch-yaw in radians; mutually exclusive with `quaternion`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpy: Option<[f64; 3]>,
}

impl PoseRecord {
    /// Validates the record and converts it into a transform, scaling the
    /// translation into meters.
    pub fn to_transform(&self, scale: f64) -> Result<RigidTransform, IoError> {
        let rotation = match (&self.quaternion, &self.rpy) {
            (Some(q), None) => {
                let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(IoError::Schema(format!(
                        "quaternion norm is {norm}, expected 1 within 1e-6"
                    )));
                }
                UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
                    .to_rotation_matrix()
                    .into_inner()
            }
            (None, Some(r)) => rotation_from_rpy(RpyAngles::new(r[0], r[1], r[2])),
            _ => {
                return Err(IoError::Schema(
                    "a pose needs exactly one of 'quaternion' or 'rpy'".to_string(),
                ))
            }
        };
        Ok(RigidTransform::new(
            rotation,
            Vector3::from(self.translation) * scale,
        ))
    }

    /// Records a transform (meters) in roll-pitch-yaw form.
    pub fn from_transform(t: &RigidTransform) -> Self {
        let (rpy, _) = rpy_from_rotation(&t.rotation);
        Self {
            translation: [t.translation.x, t.translation.y, t.translation.z],
            quaternion: None,
            rpy: Some([rpy.roll, rpy.pitch, rpy.yaw]),
        }
    }
}

/// Flange description inside a manifest. Lengths are in manifest units and
/// the sampling density in points per squared manifest unit; omitted fields
/// fall back to the standard 62 mm flange model.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FlangeSpec {
    /// Outer (rim) radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_radius: Option<f64>,
    /// Bolt-circle radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bolt_circle_radius: Option<f64>,
    /// Bolt-hole radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole_radius: Option<f64>,
    /// Number of bolt holes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hole_count: Option<usize>,
    /// Inner radius of the visible annulus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annulus_inner_radius: Option<f64>,
    /// Surface sampling density, points per squared unit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_density: Option<f64>,
}

impl FlangeSpec {
    /// Fills unset fields from the default model, converting the declared
    /// unit into meters (`scale` meters per unit).
    pub fn to_model(&self, scale: f64) -> FlangeModel {
        let d = FlangeModel::default();
        FlangeModel {
            outer_radius: self.outer_radius.map_or(d.outer_radius, |v| v * scale),
            bolt_circle_radius: self
                .bolt_circle_radius
                .map_or(d.bolt_circle_radius, |v| v * scale),
            hole_radius: self.hole_radius.map_or(d.hole_radius, |v| v * scale),
            hole_count: self.hole_count.unwrap_or(d.hole_count),
            annulus_inner_radius: self
                .annulus_inner_radius
                .map_or(d.annulus_inner_radius, |v| v * scale),
            sample_density: self
                .sample_density
                .map_or(d.sample_density, |v| v / (scale * scale)),
        }
    }
}

/// One recorded measurement: a cloud file plus the robot pose it was taken
/// at.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    /// Cloud file path, relative to the manifest.
    pub cloud_file: String,
    /// Robot flange pose in the base frame at capture time.
    pub robot_pose: PoseRecord,
}

/// A recorded calibration dataset: schema version, unit declaration, flange
/// description, the calibration pairs, and the held-out verification pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Schema version; this reader supports version 1.
    pub version: u32,
    /// Unit of every length in the manifest and its referenced files.
    pub units: Unit,
    /// Flange description (defaults apply to omitted fields).
    #[serde(default)]
    pub flange: FlangeSpec,
    /// Calibration measurements, in collection order.
    pub pairs: Vec<PairEntry>,
    /// Held-out measurement used only for scoring candidate transforms.
    pub verification: PairEntry,
}

/// A manifest bound to its on-disk location, ready for resolving referenced
/// files.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    /// The parsed manifest.
    pub manifest: DatasetManifest,
    /// Directory referenced files resolve against.
    pub dir: PathBuf,
}

impl LoadedManifest {
    /// Meters per manifest unit.
    pub fn scale(&self) -> f64 {
        self.manifest.units.scale_to_meters()
    }

    /// The flange model in meters.
    pub fn flange_model(&self) -> FlangeModel {
        self.manifest.flange.to_model(self.scale())
    }

    /// Resolves a referenced file against the manifest directory.
    pub fn resolve(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Loads one entry: the pose (meters) and its cloud (meters, unit
    /// checked against the manifest declaration).
    pub fn load_entry(&self, entry: &PairEntry) -> Result<(RigidTransform, PointCloud), IoError> {
        let pose = entry.robot_pose.to_transform(self.scale())?;
        let cloud = read_cloud_as_meters(&self.resolve(&entry.cloud_file), self.manifest.units)?;
        Ok((pose, cloud))
    }
}

/// Reads and validates a manifest: schema version 1, well-formed poses, and
/// every referenced file present.
pub fn read_manifest(path: &Path) -> Result<LoadedManifest, IoError> {
    let text = fs::read_to_string(path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| IoError::Schema(format!("{}: {e}", path.display())))?;
    if manifest.version != 1 {
        return Err(IoError::Schema(format!(
            "{}: unsupported manifest version {} (this reader supports 1)",
            path.display(),
            manifest.version
        )));
    }
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let scale = manifest.units.scale_to_meters();
    for entry in manifest.pairs.iter().chain(std::iter::once(&manifest.verification)) {
        entry.robot_pose.to_transform(scale)?;
        let file = dir.join(&entry.cloud_file);
        if !file.is_file() {
            return Err(IoError::Schema(format!(
                "{}: referenced cloud file '{}' does not exist",
                path.display(),
                file.display()
            )));
        }
    }
    Ok(LoadedManifest { manifest, dir })
}

/// Writes a manifest as pretty-printed JSON.
pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| IoError::Schema(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
