//! ASCII point-cloud files: PLY (x, y, z vertex properties) and CSV with an
//! `x,y,z` header.
//!
//! Both formats carry an optional unit declaration (`comment units m` in
//! PLY, `# units m` in CSV). The writer always emits meters with full
//! round-trip precision — values are printed with the shortest decimal
//! representation that parses back to the identical float, which is
//! lossless well past the required nine significant digits. Output is
//! locale-independent by construction (decimal points, fixed field order).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use handeye_core::cloud::PointCloud;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::IoError;

/// Length unit a manifest or cloud file declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    /// Meters — the internal unit.
    #[serde(rename = "m")]
    Meters,
    /// Millimeters — converted to meters on load.
    #[serde(rename = "mm")]
    Millimeters,
}

impl Unit {
    /// Multiplier converting declared values into meters.
    pub fn scale_to_meters(self) -> f64 {
        match self {
            Unit::Meters => 1.0,
            Unit::Millimeters => 1e-3,
        }
    }

    /// Parses a declaration string (`"m"` or `"mm"`).
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "m" => Some(Unit::Meters),
            "mm" => Some(Unit::Millimeters),
            _ => None,
        }
    }

    /// The declaration string.
    pub fn label(self) -> &'static str {
        match self {
            Unit::Meters => "m",
            Unit::Millimeters => "mm",
        }
    }
}

/// A parsed cloud in file units, plus the unit the file declared (if any).
#[derive(Debug, Clone)]
pub struct RawCloud {
    /// Points exactly as stored in the file (not yet unit-converted).
    pub cloud: PointCloud,
    /// Unit declared inside the file, when present.
    pub declared_unit: Option<Unit>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn extension_of(path: &Path) -> Result<String, IoError> {
    path.extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .ok_or_else(|| {
            IoError::Schema(format!(
                "{}: cloud files need a .ply or .csv extension",
                path.display()
            ))
        })
}

/// Writes a cloud (meters) to `path`; the format follows the extension
/// (`.ply` or `.csv`).
pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<(), IoError> {
    let ext = extension_of(path)?;
    let text = match ext.as_str() {
        "ply" => render_ply(cloud),
        "csv" => render_csv(cloud),
        other => {
            return Err(IoError::Schema(format!(
                "{}: unsupported cloud extension '.{other}' (use .ply or .csv)",
                path.display()
            )))
        }
    };
    fs::write(path, text)?;
    Ok(())
}

/// Reads a cloud from `path` in file units; the format follows the
/// extension (`.ply` or `.csv`).
pub fn read_cloud(path: &Path) -> Result<RawCloud, IoError> {
    let ext = extension_of(path)?;
    let text = fs::read_to_string(path)?;
    let mut raw = match ext.as_str() {
        "ply" => parse_ply(path, &text),
        "csv" => parse_csv(path, &text),
        other => Err(IoError::Schema(format!(
            "{}: unsupported cloud extension '.{other}' (use .ply or .csv)",
            path.display()
        ))),
    }?;
    raw.cloud.source = path.display().to_string();
    Ok(raw)
}

/// Reads a cloud and converts it into meters, enforcing the manifest's unit
/// declaration: a file declaring a different unit is a [`IoError::UnitMismatch`];
/// a file with no declaration inherits the manifest's.
pub fn read_cloud_as_meters(path: &Path, manifest_unit: Unit) -> Result<PointCloud, IoError> {
    let raw = read_cloud(path)?;
    if let Some(file_unit) = raw.declared_unit {
        if file_unit != manifest_unit {
            return Err(IoError::UnitMismatch {
                path: path.display().to_string(),
                manifest: manifest_unit.label().to_string(),
                file: file_unit.label().to_string(),
            });
        }
    }
    let scale = manifest_unit.scale_to_meters();
    let mut cloud = raw.cloud;
    if scale != 1.0 {
        for p in &mut cloud.points {
            *p *= scale;
        }
    }
    Ok(cloud)
}

fn render_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\ncomment units m\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\nend_header\n");
    for p in &cloud.points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

fn render_csv(cloud: &PointCloud) -> String {
    let mut out = String::from("# units m\nx,y,z\n");
    for p in &cloud.points {
        let _ = writeln!(out, "{},{},{}", p.x, p.y, p.z);
    }
    out
}

fn parse_ply(path: &Path, text: &str) -> Result<RawCloud, IoError> {
    let mut lines = text.lines().enumerate();

    let (_, magic) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected 'ply'"))?;
    if magic.trim() != "ply" {
        return Err(parse_err(path, 1, "not a PLY file (first line must be 'ply')"));
    }

    let mut declared_unit = None;
    let mut vertex_count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    let mut in_vertex_element = false;
    let mut header_end = 0usize;

    for (idx, line) in lines.by_ref() {
        let lineno = idx + 1;
        let line = line.trim();
        let mut words = line.split_whitespace();
        match words.next() {
            Some("end_header") => {
                header_end = lineno;
                break;
            }
            Some("comment") => {
                if words.next() == Some("units") {
                    let label = words.next().unwrap_or_default();
                    declared_unit = Some(Unit::parse(label).ok_or_else(|| {
                        parse_err(path, lineno, format!("unknown unit '{label}' (use m or mm)"))
                    })?);
                }
            }
            Some("format") => {
                if words.next() != Some("ascii") {
                    return Err(parse_err(path, lineno, "only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                let name = words.next().unwrap_or_default();
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| parse_err(path, lineno, "element needs a point count"))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(parse_err(path, lineno, "duplicate vertex element"));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    if count > 0 {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("unsupported element '{name}' with {count} entries"),
                        ));
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if in_vertex_element {
                    let kind = words.next().unwrap_or_default();
                    let name = words.next().unwrap_or_default();
                    if !matches!(kind, "float" | "double" | "float32" | "float64") {
                        return Err(parse_err(
                            path,
                            lineno,
                            format!("vertex property '{name}' must be a float type, got '{kind}'"),
                        ));
                    }
                    properties.push(name.to_string());
                }
            }
            _ => {}
        }
    }
    if header_end == 0 {
        return Err(parse_err(path, text.lines().count().max(1), "missing end_header"));
    }
    let count = vertex_count
        .ok_or_else(|| parse_err(path, header_end, "header has no vertex element"))?;
    let column = |name: &str| -> Result<usize, IoError> {
        properties.iter().position(|p| p == name).ok_or_else(|| {
            parse_err(path, header_end, format!("vertex element has no '{name}' property"))
        })
    };
    let (ix, iy, iz) = (column("x")?, column("y")?, column("z")?);

    let mut points = Vec::with_capacity(count);
    let mut last_line = header_end;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if points.len() == count {
            return Err(parse_err(path, lineno, "data after the declared vertex count"));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < properties.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, got {}", properties.len(), fields.len()),
            ));
        }
        let coord = |i: usize| -> Result<f64, IoError> {
            fields[i]
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad float '{}'", fields[i])))
        };
        points.push(Vector3::new(coord(ix)?, coord(iy)?, coord(iz)?));
        last_line = lineno;
    }
    if points.len() != count {
        return Err(parse_err(
            path,
            last_line,
            format!("vertex element declares {count} points but the file has {}", points.len()),
        ));
    }
    Ok(RawCloud {
        cloud: PointCloud::new(points),
        declared_unit,
    })
}

fn parse_csv(path: &Path, text: &str) -> Result<RawCloud, IoError> {
    let mut declared_unit = None;
    let mut saw_header = false;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("units") {
                let label = words.next().unwrap_or_default();
                declared_unit = Some(Unit::parse(label).ok_or_else(|| {
                    parse_err(path, lineno, format!("unknown unit '{label}' (use m or mm)"))
                })?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !saw_header {
            if fields != ["x", "y", "z"] {
                return Err(parse_err(path, lineno, "expected header 'x,y,z'"));
            }
            saw_header = true;
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 3 comma-separated values, got {}", fields.len()),
            ));
        }
        let coord = |i: usize| -> Result<f64, IoError> {
            fields[i]
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad float '{}'", fields[i])))
        };
        points.push(Vector3::new(coord(0)?, coord(1)?, coord(2)?));
    }
    if !saw_header {
        return Err(parse_err(path, text.lines().count().max(1), "missing 'x,y,z' header"));
    }
    Ok(RawCloud {
        cloud: PointCloud::new(points),
        declared_unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn seeded_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(0.0..2.0),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn ply_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.ply");
        let cloud = seeded_cloud(1000, 7);
        write_cloud(&path, &cloud).unwrap();
        let raw = read_cloud(&path).unwrap();
        assert_eq!(raw.declared_unit, Some(Unit::Meters));
        assert_eq!(raw.cloud.len(), cloud.len());
        for (a, b) in cloud.points.iter().zip(&raw.cloud.points) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let cloud = seeded_cloud(1000, 8);
        write_cloud(&path, &cloud).unwrap();
        let raw = read_cloud(&path).unwrap();
        assert_eq!(raw.declared_unit, Some(Unit::Meters));
        for (a, b) in cloud.points.iter().zip(&raw.cloud.points) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
            assert_eq!(a.z.to_bits(), b.z.to_bits());
        }
    }

    #[test]
    fn ply_without_vertex_element_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        fs::write(&path, "ply\nformat ascii 1.0\nend_header\n").unwrap();
        match read_cloud(&path) {
            Err(IoError::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("vertex"), "{msg}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn ply_bad_float_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n0 oops 0\n",
        )
        .unwrap();
        match read_cloud(&path) {
            Err(IoError::Parse { line, msg, .. }) => {
                assert_eq!(line, 9);
                assert!(msg.contains("oops"), "{msg}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn ply_count_mismatch_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n",
        )
        .unwrap();
        assert!(matches!(read_cloud(&path), Err(IoError::Parse { .. })));
    }

    #[test]
    fn binary_ply_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bin.ply");
        fs::write(
            &path,
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n",
        )
        .unwrap();
        match read_cloud(&path) {
            Err(IoError::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("ASCII"), "{msg}");
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_in_millimeters_is_scaled_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mm.csv");
        fs::write(&path, "# units mm\nx,y,z\n1,2,3\n").unwrap();
        let cloud = read_cloud_as_meters(&path, Unit::Millimeters).unwrap();
        assert_eq!(cloud.points[0], Vector3::new(1e-3, 2e-3, 3e-3));
    }

    #[test]
    fn undeclared_unit_inherits_the_manifest_declaration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.csv");
        fs::write(&path, "x,y,z\n1000,0,0\n").unwrap();
        let cloud = read_cloud_as_meters(&path, Unit::Millimeters).unwrap();
        assert_eq!(cloud.points[0], Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn conflicting_units_are_a_mismatch_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "# units m\nx,y,z\n1,0,0\n").unwrap();
        match read_cloud_as_meters(&path, Unit::Millimeters) {
            Err(IoError::UnitMismatch { manifest, file, .. }) => {
                assert_eq!(manifest, "mm");
                assert_eq!(file, "m");
            }
            other => panic!("expected a unit mismatch, got {other:?}"),
        }
    }

    #[test]
    fn csv_bad_header_reports_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hdr.csv");
        fs::write(&path, "# units m\na,b,c\n").unwrap();
        match read_cloud(&path) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn extra_ply_properties_are_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.ply");
        fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 1\nproperty double nx\nproperty double x\nproperty double y\nproperty double z\nend_header\n9 1 2 3\n",
        )
        .unwrap();
        let raw = read_cloud(&path).unwrap();
        assert_eq!(raw.cloud.points[0], Vector3::new(1.0, 2.0, 3.0));
    }
}
