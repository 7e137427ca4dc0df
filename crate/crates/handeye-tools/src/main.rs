//! `handeye` — the command-line surface of the toolkit.
//!
//! Subcommands: `gen-flange` (synthetic clouds), `sim-calib` (Monte-Carlo
//! noise studies), `calibrate` (full pipeline on a recorded dataset),
//! `verify` / `compensate` (score and correct a given transform), and
//! `sim-weld` (tactile seam-tracking simulation).
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric or I/O failure, and 4
//! when a seam-tracking run finished but lost probe contact on the way.
//! Every command prints its resolved configuration (flags > config file >
//! defaults) before running, and every CSV starts with a comment recording
//! the seed and the configuration hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::Vector3;
use serde::Serialize;

use handeye_core::calib::{self, CalibConfig, Verification};
use handeye_core::circle::{flange_tcp_from_scene, RansacParams};
use handeye_core::cloud::{ClusterParams, OutlierParams, PassThroughBox};
use handeye_core::icp::{calibration_error, cost, CostKind, IcpErrorMetric, IcpParams};
use handeye_core::rigid::{fit_rigid, SamplePair};
use handeye_core::se3::{RigidTransform, RpyAngles};
use handeye_core::sim::{
    generate_flange_cloud, run_convergence, run_sweep, FlangeModel, Method, SimScenario,
};
use handeye_core::weld::{
    arc_seam, plan_from_seam, rms_distance_to_polyline, run_weld, s_curve_seam, straight_seam,
    ContactSide, SeamWorld, ServoParams, Termination,
};

use handeye_tools::cloud_io::write_cloud;
use handeye_tools::config::{read_config, Resolver};
use handeye_tools::manifest::{read_manifest, PoseRecord};
use handeye_tools::report::{format_error_table, ReportRow};
use handeye_tools::results::{
    matrix_rows, read_error_arg, read_transform_arg, write_results, ErrorBlock, ResultsFile,
};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CONTACT_LOST: u8 = 4;

#[derive(Parser)]
#[command(
    name = "handeye",
    version,
    about = "Flange-based hand-eye calibration toolkit: synthetic flange clouds, Monte-Carlo \
             noise studies, iterative dataset calibration, verification/compensation, and \
             tactile seam-tracking simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic flange cloud plus ground-truth TCP metadata.
    GenFlange(GenFlangeArgs),
    /// Monte-Carlo noise sweep comparing the all-points and iterative methods.
    SimCalib(SimCalibArgs),
    /// Run the full pipeline (segmentation, circle fit, iterative loop) on a dataset manifest.
    Calibrate(CalibrateArgs),
    /// Score a hand-eye matrix against a manifest's verification measurement.
    Verify(VerifyArgs),
    /// Fold a measured error transform into a hand-eye matrix.
    Compensate(CompensateArgs),
    /// Simulate tactile seam tracking and write the executed-path trace.
    SimWeld(SimWeldArgs),
}

#[derive(clap::Args)]
struct GenFlangeArgs {
    /// Flange model overrides: flat key = value file, lengths in meters.
    #[arg(long, value_name = "FILE")]
    model_config: Option<PathBuf>,
    /// Flange pose in the camera frame as x,y,z,roll,pitch,yaw (m, rad).
    #[arg(long, value_name = "POSE")]
    pose: Option<String>,
    /// Per-coordinate sensor noise, meters.
    #[arg(long, value_name = "M")]
    sigma: Option<f64>,
    /// RNG seed; identical seeds give identical file bytes.
    #[arg(long)]
    seed: Option<u64>,
    /// Output cloud (.ply or .csv); metadata JSON lands next to it.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run-config file (flags > file > defaults).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimCalibArgs {
    /// Noise levels in millimeters as start:step:end (e.g. 1:1:1).
    #[arg(long, value_name = "MM:MM:MM")]
    sigma_range: Option<String>,
    /// Monte-Carlo realizations per noise level.
    #[arg(long, value_name = "N")]
    realizations: Option<usize>,
    /// Robot poses per realization.
    #[arg(long, value_name = "N")]
    poses: Option<usize>,
    /// Which estimator's rows to write: both | all | iterative.
    #[arg(long, value_name = "WHICH")]
    method: Option<String>,
    /// Master seed for the noise/shuffle streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for sweep.csv and convergence.csv.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Run-config file (flags > file > defaults).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Stop threshold on the verification cost, millimeters.
    #[arg(long, value_name = "MM")]
    e_required: Option<f64>,
    /// Maximum pairs consumed after the initial four.
    #[arg(long, value_name = "N")]
    k_max: Option<usize>,
    /// Cost to minimize: translation | xy | combined:<radius_m>.
    #[arg(long, value_name = "KIND")]
    cost: Option<String>,
    /// Results JSON; the history CSV lands next to it.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run-config file (flags > file > defaults).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    /// Transform under test: results JSON (compensated matrix preferred) or
    /// a bare row-major 4x4 array.
    #[arg(long = "H", value_name = "FILE")]
    h: Option<PathBuf>,
    /// Manifest whose verification measurement and flange model to score
    /// against.
    #[arg(long, value_name = "FILE")]
    manifest_verification: Option<PathBuf>,
    /// Output results JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run-config file (flags > file > defaults).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CompensateArgs {
    /// Transform to correct: results JSON (compensated matrix preferred) or
    /// a bare row-major 4x4 array.
    #[arg(long = "H", value_name = "FILE")]
    h: Option<PathBuf>,
    /// Measured error transform: results JSON with error_delta, or a bare
    /// row-major 4x4 array.
    #[arg(long, value_name = "FILE")]
    error: Option<PathBuf>,
    /// Output results JSON.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run-config file (flags > file > defaults).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimWeldArgs {
    /// Seam shape: straight (300 mm) | arc (50 mm radius quarter turn,
    /// demonstrates the heading-law singularity) | s-curve (300 mm, 5 mm
    /// amplitude).
    #[arg(long, value_name = "SHAPE")]
    seam: Option<String>,
    /// Vision noise sigma on the planned path, meters.
    #[arg(long, value_name = "M")]
    vision_noise: Option<f64>,
    /// Proportional gain on the deformation error, 1/s.
    #[arg(long, value_name = "GAIN")]
    kp: Option<f64>,
    /// Desired normal deformation, meters.
    #[arg(long, value_name = "M")]
    delta_d: Option<f64>,
    /// Seed for the planned-path noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace CSV output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Run-config file (flags > file > defaults).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

type CmdResult = Result<u8, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenFlange(args) => gen_flange(args),
        Command::SimCalib(args) => sim_calib(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Verify(args) => verify(args),
        Command::Compensate(args) => compensate(args),
        Command::SimWeld(args) => sim_weld(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn path_string(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

/// Parses "x,y,z,roll,pitch,yaw" (meters, radians).
fn parse_pose6(s: &str) -> Result<RigidTransform, Failure> {
    let fields: Vec<&str> = s.split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(usage(format!(
            "pose needs 6 comma-separated values x,y,z,roll,pitch,yaw, got {}",
            fields.len()
        )));
    }
    let mut v = [0.0; 6];
    for (i, f) in fields.iter().enumerate() {
        v[i] = f
            .parse()
            .map_err(|_| usage(format!("pose component '{f}' is not a number")))?;
    }
    Ok(RigidTransform::from_rpy(
        RpyAngles::new(v[3], v[4], v[5]),
        Vector3::new(v[0], v[1], v[2]),
    ))
}

/// Parses a start:step:end range in millimeters.
fn parse_sigma_range(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(usage(format!("sigma-range must be start:step:end, got '{s}'")));
    }
    let mut v = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        v[i] = p
            .parse()
            .map_err(|_| usage(format!("sigma-range component '{p}' is not a number")))?;
    }
    let (start, step, end) = (v[0], v[1], v[2]);
    if !(start >= 0.0 && step > 0.0 && end >= start) {
        return Err(usage(format!(
            "sigma-range needs start >= 0, step > 0, end >= start, got '{s}'"
        )));
    }
    let mut sigmas = Vec::new();
    let mut value = start;
    while value <= end + step * 1e-9 {
        sigmas.push(value);
        value += step;
        if sigmas.len() > 1000 {
            return Err(usage("sigma-range expands to more than 1000 levels"));
        }
    }
    Ok(sigmas)
}

fn parse_cost_kind(s: &str) -> Result<CostKind, Failure> {
    match s {
        "translation" => Ok(CostKind::TranslationNorm),
        "xy" => Ok(CostKind::XyOnly),
        _ => match s.strip_prefix("combined:") {
            Some(radius) => {
                let r: f64 = radius.parse().map_err(|_| {
                    usage(format!("combined cost radius '{radius}' is not a number"))
                })?;
                if r <= 0.0 {
                    return Err(usage("combined cost radius must be positive"));
                }
                Ok(CostKind::CombinedWithRadius(r))
            }
            None => Err(usage(format!(
                "unknown cost '{s}' (use translation, xy, or combined:<radius_m>)"
            ))),
        },
    }
}

fn flange_model_from_config(path: &Path) -> Result<FlangeModel, Failure> {
    const KNOWN: [&str; 6] = [
        "outer_radius",
        "bolt_circle_radius",
        "hole_radius",
        "hole_count",
        "annulus_inner_radius",
        "sample_density",
    ];
    let map = read_config(path).map_err(usage)?;
    for key in map.keys() {
        if !KNOWN.contains(&key.as_str()) {
            return Err(usage(format!(
                "unknown flange model key '{key}' (known: {})",
                KNOWN.join(", ")
            )));
        }
    }
    let mut model = FlangeModel::default();
    let get = |key: &str| -> Result<Option<f64>, Failure> {
        map.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| usage(format!("flange model key '{key}': bad number '{v}'")))
            })
            .transpose()
    };
    if let Some(v) = get("outer_radius")? {
        model.outer_radius = v;
    }
    if let Some(v) = get("bolt_circle_radius")? {
        model.bolt_circle_radius = v;
    }
    if let Some(v) = get("hole_radius")? {
        model.hole_radius = v;
    }
    if let Some(v) = map.get("hole_count") {
        model.hole_count = v
            .parse()
            .map_err(|_| usage(format!("flange model key 'hole_count': bad count '{v}'")))?;
    }
    if let Some(v) = get("annulus_inner_radius")? {
        model.annulus_inner_radius = v;
    }
    if let Some(v) = get("sample_density")? {
        model.sample_density = v;
    }
    Ok(model)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// The unbounded crop box used when a dataset needs no cropping.
fn open_bbox() -> PassThroughBox {
    PassThroughBox {
        min: Vector3::repeat(f64::NEG_INFINITY),
        max: Vector3::repeat(f64::INFINITY),
    }
}

/// Renders a six-component error line through the shared table formatter.
fn error_table_line(label: &str, metric: &IcpErrorMetric) -> String {
    format_error_table(&[ReportRow::from_pose_error(label, &metric.pose_error)])
}

// ---------------------------------------------------------------------------
// gen-flange
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FlangeModelMeta {
    outer_radius: f64,
    bolt_circle_radius: f64,
    hole_radius: f64,
    hole_count: usize,
    annulus_inner_radius: f64,
    sample_density: f64,
}

#[derive(Serialize)]
struct FlangeMeta {
    units: &'static str,
    tcp: [f64; 3],
    pose: PoseRecord,
    sigma: f64,
    seed: u64,
    point_count: usize,
    model: FlangeModelMeta,
    config_hash: String,
}

fn gen_flange(args: GenFlangeArgs) -> CmdResult {
    let mut resolver = Resolver::from_path(args.config.as_deref()).map_err(usage)?;
    resolver
        .reject_unknown_keys(&["model-config", "pose", "sigma", "seed", "out"])
        .map_err(usage)?;
    let model_config = resolver
        .resolve_optional("model-config", path_string(args.model_config))
        .map_err(usage)?;
    let pose_str = resolver
        .resolve("pose", args.pose, "0,0,0.8,0,0,0".to_string())
        .map_err(usage)?;
    let sigma = resolver.resolve("sigma", args.sigma, 0.0).map_err(usage)?;
    let seed = resolver.resolve("seed", args.seed, 0u64).map_err(usage)?;
    let out = PathBuf::from(
        resolver
            .resolve("out", path_string(args.out), "flange.ply".to_string())
            .map_err(usage)?,
    );
    print!("{}", resolver.render("gen-flange"));

    if sigma < 0.0 {
        return Err(usage("sigma must be non-negative"));
    }
    let pose = parse_pose6(&pose_str)?;
    let model = match &model_config {
        Some(path) => flange_model_from_config(Path::new(path))?,
        None => FlangeModel::default(),
    };

    let (cloud, tcp) = generate_flange_cloud(&model, &pose, sigma, seed);
    write_cloud(&out, &cloud).map_err(runtime)?;

    let meta = FlangeMeta {
        units: "m",
        tcp: [tcp.x, tcp.y, tcp.z],
        pose: PoseRecord::from_transform(&pose),
        sigma,
        seed,
        point_count: cloud.len(),
        model: FlangeModelMeta {
            outer_radius: model.outer_radius,
            bolt_circle_radius: model.bolt_circle_radius,
            hole_radius: model.hole_radius,
            hole_count: model.hole_count,
            annulus_inner_radius: model.annulus_inner_radius,
            sample_density: model.sample_density,
        },
        config_hash: format!("{:016x}", resolver.config_hash()),
    };
    let meta_path = out.with_extension("meta.json");
    let mut meta_text = serde_json::to_string_pretty(&meta).map_err(runtime)?;
    meta_text.push('\n');
    write_text(&meta_path, &meta_text)?;

    println!(
        "wrote {} points to {} (metadata: {})",
        cloud.len(),
        out.display(),
        meta_path.display()
    );
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// sim-calib
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum MethodFilter {
    Both,
    All,
    Iterative,
}

fn parse_method(s: &str) -> Result<MethodFilter, Failure> {
    match s {
        "both" => Ok(MethodFilter::Both),
        "all" => Ok(MethodFilter::All),
        "iterative" => Ok(MethodFilter::Iterative),
        _ => Err(usage(format!(
            "unknown method '{s}' (use both, all, or iterative)"
        ))),
    }
}

fn sim_calib(args: SimCalibArgs) -> CmdResult {
    let mut resolver = Resolver::from_path(args.config.as_deref()).map_err(usage)?;
    resolver
        .reject_unknown_keys(&[
            "sigma-range",
            "realizations",
            "poses",
            "method",
            "seed",
            "out-dir",
        ])
        .map_err(usage)?;
    let range_str = resolver
        .resolve("sigma-range", args.sigma_range, "1:1:1".to_string())
        .map_err(usage)?;
    let realizations = resolver
        .resolve("realizations", args.realizations, 100usize)
        .map_err(usage)?;
    let poses = resolver.resolve("poses", args.poses, 75usize).map_err(usage)?;
    let method_str = resolver
        .resolve("method", args.method, "both".to_string())
        .map_err(usage)?;
    let seed = resolver.resolve("seed", args.seed, 0u64).map_err(usage)?;
    let out_dir = PathBuf::from(
        resolver
            .resolve("out-dir", path_string(args.out_dir), ".".to_string())
            .map_err(usage)?,
    );
    print!("{}", resolver.render("sim-calib"));

    let sigmas_mm = parse_sigma_range(&range_str)?;
    let method = parse_method(&method_str)?;
    if realizations == 0 || poses < 4 {
        return Err(usage("need at least 1 realization and 4 poses"));
    }

    let sigmas_m: Vec<f64> = sigmas_mm.iter().map(|mm| mm * 1e-3).collect();
    let scenario = SimScenario {
        n_poses: poses,
        n_realizations: realizations,
        rng_seed: seed,
        ..SimScenario::default()
    };
    // The sweep characterizes the converged iterative method, so the
    // live-calibration stop threshold is disabled and every realization
    // consumes its whole pose stream (run_convergence applies the same
    // override internally).
    let cfg = CalibConfig {
        e_required_mm: f64::MIN_POSITIVE,
        k_max: usize::MAX,
        ..CalibConfig::default()
    };

    let rows = run_sweep(&scenario, &sigmas_m, &cfg).map_err(runtime)?;
    std::fs::create_dir_all(&out_dir).map_err(runtime)?;
    let hash = resolver.config_hash();

    let mut sweep = String::new();
    let _ = writeln!(sweep, "# seed={seed} config-hash={hash:016x}");
    let _ = writeln!(
        sweep,
        "sigma_mm,method,mean_x_mm,mean_y_mm,mean_z_mm,mean_roll_deg,mean_pitch_deg,mean_yaw_deg,std_x_mm,std_y_mm,std_z_mm,std_roll_deg,std_pitch_deg,std_yaw_deg"
    );
    for (i, row) in rows.iter().enumerate() {
        let keep = match method {
            MethodFilter::Both => true,
            MethodFilter::All => row.method == Method::AllPoints,
            MethodFilter::Iterative => row.method == Method::Iterative,
        };
        if !keep {
            continue;
        }
        let _ = write!(sweep, "{},{}", sigmas_mm[i / 2], row.method);
        for v in row.mean.iter().chain(row.std.iter()) {
            let _ = write!(sweep, ",{v}");
        }
        sweep.push('\n');
    }
    let sweep_path = out_dir.join("sweep.csv");
    write_text(&sweep_path, &sweep)?;
    println!("wrote {}", sweep_path.display());

    if method == MethodFilter::All {
        println!("convergence.csv skipped (traces belong to the iterative method)");
    } else {
        let conv = run_convergence(&scenario, sigmas_m[0], &cfg).map_err(runtime)?;
        let mut text = String::new();
        let _ = writeln!(text, "# seed={seed} config-hash={hash:016x}");
        let _ = writeln!(
            text,
            "pairs_consumed,mean_x_mm,mean_y_mm,mean_z_mm,mean_roll_deg,mean_pitch_deg,mean_yaw_deg,std_x_mm,std_y_mm,std_z_mm,std_roll_deg,std_pitch_deg,std_yaw_deg"
        );
        for row in &conv {
            let _ = write!(text, "{}", row.pairs_consumed);
            for v in row.mean.iter().chain(row.std.iter()) {
                let _ = write!(text, ",{v}");
            }
            text.push('\n');
        }
        let conv_path = out_dir.join("convergence.csv");
        write_text(&conv_path, &text)?;
        println!(
            "wrote {} (noise level {} mm)",
            conv_path.display(),
            sigmas_mm[0]
        );
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

fn calibrate(args: CalibrateArgs) -> CmdResult {
    let mut resolver = Resolver::from_path(args.config.as_deref()).map_err(usage)?;
    resolver
        .reject_unknown_keys(&["manifest", "e-required", "k-max", "cost", "out"])
        .map_err(usage)?;
    let manifest_path = resolver
        .resolve_optional("manifest", path_string(args.manifest))
        .map_err(usage)?
        .ok_or_else(|| usage("--manifest is required"))?;
    let e_required = resolver
        .resolve("e-required", args.e_required, 0.2)
        .map_err(usage)?;
    let k_max = resolver.resolve("k-max", args.k_max, 100usize).map_err(usage)?;
    let cost_str = resolver
        .resolve("cost", args.cost, "translation".to_string())
        .map_err(usage)?;
    let out = PathBuf::from(
        resolver
            .resolve("out", path_string(args.out), "results.json".to_string())
            .map_err(usage)?,
    );
    print!("{}", resolver.render("calibrate"));

    let cost_kind = parse_cost_kind(&cost_str)?;
    let loaded = read_manifest(Path::new(&manifest_path)).map_err(runtime)?;
    let model = loaded.flange_model();
    let ransac = RansacParams {
        expected_radius: model.outer_radius,
        ..RansacParams::for_flange_scene()
    };
    let cluster = ClusterParams {
        max_extent: model.outer_radius * 2.2,
        ..ClusterParams::default()
    };
    let bbox = open_bbox();
    let outlier = OutlierParams::default();

    let mut pairs: Vec<SamplePair> = Vec::new();
    for entry in &loaded.manifest.pairs {
        let (pose, cloud) = loaded.load_entry(entry).map_err(runtime)?;
        match flange_tcp_from_scene(&cloud, &bbox, &outlier, &cluster, &ransac) {
            Ok(tcp) => {
                let mut pair = SamplePair::from_pose(pose, tcp);
                pair.cloud_ref = Some(entry.cloud_file.clone());
                pairs.push(pair);
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", entry.cloud_file),
        }
    }
    println!(
        "segmented {} of {} pairs",
        pairs.len(),
        loaded.manifest.pairs.len()
    );

    let (pose_v, p_v_cam) = loaded
        .load_entry(&loaded.manifest.verification)
        .map_err(runtime)?;
    let p_true = generate_flange_cloud(&model, &RigidTransform::identity(), 0.0, 0).0;
    let verification = Verification::Cloud {
        robot_pose_v: pose_v,
        p_true,
        p_v_cam,
        icp: IcpParams::default(),
    };

    let cfg = CalibConfig {
        e_required_mm: e_required,
        k_max,
        cost_kind,
        ..CalibConfig::default()
    };
    let outcome = calib::run(&pairs, verification.clone(), cfg).map_err(runtime)?;

    let mut results = ResultsFile::new(&outcome.h_optimal);
    results.h_compensated = Some(matrix_rows(&outcome.h_compensated));
    results.iterations_used = Some(outcome.iterations_used);
    if !outcome.e_optimal.failed {
        results.error = Some(ErrorBlock::from_pose_error(&outcome.e_optimal.pose_error));
        results.error_delta = Some(matrix_rows(&outcome.e_optimal.delta));
        results.cost_mm = Some(cost(&outcome.e_optimal, cost_kind) * 1e3);
    }
    if let Ok(fit) = fit_rigid(&pairs, false) {
        let metric = verification.evaluate(&fit.transform);
        results.h_all_points = Some(matrix_rows(&fit.transform));
        if !metric.failed {
            results.error_all_points = Some(ErrorBlock::from_pose_error(&metric.pose_error));
        }
    }
    write_results(&out, &results).map_err(runtime)?;

    let mut history = String::new();
    let _ = writeln!(history, "# config-hash={:016x}", resolver.config_hash());
    let _ = writeln!(
        history,
        "iteration,accepted,cost_mm,x_mm,y_mm,z_mm,roll_deg,pitch_deg,yaw_deg"
    );
    for entry in &outcome.history {
        let _ = write!(
            history,
            "{},{},{}",
            entry.iteration,
            entry.accepted as u8,
            entry.cost * 1e3
        );
        for v in entry
            .pose_error
            .delta_t
            .iter()
            .chain(entry.pose_error.delta_rpy.iter())
        {
            let _ = write!(history, ",{v}");
        }
        history.push('\n');
    }
    let history_path = out.with_extension("history.csv");
    write_text(&history_path, &history)?;

    match results.cost_mm {
        Some(c) => println!(
            "converged to cost {c:.6} mm after {} consumed pairs",
            outcome.iterations_used
        ),
        None => println!("verification metric failed (cost is infinite)"),
    }
    print!("{}", error_table_line("iterative", &outcome.e_optimal));
    println!("wrote {} and {}", out.display(), history_path.display());
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn verify(args: VerifyArgs) -> CmdResult {
    let mut resolver = Resolver::from_path(args.config.as_deref()).map_err(usage)?;
    resolver
        .reject_unknown_keys(&["H", "manifest-verification", "out"])
        .map_err(usage)?;
    let h_path = resolver
        .resolve_optional("H", path_string(args.h))
        .map_err(usage)?
        .ok_or_else(|| usage("--H is required"))?;
    let manifest_path = resolver
        .resolve_optional("manifest-verification", path_string(args.manifest_verification))
        .map_err(usage)?
        .ok_or_else(|| usage("--manifest-verification is required"))?;
    let out = PathBuf::from(
        resolver
            .resolve("out", path_string(args.out), "verify.json".to_string())
            .map_err(usage)?,
    );
    print!("{}", resolver.render("verify"));

    let h = read_transform_arg(Path::new(&h_path)).map_err(runtime)?;
    let loaded = read_manifest(Path::new(&manifest_path)).map_err(runtime)?;
    let model = loaded.flange_model();
    let (pose_v, p_v_cam) = loaded
        .load_entry(&loaded.manifest.verification)
        .map_err(runtime)?;
    let p_true = generate_flange_cloud(&model, &RigidTransform::identity(), 0.0, 0).0;

    let metric = calibration_error(&h, &pose_v, &p_true, &p_v_cam, &IcpParams::default());
    let mut results = ResultsFile::new(&h);
    if !metric.failed {
        results.error = Some(ErrorBlock::from_pose_error(&metric.pose_error));
        results.error_delta = Some(matrix_rows(&metric.delta));
        results.cost_mm = Some(cost(&metric, CostKind::TranslationNorm) * 1e3);
    }
    write_results(&out, &results).map_err(runtime)?;
    println!("wrote {}", out.display());

    match results.cost_mm {
        Some(c) => {
            println!("cost = {c:.6} mm");
            print!("{}", error_table_line("verified", &metric));
            Ok(EXIT_OK)
        }
        None => Err(runtime(
            "verification metric failed: the registration found no valid alignment (cost is infinite)",
        )),
    }
}

// ---------------------------------------------------------------------------
// compensate
// ---------------------------------------------------------------------------

fn compensate(args: CompensateArgs) -> CmdResult {
    let mut resolver = Resolver::from_path(args.config.as_deref()).map_err(usage)?;
    resolver
        .reject_unknown_keys(&["H", "error", "out"])
        .map_err(usage)?;
    let h_path = resolver
        .resolve_optional("H", path_string(args.h))
        .map_err(usage)?
        .ok_or_else(|| usage("--H is required"))?;
    let error_path = resolver
        .resolve_optional("error", path_string(args.error))
        .map_err(usage)?
        .ok_or_else(|| usage("--error is required"))?;
    let out = PathBuf::from(
        resolver
            .resolve("out", path_string(args.out), "compensated.json".to_string())
            .map_err(usage)?,
    );
    print!("{}", resolver.render("compensate"));

    let h = read_transform_arg(Path::new(&h_path)).map_err(runtime)?;
    let delta = read_error_arg(Path::new(&error_path)).map_err(runtime)?;
    let metric = IcpErrorMetric::from_delta(delta);
    let h_comp = calib::compensate(&h, &metric).map_err(runtime)?;

    let mut results = ResultsFile::new(&h);
    results.h_compensated = Some(matrix_rows(&h_comp));
    results.error = Some(ErrorBlock::from_pose_error(&metric.pose_error));
    write_results(&out, &results).map_err(runtime)?;

    println!(
        "folded in a {:.6} mm residual; wrote {}",
        metric.delta.translation.norm() * 1e3,
        out.display()
    );
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// sim-weld
// ---------------------------------------------------------------------------

/// Spacing of the synthetic planned path — the coarser "vision" sampling the
/// noise is applied at.
const PLAN_SPACING: f64 = 0.010;

fn sim_weld(args: SimWeldArgs) -> CmdResult {
    let mut resolver = Resolver::from_path(args.config.as_deref()).map_err(usage)?;
    resolver
        .reject_unknown_keys(&["seam", "vision-noise", "kp", "delta-d", "seed", "out"])
        .map_err(usage)?;
    let seam_str = resolver
        .resolve("seam", args.seam, "straight".to_string())
        .map_err(usage)?;
    let vision_noise = resolver
        .resolve("vision-noise", args.vision_noise, 0.001)
        .map_err(usage)?;
    let kp = resolver.resolve("kp", args.kp, 10.0).map_err(usage)?;
    let delta_d = resolver
        .resolve("delta-d", args.delta_d, 0.002)
        .map_err(usage)?;
    let seed = resolver.resolve("seed", args.seed, 0u64).map_err(usage)?;
    let out = PathBuf::from(
        resolver
            .resolve("out", path_string(args.out), "weld_trace.csv".to_string())
            .map_err(usage)?,
    );
    print!("{}", resolver.render("sim-weld"));

    if vision_noise < 0.0 || delta_d < 0.0 || kp <= 0.0 {
        return Err(usage("need vision-noise >= 0, delta-d >= 0, kp > 0"));
    }
    let seam = match seam_str.as_str() {
        "straight" => straight_seam(0.3, 1e-3),
        "arc" => arc_seam(0.05, core::f64::consts::FRAC_PI_2, 1e-3),
        "s-curve" => s_curve_seam(0.3, 0.005, 1e-3),
        other => {
            return Err(usage(format!(
                "unknown seam '{other}' (use straight, arc, or s-curve)"
            )))
        }
    };
    let planned = plan_from_seam(&seam, PLAN_SPACING, vision_noise, seed);
    let world = SeamWorld::new(seam, planned.clone(), 0.030, ContactSide::Left);
    let params = ServoParams {
        k_p: kp,
        delta_d,
        ..ServoParams::default()
    };

    let trace = run_weld(&world, &params).map_err(runtime)?;
    let rms_planned = rms_distance_to_polyline(&planned, &world.true_seam) * 1e3;
    let rms_refined = if trace.refined.is_empty() {
        f64::NAN
    } else {
        rms_distance_to_polyline(&trace.refined, &world.true_seam) * 1e3
    };

    let mut text = String::new();
    let _ = writeln!(text, "# seed={seed} config-hash={:016x}", resolver.config_hash());
    let _ = writeln!(
        text,
        "# rms_planned_mm={rms_planned} rms_refined_mm={rms_refined} termination={:?} contact_lost={}",
        trace.termination, trace.contact_lost
    );
    let _ = writeln!(
        text,
        "t_s,p_r_x_mm,p_r_y_mm,p_s_x_mm,p_s_y_mm,p_t_x_mm,p_t_y_mm,delta_t_mm,delta_n_mm,omega_rad_s,v_t_normal_mm_s,engaged"
    );
    for s in &trace.steps {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t,
            s.p_r.x * 1e3,
            s.p_r.y * 1e3,
            s.p_s.x * 1e3,
            s.p_s.y * 1e3,
            s.p_t.x * 1e3,
            s.p_t.y * 1e3,
            s.delta_t_s * 1e3,
            s.delta_n_s * 1e3,
            s.omega,
            s.v_t_normal * 1e3,
            s.engaged as u8
        );
    }
    write_text(&out, &text)?;

    println!(
        "{} steps, termination {:?}, contact_lost {}, rms planned {rms_planned:.4} mm vs refined {rms_refined:.4} mm",
        trace.steps.len(),
        trace.termination,
        trace.contact_lost
    );
    println!("wrote {}", out.display());

    match trace.termination {
        Termination::Singularity => Err(runtime(
            "run ended in a kinematic singularity (tool normal perpendicular to the path normal); trace written",
        )),
        Termination::MaxSteps => Err(runtime("step budget exhausted before the path end; trace written")),
        Termination::PathEnd => {
            if trace.contact_lost {
                println!("probe contact was lost during the run (deformation reference reset)");
                Ok(EXIT_CONTACT_LOST)
            } else {
                Ok(EXIT_OK)
            }
        }
    }
}
