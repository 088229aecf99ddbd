//! Command-line pipeline wiring: dataset synthesis, training, evaluation,
//! leave-one-out runs, throughput benchmarks, and qualitative overlays.
//!
//! Exit codes: 0 success, 1 configuration/validation failure, 2 I/O
//! failure, 3 numeric failure (divergent training). Config-file values are
//! always overridable by flags, and every subcommand prints the top-level
//! seed it ran with.

use crate::config::{resolve_mesh, ConfigError, RunConfig, Stage};
use crate::dataset::{split_dataset, DatasetError, DatasetManifest, GenerateConfig};
use crate::evaluation::{
    benchmark_inference, evaluate, facing_pose, leave_one_out, EvalError, EvalReport, LooConfig,
    Protocol,
};
use crate::geometry::GeometryError;
use crate::mesh::MeshError;
use crate::model::{init_model, ModelError, PoseModel};
use crate::render::{
    render_overlay, write_color_png, OverlayConfig, RenderError, OVERLAY_CYAN, OVERLAY_GREEN,
};
use crate::training::{train, TrainError};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "meshpose",
    version,
    about = "Marker-free 3D-to-2D registration at desk scale: synthesize posed mesh renders, \
             train a 6D-rotation pose regressor, and evaluate ADD/angular/translation errors."
)]
pub struct Cli {
    /// Configuration file (.toml or .json); flags override file values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for datasets, checkpoints, and reports.
    #[arg(long, global = true, default_value = "meshpose_out")]
    pub out: PathBuf,

    /// Top-level seed; expanded into per-stage seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    /// Mesh file path or builtin spec (builtin:sphere|cavity|blob[:radius]).
    #[arg(long)]
    pub mesh: Option<String>,
    /// Number of frames to synthesize.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Square image size in pixels.
    #[arg(long)]
    pub size: Option<u32>,
    /// Per-axis rotation range in degrees.
    #[arg(long)]
    pub rot_range: Option<f64>,
    /// Also write per-frame depth maps (.pfdm).
    #[arg(long)]
    pub depth_maps: bool,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// Dataset manifest (defaults to <out>/dataset/manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    /// Checkpoint (defaults to <out>/model.p6ck).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Manifest to evaluate (defaults to <out>/dataset/manifest_test.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Mesh override (defaults to the manifest's mesh).
    #[arg(long)]
    pub mesh: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct LooArgs {
    /// Comma-separated mesh specs; defaults to the three builtin surfaces.
    #[arg(long)]
    pub meshes: Option<String>,
    /// Frames generated per mesh.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct BenchArgs {
    /// Checkpoint to benchmark; a default-config model is used when absent.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Frames to time (excluding warmup).
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Input size for the default model when no checkpoint is given.
    #[arg(long)]
    pub size: Option<u32>,
}

#[derive(Args, Debug, Default)]
pub struct OverlayArgs {
    /// Manifest providing the base frame (defaults to
    /// <out>/dataset/manifest.json).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Frame index within the manifest.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Checkpoint for the predicted pose; without it the ground-truth pose
    /// is re-used (boxes coincide).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Silhouette blend factor.
    #[arg(long)]
    pub alpha: Option<f32>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a labeled multi-view dataset of mesh renders.
    Synth(SynthArgs),
    /// Split a dataset and train the pose regressor on it.
    Train(TrainArgs),
    /// Evaluate a checkpoint: ADD, angular, and translation errors.
    Eval(EvalArgs),
    /// Leave-one-mesh-out cross-validation over several meshes.
    Loo(LooArgs),
    /// Measure single-stream inference latency and throughput.
    Bench(BenchArgs),
    /// Render a qualitative overlay with ground-truth (green) and predicted
    /// (cyan) bounding boxes.
    Overlay(OverlayArgs),
}

/// Process-level error with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn validation(msg: impl std::fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: msg.to_string(),
    }
}

fn io_error(msg: impl std::fmt::Display) -> CliError {
    CliError {
        code: 2,
        message: msg.to_string(),
    }
}

fn numeric(msg: impl std::fmt::Display) -> CliError {
    CliError {
        code: 3,
        message: msg.to_string(),
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match &e {
            ConfigError::Io(_) => io_error(e),
            ConfigError::Mesh(MeshError::Io(_)) => io_error(e),
            _ => validation(e),
        }
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        match &e {
            MeshError::Io(_) => io_error(e),
            _ => validation(e),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match &e {
            DatasetError::Io(_) | DatasetError::Json(_) => io_error(e),
            DatasetError::Render(RenderError::Io(_)) | DatasetError::Render(RenderError::Png(_)) => {
                io_error(e)
            }
            _ => validation(e),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match &e {
            RenderError::Io(_) | RenderError::Png(_) => io_error(e),
            _ => validation(e),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::Io(_) => io_error(e),
            ModelError::Degenerate(_) => numeric(e),
            _ => validation(e),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        numeric(e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => numeric(e),
            TrainError::Io(_) => io_error(e),
            TrainError::Dataset(d) => d.into(),
            TrainError::Model(m) => m.into(),
            TrainError::Degenerate(g) => g.into(),
            TrainError::InvalidConfig(_) => validation(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Dataset(d) => d.into(),
            EvalError::Model(m) => m.into(),
            EvalError::Geometry(g) => g.into(),
            EvalError::Train(t) => t.into(),
            EvalError::Invalid(_) => validation(e),
        }
    }
}

/// Parse, dispatch, and map errors to exit codes; the binary's whole job.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_run_config(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let (mut cfg, base_dir) = match &cli.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let base = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .to_path_buf();
            (cfg, base)
        }
        None => (RunConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok((cfg, base_dir))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_error(format!("creating {path:?}: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (cfg, base_dir) = load_run_config(&cli)?;
    let out = cli.out.clone();
    ensure_dir(&out)?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(&cfg, &base_dir, &out, args),
        Command::Train(args) => cmd_train(&cfg, &out, args),
        Command::Eval(args) => cmd_eval(&cfg, &base_dir, &out, args),
        Command::Loo(args) => cmd_loo(&cfg, &base_dir, &out, args),
        Command::Bench(args) => cmd_bench(&cfg, &out, args),
        Command::Overlay(args) => cmd_overlay(&cfg, &out, args),
    }
}

fn header(cfg: &RunConfig, cmd: &str, out: &Path) {
    println!("meshpose {cmd} | seed {} | out {}", cfg.seed, out.display());
}

fn cmd_synth(
    cfg: &RunConfig,
    base_dir: &Path,
    out: &Path,
    args: &SynthArgs,
) -> Result<(), CliError> {
    header(cfg, "synth", out);
    let mesh_spec = args.mesh.clone().unwrap_or_else(|| cfg.scene.mesh.clone());
    let mesh = resolve_mesh(&mesh_spec, base_dir)?;
    let size = match args.size {
        Some(s) => (s, s),
        None => cfg.scene.image_size,
    };
    let intrinsics = match (args.size, cfg.scene.intrinsics) {
        // Explicit intrinsics only apply at the size they were written for.
        (None, Some(k)) => k,
        _ => crate::geometry::Intrinsics::default_for_size(size.1, size.0),
    };
    intrinsics
        .validate(size.1, size.0)
        .map_err(validation)?;
    let mut sample = cfg.sample_config();
    if let Some(frames) = args.frames {
        sample.n_frames = frames;
    }
    if let Some(rot) = args.rot_range {
        sample.rot_range_deg = rot;
    }
    let p0 = facing_pose(&mesh, cfg.scene.depth_scale);
    let mut gen = GenerateConfig::new(sample, mesh_spec);
    gen.shading = cfg.shading();
    gen.write_depth = args.depth_maps;
    let dataset_dir = out.join("dataset");
    let manifest = crate::dataset::generate_dataset(&mesh, &p0, &intrinsics, size, &gen, &dataset_dir)?;
    println!(
        "wrote {} frames; manifest {}",
        manifest.records.len(),
        dataset_dir.join("manifest.json").display()
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &Path, args: &TrainArgs) -> Result<(), CliError> {
    header(cfg, "train", out);
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| out.join("dataset/manifest.json"));
    let manifest = DatasetManifest::load(&manifest_path)?;

    let (train_m, val_m, test_m) =
        split_dataset(&manifest, cfg.split_ratios(), cfg.stage_seed(Stage::Split))?;
    for (m, name) in [
        (&train_m, "manifest_train.json"),
        (&val_m, "manifest_val.json"),
        (&test_m, "manifest_test.json"),
    ] {
        m.save_as(manifest.base_dir.join(name))?;
    }

    let model_cfg = cfg.model_config(
        manifest.image_size,
        manifest.t_scale_mm,
        manifest.pixel_mean,
        manifest.pixel_std,
    );
    let model = init_model(&model_cfg, cfg.stage_seed(Stage::ModelInit))?;
    let mut train_cfg = cfg.train_config();
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    if let Some(batch) = args.batch {
        train_cfg.batch_size = batch;
    }
    if let Some(lr) = args.lr {
        train_cfg.learning_rate = lr;
    }

    let checkpoint_path = out.join("model.p6ck");
    let log_path = out.join("train_log.csv");
    match train(model, &train_m, &val_m, &train_cfg) {
        Ok((trained, log)) => {
            trained.save_checkpoint(&checkpoint_path)?;
            log.write_csv(&log_path)?;
            let best = &log.epochs[log.best_epoch];
            println!(
                "trained {} epochs; best val E_rot {:.2} deg (epoch {}); checkpoint {}",
                log.epochs.len(),
                best.val_e_rot_deg,
                log.best_epoch,
                checkpoint_path.display()
            );
            Ok(())
        }
        Err(TrainError::NonFiniteLoss {
            epoch,
            step,
            last_good,
        }) => {
            let (model, log) = *last_good;
            model.save_checkpoint(&checkpoint_path)?;
            log.write_csv(&log_path)?;
            Err(numeric(format!(
                "non-finite loss at epoch {epoch}, step {step}; last good checkpoint kept at {}",
                checkpoint_path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn manifest_mesh(
    manifest: &DatasetManifest,
    override_spec: Option<&str>,
) -> Result<crate::mesh::TriMesh, CliError> {
    let spec = override_spec.unwrap_or(&manifest.mesh_path);
    Ok(resolve_mesh(spec, &manifest.base_dir)?)
}

fn cmd_eval(
    cfg: &RunConfig,
    _base_dir: &Path,
    out: &Path,
    args: &EvalArgs,
) -> Result<(), CliError> {
    header(cfg, "eval", out);
    let checkpoint = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| out.join("model.p6ck"));
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| out.join("dataset/manifest_test.json"));
    let model = PoseModel::load_checkpoint(&checkpoint)?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let mesh = manifest_mesh(&manifest, args.mesh.as_deref())?;

    let report = evaluate(&model, &manifest, &mesh)?;
    let json_path = out.join("eval_report.json");
    let table_path = out.join("eval_table.txt");
    report.save_json(&json_path)?;
    let table = report.to_table();
    std::fs::write(&table_path, &table).map_err(|e| io_error(e.to_string()))?;
    print!("{table}");
    println!("report {} | table {}", json_path.display(), table_path.display());
    Ok(())
}

fn cmd_loo(cfg: &RunConfig, base_dir: &Path, out: &Path, args: &LooArgs) -> Result<(), CliError> {
    header(cfg, "loo", out);
    let specs: Vec<String> = match &args.meshes {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => vec![
            "builtin:sphere:25".into(),
            "builtin:cavity:25".into(),
            "builtin:blob:25".into(),
        ],
    };
    if specs.len() < 2 {
        return Err(validation("leave-one-out needs at least 2 meshes"));
    }
    let mut meshes = Vec::new();
    for spec in &specs {
        let label = spec
            .replace("builtin:", "")
            .replace([':', '/', '\\', '.'], "_");
        meshes.push((label, resolve_mesh(spec, base_dir)?));
    }
    let loo_cfg = LooConfig {
        image_size: cfg.scene.image_size,
        n_frames: args.frames.unwrap_or(300),
        rot_range_deg: cfg.sample.rot_range_deg,
        trans_jitter_mm: cfg.sample.trans_jitter_mm,
        depth_scale: cfg.scene.depth_scale,
        seed: cfg.stage_seed(Stage::LeaveOneOut),
    };
    let mut train_cfg = cfg.train_config();
    if let Some(epochs) = args.epochs {
        train_cfg.epochs = epochs;
    }
    let loo_dir = out.join("loo");
    let cases = leave_one_out(&meshes, &loo_cfg, &train_cfg, &loo_dir)?;

    let mut combined = EvalReport {
        protocol: Protocol::LeaveOneOut,
        cases: Vec::new(),
    };
    for case in &cases {
        case.report
            .save_json(loo_dir.join(format!("report_{}.json", case.held_out_label)))?;
        combined.cases.extend(case.report.cases.iter().cloned());
    }
    combined.save_json(loo_dir.join("loo_report.json"))?;
    let table = combined.to_table();
    std::fs::write(loo_dir.join("loo_table.txt"), &table)
        .map_err(|e| io_error(e.to_string()))?;
    print!("{table}");
    println!("reports under {}", loo_dir.display());
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, out: &Path, args: &BenchArgs) -> Result<(), CliError> {
    header(cfg, "bench", out);
    let model = match &args.checkpoint {
        Some(path) => PoseModel::load_checkpoint(path)?,
        None => {
            let size = args.size.unwrap_or(cfg.scene.image_size.0);
            let model_cfg = cfg.model_config((size, size), 100.0, 0.5, 0.25);
            init_model(&model_cfg, cfg.stage_seed(Stage::ModelInit))?
        }
    };
    let report = benchmark_inference(
        &model,
        args.frames.unwrap_or(cfg.bench.n_frames),
        args.batch.unwrap_or(cfg.bench.batch_size),
    )?;
    let path = out.join("bench_report.json");
    report.save_json(&path)?;
    println!(
        "batch {} | mean {:.2} ms | median {:.2} ms | p99 {:.2} ms | {:.1} fps | {}",
        report.batch_size,
        report.mean_latency_ms,
        report.median_latency_ms,
        report.p99_latency_ms,
        report.fps,
        report.hardware
    );
    println!("report {}", path.display());
    Ok(())
}

fn cmd_overlay(cfg: &RunConfig, out: &Path, args: &OverlayArgs) -> Result<(), CliError> {
    header(cfg, "overlay", out);
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| out.join("dataset/manifest.json"));
    let manifest = DatasetManifest::load(&manifest_path)?;
    if args.index >= manifest.records.len() {
        return Err(validation(format!(
            "frame index {} out of range ({} records)",
            args.index,
            manifest.records.len()
        )));
    }
    let mesh = manifest_mesh(&manifest, None)?;
    let base = manifest.load_image(args.index)?;
    let gt_pose = manifest.records[args.index].pose;
    let pred_pose = match &args.checkpoint {
        Some(path) => PoseModel::load_checkpoint(path)?.predict_pose(&base)?,
        None => gt_pose,
    };
    let overlay_cfg = OverlayConfig {
        alpha: args.alpha.unwrap_or(0.45),
        boxes: vec![(gt_pose, OVERLAY_GREEN), (pred_pose, OVERLAY_CYAN)],
        shading: manifest.shading,
        ..OverlayConfig::default()
    };
    let image = render_overlay(&base, &mesh, &pred_pose, &manifest.intrinsics, &overlay_cfg)?;
    let path = out.join(format!("overlay_{:06}.png", args.index));
    write_color_png(&image, &path)?;
    println!("overlay {}", path.display());
    Ok(())
}
