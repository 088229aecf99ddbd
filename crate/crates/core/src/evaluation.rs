//! Evaluation: ADD / angular / translation metrics with per-axis breakdown,
//! per-mesh and leave-one-out protocols, and an inference throughput
//! benchmark.
//!
//! Angular errors are computed in radians and reported in degrees. Reports
//! carry mean/median/percentile summaries plus the pass rate against the
//! 10° angular threshold.

use crate::dataset::{
    generate_dataset, DatasetError, DatasetManifest, FrameRecord, GenerateConfig,
};
use crate::geometry::{
    rotation_geodesic_distance, translation_error, GeometryError, Intrinsics, Pose,
    RotationMatrix,
};
use crate::mesh::TriMesh;
use crate::model::{init_model, ModelConfig, ModelError, PoseModel};
use crate::render::Image;
use crate::training::{train, TrainConfig, TrainError, TrainLog};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// The clinically motivated angular threshold, degrees.
pub const ROT_THRESHOLD_DEG: f64 = 10.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("evaluation error: {0}")]
    Invalid(String),
}

/// Mean distance between corresponding mesh vertices transformed by the two
/// poses (the ADD metric), in mm.
pub fn add_metric(vertices: &[Vector3<f64>], pose_a: &Pose, pose_b: &Pose) -> f64 {
    assert!(!vertices.is_empty(), "ADD needs at least one vertex");
    let sum: f64 = vertices
        .iter()
        .map(|v| (pose_a.transform_point(*v) - pose_b.transform_point(*v)).norm())
        .sum();
    sum / vertices.len() as f64
}

/// Anything that can produce a pose for a frame. The index lets test
/// oracles look up ground truth; real models ignore it.
pub trait PosePredictor: Sync {
    fn predict(&self, index: usize, image: &Image) -> Result<Pose, EvalError>;
}

impl PosePredictor for PoseModel {
    fn predict(&self, _index: usize, image: &Image) -> Result<Pose, EvalError> {
        Ok(self.predict_pose(image)?)
    }
}

/// Per-frame error measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub add_mm: f64,
    pub e_rot_deg: f64,
    pub e_t_mm: f64,
    pub e_t_axis_mm: [f64; 3],
}

/// Order statistics of one metric across frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    pub min: f64,
    pub max: f64,
}

impl StatSummary {
    fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| -> f64 {
            let idx = ((sorted.len() as f64 - 1.0) * p).round() as usize;
            sorted[idx]
        };
        Self {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            median: q(0.5),
            p10: q(0.1),
            p90: q(0.9),
            min: sorted[0],
            max: *sorted.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    PerMesh,
    LeaveOneOut,
}

/// Aggregated metrics for one evaluation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_label: String,
    pub n_frames: usize,
    pub add_mm: StatSummary,
    pub e_rot_deg: StatSummary,
    pub e_t_mm: StatSummary,
    pub e_t_axis_mm: [StatSummary; 3],
    /// Fraction of frames with angular error within the 10° threshold.
    pub rot_within_10deg_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub cases: Vec<CaseReport>,
}

impl EvalReport {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| EvalError::Invalid(e.to_string()))?;
        json.push('\n');
        std::fs::write(path.as_ref(), json).map_err(|e| EvalError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Aligned-column text table: metric rows × case columns, mean values
    /// with medians in parentheses.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let label = match self.protocol {
            Protocol::PerMesh => "per-mesh",
            Protocol::LeaveOneOut => "leave-one-out",
        };
        out.push_str(&format!("protocol: {label}\n"));
        let col_w = 22usize;
        out.push_str(&format!("{:<14}", "Metric"));
        for c in &self.cases {
            out.push_str(&format!("{:>col_w$}", c.case_label));
        }
        out.push('\n');
        let row = |name: &str, get: &dyn Fn(&CaseReport) -> (f64, f64)| -> String {
            let mut line = format!("{name:<14}");
            for c in &self.cases {
                let (mean, median) = get(c);
                line.push_str(&format!("{:>col_w$}", format!("{mean:.2} ({median:.2})")));
            }
            line.push('\n');
            line
        };
        out.push_str(&row("ADD (mm)", &|c| (c.add_mm.mean, c.add_mm.median)));
        out.push_str(&row("E_rot (deg)", &|c| {
            (c.e_rot_deg.mean, c.e_rot_deg.median)
        }));
        out.push_str(&row("E_t (mm)", &|c| (c.e_t_mm.mean, c.e_t_mm.median)));
        let mut line = format!("{:<14}", "<=10deg rate");
        for c in &self.cases {
            line.push_str(&format!(
                "{:>col_w$}",
                format!("{:.1}%", 100.0 * c.rot_within_10deg_rate)
            ));
        }
        line.push('\n');
        out.push_str(&line);
        out
    }
}

/// Per-frame prediction and error computation against a manifest.
pub fn evaluate_frames(
    predictor: &dyn PosePredictor,
    manifest: &DatasetManifest,
    mesh: &TriMesh,
) -> Result<Vec<FrameMetrics>, EvalError> {
    let indices: Vec<usize> = (0..manifest.records.len()).collect();
    indices
        .par_iter()
        .map(|&i| -> Result<FrameMetrics, EvalError> {
            let image = manifest.load_image(i)?;
            let predicted = predictor.predict(i, &image)?;
            let gt = &manifest.records[i].pose;
            let e_rot_deg =
                rotation_geodesic_distance(&predicted.rotation, &gt.rotation).to_degrees();
            let te = translation_error(gt.translation, predicted.translation);
            Ok(FrameMetrics {
                add_mm: add_metric(&mesh.vertices, gt, &predicted),
                e_rot_deg,
                e_t_mm: te.total,
                e_t_axis_mm: [te.per_axis.x, te.per_axis.y, te.per_axis.z],
            })
        })
        .collect()
}

fn aggregate(label: &str, frames: &[FrameMetrics]) -> CaseReport {
    let collect = |f: &dyn Fn(&FrameMetrics) -> f64| -> Vec<f64> {
        frames.iter().map(f).collect()
    };
    let rot = collect(&|m| m.e_rot_deg);
    let within = rot.iter().filter(|&&r| r <= ROT_THRESHOLD_DEG).count() as f64
        / rot.len().max(1) as f64;
    CaseReport {
        case_label: label.to_string(),
        n_frames: frames.len(),
        add_mm: StatSummary::from_values(&collect(&|m| m.add_mm)),
        e_rot_deg: StatSummary::from_values(&rot),
        e_t_mm: StatSummary::from_values(&collect(&|m| m.e_t_mm)),
        e_t_axis_mm: [
            StatSummary::from_values(&collect(&|m| m.e_t_axis_mm[0])),
            StatSummary::from_values(&collect(&|m| m.e_t_axis_mm[1])),
            StatSummary::from_values(&collect(&|m| m.e_t_axis_mm[2])),
        ],
        rot_within_10deg_rate: within,
    }
}

/// Evaluate a predictor over every frame of a manifest.
pub fn evaluate(
    predictor: &dyn PosePredictor,
    manifest: &DatasetManifest,
    mesh: &TriMesh,
) -> Result<EvalReport, EvalError> {
    if manifest.records.is_empty() {
        return Err(EvalError::Invalid("manifest has no records".into()));
    }
    let frames = evaluate_frames(predictor, manifest, mesh)?;
    Ok(EvalReport {
        protocol: Protocol::PerMesh,
        cases: vec![aggregate(&manifest.mesh_path, &frames)],
    })
}

/// Scene geometry shared by every case in a leave-one-out run.
#[derive(Debug, Clone)]
pub struct LooConfig {
    pub image_size: (u32, u32),
    /// Frames generated per mesh.
    pub n_frames: usize,
    pub rot_range_deg: f64,
    pub trans_jitter_mm: [f64; 3],
    /// Camera distance as a multiple of the mesh bounding radius.
    pub depth_scale: f64,
    pub seed: u64,
}

impl Default for LooConfig {
    fn default() -> Self {
        Self {
            image_size: (128, 128),
            n_frames: 300,
            rot_range_deg: 30.0,
            trans_jitter_mm: [15.0, 15.0, 30.0],
            depth_scale: 4.0,
            seed: 0,
        }
    }
}

/// Auto-framing base pose: identity rotation, mesh centroid pushed to
/// `depth_scale × bounding_radius` along the optical axis.
pub fn facing_pose(mesh: &TriMesh, depth_scale: f64) -> Pose {
    let z0 = depth_scale * mesh.bounding_radius();
    Pose::new(
        RotationMatrix::identity(),
        Vector3::new(0.0, 0.0, z0) - mesh.centroid(),
    )
}

/// Merge manifests that live under `work_dir` into one manifest rooted at
/// `work_dir`, rewriting image paths and pooling pixel statistics.
fn merge_manifests(
    manifests: &[&DatasetManifest],
    work_dir: &Path,
) -> Result<DatasetManifest, EvalError> {
    let first = manifests
        .first()
        .ok_or_else(|| EvalError::Invalid("no manifests to merge".into()))?;
    let mut records: Vec<FrameRecord> = Vec::new();
    let mut total_n = 0.0f64;
    let mut mean_acc = 0.0f64;
    let mut sq_acc = 0.0f64;
    let mut t_scale_acc = 0.0f64;
    for m in manifests {
        let prefix = m
            .base_dir
            .strip_prefix(work_dir)
            .map_err(|_| EvalError::Invalid("manifest not under the work dir".into()))?;
        for r in &m.records {
            let mut rec = r.clone();
            rec.image_path = prefix
                .join(&r.image_path)
                .to_string_lossy()
                .replace('\\', "/");
            records.push(rec);
        }
        let n = m.records.len() as f64;
        total_n += n;
        mean_acc += n * m.pixel_mean;
        sq_acc += n * (m.pixel_std * m.pixel_std + m.pixel_mean * m.pixel_mean);
        t_scale_acc += n * m.t_scale_mm;
    }
    let mean = mean_acc / total_n;
    let var = (sq_acc / total_n - mean * mean).max(0.0);
    Ok(DatasetManifest {
        mesh_path: "merged".into(),
        pixel_mean: mean,
        pixel_std: var.sqrt().max(1e-6),
        t_scale_mm: t_scale_acc / total_n,
        records,
        base_dir: work_dir.to_path_buf(),
        ..(*first).clone()
    })
}

/// Seeded 90/10 train/val split used inside leave-one-out runs.
fn two_way_split(
    manifest: &DatasetManifest,
    seed: u64,
) -> (DatasetManifest, DatasetManifest) {
    let n = manifest.records.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let n_val = (n / 10).max(1);
    let take = |slice: &[usize]| -> DatasetManifest {
        let mut m = manifest.clone();
        m.records = slice.iter().map(|&i| manifest.records[i].clone()).collect();
        m
    };
    (take(&indices[n_val..]), take(&indices[..n_val]))
}

/// Everything one leave-one-out case produced, for protocol assertions.
pub struct LooCase {
    pub report: EvalReport,
    pub held_out_label: String,
    /// Absolute image paths the model trained on.
    pub train_paths: Vec<std::path::PathBuf>,
    /// Absolute image paths of the held-out evaluation set.
    pub eval_paths: Vec<std::path::PathBuf>,
    pub train_log: TrainLog,
}

/// For each mesh: synthesize (or reuse) every mesh's dataset under
/// `work_dir/case_<label>`, train on the union of all *other* meshes'
/// frames, and evaluate on the held-out mesh's frames. Deterministic given
/// the config seeds.
pub fn leave_one_out(
    meshes: &[(String, TriMesh)],
    loo_cfg: &LooConfig,
    train_cfg: &TrainConfig,
    work_dir: impl AsRef<Path>,
) -> Result<Vec<LooCase>, EvalError> {
    if meshes.len() < 2 {
        return Err(EvalError::Invalid(
            "leave-one-out needs at least 2 meshes".into(),
        ));
    }
    let work_dir = work_dir.as_ref();
    std::fs::create_dir_all(work_dir).map_err(|e| EvalError::Invalid(e.to_string()))?;

    // Generate one dataset per mesh.
    let mut manifests = Vec::new();
    for (idx, (label, mesh)) in meshes.iter().enumerate() {
        let dir = work_dir.join(format!("case_{label}"));
        let p0 = facing_pose(mesh, loo_cfg.depth_scale);
        let k = Intrinsics::default_for_size(loo_cfg.image_size.1, loo_cfg.image_size.0);
        let gen = GenerateConfig::new(
            crate::dataset::SampleConfig {
                n_frames: loo_cfg.n_frames,
                rot_range_deg: loo_cfg.rot_range_deg,
                trans_jitter_mm: loo_cfg.trans_jitter_mm,
                seed: loo_cfg.seed.wrapping_add(idx as u64),
            },
            format!("case_{label}"),
        );
        let manifest = generate_dataset(mesh, &p0, &k, loo_cfg.image_size, &gen, &dir)?;
        manifests.push(manifest);
    }

    let mut cases = Vec::new();
    for held_out in 0..meshes.len() {
        let train_sources: Vec<&DatasetManifest> = manifests
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held_out)
            .map(|(_, m)| m)
            .collect();
        let merged = merge_manifests(&train_sources, work_dir)?;
        let (train_manifest, val_manifest) =
            two_way_split(&merged, loo_cfg.seed.wrapping_add(0x5eed));

        let mut model_cfg = ModelConfig::default_for(loo_cfg.image_size);
        model_cfg.t_scale_mm = merged.t_scale_mm;
        model_cfg.norm_mean = merged.pixel_mean;
        model_cfg.norm_std = merged.pixel_std;
        let model = init_model(&model_cfg, train_cfg.seed)?;
        let (trained, train_log) = train(model, &train_manifest, &val_manifest, train_cfg)?;

        let eval_manifest = &manifests[held_out];
        let frames = evaluate_frames(&trained, eval_manifest, &meshes[held_out].1)?;
        let report = EvalReport {
            protocol: Protocol::LeaveOneOut,
            cases: vec![aggregate(&meshes[held_out].0, &frames)],
        };
        cases.push(LooCase {
            report,
            held_out_label: meshes[held_out].0.clone(),
            train_paths: (0..train_manifest.records.len())
                .map(|i| train_manifest.image_abs_path(i))
                .collect(),
            eval_paths: (0..eval_manifest.records.len())
                .map(|i| eval_manifest.image_abs_path(i))
                .collect(),
            train_log,
        });
    }
    Ok(cases)
}

/// Inference throughput report. `fps` is defined as
/// `1000 · batch_size / mean_latency_ms`, so the identity holds by
/// construction and is asserted downstream within 1%.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub batch_size: usize,
    pub n_frames: usize,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub fps: f64,
    pub hardware: String,
}

impl BenchReport {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| EvalError::Invalid(e.to_string()))?;
        json.push('\n');
        std::fs::write(path.as_ref(), json).map_err(|e| EvalError::Invalid(e.to_string()))?;
        Ok(())
    }
}

fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    format!("{cpu} ({cores} hw threads)")
}

/// Timed forward+recovery passes over seeded synthetic frames, single
/// stream, with 10 warmup iterations excluded from the statistics.
pub fn benchmark_inference(
    model: &PoseModel,
    n_frames: usize,
    batch_size: usize,
) -> Result<BenchReport, EvalError> {
    if n_frames < 100 {
        return Err(EvalError::Invalid(format!(
            "need at least 100 frames after warmup, got {n_frames}"
        )));
    }
    if batch_size == 0 {
        return Err(EvalError::Invalid("batch_size must be positive".into()));
    }
    let (h, w) = model.config.input_size;
    let mut rng = ChaCha8Rng::seed_from_u64(0xbe4c);
    let make_batch = |rng: &mut ChaCha8Rng| -> Vec<Image> {
        (0..batch_size)
            .map(|_| Image {
                width: w,
                height: h,
                pixels: (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect(),
            })
            .collect()
    };

    for _ in 0..10 {
        let batch = make_batch(&mut rng);
        let _ = model.forward(&batch)?;
    }

    let n_batches = n_frames.div_ceil(batch_size);
    let mut latencies_ms = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let batch = make_batch(&mut rng);
        let t0 = std::time::Instant::now();
        let preds = model.forward(&batch)?;
        // Recovery is part of the measured pipeline.
        for p in &preds {
            let _ = crate::geometry::r6_to_rotation(p.r6)?;
        }
        latencies_ms.push(t0.elapsed().as_secs_f64() * 1000.0);
    }
    let mut sorted = latencies_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64;
    let median = sorted[sorted.len() / 2];
    let p99 = sorted[((sorted.len() as f64 - 1.0) * 0.99).round() as usize];
    Ok(BenchReport {
        batch_size,
        n_frames: n_batches * batch_size,
        mean_latency_ms: mean,
        median_latency_ms: median,
        p99_latency_ms: p99,
        fps: 1000.0 * batch_size as f64 / mean,
        hardware: hardware_description(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SampleConfig;
    use crate::mesh::icosphere;
    use crate::model::ConvBlockConfig;
    use approx::assert_relative_eq;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        Pose::new(
            RotationMatrix::from_euler_xyz(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ),
            Vector3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(50.0..150.0),
            ),
        )
    }

    #[test]
    fn add_metric_cases() {
        let mesh = icosphere(1, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_pose(&mut rng);
        assert_eq!(add_metric(&mesh.vertices, &p, &p), 0.0);

        // Identical rotations, translations differing by d: exactly ‖d‖.
        let d = Vector3::new(1.0, -2.0, 2.0);
        let q = Pose::new(p.rotation, p.translation + d);
        assert_relative_eq!(add_metric(&mesh.vertices, &p, &q), 3.0, epsilon = 1e-12);

        // Brute-force per-vertex loop oracle.
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let mut acc = 0.0;
        for v in &mesh.vertices {
            let pa = a.rotation.matrix() * v + a.translation;
            let pb = b.rotation.matrix() * v + b.translation;
            acc += ((pa.x - pb.x).powi(2) + (pa.y - pb.y).powi(2) + (pa.z - pb.z).powi(2)).sqrt();
        }
        let oracle = acc / mesh.vertices.len() as f64;
        assert!((add_metric(&mesh.vertices, &a, &b) - oracle).abs() < 1e-9);
    }

    #[test]
    fn add_metric_symmetric_and_left_invariant() {
        let mesh = icosphere(1, 15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let ab = add_metric(&mesh.vertices, &a, &b);
            let ba = add_metric(&mesh.vertices, &b, &a);
            assert!((ab - ba).abs() < 1e-12);

            // Common rigid left-composition: distances are preserved.
            let t = crate::geometry::Transform::from_rotation_translation(
                RotationMatrix::from_euler_xyz(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                Vector3::new(3.0, -4.0, 7.0),
            );
            let ta = crate::geometry::compose_pose(&t, &a);
            let tb = crate::geometry::compose_pose(&t, &b);
            let moved = add_metric(&mesh.vertices, &ta, &tb);
            assert!((ab - moved).abs() < 1e-9, "{ab} vs {moved}");
        }
    }

    struct OraclePredictor<'a>(&'a DatasetManifest);

    impl PosePredictor for OraclePredictor<'_> {
        fn predict(&self, index: usize, _image: &Image) -> Result<Pose, EvalError> {
            Ok(self.0.records[index].pose)
        }
    }

    struct ConstantPredictor(Pose);

    impl PosePredictor for ConstantPredictor {
        fn predict(&self, _index: usize, _image: &Image) -> Result<Pose, EvalError> {
            Ok(self.0)
        }
    }

    fn tiny_dataset(dir: &Path, n: usize) -> (TriMesh, DatasetManifest) {
        let mesh = icosphere(2, 25.0);
        let p0 = facing_pose(&mesh, 4.0);
        let k = Intrinsics::default_for_size(32, 32);
        let cfg = GenerateConfig::new(
            SampleConfig {
                n_frames: n,
                rot_range_deg: 25.0,
                trans_jitter_mm: [8.0, 8.0, 16.0],
                seed: 13,
            },
            "builtin:sphere:25",
        );
        let manifest = generate_dataset(&mesh, &p0, &k, (32, 32), &cfg, dir).unwrap();
        (mesh, manifest)
    }

    #[test]
    fn oracle_predictor_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, manifest) = tiny_dataset(dir.path(), 4);
        let report = evaluate(&OraclePredictor(&manifest), &manifest, &mesh).unwrap();
        let case = &report.cases[0];
        assert_eq!(case.n_frames, 4);
        assert!(case.add_mm.max < 1e-12);
        // arccos near 1 amplifies f64 rounding to ~sqrt(eps) radians.
        assert!(case.e_rot_deg.max < 1e-5);
        assert!(case.e_t_mm.max < 1e-12);
        assert_eq!(case.rot_within_10deg_rate, 1.0);
    }

    #[test]
    fn constant_predictor_matches_hand_computation() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, mut manifest) = tiny_dataset(dir.path(), 2);
        // Pin the two ground-truth poses to known values.
        let g0 = Pose::new(RotationMatrix::identity(), Vector3::new(0.0, 0.0, 100.0));
        let g1 = Pose::new(
            RotationMatrix::from_axis_angle(Vector3::z(), 0.2),
            Vector3::new(3.0, 4.0, 100.0),
        );
        manifest.records[0].pose = g0;
        manifest.records[1].pose = g1;
        let pred = Pose::new(RotationMatrix::identity(), Vector3::new(0.0, 0.0, 100.0));
        let frames =
            evaluate_frames(&ConstantPredictor(pred), &manifest, &mesh).unwrap();

        // Frame 0: exact match.
        assert!(frames[0].e_rot_deg < 1e-12);
        assert!(frames[0].e_t_mm < 1e-12);
        // Frame 1: rotation error is exactly the 0.2 rad twist; translation
        // error the 3-4-5 triangle.
        assert_relative_eq!(frames[1].e_rot_deg, 0.2f64.to_degrees(), epsilon = 1e-9);
        assert_relative_eq!(frames[1].e_t_mm, 5.0, epsilon = 1e-12);
        assert_relative_eq!(frames[1].e_t_axis_mm[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(frames[1].e_t_axis_mm[1], 4.0, epsilon = 1e-12);

        let report = EvalReport {
            protocol: Protocol::PerMesh,
            cases: vec![aggregate("two-frame", &frames)],
        };
        let case = &report.cases[0];
        assert_relative_eq!(
            case.e_rot_deg.mean,
            0.2f64.to_degrees() / 2.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(case.e_t_mm.mean, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn per_frame_axis_decomposition_is_pythagorean() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, manifest) = tiny_dataset(dir.path(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pred = random_pose(&mut rng);
        let frames = evaluate_frames(&ConstantPredictor(pred), &manifest, &mesh).unwrap();
        for f in &frames {
            let sum_sq: f64 = f.e_t_axis_mm.iter().map(|a| a * a).sum();
            assert!(
                (f.e_t_mm * f.e_t_mm - sum_sq).abs() < 1e-9,
                "total² {} vs axis sum² {sum_sq}",
                f.e_t_mm * f.e_t_mm
            );
        }
    }

    #[test]
    fn evaluation_is_order_independent() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, manifest) = tiny_dataset(dir.path(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let pred = random_pose(&mut rng);
        let base = evaluate(&ConstantPredictor(pred), &manifest, &mesh).unwrap();

        let mut shuffled = manifest.clone();
        shuffled.records.reverse();
        let rev = evaluate(&ConstantPredictor(pred), &shuffled, &mesh).unwrap();
        assert_eq!(base.cases[0].add_mm, rev.cases[0].add_mm);
        assert_eq!(base.cases[0].e_rot_deg, rev.cases[0].e_rot_deg);
        assert_eq!(base.cases[0].e_t_mm, rev.cases[0].e_t_mm);
    }

    #[test]
    fn report_json_and_table() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, manifest) = tiny_dataset(dir.path(), 3);
        let report = evaluate(&OraclePredictor(&manifest), &manifest, &mesh).unwrap();
        let path = dir.path().join("report.json");
        report.save_json(&path).unwrap();
        let loaded: EvalReport =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(loaded, report);
        let table = report.to_table();
        assert!(table.contains("ADD (mm)"));
        assert!(table.contains("E_rot (deg)"));
        assert!(table.contains("E_t (mm)"));
    }

    #[test]
    fn leave_one_out_two_meshes() {
        let dir = tempfile::tempdir().unwrap();
        let meshes = vec![
            ("a".to_string(), icosphere(2, 25.0)),
            ("b".to_string(), crate::mesh::cavity_surface(2, 25.0, 12.0, 0.9)),
        ];
        let loo_cfg = LooConfig {
            image_size: (32, 32),
            n_frames: 12,
            seed: 5,
            ..LooConfig::default()
        };
        let train_cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let cases = leave_one_out(&meshes, &loo_cfg, &train_cfg, dir.path()).unwrap();
        assert_eq!(cases.len(), 2);
        for case in &cases {
            // Each model trains without its held-out mesh.
            let held_dir = format!("case_{}", case.held_out_label);
            for p in &case.train_paths {
                assert!(
                    !p.to_string_lossy().contains(&held_dir),
                    "training pulled from the held-out mesh: {p:?}"
                );
            }
            assert_eq!(case.report.cases[0].n_frames, 12);
        }
        // One mesh is not enough.
        assert!(leave_one_out(&meshes[..1], &loo_cfg, &train_cfg, dir.path()).is_err());
    }

    fn bench_model(channels: &[usize]) -> PoseModel {
        let cfg = ModelConfig {
            input_size: (32, 32),
            conv_blocks: channels
                .iter()
                .map(|&c| ConvBlockConfig { out_channels: c })
                .collect(),
            leaky_slope: 0.01,
            dropout_rate: 0.0,
            dropout_blocks: vec![],
            head_hidden_dim: 32,
            t_scale_mm: 100.0,
            norm_mean: 0.5,
            norm_std: 0.25,
        };
        init_model(&cfg, 3).unwrap()
    }

    #[test]
    fn bench_self_consistency() {
        let model = bench_model(&[8, 16, 24]);
        let report = benchmark_inference(&model, 100, 1).unwrap();
        let identity = report.fps * report.mean_latency_ms;
        assert!(
            (identity - 1000.0).abs() / 1000.0 < 0.01,
            "fps×latency = {identity}"
        );
        assert!(report.p99_latency_ms >= report.median_latency_ms);
        assert_eq!(report.n_frames, 100);
        assert!(benchmark_inference(&model, 50, 1).is_err());
    }

    #[test]
    fn wider_model_is_slower() {
        let thin = bench_model(&[8, 16, 24]);
        let wide = bench_model(&[16, 32, 48]);
        let a = benchmark_inference(&thin, 100, 1).unwrap();
        let b = benchmark_inference(&wide, 100, 1).unwrap();
        assert!(
            b.mean_latency_ms > a.mean_latency_ms,
            "wide {b:?} should be slower than thin {a:?}"
        );
    }
}
