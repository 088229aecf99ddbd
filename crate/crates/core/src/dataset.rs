//! Synthetic labeled dataset: sampled poses around a base pose, rendered
//! frames, training-time augmentations, and train/val/test splits.
//!
//! Every random decision flows from a seed through fixed substreams
//! (`hash(seed, frame_index, attempt)` per frame), so generation is
//! reproducible and parallelism over frames cannot change results.
//! Augmentations are applied at training time only; stored images and
//! their pose labels stay clean.

use crate::geometry::{
    centroid_centered_transform, compose_pose, Intrinsics, Pose, RotationMatrix,
};
use crate::mesh::TriMesh;
use crate::render::{rasterize, write_pfdm, write_png, Image, RenderError, ShadingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Frames whose surface coverage falls below this are resampled.
pub const DEFAULT_MIN_VISIBILITY: f64 = 0.2;

/// Retry budget per frame before generation gives up.
pub const MAX_RESAMPLE_RETRIES: u32 = 100;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("manifest serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame {frame}: no pose with visibility >= {min_visibility} after {retries} retries")]
    ResampleExhausted {
        frame: usize,
        min_visibility: f64,
        retries: u32,
    },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// How transformations around the base pose are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n_frames: usize,
    /// Per-axis rotation bound in degrees; Euler angles are drawn uniformly
    /// from ±this and composed x·y·z.
    pub rot_range_deg: f64,
    /// Per-axis translation jitter bounds in mm.
    pub trans_jitter_mm: [f64; 3],
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_frames: 2000,
            rot_range_deg: 30.0,
            // Depth variation is deliberately larger: depth error dominance
            // is part of what evaluation reports.
            trans_jitter_mm: [15.0, 15.0, 30.0],
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_frames == 0 {
            return Err(DatasetError::InvalidConfig("n_frames must be >= 1".into()));
        }
        if self.rot_range_deg < 0.0 || self.trans_jitter_mm.iter().any(|&j| j < 0.0) {
            return Err(DatasetError::InvalidConfig("ranges must be >= 0".into()));
        }
        Ok(())
    }
}

/// One labeled frame: image path (relative to the manifest), ground-truth
/// pose, provenance, and surface coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub image_path: String,
    pub pose: Pose,
    pub transform_index: usize,
    pub visibility_fraction: f64,
}

/// The dataset manifest written next to the frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Mesh file path or a `builtin:<name>[:<radius_mm>]` spec.
    pub mesh_path: String,
    pub intrinsics: Intrinsics,
    /// (height, width) in pixels.
    pub image_size: (u32, u32),
    pub base_pose: Pose,
    /// Camera-space depth of the mesh centroid under the base pose; the
    /// translation normalization scale for training.
    pub t_scale_mm: f64,
    /// Mean/std of stored (quantized) pixel intensities across all frames.
    pub pixel_mean: f64,
    pub pixel_std: f64,
    pub sample_config: SampleConfig,
    pub shading: ShadingConfig,
    pub records: Vec<FrameRecord>,
    /// Directory the manifest was loaded from / saved to; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf, DatasetError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&path, json)?;
        Ok(path)
    }

    /// Write under an explicit file name. The file must live in this
    /// manifest's `base_dir` for the relative image paths to stay valid.
    pub fn save_as(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path.as_ref(), json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        manifest.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(manifest)
    }

    pub fn image_abs_path(&self, index: usize) -> PathBuf {
        self.base_dir.join(&self.records[index].image_path)
    }

    pub fn load_image(&self, index: usize) -> Result<Image, DatasetError> {
        Ok(crate::render::read_png(self.image_abs_path(index))?)
    }

    /// Shallow copy with a subset of records, used by splits.
    fn with_records(&self, records: Vec<FrameRecord>) -> Self {
        Self {
            records,
            ..self.clone()
        }
    }
}

/// Per-frame RNG substream so parallel generation cannot reorder draws.
fn substream_seed(seed: u64, frame_index: u64, attempt: u64) -> u64 {
    fn mix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(frame_index ^ mix(attempt.wrapping_mul(0x5851_f42d_4c95_7f2d))))
}

fn jitter_component(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        rng.random_range(-bound..=bound)
    }
}

fn sample_single_pose(
    p0: &Pose,
    pivot_cam: nalgebra::Vector3<f64>,
    cfg: &SampleConfig,
    frame: usize,
    attempt: u32,
) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(cfg.seed, frame as u64, attempt as u64));
    let half = cfg.rot_range_deg.to_radians();
    let ax = jitter_component(&mut rng, half);
    let ay = jitter_component(&mut rng, half);
    let az = jitter_component(&mut rng, half);
    let rotation = RotationMatrix::from_euler_xyz(ax, ay, az);
    let jitter = nalgebra::Vector3::new(
        jitter_component(&mut rng, cfg.trans_jitter_mm[0]),
        jitter_component(&mut rng, cfg.trans_jitter_mm[1]),
        jitter_component(&mut rng, cfg.trans_jitter_mm[2]),
    );
    let t = centroid_centered_transform(rotation, pivot_cam, jitter);
    compose_pose(&t, p0)
}

/// Sample `n_frames` poses around `p0`: each applies a rotation about the
/// mesh centroid (in camera space, so the surface stays framed) plus a
/// translation offset. Deterministic given the config seed.
pub fn sample_pose_set(
    p0: &Pose,
    mesh_centroid: nalgebra::Vector3<f64>,
    cfg: &SampleConfig,
) -> Vec<Pose> {
    let pivot_cam = p0.transform_point(mesh_centroid);
    (0..cfg.n_frames)
        .map(|i| sample_single_pose(p0, pivot_cam, cfg, i, 0))
        .collect()
}

/// Everything `generate_dataset` needs beyond the sampling parameters.
#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub sample: SampleConfig,
    pub shading: ShadingConfig,
    pub min_visibility: f64,
    pub max_retries: u32,
    pub write_depth: bool,
    /// Label recorded in the manifest (file path or builtin spec).
    pub mesh_label: String,
}

impl GenerateConfig {
    pub fn new(sample: SampleConfig, mesh_label: impl Into<String>) -> Self {
        Self {
            sample,
            shading: ShadingConfig::default(),
            min_visibility: DEFAULT_MIN_VISIBILITY,
            max_retries: MAX_RESAMPLE_RETRIES,
            write_depth: false,
            mesh_label: mesh_label.into(),
        }
    }
}

struct GeneratedFrame {
    record: FrameRecord,
    pixel_sum: f64,
    pixel_sq_sum: f64,
}

/// Render every sampled pose, writing `frames/%06d.png` (and optionally
/// `depth/%06d.pfdm`) plus `manifest.json` under `out_dir`. Frames whose
/// visibility falls below the threshold are resampled from per-attempt
/// substreams, bounded by the retry budget.
pub fn generate_dataset(
    mesh: &TriMesh,
    p0: &Pose,
    intrinsics: &Intrinsics,
    size: (u32, u32),
    cfg: &GenerateConfig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, DatasetError> {
    cfg.sample.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir.join("frames"))?;
    if cfg.write_depth {
        std::fs::create_dir_all(out_dir.join("depth"))?;
    }

    let pivot_cam = p0.transform_point(mesh.centroid());
    let frames: Vec<Result<GeneratedFrame, DatasetError>> = (0..cfg.sample.n_frames)
        .into_par_iter()
        .map(|i| {
            let mut chosen = None;
            for attempt in 0..=cfg.max_retries {
                let pose = sample_single_pose(p0, pivot_cam, &cfg.sample, i, attempt);
                let (image, depth) = rasterize(mesh, &pose, intrinsics, size, &cfg.shading);
                let visibility = depth.coverage();
                if visibility >= cfg.min_visibility {
                    chosen = Some((pose, image, depth, visibility));
                    break;
                }
            }
            let (pose, image, depth, visibility) =
                chosen.ok_or(DatasetError::ResampleExhausted {
                    frame: i,
                    min_visibility: cfg.min_visibility,
                    retries: cfg.max_retries,
                })?;
            let rel_path = format!("frames/{i:06}.png");
            write_png(&image, out_dir.join(&rel_path))?;
            if cfg.write_depth {
                write_pfdm(&depth, out_dir.join(format!("depth/{i:06}.pfdm")))?;
            }
            // Stats over the quantized pixels: exactly what training reloads.
            let (mut sum, mut sq) = (0.0f64, 0.0f64);
            for b in image.to_u8() {
                let v = f64::from(b) / 255.0;
                sum += v;
                sq += v * v;
            }
            Ok(GeneratedFrame {
                record: FrameRecord {
                    image_path: rel_path,
                    pose,
                    transform_index: i,
                    visibility_fraction: visibility,
                },
                pixel_sum: sum,
                pixel_sq_sum: sq,
            })
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.sample.n_frames);
    let (mut sum, mut sq) = (0.0f64, 0.0f64);
    for frame in frames {
        let frame = frame?;
        sum += frame.pixel_sum;
        sq += frame.pixel_sq_sum;
        records.push(frame.record);
    }
    let n_px = (cfg.sample.n_frames as f64) * f64::from(size.0) * f64::from(size.1);
    let mean = sum / n_px;
    let var = (sq / n_px - mean * mean).max(0.0);

    let manifest = DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        mesh_path: cfg.mesh_label.clone(),
        intrinsics: *intrinsics,
        image_size: size,
        base_pose: *p0,
        t_scale_mm: pivot_cam.z,
        pixel_mean: mean,
        pixel_std: var.sqrt().max(1e-6),
        sample_config: cfg.sample,
        shading: cfg.shading,
        records,
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Grid-mask occlusion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMaskConfig {
    /// Grid stride in pixels.
    pub unit_size: u32,
    /// Square side as a fraction of the stride; masked fraction ≈ ratio².
    pub mask_ratio: f64,
    pub probability: f64,
}

/// Brightness jitter parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrightnessConfig {
    pub max_delta: f32,
    pub probability: f64,
}

/// Training-time augmentation bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub grid_mask: GridMaskConfig,
    pub brightness: BrightnessConfig,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            grid_mask: GridMaskConfig {
                unit_size: 32,
                mask_ratio: 0.4,
                probability: 0.5,
            },
            brightness: BrightnessConfig {
                max_delta: 0.15,
                probability: 0.8,
            },
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let g = &self.grid_mask;
        if !(g.mask_ratio > 0.0 && g.mask_ratio < 1.0) {
            return Err(DatasetError::InvalidConfig(
                "grid_mask.mask_ratio must be in (0, 1)".into(),
            ));
        }
        if g.unit_size == 0 {
            return Err(DatasetError::InvalidConfig(
                "grid_mask.unit_size must be > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.brightness.max_delta) {
            return Err(DatasetError::InvalidConfig(
                "brightness.max_delta must be in [0, 1]".into(),
            ));
        }
        for p in [g.probability, self.brightness.probability] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DatasetError::InvalidConfig(
                    "probabilities must be in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    /// No-op augmentation, for evaluation paths.
    pub fn disabled() -> Self {
        Self {
            grid_mask: GridMaskConfig {
                unit_size: 32,
                mask_ratio: 0.5,
                probability: 0.0,
            },
            brightness: BrightnessConfig {
                max_delta: 0.0,
                probability: 0.0,
            },
            seed: 0,
        }
    }
}

/// Zero out a regular grid of square patches (side `unit·ratio`, stride
/// `unit`, random phase). Squares wrap toroidally so the masked fraction is
/// phase-independent. Pose labels are untouched by construction.
pub fn grid_mask(img: &Image, cfg: &GridMaskConfig, rng: &mut ChaCha8Rng) -> Image {
    let mut out = img.clone();
    if cfg.probability < 1.0 && rng.random_range(0.0..1.0) >= cfg.probability {
        return out;
    }
    let unit = cfg.unit_size;
    let side = ((f64::from(unit) * cfg.mask_ratio).round() as u32).clamp(1, unit);
    let phase_x = rng.random_range(0..unit);
    let phase_y = rng.random_range(0..unit);
    let (w, h) = (img.width, img.height);
    let cells_x = w.div_ceil(unit);
    let cells_y = h.div_ceil(unit);
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            for dy in 0..side {
                let y = (cy * unit + phase_y + dy) % (cells_y * unit);
                if y >= h {
                    continue;
                }
                for dx in 0..side {
                    let x = (cx * unit + phase_x + dx) % (cells_x * unit);
                    if x >= w {
                        continue;
                    }
                    out.set(x, y, 0.0);
                }
            }
        }
    }
    out
}

/// Add a uniform brightness delta in ±max_delta, clamped back to [0, 1].
pub fn brightness_jitter(img: &Image, cfg: &BrightnessConfig, rng: &mut ChaCha8Rng) -> Image {
    let mut out = img.clone();
    if cfg.probability < 1.0 && rng.random_range(0.0..1.0) >= cfg.probability {
        return out;
    }
    if cfg.max_delta == 0.0 {
        return out;
    }
    let delta = rng.random_range(-cfg.max_delta..=cfg.max_delta);
    for p in &mut out.pixels {
        *p = (*p + delta).clamp(0.0, 1.0);
    }
    out
}

/// Grid mask then brightness jitter from one substream.
pub fn apply_augmentations(img: &Image, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Image {
    let masked = grid_mask(img, &cfg.grid_mask, rng);
    brightness_jitter(&masked, &cfg.brightness, rng)
}

/// Disjoint, exhaustive, seeded split. Validation and test sizes round from
/// their ratios; the remainder goes to train.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest), DatasetError> {
    let (r_train, r_val, r_test) = ratios;
    if r_train <= 0.0 || r_val <= 0.0 || r_test <= 0.0 {
        return Err(DatasetError::InvalidRatios(format!(
            "ratios must be positive, got ({r_train}, {r_val}, {r_test})"
        )));
    }
    if (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidRatios(format!(
            "ratios must sum to 1, got {}",
            r_train + r_val + r_test
        )));
    }
    let n = manifest.records.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher–Yates.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let n_val = ((n as f64) * r_val).round() as usize;
    let n_test = ((n as f64) * r_test).round() as usize;
    if n_val + n_test > n {
        return Err(DatasetError::InvalidRatios(
            "rounded val+test sizes exceed the record count".into(),
        ));
    }
    let take = |slice: &[usize]| -> Vec<FrameRecord> {
        slice.iter().map(|&i| manifest.records[i].clone()).collect()
    };
    let val = take(&indices[0..n_val]);
    let test = take(&indices[n_val..n_val + n_test]);
    let train = take(&indices[n_val + n_test..]);
    Ok((
        manifest.with_records(train),
        manifest.with_records(val),
        manifest.with_records(test),
    ))
}
