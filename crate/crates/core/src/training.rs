//! Training: the weighted pose loss (geodesic + squared-Frobenius rotation
//! terms plus squared translation error), backpropagation through the
//! Gram–Schmidt rotation recovery, Adam, and gradient verification against
//! central finite differences.
//!
//! The geodesic term's forward value clamps the arccos argument to [−1, 1]
//! (the true metric); its derivative is evaluated with the argument pulled
//! into [−1+1e-7, 1−1e-7], which bounds the gradient near the singular
//! endpoints without shifting the loss value.

use crate::dataset::{apply_augmentations, AugmentConfig, DatasetError, DatasetManifest};
use crate::geometry::{
    rotation_geodesic_distance, translation_error, GeometryError, Pose, DEGENERACY_EPS,
};
use crate::model::{Mode, ModelError, Params, PoseModel, PosePrediction, SampleCache};
use crate::render::Image;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Loss-side clamp margin for the arccos derivative.
const ARCCOS_GUARD: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Degenerate(#[from] GeometryError),
    #[error("non-finite loss at epoch {epoch}, step {step}; aborted with last good parameters")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        last_good: Box<(PoseModel, TrainLog)>,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

/// Weights of the three loss terms. In `pose_loss` these apply to the raw
/// mm-space quantities; the training loop divides `lambda_t` by the squared
/// translation scale so a weight of 1 acts on normalized translations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_rot: f64,
    pub lambda_rot_frob: f64,
    pub lambda_t: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rot: 1.0,
            lambda_rot_frob: 1.0,
            lambda_t: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainError> {
        let all = [self.lambda_rot, self.lambda_rot_frob, self.lambda_t];
        if all.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(TrainError::InvalidConfig(
                "loss weights must be finite and >= 0".into(),
            ));
        }
        if all.iter().all(|&l| l == 0.0) {
            return Err(TrainError::InvalidConfig(
                "at least one loss weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub augment: AugmentConfig,
    pub seed: u64,
    /// Stop after this many epochs without a validation E_rot improvement.
    pub early_stop_patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 2e-3,
            weights: LossWeights::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            early_stop_patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be > 0".into()));
        }
        self.weights.validate()?;
        self.augment
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Per-epoch scalars; `seconds` is wall-clock and deliberately excluded from
/// any byte-for-byte reproducibility comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_e_rot_deg: f64,
    pub val_e_t_mm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub total_seconds: f64,
}

impl TrainLog {
    /// CSV columns: epoch, train_loss, val_loss, val_erot_deg, val_et_mm,
    /// seconds.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let mut out = String::from("epoch,train_loss,val_loss,val_erot_deg,val_et_mm,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_e_rot_deg, e.val_e_t_mm, e.seconds
            ));
        }
        std::fs::write(path.as_ref(), out)?;
        Ok(())
    }
}

/// Gram–Schmidt forward values cached for the backward pass.
struct GramSchmidt {
    b1: Vector3<f64>,
    b2: Vector3<f64>,
    b3: Vector3<f64>,
    r1_norm: f64,
    u_norm: f64,
    b1_dot_r2: f64,
    r2: Vector3<f64>,
}

fn gram_schmidt(r6: &[f64; 6]) -> Result<GramSchmidt, GeometryError> {
    let r1 = Vector3::new(r6[0], r6[1], r6[2]);
    let r2 = Vector3::new(r6[3], r6[4], r6[5]);
    let r1_norm = r1.norm();
    if !r1_norm.is_finite() || r1_norm < DEGENERACY_EPS {
        return Err(GeometryError::DegenerateInput("first column near zero"));
    }
    let b1 = r1 / r1_norm;
    let b1_dot_r2 = b1.dot(&r2);
    let u = r2 - b1_dot_r2 * b1;
    let u_norm = u.norm();
    if !u_norm.is_finite() || u_norm < DEGENERACY_EPS {
        return Err(GeometryError::DegenerateInput(
            "second column parallel to first",
        ));
    }
    let b2 = u / u_norm;
    let b3 = b1.cross(&b2);
    Ok(GramSchmidt {
        b1,
        b2,
        b3,
        r1_norm,
        u_norm,
        b1_dot_r2,
        r2,
    })
}

/// Backpropagate gradients on the recovered rotation columns to the raw
/// 6D input.
fn gram_schmidt_backward(
    gs: &GramSchmidt,
    g1: Vector3<f64>,
    g2: Vector3<f64>,
    g3: Vector3<f64>,
) -> [f64; 6] {
    // b3 = b1 × b2 feeds back into both factors.
    let h1 = g1 + gs.b2.cross(&g3);
    let h2 = g2 + g3.cross(&gs.b1);

    // b2 = u / ‖u‖.
    let du = (h2 - gs.b2 * gs.b2.dot(&h2)) / gs.u_norm;

    // u = r2 − (b1·r2) b1.
    let dr2 = du - gs.b1 * gs.b1.dot(&du);
    let db1 = h1 - gs.r2 * du.dot(&gs.b1) - du * gs.b1_dot_r2;

    // b1 = r1 / ‖r1‖.
    let dr1 = (db1 - gs.b1 * gs.b1.dot(&db1)) / gs.r1_norm;

    [dr1.x, dr1.y, dr1.z, dr2.x, dr2.y, dr2.z]
}

/// The weighted pose loss
/// `λ_rot·d_rot(R′,R) + λ_rot′·‖R′−R‖²_F + λ_t·‖t′−t‖²`,
/// where `R′` is recovered from the predicted 6D vector. Translations are
/// in mm; see [`LossWeights`] for the normalization convention.
pub fn pose_loss(
    pred: &PosePrediction,
    gt: &Pose,
    w: &LossWeights,
) -> Result<f64, GeometryError> {
    pose_loss_with_grad(pred, gt, w).map(|(loss, _, _)| loss)
}

/// Loss plus gradients with respect to the raw 6D head output and the
/// translation in mm.
pub fn pose_loss_with_grad(
    pred: &PosePrediction,
    gt: &Pose,
    w: &LossWeights,
) -> Result<(f64, [f64; 6], [f64; 3]), GeometryError> {
    let gs = gram_schmidt(&pred.r6.0)?;
    let r_gt = gt.rotation.matrix();
    let r_pred = Matrix3::from_columns(&[gs.b1, gs.b2, gs.b3]);

    // Geodesic term: exact value, guarded derivative.
    let trace = (r_gt.transpose() * r_pred).trace();
    let cos_arg = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0);
    let d_rot = cos_arg.acos();
    let guarded = cos_arg.clamp(-1.0 + ARCCOS_GUARD, 1.0 - ARCCOS_GUARD);
    let d_rot_grad_scale = -1.0 / (1.0 - guarded * guarded).sqrt() / 2.0;

    // Frobenius term.
    let diff = r_pred - r_gt;
    let d_frob: f64 = diff.iter().map(|x| x * x).sum();

    // Squared translation term (mm²).
    let dt_vec = pred.t_mm - gt.translation;
    let d_t = dt_vec.norm_squared();

    let loss = w.lambda_rot * d_rot + w.lambda_rot_frob * d_frob + w.lambda_t * d_t;

    // ∂loss/∂R′ = λ_rot · d_rot′(trace) · R/2 + λ_rot_frob · 2(R′−R).
    let g_matrix = r_gt * (w.lambda_rot * d_rot_grad_scale) + diff * (2.0 * w.lambda_rot_frob);
    let g1 = Vector3::new(g_matrix[(0, 0)], g_matrix[(1, 0)], g_matrix[(2, 0)]);
    let g2 = Vector3::new(g_matrix[(0, 1)], g_matrix[(1, 1)], g_matrix[(2, 1)]);
    let g3 = Vector3::new(g_matrix[(0, 2)], g_matrix[(1, 2)], g_matrix[(2, 2)]);
    let d_r6 = gram_schmidt_backward(&gs, g1, g2, g3);

    let d_t_mm = dt_vec * (2.0 * w.lambda_t);
    Ok((loss, d_r6, [d_t_mm.x, d_t_mm.y, d_t_mm.z]))
}

fn stream(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    fn mix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(tag ^ mix(a ^ mix(b))))
}

const STREAM_SHUFFLE: u64 = 0x01;
const STREAM_AUGMENT: u64 = 0x02;
const STREAM_DROPOUT: u64 = 0x03;

struct Adam {
    m: Params,
    v: Params,
    step: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(reference: &Params, lr: f64) -> Self {
        Self {
            m: reference.zeros_like(),
            v: reference.zeros_like(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - Self::BETA1.powf(t);
        let bc2 = 1.0 - Self::BETA2.powf(t);
        let flat_g = grads.to_flat();
        let mut flat_m = self.m.to_flat();
        let mut flat_v = self.v.to_flat();
        let mut flat_p = params.to_flat();
        for i in 0..flat_g.len() {
            let g = flat_g[i];
            flat_m[i] = Self::BETA1 * flat_m[i] + (1.0 - Self::BETA1) * g;
            flat_v[i] = Self::BETA2 * flat_v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = flat_m[i] / bc1;
            let v_hat = flat_v[i] / bc2;
            flat_p[i] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
        self.m.set_from_flat(&flat_m);
        self.v.set_from_flat(&flat_v);
        params.set_from_flat(&flat_p);
    }
}

/// Effective mm-space weights: `lambda_t` is declared on normalized
/// translations and divides by the squared scene scale here.
fn effective_weights(w: &LossWeights, t_scale_mm: f64) -> LossWeights {
    LossWeights {
        lambda_rot: w.lambda_rot,
        lambda_rot_frob: w.lambda_rot_frob,
        lambda_t: w.lambda_t / (t_scale_mm * t_scale_mm),
    }
}

struct LoadedSet {
    images: Vec<Image>,
    poses: Vec<Pose>,
}

fn load_set(manifest: &DatasetManifest) -> Result<LoadedSet, TrainError> {
    let images = (0..manifest.records.len())
        .map(|i| manifest.load_image(i))
        .collect::<Result<Vec<_>, _>>()?;
    let poses = manifest.records.iter().map(|r| r.pose).collect();
    Ok(LoadedSet { images, poses })
}

/// Mean validation metrics under the deterministic inference path.
fn validate_epoch(
    model: &PoseModel,
    set: &LoadedSet,
    w_eff: &LossWeights,
) -> Result<(f64, f64, f64), TrainError> {
    let results: Vec<(f64, f64, f64)> = set
        .images
        .par_iter()
        .zip(&set.poses)
        .map(|(img, gt)| -> Result<(f64, f64, f64), TrainError> {
            let x = model.image_to_input(img)?;
            let cache = model.forward_cached(&x, None);
            let raw = cache.raw_output;
            let pred = PosePrediction {
                r6: crate::geometry::Rot6([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]),
                t_mm: Vector3::new(raw[6], raw[7], raw[8]) * model.config.t_scale_mm,
            };
            let loss = pose_loss(&pred, gt, w_eff)?;
            let rot = crate::geometry::r6_to_rotation(pred.r6)?;
            let e_rot = rotation_geodesic_distance(&rot, &gt.rotation).to_degrees();
            let e_t = translation_error(gt.translation, pred.t_mm).total;
            Ok((loss, e_rot, e_t))
        })
        .collect::<Result<_, _>>()?;
    let n = results.len().max(1) as f64;
    let (mut loss, mut erot, mut et) = (0.0, 0.0, 0.0);
    for (l, r, t) in results {
        loss += l;
        erot += r;
        et += t;
    }
    Ok((loss / n, erot / n, et / n))
}

/// Cosine decay from the base rate to 5% of it across the epoch budget.
fn scheduled_lr(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    let progress = epoch as f64 / total_epochs.max(1) as f64;
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    base * (0.05 + 0.95 * cos)
}

/// Mini-batch Adam over the training manifest with per-sample augmentation
/// and dropout substreams. The learning rate follows a cosine decay from
/// `learning_rate` to 5% of it. Returns the best-validation model
/// (selected by validation E_rot) and the per-epoch log. Deterministic for
/// a fixed (seed, data, config) regardless of worker count: per-sample
/// gradients are reduced in index order.
pub fn train(
    mut model: PoseModel,
    train_manifest: &DatasetManifest,
    val_manifest: &DatasetManifest,
    cfg: &TrainConfig,
) -> Result<(PoseModel, TrainLog), TrainError> {
    cfg.validate()?;
    if train_manifest.records.is_empty() || val_manifest.records.is_empty() {
        return Err(TrainError::InvalidConfig(
            "train and val manifests must be non-empty".into(),
        ));
    }
    let t_total = std::time::Instant::now();
    let train_set = load_set(train_manifest)?;
    let val_set = load_set(val_manifest)?;
    let w_eff = effective_weights(&cfg.weights, model.config.t_scale_mm);

    let n = train_set.images.len();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, Params, usize)> = None;
    let mut adam = Adam::new(&model.params, cfg.learning_rate);

    for epoch in 0..cfg.epochs {
        let t_epoch = std::time::Instant::now();
        adam.lr = scheduled_lr(cfg.learning_rate, epoch, cfg.epochs);
        model.set_mode(Mode::Train);

        let mut indices: Vec<usize> = (0..n).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(stream(cfg.seed, STREAM_SHUFFLE, epoch as u64, 0));
        for i in (1..n).rev() {
            let j = shuffle_rng.random_range(0..=i);
            indices.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for (step, batch) in indices.chunks(cfg.batch_size).enumerate() {
            let per_sample: Vec<Result<(f64, Params), TrainError>> = batch
                .par_iter()
                .map(|&i| -> Result<(f64, Params), TrainError> {
                    let mut aug_rng = ChaCha8Rng::seed_from_u64(stream(
                        cfg.augment.seed ^ cfg.seed,
                        STREAM_AUGMENT,
                        epoch as u64,
                        i as u64,
                    ));
                    let augmented =
                        apply_augmentations(&train_set.images[i], &cfg.augment, &mut aug_rng);
                    let x = model.image_to_input(&augmented)?;
                    let mut dropout_rng = ChaCha8Rng::seed_from_u64(stream(
                        cfg.seed,
                        STREAM_DROPOUT,
                        epoch as u64,
                        i as u64,
                    ));
                    let cache: SampleCache = model.forward_cached(&x, Some(&mut dropout_rng));
                    let raw = cache.raw_output;
                    let pred = PosePrediction {
                        r6: crate::geometry::Rot6([
                            raw[0], raw[1], raw[2], raw[3], raw[4], raw[5],
                        ]),
                        t_mm: Vector3::new(raw[6], raw[7], raw[8]) * model.config.t_scale_mm,
                    };
                    let (loss, d_r6, d_t_mm) =
                        pose_loss_with_grad(&pred, &train_set.poses[i], &w_eff)?;
                    // Chain through the output rescaling to the raw head.
                    let mut d_raw = [0.0; 9];
                    d_raw[..6].copy_from_slice(&d_r6);
                    for k in 0..3 {
                        d_raw[6 + k] = d_t_mm[k] * model.config.t_scale_mm;
                    }
                    let grads = model.backward(&cache, &d_raw);
                    Ok((loss, grads))
                })
                .collect();

            let mut batch_loss = 0.0;
            let mut acc: Option<Params> = None;
            for r in per_sample {
                let (loss, grads) = r?;
                batch_loss += loss;
                match &mut acc {
                    None => acc = Some(grads),
                    Some(a) => a.add_scaled(&grads, 1.0),
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                let (best_params, best_epoch) = match best {
                    Some((_, p, e)) => (p, e),
                    None => (model.params.clone(), 0),
                };
                let mut last_good = model.clone();
                last_good.params = best_params;
                last_good.set_mode(Mode::Eval);
                log.best_epoch = best_epoch;
                log.total_seconds = t_total.elapsed().as_secs_f64();
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    step,
                    last_good: Box::new((last_good, log)),
                });
            }
            let grads = acc.expect("non-empty batch");
            let mut mean_grads = grads.zeros_like();
            mean_grads.add_scaled(&grads, scale);
            adam.update(&mut model.params, &mean_grads);
            epoch_loss += batch_loss * batch.len() as f64;
        }
        epoch_loss /= n as f64;

        model.set_mode(Mode::Eval);
        let (val_loss, val_e_rot_deg, val_e_t_mm) = validate_epoch(&model, &val_set, &w_eff)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss,
            val_loss,
            val_e_rot_deg,
            val_e_t_mm,
            seconds: t_epoch.elapsed().as_secs_f64(),
        });

        let improved = best
            .as_ref()
            .map(|(b, _, _)| val_e_rot_deg < *b)
            .unwrap_or(true);
        if improved {
            best = Some((val_e_rot_deg, model.params.clone(), epoch));
        } else if let Some(patience) = cfg.early_stop_patience {
            let best_epoch = best.as_ref().map(|(_, _, e)| *e).unwrap_or(0);
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    let (_, best_params, best_epoch) = best.expect("at least one epoch ran");
    model.params = best_params;
    model.set_mode(Mode::Eval);
    log.best_epoch = best_epoch;
    log.total_seconds = t_total.elapsed().as_secs_f64();
    Ok((model, log))
}

/// Compare analytic parameter gradients of `pose_loss ∘ forward` against
/// central finite differences on `n_coords` randomly chosen parameter
/// coordinates. Returns the maximum relative error, with near-zero
/// gradients compared at unit scale.
pub fn finite_difference_check(
    model: &PoseModel,
    image: &Image,
    gt: &Pose,
    w: &LossWeights,
    epsilon: f64,
) -> Result<f64, TrainError> {
    finite_difference_check_inner(model, image, gt, w, epsilon, 200, 0.0)
}

/// The same check with `corruption` added to every sampled analytic
/// gradient coordinate — the negative control proving the checker can
/// detect a broken backward pass.
pub fn finite_difference_check_corrupted(
    model: &PoseModel,
    image: &Image,
    gt: &Pose,
    w: &LossWeights,
    epsilon: f64,
    corruption: f64,
) -> Result<f64, TrainError> {
    finite_difference_check_inner(model, image, gt, w, epsilon, 200, corruption)
}

fn finite_difference_check_inner(
    model: &PoseModel,
    image: &Image,
    gt: &Pose,
    w: &LossWeights,
    epsilon: f64,
    n_coords: usize,
    corruption: f64,
) -> Result<f64, TrainError> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(TrainError::InvalidConfig(format!(
            "epsilon must be in [1e-6, 1e-3], got {epsilon}"
        )));
    }
    let x = model.image_to_input(image)?;
    let loss_of = |m: &PoseModel| -> Result<f64, TrainError> {
        let cache = m.forward_cached(&x, None);
        let raw = cache.raw_output;
        let pred = PosePrediction {
            r6: crate::geometry::Rot6([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]),
            t_mm: Vector3::new(raw[6], raw[7], raw[8]) * m.config.t_scale_mm,
        };
        Ok(pose_loss(&pred, gt, w)?)
    };

    // Analytic gradient.
    let cache = model.forward_cached(&x, None);
    let raw = cache.raw_output;
    let pred = PosePrediction {
        r6: crate::geometry::Rot6([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]),
        t_mm: Vector3::new(raw[6], raw[7], raw[8]) * model.config.t_scale_mm,
    };
    let (_, d_r6, d_t_mm) = pose_loss_with_grad(&pred, gt, w)?;
    let mut d_raw = [0.0; 9];
    d_raw[..6].copy_from_slice(&d_r6);
    for k in 0..3 {
        d_raw[6 + k] = d_t_mm[k] * model.config.t_scale_mm;
    }
    let analytic = model.backward(&cache, &d_raw).to_flat();

    let total = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6fd1_c0de);
    let mut coords = std::collections::BTreeSet::new();
    while coords.len() < n_coords.min(total) {
        coords.insert(rng.random_range(0..total));
    }

    let mut work = model.clone();
    let mut flat = work.params.to_flat();
    let mut max_rel = 0.0f64;
    for &idx in &coords {
        let orig = flat[idx];
        flat[idx] = orig + epsilon;
        work.params.set_from_flat(&flat);
        let lp = loss_of(&work)?;
        flat[idx] = orig - epsilon;
        work.params.set_from_flat(&flat);
        let lm = loss_of(&work)?;
        flat[idx] = orig;
        let fd = (lp - lm) / (2.0 * epsilon);
        let a = analytic[idx] + corruption;
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
        max_rel = max_rel.max(rel);
    }
    work.params.set_from_flat(&flat);
    Ok(max_rel)
}
