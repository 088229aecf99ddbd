//! The convolutional pose regressor `f_θ: image → (r6, t)`.
//!
//! A stack of 3×3 stride-2 conv blocks with leaky-rectified activations and
//! dropout, global average pooling, one shared hidden layer, and two output
//! heads: 6 units for the continuous rotation representation and 3 for the
//! translation (predicted in normalized units, rescaled to mm on output).
//!
//! Everything is f64: checkpoints round-trip bit-exactly and analytic
//! gradients can be validated against central finite differences at 1e-4.
//! Inference never applies dropout; the training loop drives the stochastic
//! path explicitly with seeded substreams.

use crate::geometry::{r6_to_rotation, GeometryError, Pose, Rot6};
use crate::render::Image;
use nalgebra::Vector3;
use ndarray::{Array1, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"P6CK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("checkpoint i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("checkpoint checksum mismatch (file corrupt or truncated)")]
    CorruptChecksum,
    #[error(transparent)]
    Degenerate(#[from] GeometryError),
}

/// One conv block: 3×3 kernel, stride 2, padding 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockConfig {
    pub out_channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Expected input size (height, width) in pixels.
    pub input_size: (u32, u32),
    pub conv_blocks: Vec<ConvBlockConfig>,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    /// 1-based conv-block indices followed by dropout during training.
    pub dropout_blocks: Vec<usize>,
    pub head_hidden_dim: usize,
    /// Translation normalization scale: the head learns `t / t_scale_mm`.
    pub t_scale_mm: f64,
    /// Input normalization, copied from the dataset manifest at train time.
    pub norm_mean: f64,
    pub norm_std: f64,
}

impl ModelConfig {
    /// Default regressor for the given input size: five conv blocks
    /// (16-32-64-128-256), leaky slope 0.01, dropout 0.2 after blocks 3-5,
    /// hidden width 256.
    pub fn default_for(input_size: (u32, u32)) -> Self {
        Self {
            input_size,
            conv_blocks: [16, 32, 64, 128, 256]
                .iter()
                .map(|&c| ConvBlockConfig { out_channels: c })
                .collect(),
            leaky_slope: 0.01,
            dropout_rate: 0.2,
            dropout_blocks: vec![3, 4, 5],
            head_hidden_dim: 256,
            t_scale_mm: 100.0,
            norm_mean: 0.5,
            norm_std: 0.25,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.conv_blocks.len() < 3 {
            return Err(ModelError::InvalidConfig(format!(
                "need at least 3 conv blocks, got {}",
                self.conv_blocks.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.leaky_slope <= 0.0 {
            return Err(ModelError::InvalidConfig("leaky_slope must be > 0".into()));
        }
        if self.head_hidden_dim == 0 {
            return Err(ModelError::InvalidConfig("head_hidden_dim must be > 0".into()));
        }
        if self.conv_blocks.iter().any(|b| b.out_channels == 0) {
            return Err(ModelError::InvalidConfig("conv channels must be > 0".into()));
        }
        if self.t_scale_mm <= 0.0 || self.norm_std <= 0.0 {
            return Err(ModelError::InvalidConfig(
                "t_scale_mm and norm_std must be > 0".into(),
            ));
        }
        let (h, w) = self.spatial_after_convs();
        if h == 0 || w == 0 {
            return Err(ModelError::InvalidConfig(
                "input too small for the conv stack".into(),
            ));
        }
        Ok(())
    }

    fn spatial_after_convs(&self) -> (usize, usize) {
        let mut h = self.input_size.0 as usize;
        let mut w = self.input_size.1 as usize;
        for _ in &self.conv_blocks {
            h = conv_out(h);
            w = conv_out(w);
        }
        (h, w)
    }

    pub fn parameter_count(&self) -> usize {
        let mut count = 0;
        let mut c_in = 1;
        for b in &self.conv_blocks {
            count += b.out_channels * c_in * 9 + b.out_channels;
            c_in = b.out_channels;
        }
        count += self.head_hidden_dim * c_in + self.head_hidden_dim;
        count += 6 * self.head_hidden_dim + 6;
        count += 3 * self.head_hidden_dim + 3;
        count
    }

    fn json_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("model config serializes")
    }
}

#[inline]
fn conv_out(n: usize) -> usize {
    // 3×3 kernel, stride 2, padding 1.
    (n + 2 - 3) / 2 + 1
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// [out, in] weight matrix.
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense {
            weight: Array2::zeros(self.weight.dim()),
            bias: Array1::zeros(self.bias.dim()),
        }
    }
}

/// All learnable tensors, in a fixed order for flattening.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// Conv weights as [C_out, C_in·9] plus bias.
    convs: Vec<Dense>,
    hidden: Dense,
    head_r6: Dense,
    head_t: Dense,
}

impl Params {
    pub fn zeros_like(&self) -> Params {
        Params {
            convs: self.convs.iter().map(Dense::zeros_like).collect(),
            hidden: self.hidden.zeros_like(),
            head_r6: self.head_r6.zeros_like(),
            head_t: self.head_t.zeros_like(),
        }
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for c in &self.convs {
            v.push(c.weight.as_slice().unwrap());
            v.push(c.bias.as_slice().unwrap());
        }
        for d in [&self.hidden, &self.head_r6, &self.head_t] {
            v.push(d.weight.as_slice().unwrap());
            v.push(d.bias.as_slice().unwrap());
        }
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.push(c.weight.as_slice_mut().unwrap());
            v.push(c.bias.as_slice_mut().unwrap());
        }
        for d in [&mut self.hidden, &mut self.head_r6, &mut self.head_t] {
            v.push(d.weight.as_slice_mut().unwrap());
            v.push(d.bias.as_slice_mut().unwrap());
        }
        v
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in self.slices() {
            out.extend_from_slice(s);
        }
        out
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        let other_slices = other.slices();
        for (dst, src) in self.slices_mut().into_iter().zip(other_slices) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * scale;
            }
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.slices().into_iter().flatten().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Head output in physical units: raw 6D rotation plus translation in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePrediction {
    pub r6: Rot6,
    pub t_mm: Vector3<f64>,
}

/// The pose regressor: configuration, parameters, and mode flag.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseModel {
    pub config: ModelConfig,
    pub params: Params,
    pub mode: Mode,
}

/// Deterministic fan-in-scaled uniform initialization.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<PoseModel, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init_dense = |out: usize, inp: usize| -> Dense {
        let bound = 1.0 / (inp as f64).sqrt();
        let weight =
            Array2::from_shape_fn((out, inp), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(out, |_| rng.random_range(-bound..bound));
        Dense { weight, bias }
    };
    let mut convs = Vec::new();
    let mut c_in = 1;
    for b in &config.conv_blocks {
        convs.push(init_dense(b.out_channels, c_in * 9));
        c_in = b.out_channels;
    }
    let hidden = init_dense(config.head_hidden_dim, c_in);
    let head_r6 = init_dense(6, config.head_hidden_dim);
    let head_t = init_dense(3, config.head_hidden_dim);
    Ok(PoseModel {
        config: config.clone(),
        params: Params {
            convs,
            hidden,
            head_r6,
            head_t,
        },
        mode: Mode::Eval,
    })
}

/// Forward cache for one sample, consumed by the backward pass.
pub struct SampleCache {
    /// Input to each conv block, plus the final activation map at the end.
    block_inputs: Vec<Array3<f64>>,
    /// Pre-activation conv outputs.
    preacts: Vec<Array3<f64>>,
    /// Inverted-dropout multipliers (None when inactive).
    dropout_mults: Vec<Option<Array3<f64>>>,
    gap: Array1<f64>,
    hidden_pre: Array1<f64>,
    hidden_act: Array1<f64>,
    /// Raw head outputs: 6 rotation + 3 normalized translation.
    pub raw_output: [f64; 9],
}

fn im2col(x: &Array3<f64>, ho: usize, wo: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut col = Array2::zeros((c * 9, ho * wo));
    for ci in 0..c {
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = ci * 9 + ky * 3 + kx;
                let mut col_row = col.row_mut(row);
                let xs = x.index_axis(Axis(0), ci);
                for oy in 0..ho {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        col_row[oy * wo + ox] = xs[(iy as usize, ix as usize)];
                    }
                }
            }
        }
    }
    col
}

fn col2im(dcol: &Array2<f64>, c: usize, h: usize, w: usize, ho: usize, wo: usize) -> Array3<f64> {
    let mut dx = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = ci * 9 + ky * 3 + kx;
                let src = dcol.row(row);
                let mut dxs = dx.index_axis_mut(Axis(0), ci);
                for oy in 0..ho {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dxs[(iy as usize, ix as usize)] += src[oy * wo + ox];
                    }
                }
            }
        }
    }
    dx
}

impl PoseModel {
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// Convert an image to the normalized input tensor `[1, H, W]`.
    pub fn image_to_input(&self, img: &Image) -> Result<Array3<f64>, ModelError> {
        let expected = self.config.input_size;
        if (img.height, img.width) != expected {
            return Err(ModelError::ShapeMismatch {
                expected,
                got: (img.height, img.width),
            });
        }
        let (h, w) = (img.height as usize, img.width as usize);
        let mut x = Array3::zeros((1, h, w));
        for y in 0..h {
            for xcol in 0..w {
                x[(0, y, xcol)] = (f64::from(img.pixels[y * w + xcol]) - self.config.norm_mean)
                    / self.config.norm_std;
            }
        }
        Ok(x)
    }

    /// Forward one input tensor. Dropout only fires when a training RNG is
    /// supplied; the inference path is fully deterministic.
    pub fn forward_cached(
        &self,
        input: &Array3<f64>,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> SampleCache {
        let n_blocks = self.config.conv_blocks.len();
        let mut block_inputs = Vec::with_capacity(n_blocks + 1);
        let mut preacts = Vec::with_capacity(n_blocks);
        let mut dropout_mults = Vec::with_capacity(n_blocks);
        let slope = self.config.leaky_slope;
        let keep = 1.0 - self.config.dropout_rate;

        let mut x = input.clone();
        for (bi, conv) in self.params.convs.iter().enumerate() {
            let (_, h, w) = x.dim();
            let (ho, wo) = (conv_out(h), conv_out(w));
            let col = im2col(&x, ho, wo);
            let c_out = conv.bias.len();
            let mut y = conv.weight.dot(&col);
            for (mut row, b) in y.outer_iter_mut().zip(conv.bias.iter()) {
                row += *b;
            }
            let pre = y
                .into_shape_with_order((c_out, ho, wo))
                .expect("conv output reshapes");
            let mut act = pre.mapv(|v| if v > 0.0 { v } else { slope * v });

            let wants_dropout = self.config.dropout_rate > 0.0
                && self.config.dropout_blocks.contains(&(bi + 1));
            let mult = match (&mut dropout_rng, wants_dropout) {
                (Some(rng), true) => {
                    let m = Array3::from_shape_fn((c_out, ho, wo), |_| {
                        if rng.random_range(0.0..1.0) < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    act *= &m;
                    Some(m)
                }
                _ => None,
            };

            block_inputs.push(std::mem::replace(&mut x, act));
            preacts.push(pre);
            dropout_mults.push(mult);
        }

        // Global average pool over the spatial dims.
        let (_, h, w) = x.dim();
        let scale = 1.0 / (h * w) as f64;
        let gap = Array1::from_iter(x.outer_iter().map(|plane| plane.sum() * scale));

        let hidden_pre = self.params.hidden.weight.dot(&gap) + &self.params.hidden.bias;
        let hidden_act = hidden_pre.mapv(|v| if v > 0.0 { v } else { slope * v });

        let r6 = self.params.head_r6.weight.dot(&hidden_act) + &self.params.head_r6.bias;
        let t = self.params.head_t.weight.dot(&hidden_act) + &self.params.head_t.bias;
        let mut raw_output = [0.0; 9];
        raw_output[..6].copy_from_slice(r6.as_slice().unwrap());
        raw_output[6..].copy_from_slice(t.as_slice().unwrap());

        // Keep the final activation around for the GAP backward pass.
        block_inputs.push(x);
        SampleCache {
            block_inputs,
            preacts,
            dropout_mults,
            gap,
            hidden_pre,
            hidden_act,
            raw_output,
        }
    }

    /// Gradient of a scalar loss with respect to all parameters, given the
    /// loss gradient on the raw head outputs (6 rotation + 3 normalized
    /// translation entries).
    pub fn backward(&self, cache: &SampleCache, d_raw: &[f64; 9]) -> Params {
        let slope = self.config.leaky_slope;
        let mut grads = self.params.zeros_like();

        let dr6 = Array1::from_iter(d_raw[..6].iter().copied());
        let dt = Array1::from_iter(d_raw[6..].iter().copied());

        // Heads.
        grads.head_r6.weight = outer(&dr6, &cache.hidden_act);
        grads.head_r6.bias = dr6.clone();
        grads.head_t.weight = outer(&dt, &cache.hidden_act);
        grads.head_t.bias = dt.clone();

        let dhidden_act =
            self.params.head_r6.weight.t().dot(&dr6) + self.params.head_t.weight.t().dot(&dt);
        let dhidden_pre = Array1::from_iter(
            dhidden_act
                .iter()
                .zip(cache.hidden_pre.iter())
                .map(|(&g, &pre)| if pre > 0.0 { g } else { g * slope }),
        );
        grads.hidden.weight = outer(&dhidden_pre, &cache.gap);
        grads.hidden.bias = dhidden_pre.clone();

        let dgap = self.params.hidden.weight.t().dot(&dhidden_pre);

        // GAP backward: spread evenly over the last activation map.
        let last_act = cache.block_inputs.last().unwrap();
        let (c, h, w) = last_act.dim();
        let scale = 1.0 / (h * w) as f64;
        let mut dx = Array3::zeros((c, h, w));
        for (ci, mut plane) in dx.outer_iter_mut().enumerate() {
            plane.fill(dgap[ci] * scale);
        }

        // Conv blocks, reversed.
        for bi in (0..self.params.convs.len()).rev() {
            let conv = &self.params.convs[bi];
            if let Some(mult) = &cache.dropout_mults[bi] {
                dx *= mult;
            }
            let pre = &cache.preacts[bi];
            ndarray::Zip::from(&mut dx).and(pre).for_each(|g, &p| {
                if p <= 0.0 {
                    *g *= slope;
                }
            });

            let (c_out, ho, wo) = pre.dim();
            let dy = dx
                .into_shape_with_order((c_out, ho * wo))
                .expect("grad reshapes");
            let x_in = &cache.block_inputs[bi];
            let (c_in, h_in, w_in) = x_in.dim();
            let col = im2col(x_in, ho, wo);
            grads.convs[bi].weight = dy.dot(&col.t());
            grads.convs[bi].bias = dy.sum_axis(Axis(1));
            if bi > 0 {
                let dcol = conv.weight.t().dot(&dy);
                dx = col2im(&dcol, c_in, h_in, w_in, ho, wo);
            } else {
                dx = Array3::zeros((1, 1, 1));
            }
        }
        grads
    }

    fn raw_to_prediction(&self, raw: &[f64; 9]) -> PosePrediction {
        PosePrediction {
            r6: Rot6([raw[0], raw[1], raw[2], raw[3], raw[4], raw[5]]),
            t_mm: Vector3::new(raw[6], raw[7], raw[8]) * self.config.t_scale_mm,
        }
    }

    /// Deterministic batched inference (no dropout).
    pub fn forward(&self, images: &[Image]) -> Result<Vec<PosePrediction>, ModelError> {
        let inputs: Vec<Array3<f64>> = images
            .iter()
            .map(|img| self.image_to_input(img))
            .collect::<Result<_, _>>()?;
        Ok(inputs
            .par_iter()
            .map(|x| self.raw_to_prediction(&self.forward_cached(x, None).raw_output))
            .collect())
    }

    /// Full pose recovery: forward, then Gram–Schmidt on the rotation head.
    pub fn predict_pose(&self, image: &Image) -> Result<Pose, ModelError> {
        let x = self.image_to_input(image)?;
        let pred = self.raw_to_prediction(&self.forward_cached(&x, None).raw_output);
        let rotation = r6_to_rotation(pred.r6)?;
        Ok(Pose::new(rotation, pred.t_mm))
    }

    /// Zero all weights and pin the heads to a constant output; used by
    /// calibration fixtures and conformance tests.
    pub fn set_constant_output(&mut self, r6: Rot6, t_mm: Vector3<f64>) {
        for s in self.params.slices_mut() {
            s.fill(0.0);
        }
        for i in 0..6 {
            self.params.head_r6.bias[i] = r6.0[i];
        }
        let t_norm = t_mm / self.config.t_scale_mm;
        for i in 0..3 {
            self.params.head_t.bias[i] = t_norm[i];
        }
    }

    /// Checkpoint layout: magic, version, config hash, config JSON,
    /// parameter blob (little-endian f64), trailing FNV-1a checksum over
    /// every preceding byte.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config_json = self.config.json_bytes();
        buf.extend_from_slice(&fnv1a(&config_json).to_le_bytes());
        buf.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&config_json);
        let flat = self.params.to_flat();
        buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in &flat {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let checksum = fnv1a(&buf);
        buf.extend_from_slice(&checksum.to_le_bytes());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        f.write_all(&buf)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<PoseModel, ModelError> {
        let bytes = std::fs::read(path.as_ref())?;
        if bytes.len() < 8 + 8 {
            return Err(ModelError::CorruptChecksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored_checksum = u64::from_le_bytes(tail.try_into().unwrap());
        if fnv1a(body) != stored_checksum {
            return Err(ModelError::CorruptChecksum);
        }
        let mut cur = std::io::Cursor::new(body);
        let mut magic = [0u8; 4];
        read(&mut cur, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(ModelError::VersionMismatch("bad magic".into()));
        }
        let version = read_u32(&mut cur)?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch(format!(
                "format version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let stored_hash = read_u64(&mut cur)?;
        let json_len = read_u32(&mut cur)? as usize;
        if json_len > body.len() {
            return Err(ModelError::CorruptChecksum);
        }
        let mut config_json = vec![0u8; json_len];
        read(&mut cur, &mut config_json)?;
        if fnv1a(&config_json) != stored_hash {
            return Err(ModelError::VersionMismatch(
                "config hash does not match embedded config".into(),
            ));
        }
        let config: ModelConfig = serde_json::from_slice(&config_json)
            .map_err(|e| ModelError::VersionMismatch(format!("config parse: {e}")))?;
        let n_params = read_u64(&mut cur)? as usize;
        if n_params != config.parameter_count() {
            return Err(ModelError::VersionMismatch(format!(
                "parameter count {n_params} does not match config ({})",
                config.parameter_count()
            )));
        }
        let mut flat = Vec::with_capacity(n_params);
        let mut f64_buf = [0u8; 8];
        for _ in 0..n_params {
            read(&mut cur, &mut f64_buf)?;
            flat.push(f64::from_le_bytes(f64_buf));
        }
        let mut model = init_model(&config, 0)?;
        model.params.set_from_flat(&flat);
        Ok(model)
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let (n, m) = (a.len(), b.len());
    Array2::from_shape_fn((n, m), |(i, j)| a[i] * b[j])
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn read(cur: &mut std::io::Cursor<&[u8]>, buf: &mut [u8]) -> Result<(), ModelError> {
    cur.read_exact(buf).map_err(|_| ModelError::CorruptChecksum)
}

fn read_u32(cur: &mut std::io::Cursor<&[u8]>) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    read(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(cur: &mut std::io::Cursor<&[u8]>) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    read(cur, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
