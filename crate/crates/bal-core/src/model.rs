//! The fixed two-conv MC-dropout CNN: conv-relu-conv-relu-maxpool-dropout-
//! flatten-dense-relu-dropout-dense-softmax.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ExampleId;
use crate::error::{Error, Result};
use crate::ops::activation::{relu_backward, relu_forward, softmax};
use crate::ops::conv::{conv2d_backward, conv2d_forward};
use crate::ops::dense::{dense_backward, dense_forward};
use crate::ops::dropout::{apply_mask, draw_mask};
use crate::ops::loss::softmax_cross_entropy_grad;
use crate::ops::pool::{maxpool2d_backward, maxpool2d_forward};
use crate::rng::Prng;
use crate::tensor::{read_tensor, write_tensor, Tensor};

/// Shape hyper-parameters of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureConfig {
    pub in_channels: usize,
    pub num_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dense_size: usize,
    pub num_classes: usize,
    pub dropout1: f64,
    pub dropout2: f64,
    pub image_size: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        ArchitectureConfig {
            in_channels: 3,
            num_filters: 32,
            kernel_size: 4,
            pool_size: 2,
            dense_size: 128,
            num_classes: 2,
            dropout1: 0.25,
            dropout2: 0.50,
            image_size: 32,
        }
    }
}

impl ArchitectureConfig {
    /// Spatial sizes after conv1, conv2, and pooling.
    pub fn spatial_dims(&self) -> Result<(usize, usize, usize)> {
        let s = self.image_size;
        let k = self.kernel_size;
        if k == 0 || s < k {
            return Err(Error::config(format!(
                "kernel {k} does not fit image size {s}"
            )));
        }
        let s1 = s - k + 1;
        if s1 < k {
            return Err(Error::config(format!(
                "second conv needs at least {k} pixels, first conv leaves {s1} (image {s})"
            )));
        }
        let s2 = s1 - k + 1;
        if self.pool_size == 0 || s2 % self.pool_size != 0 {
            return Err(Error::config(format!(
                "pool size {} does not divide the {s2}x{s2} feature map (image {s} -> {s1} -> {s2})",
                self.pool_size
            )));
        }
        let pooled = s2 / self.pool_size;
        if pooled == 0 {
            return Err(Error::config(format!(
                "pooling collapses the {s2}x{s2} feature map to zero"
            )));
        }
        Ok((s1, s2, pooled))
    }

    pub fn flatten_dim(&self) -> Result<usize> {
        let (_, _, pooled) = self.spatial_dims()?;
        Ok(self.num_filters * pooled * pooled)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.in_channels == 0 || self.num_filters == 0 || self.dense_size == 0 {
            return Err(Error::config("channel, filter, and dense sizes must be positive"));
        }
        for (name, rate) in [("dropout1", self.dropout1), ("dropout2", self.dropout2)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::config(format!("{name} must be in [0,1), got {rate}")));
            }
        }
        self.spatial_dims()?;
        Ok(())
    }
}

/// All trainable parameters plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ArchitectureConfig,
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub dense1_w: Tensor,
    pub dense1_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

/// Gradients congruent with [`ModelState`], in the same parameter order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub dense1_w: Tensor,
    pub dense1_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

pub const PARAM_NAMES: [&str; 8] = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense1_w", "dense1_b", "head_w", "head_b",
];

impl ModelState {
    /// Parameters in the fixed order of [`PARAM_NAMES`].
    pub fn params(&self) -> [&Tensor; 8] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense1_w,
            &self.dense1_b,
            &self.head_w,
            &self.head_b,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense1_w,
            &mut self.dense1_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }
}

impl Gradients {
    pub fn refs(&self) -> [&Tensor; 8] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.dense1_w,
            &self.dense1_b,
            &self.head_w,
            &self.head_b,
        ]
    }
}

fn uniform_fill(t: &mut Tensor, bound: f64, rng: &mut Prng) {
    for v in t.data_mut() {
        *v = rng.random::<f64>() * 2.0 * bound - bound;
    }
}

/// Initialize parameters with fan-in-scaled uniform draws (bound 1/sqrt(fan_in)),
/// filled in the fixed parameter order so a seed pins the exact weights.
pub fn build_model(config: &ArchitectureConfig, rng: &mut Prng) -> Result<ModelState> {
    config.validate()?;
    let f = config.num_filters;
    let k = config.kernel_size;
    let cin = config.in_channels;
    let flat = config.flatten_dim()?;
    let d = config.dense_size;
    let c = config.num_classes;

    let mut m = ModelState {
        config: config.clone(),
        conv1_w: Tensor::zeros(&[f, cin, k, k]),
        conv1_b: Tensor::zeros(&[f]),
        conv2_w: Tensor::zeros(&[f, f, k, k]),
        conv2_b: Tensor::zeros(&[f]),
        dense1_w: Tensor::zeros(&[d, flat]),
        dense1_b: Tensor::zeros(&[d]),
        head_w: Tensor::zeros(&[c, d]),
        head_b: Tensor::zeros(&[c]),
    };
    let b1 = 1.0 / ((cin * k * k) as f64).sqrt();
    let b2 = 1.0 / ((f * k * k) as f64).sqrt();
    let b3 = 1.0 / (flat as f64).sqrt();
    let b4 = 1.0 / (d as f64).sqrt();
    let bounds = [b1, b1, b2, b2, b3, b3, b4, b4];
    for (t, b) in m.params_mut().into_iter().zip(bounds) {
        uniform_fill(t, b, rng);
    }
    Ok(m)
}

/// How the two dropout layers behave during a forward pass.
pub enum DropoutPlan<'a> {
    /// Dropout layers are the identity (deterministic evaluation).
    Disabled,
    /// Fresh masks drawn from the generator, first layer then second.
    Draw(&'a mut Prng),
    /// Pre-drawn masks, already sliced to this batch.
    Fixed {
        after_pool: &'a Tensor,
        after_dense: &'a Tensor,
    },
}

/// Every activation the backward pass needs, produced by [`forward`].
pub struct ForwardCache {
    pub input: Tensor,
    conv1_out: Tensor,
    relu1_out: Tensor,
    conv2_out: Tensor,
    relu2_out: Tensor,
    pool_argmax: Vec<usize>,
    drop1_mask: Tensor,
    drop1_out: Tensor,
    dense1_out: Tensor,
    drop2_mask: Tensor,
    drop2_out: Tensor,
    pub probs: Tensor,
}

/// Full forward pass. Returns the cache whose `probs` field is the [N,C]
/// softmax output.
pub fn forward(model: &ModelState, batch: &Tensor, plan: DropoutPlan<'_>) -> Result<ForwardCache> {
    let cfg = &model.config;
    let [n, c, h, w] = *batch.shape() else {
        return Err(Error::config(format!(
            "batch must be 4-D [N,C,S,S], got {:?}",
            batch.shape()
        )));
    };
    if c != cfg.in_channels || h != cfg.image_size || w != cfg.image_size {
        return Err(Error::config(format!(
            "batch shape [{n},{c},{h},{w}] does not match configured [N,{},{},{}]",
            cfg.in_channels, cfg.image_size, cfg.image_size
        )));
    }
    let flat = cfg.flatten_dim()?;

    let conv1_out = conv2d_forward(batch, &model.conv1_w, &model.conv1_b)?;
    let relu1_out = relu_forward(&conv1_out);
    let conv2_out = conv2d_forward(&relu1_out, &model.conv2_w, &model.conv2_b)?;
    let relu2_out = relu_forward(&conv2_out);
    let (pool_out, pool_argmax) = maxpool2d_forward(&relu2_out, cfg.pool_size)?;
    let flat_out = pool_out.reshape(&[n, flat])?;

    let (drop1_out, drop1_mask, drop2_source) = match plan {
        DropoutPlan::Disabled => {
            let ones1 = Tensor::from_vec(&[n, flat], vec![1.0; n * flat])?;
            (flat_out.clone(), ones1, None)
        }
        DropoutPlan::Draw(rng) => {
            let mask = draw_mask(&[n, flat], cfg.dropout1, rng)?;
            (apply_mask(&flat_out, &mask), mask, Some(DropoutPlan::Draw(rng)))
        }
        DropoutPlan::Fixed { after_pool, after_dense } => {
            if after_pool.shape() != [n, flat] {
                return Err(Error::config(format!(
                    "fixed pool-stage mask has shape {:?}, batch needs [{n},{flat}]",
                    after_pool.shape()
                )));
            }
            (
                apply_mask(&flat_out, after_pool),
                after_pool.clone(),
                Some(DropoutPlan::Fixed { after_pool, after_dense }),
            )
        }
    };

    let dense1_out = dense_forward(&drop1_out, &model.dense1_w, &model.dense1_b)?;
    let relu3_out = relu_forward(&dense1_out);

    let d = cfg.dense_size;
    let (drop2_out, drop2_mask) = match drop2_source {
        None => {
            let ones2 = Tensor::from_vec(&[n, d], vec![1.0; n * d])?;
            (relu3_out.clone(), ones2)
        }
        Some(DropoutPlan::Draw(rng)) => {
            let mask = draw_mask(&[n, d], cfg.dropout2, rng)?;
            (apply_mask(&relu3_out, &mask), mask)
        }
        Some(DropoutPlan::Fixed { after_dense, .. }) => {
            if after_dense.shape() != [n, d] {
                return Err(Error::config(format!(
                    "fixed dense-stage mask has shape {:?}, batch needs [{n},{d}]",
                    after_dense.shape()
                )));
            }
            (apply_mask(&relu3_out, after_dense), after_dense.clone())
        }
        Some(DropoutPlan::Disabled) => unreachable!(),
    };

    let logits = dense_forward(&drop2_out, &model.head_w, &model.head_b)?;
    let probs = softmax(&logits)?;

    Ok(ForwardCache {
        input: batch.clone(),
        conv1_out,
        relu1_out,
        conv2_out,
        relu2_out,
        pool_argmax,
        drop1_mask,
        drop1_out,
        dense1_out,
        drop2_mask,
        drop2_out,
        probs,
    })
}

/// Deterministic evaluation pass: dropout disabled, probabilities returned.
pub fn forward_eval(model: &ModelState, batch: &Tensor) -> Result<Tensor> {
    Ok(forward(model, batch, DropoutPlan::Disabled)?.probs)
}

/// Reverse pass from the cross-entropy loss against one-hot `labels`.
/// The loss is the batch mean, so gradients carry the 1/N factor.
pub fn backward(model: &ModelState, cache: &ForwardCache, labels: &Tensor) -> Result<Gradients> {
    if labels.shape() != cache.probs.shape() {
        return Err(Error::config(format!(
            "labels shape {:?} does not match probs {:?}",
            labels.shape(),
            cache.probs.shape()
        )));
    }
    let g_logits = softmax_cross_entropy_grad(&cache.probs, labels);
    let (g_drop2, g_head_w, g_head_b) = dense_backward(&cache.drop2_out, &model.head_w, &g_logits)?;
    let g_relu3 = apply_mask(&g_drop2, &cache.drop2_mask);
    let g_dense1 = relu_backward(&cache.dense1_out, &g_relu3);
    let (g_drop1, g_dense1_w, g_dense1_b) =
        dense_backward(&cache.drop1_out, &model.dense1_w, &g_dense1)?;
    let g_flat = apply_mask(&g_drop1, &cache.drop1_mask);

    let n = cache.input.shape()[0];
    let (_, _, pooled) = model.config.spatial_dims()?;
    let g_pool = g_flat.reshape(&[n, model.config.num_filters, pooled, pooled])?;
    let g_relu2 = maxpool2d_backward(cache.relu2_out.shape(), &cache.pool_argmax, &g_pool);
    let g_conv2 = relu_backward(&cache.conv2_out, &g_relu2);
    let (g_relu1, g_conv2_w, g_conv2_b) = conv2d_backward(&cache.relu1_out, &model.conv2_w, &g_conv2)?;
    let g_conv1 = relu_backward(&cache.conv1_out, &g_relu1);
    let (_, g_conv1_w, g_conv1_b) = conv2d_backward(&cache.input, &model.conv1_w, &g_conv1)?;

    Ok(Gradients {
        conv1_w: g_conv1_w,
        conv1_b: g_conv1_b,
        conv2_w: g_conv2_w,
        conv2_b: g_conv2_b,
        dense1_w: g_dense1_w,
        dense1_b: g_dense1_b,
        head_w: g_head_w,
        head_b: g_head_b,
    })
}

const CKPT_MAGIC: &[u8; 4] = b"BALM";
const CKPT_VERSION: u16 = 1;

/// Write config (JSON header) plus the eight parameter tensors, bit-exactly.
pub fn save_checkpoint(path: &Path, model: &ModelState) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CKPT_MAGIC)?;
    f.write_all(&CKPT_VERSION.to_le_bytes())?;
    let header = serde_json::to_vec(&model.config)?;
    let len = u32::try_from(header.len()).map_err(|_| Error::data("oversized checkpoint header"))?;
    f.write_all(&len.to_le_bytes())?;
    f.write_all(&header)?;
    for t in model.params() {
        write_tensor(&mut f, t)?;
    }
    f.flush()?;
    Ok(())
}

/// Load a checkpoint written by [`save_checkpoint`], validating shapes.
pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::data("bad checkpoint magic"));
    }
    let mut v = [0u8; 2];
    f.read_exact(&mut v)?;
    if u16::from_le_bytes(v) != CKPT_VERSION {
        return Err(Error::data("unsupported checkpoint version"));
    }
    let mut l = [0u8; 4];
    f.read_exact(&mut l)?;
    let len = u32::from_le_bytes(l) as usize;
    let mut header = vec![0u8; len];
    f.read_exact(&mut header)?;
    let config: ArchitectureConfig = serde_json::from_slice(&header)?;
    config.validate()?;
    let mut reference = build_model(&config, &mut crate::rng::derive(0, &[0]))?;
    for (name, slot) in PARAM_NAMES.iter().zip(reference.params_mut()) {
        let t = read_tensor(&mut f)?;
        if t.shape() != slot.shape() {
            return Err(Error::data(format!(
                "checkpoint tensor {name} has shape {:?}, config implies {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    Ok(reference)
}

/// Stacked MC-dropout probabilities: `samples[t,n,c]` over T stochastic
/// passes, aligned with `example_ids` on axis 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSamples {
    pub samples: Tensor,
    pub example_ids: Vec<ExampleId>,
}

impl PredictiveSamples {
    pub fn new(samples: Tensor, example_ids: Vec<ExampleId>) -> Result<Self> {
        let [t, n, _c] = *samples.shape() else {
            return Err(Error::config(format!(
                "predictive samples must be [T,N,C], got {:?}",
                samples.shape()
            )));
        };
        if t == 0 {
            return Err(Error::config("predictive samples need at least one pass"));
        }
        if example_ids.len() != n {
            return Err(Error::config(format!(
                "{} ids for {n} sampled examples",
                example_ids.len()
            )));
        }
        Ok(PredictiveSamples { samples, example_ids })
    }

    pub fn passes(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn num_examples(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn num_classes(&self) -> usize {
        self.samples.shape()[2]
    }

    /// The probability row for pass `t`, example `n`.
    pub fn row(&self, t: usize, n: usize) -> &[f64] {
        let c = self.num_classes();
        let base = (t * self.num_examples() + n) * c;
        &self.samples.data()[base..base + c]
    }
}

/// Examples forwarded per chunk inside [`mc_predict`]. Chunking controls peak
/// memory only; results are identical for any chunk size because all masks
/// are drawn before any forward pass of the pass.
const MC_CHUNK: usize = 32;

/// T stochastic passes over `batch` with dropout active. Masks are drawn
/// pass-major, layer-minor (pass 0 layer 1, pass 0 layer 2, pass 1 layer 1,
/// ...), each layer's mask covering the whole batch in row-major order.
pub fn mc_predict(
    model: &ModelState,
    batch: &Tensor,
    ids: &[ExampleId],
    t_passes: usize,
    rng: &mut Prng,
) -> Result<PredictiveSamples> {
    if t_passes == 0 {
        return Err(Error::config("mc_predict needs at least one pass"));
    }
    let cfg = &model.config;
    let n = batch.shape().first().copied().unwrap_or(0);
    if ids.len() != n {
        return Err(Error::config(format!("{} ids for a batch of {n}", ids.len())));
    }
    let flat = cfg.flatten_dim()?;
    let c = cfg.num_classes;
    let mut samples = Tensor::zeros(&[t_passes, n, c]);
    for t in 0..t_passes {
        let mask1 = draw_mask(&[n, flat], cfg.dropout1, rng)?;
        let mask2 = draw_mask(&[n, cfg.dense_size], cfg.dropout2, rng)?;
        let mut start = 0;
        while start < n {
            let end = (start + MC_CHUNK).min(n);
            let chunk = batch.slice_first(start, end);
            let m1 = mask1.slice_first(start, end);
            let m2 = mask2.slice_first(start, end);
            let cache = forward(
                model,
                &chunk,
                DropoutPlan::Fixed {
                    after_pool: &m1,
                    after_dense: &m2,
                },
            )?;
            let dst = &mut samples.data_mut()[(t * n + start) * c..(t * n + end) * c];
            dst.copy_from_slice(cache.probs.data());
            start = end;
        }
    }
    PredictiveSamples::new(samples, ids.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::loss::{cross_entropy_loss, one_hot};
    use crate::rng::derive;
    use approx::assert_abs_diff_eq;

    fn small_config() -> ArchitectureConfig {
        ArchitectureConfig {
            in_channels: 3,
            num_filters: 2,
            kernel_size: 2,
            pool_size: 2,
            dense_size: 4,
            num_classes: 2,
            dropout1: 0.25,
            dropout2: 0.5,
            image_size: 6,
        }
    }

    fn random_batch(n: usize, cfg: &ArchitectureConfig, rng: &mut Prng) -> Tensor {
        let len = n * cfg.in_channels * cfg.image_size * cfg.image_size;
        Tensor::from_vec(
            &[n, cfg.in_channels, cfg.image_size, cfg.image_size],
            (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn flatten_dim_default_32() {
        let cfg = ArchitectureConfig::default();
        let (s1, s2, pooled) = cfg.spatial_dims().unwrap();
        assert_eq!((s1, s2, pooled), (29, 26, 13));
        assert_eq!(cfg.flatten_dim().unwrap(), 5408);
    }

    #[test]
    fn flatten_dim_full_size_224() {
        let cfg = ArchitectureConfig {
            image_size: 224,
            ..ArchitectureConfig::default()
        };
        let (s1, s2, pooled) = cfg.spatial_dims().unwrap();
        assert_eq!((s1, s2, pooled), (221, 218, 109));
        assert_eq!(cfg.flatten_dim().unwrap(), 32 * 109 * 109);
    }

    #[test]
    fn invalid_spatial_config_reports_dims() {
        let cfg = ArchitectureConfig {
            image_size: 5,
            ..ArchitectureConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('2') && msg.contains('5'), "{msg}");

        let cfg = ArchitectureConfig {
            image_size: 31,
            ..ArchitectureConfig::default()
        };
        // 31 -> 28 -> 25, not divisible by 2.
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("25"), "{err}");
    }

    #[test]
    fn build_is_deterministic_per_seed() {
        let cfg = small_config();
        let a = build_model(&cfg, &mut derive(42, &[crate::rng::stream::INIT, 0])).unwrap();
        let b = build_model(&cfg, &mut derive(42, &[crate::rng::stream::INIT, 0])).unwrap();
        assert_eq!(a, b);
        let c = build_model(&cfg, &mut derive(43, &[crate::rng::stream::INIT, 0])).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(1, &[1])).unwrap();
        let bound1 = 1.0 / ((3.0 * 4.0) as f64).sqrt();
        assert!(m.conv1_w.data().iter().all(|v| v.abs() <= bound1));
        let flat = cfg.flatten_dim().unwrap() as f64;
        assert!(m.dense1_w.data().iter().all(|v| v.abs() <= 1.0 / flat.sqrt()));
    }

    #[test]
    fn forward_eval_rows_sum_to_one_and_repeat_identically() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(2, &[1])).unwrap();
        let batch = random_batch(5, &cfg, &mut derive(2, &[2]));
        let p1 = forward_eval(&m, &batch).unwrap();
        let p2 = forward_eval(&m, &batch).unwrap();
        assert_eq!(p1, p2);
        for row in p1.data().chunks(cfg.num_classes) {
            let s: f64 = row.iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fresh_model_is_roughly_uninformative() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(3, &[1])).unwrap();
        let batch = random_batch(100, &cfg, &mut derive(3, &[2]));
        let p = forward_eval(&m, &batch).unwrap();
        let mean_c0: f64 = p.data().chunks(2).map(|r| r[0]).sum::<f64>() / 100.0;
        assert!((0.3..=0.7).contains(&mean_c0), "mean class-0 prob {mean_c0}");
    }

    #[test]
    fn mc_predict_shape_and_t_zero_rejected() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(4, &[1])).unwrap();
        let batch = random_batch(3, &cfg, &mut derive(4, &[2]));
        let ids: Vec<ExampleId> = (0..3).map(|i| ExampleId(format!("e{i}"))).collect();
        assert!(mc_predict(&m, &batch, &ids, 0, &mut derive(4, &[3])).is_err());
        let s1 = mc_predict(&m, &batch, &ids, 1, &mut derive(4, &[3])).unwrap();
        assert_eq!(s1.samples.shape(), &[1, 3, 2]);
        let s5 = mc_predict(&m, &batch, &ids, 5, &mut derive(4, &[3])).unwrap();
        assert_eq!(s5.samples.shape(), &[5, 3, 2]);
        assert_eq!(s5.passes(), 5);
        assert_eq!(s5.num_examples(), 3);
        assert_eq!(s5.num_classes(), 2);
    }

    #[test]
    fn mc_predict_zero_rates_collapse_to_eval() {
        let cfg = ArchitectureConfig {
            dropout1: 0.0,
            dropout2: 0.0,
            // 40 examples crosses the internal chunk boundary.
            ..small_config()
        };
        let m = build_model(&cfg, &mut derive(5, &[1])).unwrap();
        let batch = random_batch(40, &cfg, &mut derive(5, &[2]));
        let ids: Vec<ExampleId> = (0..40).map(|i| ExampleId(format!("e{i}"))).collect();
        let s = mc_predict(&m, &batch, &ids, 3, &mut derive(5, &[3])).unwrap();
        let eval = forward_eval(&m, &batch).unwrap();
        for t in 0..3 {
            for n in 0..40 {
                for c in 0..2 {
                    assert_eq!(s.row(t, n)[c], eval.data()[n * 2 + c]);
                }
            }
        }
    }

    #[test]
    fn mc_predict_is_seed_deterministic() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(6, &[1])).unwrap();
        let batch = random_batch(7, &cfg, &mut derive(6, &[2]));
        let ids: Vec<ExampleId> = (0..7).map(|i| ExampleId(format!("e{i}"))).collect();
        let a = mc_predict(&m, &batch, &ids, 4, &mut derive(6, &[3])).unwrap();
        let b = mc_predict(&m, &batch, &ids, 4, &mut derive(6, &[3])).unwrap();
        assert_eq!(a, b);
        let c = mc_predict(&m, &batch, &ids, 4, &mut derive(6, &[4])).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mc_rows_are_probabilities() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(7, &[1])).unwrap();
        let batch = random_batch(6, &cfg, &mut derive(7, &[2]));
        let ids: Vec<ExampleId> = (0..6).map(|i| ExampleId(format!("e{i}"))).collect();
        let s = mc_predict(&m, &batch, &ids, 8, &mut derive(7, &[3])).unwrap();
        for t in 0..8 {
            for n in 0..6 {
                let row = s.row(t, n);
                let sum: f64 = row.iter().sum();
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
                assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }

    #[test]
    fn gradcheck_full_network_disabled_dropout() {
        let cfg = small_config();
        let model = build_model(&cfg, &mut derive(8, &[1])).unwrap();
        let batch = random_batch(2, &cfg, &mut derive(8, &[2]));
        let labels = one_hot(&[0, 1], 2).unwrap();

        let cache = forward(&model, &batch, DropoutPlan::Disabled).unwrap();
        let grads = backward(&model, &cache, &labels).unwrap();

        let loss_for = |m: &ModelState| -> f64 {
            let c = forward(m, &batch, DropoutPlan::Disabled).unwrap();
            cross_entropy_loss(&c.probs, &labels).unwrap()
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for pi in 0..8 {
            let glen = grads.refs()[pi].len();
            for j in 0..glen {
                let mut mp = model.clone();
                mp.params_mut()[pi].data_mut()[j] += h;
                let mut mm = model.clone();
                mm.params_mut()[pi].data_mut()[j] -= h;
                let fd = (loss_for(&mp) - loss_for(&mm)) / (2.0 * h);
                let a = grads.refs()[pi].data()[j];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn gradcheck_with_fixed_dropout_masks() {
        let cfg = small_config();
        let model = build_model(&cfg, &mut derive(9, &[1])).unwrap();
        let batch = random_batch(2, &cfg, &mut derive(9, &[2]));
        let labels = one_hot(&[1, 0], 2).unwrap();
        let flat = cfg.flatten_dim().unwrap();
        let mut mask_rng = derive(9, &[3]);
        let m1 = crate::ops::dropout::draw_mask(&[2, flat], cfg.dropout1, &mut mask_rng).unwrap();
        let m2 = crate::ops::dropout::draw_mask(&[2, cfg.dense_size], cfg.dropout2, &mut mask_rng).unwrap();

        let plan = || DropoutPlan::Fixed {
            after_pool: &m1,
            after_dense: &m2,
        };
        let cache = forward(&model, &batch, plan()).unwrap();
        let grads = backward(&model, &cache, &labels).unwrap();
        let h = 1e-5;
        for pi in 0..8 {
            for j in 0..grads.refs()[pi].len() {
                let mut mp = model.clone();
                mp.params_mut()[pi].data_mut()[j] += h;
                let mut mm = model.clone();
                mm.params_mut()[pi].data_mut()[j] -= h;
                let lp = cross_entropy_loss(&forward(&mp, &batch, plan()).unwrap().probs, &labels).unwrap();
                let lm = cross_entropy_loss(&forward(&mm, &batch, plan()).unwrap().probs, &labels).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let a = grads.refs()[pi].data()[j];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {pi} elem {j}: analytic {a}, fd {fd}");
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_means_zero_grads() {
        // Labels equal to probs give (p - y)/N = 0 exactly.
        let cfg = small_config();
        let model = build_model(&cfg, &mut derive(10, &[1])).unwrap();
        let batch = random_batch(2, &cfg, &mut derive(10, &[2]));
        let cache = forward(&model, &batch, DropoutPlan::Disabled).unwrap();
        let labels = cache.probs.clone();
        let grads = backward(&model, &cache, &labels).unwrap();
        for g in grads.refs() {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(11, &[1])).unwrap();
        save_checkpoint(&path, &m).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(m.config, loaded.config);
        for (a, b) in m.params().iter().zip(loaded.params()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = build_model(&small_config(), &mut derive(12, &[1])).unwrap();
        save_checkpoint(&path, &m).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn batch_shape_mismatch_rejected() {
        let cfg = small_config();
        let m = build_model(&cfg, &mut derive(13, &[1])).unwrap();
        let bad = Tensor::zeros(&[2, 3, 8, 8]);
        assert!(forward_eval(&m, &bad).is_err());
    }
}
