//! Shared-trunk multi-scale encoder/decoder applied to each modality
//! independently, plus logit fusion, modality dropout and the supervised loss.
//!
//! Layout per modality: a 1×1 stem to `C` channels, four shared 3×3 stride-2
//! stages (`C`, `2C`, `4C`, `8C` channels, each followed by relu) whose outputs
//! form the feature pyramid, and a decoder that projects every scale to `D`
//! channels, upsamples to the first scale, concatenates, maps to `K` logits
//! and upsamples to the input resolution.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Var};
use crate::rng::Stream;
use crate::tensor::Tensor;

pub const SCALES: usize = 4;
pub const IGNORE_LABEL: u8 = 255;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
    #[error("no input provided for active modality `{0}`")]
    MissingInput(String),
    #[error("at least one modality must be active")]
    NoActiveModality,
    #[error("spatial size {height}x{width} is not divisible by 16")]
    SpatialSize { height: usize, width: usize },
    #[error("input for `{modality}` has shape {got:?}, expected (batch, {channels}, H, W)")]
    InputShape {
        modality: String,
        channels: usize,
        got: Vec<usize>,
    },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} parameter tensors, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("label map has {got} entries, logits need {expected}")]
    LabelCount { expected: usize, got: usize },
    #[error("label {label} is outside 0..{classes} and is not the ignore label")]
    LabelValue { label: u8, classes: usize },
    #[error("every pixel carries the ignore label")]
    AllIgnored,
    #[error("cannot fuse an empty list of logits")]
    EmptyFusion,
    #[error("modality list is empty")]
    NoModalities,
}

type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub channels: usize,
}

impl ModalitySpec {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            name: name.to_string(),
            channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub modalities: Vec<ModalitySpec>,
    pub classes: usize,
    #[serde(default = "default_stem_channels")]
    pub stem_channels: usize,
    #[serde(default = "default_decoder_channels")]
    pub decoder_channels: usize,
}

fn default_stem_channels() -> usize {
    16
}

fn default_decoder_channels() -> usize {
    32
}

impl ModelConfig {
    pub fn new(modalities: Vec<ModalitySpec>, classes: usize) -> Self {
        Self {
            modalities,
            classes,
            stem_channels: default_stem_channels(),
            decoder_channels: default_decoder_channels(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.modalities.is_empty() {
            return bad("modalities: at least one is required".into());
        }
        let mut seen = HashSet::new();
        for m in &self.modalities {
            if m.name.is_empty() || m.name.contains(['=', ',', ':', '\n']) {
                return bad(format!("modalities: invalid name `{}`", m.name));
            }
            if !seen.insert(m.name.as_str()) {
                return bad(format!("modalities: duplicate name `{}`", m.name));
            }
            if m.channels == 0 {
                return bad(format!("modalities: `{}` has zero channels", m.name));
            }
        }
        if self.classes == 0 || self.classes > 255 {
            return bad(format!("classes: must be in 1..=255, got {}", self.classes));
        }
        if self.stem_channels == 0 || self.decoder_channels == 0 {
            return bad("stem_channels and decoder_channels must be positive".into());
        }
        Ok(())
    }

    pub fn modality_names(&self) -> Vec<String> {
        self.modalities.iter().map(|m| m.name.clone()).collect()
    }

    /// Channel count of pyramid scale `j` (0-based).
    pub fn scale_channels(&self, j: usize) -> usize {
        self.stem_channels << j
    }

    fn modality_index(&self, name: &str) -> Result<usize> {
        self.modalities
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| ModelError::UnknownModality(name.to_string()))
    }

    /// Parameter names and shapes in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let c = self.stem_channels;
        let d = self.decoder_channels;
        let mut out = Vec::new();
        for m in &self.modalities {
            out.push((format!("stem.{}.weight", m.name), vec![c, m.channels, 1, 1]));
            out.push((format!("stem.{}.bias", m.name), vec![c]));
        }
        for j in 0..SCALES {
            let cin = if j == 0 { c } else { self.scale_channels(j - 1) };
            let cout = self.scale_channels(j);
            out.push((format!("stage{}.weight", j + 1), vec![cout, cin, 3, 3]));
            out.push((format!("stage{}.bias", j + 1), vec![cout]));
        }
        for j in 0..SCALES {
            out.push((format!("lateral{}.weight", j + 1), vec![d, self.scale_channels(j), 1, 1]));
            out.push((format!("lateral{}.bias", j + 1), vec![d]));
        }
        out.push(("head.weight".into(), vec![self.classes, SCALES * d, 1, 1]));
        out.push(("head.bias".into(), vec![self.classes]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Parameter tensors in [`ModelConfig::param_layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub tensors: Vec<Tensor>,
}

impl Params {
    /// He-normal weights drawn in layout order from `seed`; zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = Stream::new(seed);
        let tensors = config
            .param_layout()
            .into_iter()
            .map(|(name, shape)| {
                if name.ends_with(".bias") {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let std = (2.0 / fan_in as f64).sqrt();
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| std * rng.normal()).collect();
                Tensor::from_parts(shape, data)
            })
            .collect();
        Self { tensors }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            tensors: config.param_layout().iter().map(|(_, s)| Tensor::zeros(s)).collect(),
        }
    }

    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let layout = config.param_layout();
        if layout.len() != self.tensors.len() {
            return Err(ModelError::ParamCount {
                expected: layout.len(),
                got: self.tensors.len(),
            });
        }
        for ((name, shape), t) in layout.into_iter().zip(&self.tensors) {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name,
                    expected: shape,
                    got: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Registers every tensor in `graph` as a differentiable leaf.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Vec<Var<'g>> {
        self.tensors.iter().map(|t| graph.param(t.clone())).collect()
    }

    /// Registers every tensor as a constant.
    pub fn bind_frozen<'g>(&self, graph: &'g Graph) -> Vec<Var<'g>> {
        self.tensors.iter().map(|t| graph.constant(t.clone())).collect()
    }
}

/// Outputs for one modality.
#[derive(Clone, Copy, Debug)]
pub struct ModalityOutput<'g> {
    pub pyramid: [Var<'g>; SCALES],
    pub logits: Var<'g>,
}

pub struct Model {
    config: ModelConfig,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Runs every active modality through the network.
    ///
    /// `params` are the bound parameters in layout order; `inputs` maps
    /// modality names to `(batch, channels, H, W)` tensors. Modalities not in
    /// `active` are never touched. The result follows the order of `active`.
    pub fn forward<'g>(
        &self,
        params: &[Var<'g>],
        inputs: &BTreeMap<String, Var<'g>>,
        active: &[String],
    ) -> Result<Vec<(String, ModalityOutput<'g>)>> {
        let cfg = &self.config;
        let expected = cfg.param_layout().len();
        if params.len() != expected {
            return Err(ModelError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        if active.is_empty() {
            return Err(ModelError::NoActiveModality);
        }
        let n_mod = cfg.modalities.len();
        let stage = |j: usize| (params[2 * n_mod + 2 * j], params[2 * n_mod + 2 * j + 1]);
        let lateral = |j: usize| {
            let base = 2 * n_mod + 2 * SCALES;
            (params[base + 2 * j], params[base + 2 * j + 1])
        };
        let head = (params[expected - 2], params[expected - 1]);

        let mut out = Vec::with_capacity(active.len());
        for name in active {
            let m = cfg.modality_index(name)?;
            let x = *inputs.get(name).ok_or_else(|| ModelError::MissingInput(name.clone()))?;
            let shape = x.shape();
            if shape.len() != 4 || shape[1] != cfg.modalities[m].channels {
                return Err(ModelError::InputShape {
                    modality: name.clone(),
                    channels: cfg.modalities[m].channels,
                    got: shape,
                });
            }
            if shape[2] % 16 != 0 || shape[3] % 16 != 0 || shape[2] == 0 || shape[3] == 0 {
                return Err(ModelError::SpatialSize {
                    height: shape[2],
                    width: shape[3],
                });
            }

            let mut h = x.conv2d(&params[2 * m], 1, 0)?.bias_add(&params[2 * m + 1])?;
            let mut pyramid = Vec::with_capacity(SCALES);
            for j in 0..SCALES {
                let (w, b) = stage(j);
                h = h.conv2d(&w, 2, 1)?.bias_add(&b)?.relu();
                pyramid.push(h);
            }

            let logits = self.decode(&pyramid, &lateral, head)?;
            let pyramid = [pyramid[0], pyramid[1], pyramid[2], pyramid[3]];
            out.push((name.clone(), ModalityOutput { pyramid, logits }));
        }
        Ok(out)
    }
}

impl Model {
    /// Decoder head. Projection, nearest upsampling, concatenation and the
    /// final 1×1 convolution are all linear, so each scale is mapped straight
    /// to class logits at its own resolution with the composed weights
    /// `head_j · lateral_j`, and the results are summed coarse to fine. This
    /// is the same function as projecting and concatenating at full
    /// resolution, at a fraction of the cost.
    fn decode<'g>(
        &self,
        pyramid: &[Var<'g>],
        lateral: &dyn Fn(usize) -> (Var<'g>, Var<'g>),
        head: (Var<'g>, Var<'g>),
    ) -> Result<Var<'g>> {
        let k = self.config.classes;
        let d = self.config.decoder_channels;
        let mut acc: Option<Var<'g>> = None;
        for j in (0..SCALES).rev() {
            let (lw, lb) = lateral(j);
            let cj = self.config.scale_channels(j);
            let hw = head.0.slice(1, j * d, d)?.reshape(&[k, d])?;
            let w = hw.matmul(&lw.reshape(&[d, cj])?)?.reshape(&[k, cj, 1, 1])?;
            let b = hw.matmul(&lb.reshape(&[d, 1])?)?.reshape(&[k])?;
            let term = pyramid[j].conv2d(&w, 1, 0)?.bias_add(&b)?;
            acc = Some(match acc {
                None => term,
                Some(coarse) => coarse.upsample2()?.add(&term)?,
            });
        }
        let logits = acc.expect("at least one scale");
        Ok(logits.bias_add(&head.1)?.upsample2()?)
    }
}

/// Elementwise mean of raw logits.
pub fn fuse_mean<'g>(logits: &[Var<'g>]) -> Result<Var<'g>> {
    let (first, rest) = logits.split_first().ok_or(ModelError::EmptyFusion)?;
    if rest.is_empty() {
        return Ok(*first);
    }
    let mut acc = *first;
    for l in rest {
        acc = acc.add(l)?;
    }
    Ok(acc.mul_scalar(1.0 / logits.len() as f64))
}

/// Draws one non-empty subset of `modalities`, uniformly over the `2ⁿ − 1`
/// candidates, with exactly one draw from `rng`. Bit `k` of the subset index
/// plus one selects `modalities[k]`.
pub fn modality_dropout(rng: &mut Stream, modalities: &[String]) -> Result<Vec<String>> {
    let n = modalities.len();
    if n == 0 {
        return Err(ModelError::NoModalities);
    }
    if n > 63 {
        return Err(ModelError::InvalidConfig(format!("{n} modalities exceed the dropout limit of 63")));
    }
    let candidates = (1u64 << n) - 1;
    let mask = rng.next_u64() % candidates + 1;
    Ok(modalities
        .iter()
        .enumerate()
        .filter(|(k, _)| mask >> k & 1 == 1)
        .map(|(_, m)| m.clone())
        .collect())
}

/// One-hot targets `(B, K, H, W)` with zero rows at ignored pixels, and the
/// number of valid pixels per sample.
fn one_hot(shape: &[usize], labels: &[u8]) -> Result<(Tensor, Vec<usize>)> {
    let (b, k, hw) = (shape[0], shape[1], shape[2] * shape[3]);
    if labels.len() != b * hw {
        return Err(ModelError::LabelCount {
            expected: b * hw,
            got: labels.len(),
        });
    }
    let mut data = vec![0.0; b * k * hw];
    let mut valid = vec![0; b];
    for (s, sample) in labels.chunks(hw).enumerate() {
        for (p, &label) in sample.iter().enumerate() {
            if label == IGNORE_LABEL {
                continue;
            }
            if label as usize >= k {
                return Err(ModelError::LabelValue { label, classes: k });
            }
            data[(s * k + label as usize) * hw + p] = 1.0;
            valid[s] += 1;
        }
    }
    Ok((Tensor::from_parts(shape.to_vec(), data), valid))
}

fn check_logits(logits: &Var<'_>) -> Result<Vec<usize>> {
    let shape = logits.shape();
    if shape.len() != 4 {
        return Err(ModelError::Autodiff(AutodiffError::Tensor(crate::tensor::TensorError::Invalid {
            op: "cross_entropy",
            msg: format!("logits must be (batch, classes, H, W), got {shape:?}"),
        })));
    }
    Ok(shape)
}

/// Mean cross-entropy over all non-ignored pixels of the batch.
pub fn supervised_loss<'g>(fused: &Var<'g>, labels: &[u8]) -> Result<Var<'g>> {
    let shape = check_logits(fused)?;
    let (target, valid) = one_hot(&shape, labels)?;
    let total: usize = valid.iter().sum();
    if total == 0 {
        return Err(ModelError::AllIgnored);
    }
    let g = fused.graph();
    let picked = fused.log_softmax(1)?.mul(&g.constant(target))?;
    Ok(picked.sum().mul_scalar(-1.0 / total as f64))
}

/// Per-sample cross-entropy `(B,)`, each the mean over that sample's
/// non-ignored pixels (zero for a fully ignored sample).
pub fn per_sample_cross_entropy<'g>(fused: &Var<'g>, labels: &[u8]) -> Result<Var<'g>> {
    let shape = check_logits(fused)?;
    let (target, valid) = one_hot(&shape, labels)?;
    let g = fused.graph();
    let b = shape[0];
    let per = fused
        .log_softmax(1)?
        .mul(&g.constant(target))?
        .reshape(&[b, shape[1..].iter().product()])?
        .sum_axis(1)?;
    let scale: Vec<f64> = valid.iter().map(|&v| -1.0 / v.max(1) as f64).collect();
    Ok(per.mul(&g.constant(Tensor::vector(&scale)))?)
}
