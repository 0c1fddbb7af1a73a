//! Fisher-information estimates per modality and the inverse-Fisher penalties
//! built on them.
//!
//! Every estimate has the form `mean_b ‖∇_z CE_b‖² / max(CE_b, ε)` for a
//! per-sample cross-entropy `CE_b` and a per-modality tensor `z`. Because
//! samples never interact in the network, the gradient of `Σ_b CE_b` with
//! respect to the batched `z` holds every per-sample gradient at once.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Var};
use crate::model::{self, Model, ModalityOutput, ModelError, Params, SCALES};
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("input for modality `{0}` does not require gradients")]
    NotDifferentiable(String),
    #[error("no output for active modality `{0}`")]
    MissingOutput(String),
}

type Result<T> = std::result::Result<T, RegError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegConfig {
    #[serde(default = "default_lambda_p")]
    pub lambda_p: f64,
    #[serde(default = "default_lambda_f")]
    pub lambda_f: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub feature_target_detached: bool,
}

fn default_lambda_p() -> f64 {
    0.3
}

fn default_lambda_f() -> f64 {
    0.02
}

fn default_epsilon() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            lambda_p: default_lambda_p(),
            lambda_f: default_lambda_f(),
            epsilon: default_epsilon(),
            feature_target_detached: true,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.lambda_p >= 0.0 && self.lambda_p.is_finite()) {
            return Err(format!("lambda_p: must be a finite value >= 0, got {}", self.lambda_p));
        }
        if !(self.lambda_f >= 0.0 && self.lambda_f.is_finite()) {
            return Err(format!("lambda_f: must be a finite value >= 0, got {}", self.lambda_f));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(format!("epsilon: must be a finite value > 0, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// `mean_b ‖grad_b‖² / max(ce_b, ε)` for a batched gradient and a `(B,)` loss.
fn fisher_ratio<'g>(grad: Var<'g>, ce: Var<'g>, epsilon: f64) -> Result<Var<'g>> {
    let shape = grad.shape();
    let b = shape[0];
    let rest: usize = shape[1..].iter().product();
    let norms = grad.square().reshape(&[b, rest])?.sum_axis(1)?;
    Ok(norms.div(&ce.clamp_min(epsilon))?.mean())
}

/// Per-sample cross-entropy of `log_softmax(pred)` against the distribution
/// `target` (both `(B, C, H, W)`), averaged over pixels.
fn soft_cross_entropy<'g>(pred: &Var<'g>, target: &Var<'g>) -> Result<Var<'g>> {
    let shape = pred.shape();
    let pixels = (shape[2] * shape[3]) as f64;
    let b = shape[0];
    Ok(pred
        .log_softmax(1)?
        .mul(target)?
        .reshape(&[b, shape[1..].iter().product()])?
        .sum_axis(1)?
        .mul_scalar(-1.0 / pixels))
}

fn active_inputs<'g>(inputs: &BTreeMap<String, Var<'g>>, active: &[String]) -> Result<Vec<Var<'g>>> {
    active
        .iter()
        .map(|name| {
            let x = *inputs.get(name).ok_or_else(|| ModelError::MissingInput(name.clone()))?;
            if !x.requires_grad() {
                return Err(RegError::NotDifferentiable(name.clone()));
            }
            Ok(x)
        })
        .collect()
}

/// Prediction-level Fisher information of each active modality: the input
/// gradient of the supervised cross-entropy of the fused prediction.
///
/// The returned scalars are differentiable with respect to the model weights.
pub fn fisher_pred<'g>(
    inputs: &BTreeMap<String, Var<'g>>,
    fused: &Var<'g>,
    labels: &[u8],
    active: &[String],
    epsilon: f64,
) -> Result<Vec<(String, Var<'g>)>> {
    let xs = active_inputs(inputs, active)?;
    let ce = model::per_sample_cross_entropy(fused, labels)?;
    let grads = fused.graph().backward(ce.sum(), &xs, true)?;
    active
        .iter()
        .zip(grads)
        .map(|(name, g)| Ok((name.clone(), fisher_ratio(g, ce, epsilon)?)))
        .collect()
}

fn inverse_sum<'g>(graph: &'g Graph, values: impl Iterator<Item = Var<'g>>, lambda: f64, epsilon: f64) -> Var<'g> {
    let mut acc = graph.scalar(0.0);
    if lambda == 0.0 {
        return acc;
    }
    for v in values {
        acc = acc.add(&v.add_scalar(epsilon).powf(-1.0)).expect("scalar terms share a shape");
    }
    acc.mul_scalar(lambda)
}

/// `λ_p Σ_i 1 / (Î_i + ε)`.
pub fn reg_pred<'g>(graph: &'g Graph, fisher: &[(String, Var<'g>)], config: &RegConfig) -> Var<'g> {
    inverse_sum(graph, fisher.iter().map(|(_, v)| *v), config.lambda_p, config.epsilon)
}

/// Feature-level Fisher information for every scale and active modality,
/// keyed by `(scale index from 0, modality)`.
///
/// Features are turned into per-pixel channel distributions by a softmax; the
/// target is the softmax of the mean feature over active modalities. Fewer
/// than two active modalities give an empty result.
pub fn fisher_feat<'g>(
    outputs: &[(String, ModalityOutput<'g>)],
    config: &RegConfig,
) -> Result<Vec<((usize, String), Var<'g>)>> {
    let mut out = Vec::new();
    if outputs.len() < 2 {
        return Ok(out);
    }
    let graph = outputs[0].1.logits.graph();
    for j in 0..SCALES {
        let feats: Vec<Var<'g>> = outputs.iter().map(|(_, o)| o.pyramid[j]).collect();
        let mut mean = model::fuse_mean(&feats)?;
        if config.feature_target_detached {
            mean = mean.detach();
        }
        let target = mean.softmax(1)?;
        for ((name, _), f) in outputs.iter().zip(&feats) {
            let ce = soft_cross_entropy(f, &target)?;
            let g = graph.backward(ce.sum(), &[*f], true)?[0];
            out.push(((j, name.clone()), fisher_ratio(g, ce, config.epsilon)?));
        }
    }
    Ok(out)
}

/// `λ_f Σ_j Σ_i 1 / (Î_{j,i} + ε)`.
pub fn reg_feat<'g>(graph: &'g Graph, fisher: &[((usize, String), Var<'g>)], config: &RegConfig) -> Var<'g> {
    inverse_sum(graph, fisher.iter().map(|(_, v)| *v), config.lambda_f, config.epsilon)
}

/// Diagnostic Fisher information of each unimodal prediction measured
/// against the (detached) fused prediction.
pub fn fisher_unimodal_vs_fused<'g>(
    inputs: &BTreeMap<String, Var<'g>>,
    outputs: &[(String, ModalityOutput<'g>)],
    epsilon: f64,
) -> Result<Vec<(String, f64)>> {
    let active: Vec<String> = outputs.iter().map(|(n, _)| n.clone()).collect();
    let xs = active_inputs(inputs, &active)?;
    let logits: Vec<Var<'g>> = outputs.iter().map(|(_, o)| o.logits).collect();
    let target = model::fuse_mean(&logits)?.softmax(1)?.detach();
    let graph = target.graph();
    let ces = logits
        .iter()
        .map(|l| soft_cross_entropy(l, &target))
        .collect::<Result<Vec<_>>>()?;
    let mut total = graph.scalar(0.0);
    for ce in &ces {
        total = total.add(&ce.sum())?;
    }
    let grads = graph.backward(total, &xs, false)?;
    active
        .into_iter()
        .zip(grads.into_iter().zip(ces))
        .map(|(name, (g, ce))| {
            let v = fisher_ratio(g, ce, epsilon)?.item().unwrap_or(0.0);
            Ok((name, v))
        })
        .collect()
}

/// `L_sup + R_p + R_f`.
pub fn total_loss<'g>(sup: &Var<'g>, rp: &Var<'g>, rf: &Var<'g>) -> Result<Var<'g>> {
    Ok(sup.add(rp)?.add(rf)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatFisher {
    pub scale: usize,
    pub modality: String,
    pub value: f64,
}

/// Fisher-information snapshot used to track modality balance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub step: u64,
    pub per_modality_pred: BTreeMap<String, f64>,
    pub per_scale_feat: Vec<FeatFisher>,
    /// `max_i I_i / min_i I_i`; `None` when some `I_i` is zero.
    pub gap_ratio: Option<f64>,
    pub unimodal_vs_fused: Option<BTreeMap<String, f64>>,
}

impl FisherReport {
    /// Evaluates every estimate on one batch with all of `active` present.
    pub fn measure(
        model: &Model,
        params: &Params,
        inputs: &BTreeMap<String, Tensor>,
        labels: &[u8],
        active: &[String],
        config: &RegConfig,
        step: u64,
    ) -> Result<Self> {
        let graph = Graph::new();
        let p = params.bind_frozen(&graph);
        let xs: BTreeMap<String, Var<'_>> = active
            .iter()
            .map(|name| {
                let t = inputs.get(name).ok_or_else(|| ModelError::MissingInput(name.clone()))?;
                Ok((name.clone(), graph.param(t.clone())))
            })
            .collect::<Result<_>>()?;
        let outputs = model.forward(&p, &xs, active)?;
        let logits: Vec<Var<'_>> = outputs.iter().map(|(_, o)| o.logits).collect();
        let fused = model::fuse_mean(&logits)?;

        let pred = fisher_pred(&xs, &fused, labels, active, config.epsilon)?;
        let per_modality_pred: BTreeMap<String, f64> = pred
            .iter()
            .map(|(n, v)| (n.clone(), v.item().unwrap_or(0.0)))
            .collect();
        let per_scale_feat = fisher_feat(&outputs, config)?
            .into_iter()
            .map(|((scale, modality), v)| FeatFisher {
                scale,
                modality,
                value: v.item().unwrap_or(0.0),
            })
            .collect();
        let unimodal = fisher_unimodal_vs_fused(&xs, &outputs, config.epsilon)?;
        Ok(Self {
            step,
            gap_ratio: gap_ratio(per_modality_pred.values().copied()),
            per_modality_pred,
            per_scale_feat,
            unimodal_vs_fused: Some(unimodal.into_iter().collect()),
        })
    }
}

/// `max / min` of the values, or `None` if any is not strictly positive.
pub fn gap_ratio(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo > 0.0 && lo.is_finite()).then(|| hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda_p: f64, lambda_f: f64, epsilon: f64) -> RegConfig {
        RegConfig {
            lambda_p,
            lambda_f,
            epsilon,
            feature_target_detached: true,
        }
    }

    #[test]
    fn reg_pred_arithmetic() {
        let g = Graph::new();
        let fisher = vec![("a".to_string(), g.scalar(2.0)), ("b".to_string(), g.scalar(4.0))];
        let v = reg_pred(&g, &fisher, &cfg(0.3, 0.0, 0.0)).item().unwrap();
        assert!((v - 0.225).abs() < 1e-15);
        assert_eq!(reg_pred(&g, &fisher, &cfg(0.0, 0.0, 1e-6)).item(), Some(0.0));
        let zero = vec![("a".to_string(), g.scalar(0.0))];
        let v = reg_pred(&g, &zero, &cfg(0.3, 0.0, 1e-6)).item().unwrap();
        assert!((v - 0.3e6).abs() < 1e-6 && v.is_finite());
    }

    #[test]
    fn reg_feat_arithmetic() {
        let g = Graph::new();
        assert_eq!(reg_feat(&g, &[], &cfg(0.0, 0.02, 1e-6)).item(), Some(0.0));
        let fisher = vec![((0, "a".to_string()), g.scalar(1.0)), ((0, "b".to_string()), g.scalar(1.0))];
        let v = reg_feat(&g, &fisher, &cfg(0.0, 0.02, 0.0)).item().unwrap();
        assert!((v - 0.04).abs() < 1e-15);
        let doubled = reg_feat(&g, &fisher, &cfg(0.0, 0.04, 0.0)).item().unwrap();
        assert!((doubled - 2.0 * v).abs() < 1e-15);
    }

    #[test]
    fn total_loss_arithmetic_and_gradient() {
        let g = Graph::new();
        let l = total_loss(&g.scalar(1.0), &g.scalar(0.2), &g.scalar(0.05)).unwrap();
        assert!((l.item().unwrap() - 1.25).abs() < 1e-15);

        let w = g.param(Tensor::vector(&[0.3, -1.2]));
        let a = w.square().sum();
        let b = w.exp().sum();
        let c = w.mul_scalar(3.0).sum();
        let t = total_loss(&a, &b, &c).unwrap();
        let whole = g.gradients(t, &[w]).unwrap()[0].clone();
        let parts: Vec<Tensor> = [a, b, c].iter().map(|x| g.gradients(*x, &[w]).unwrap()[0].clone()).collect();
        for i in 0..2 {
            let sum: f64 = parts.iter().map(|p| p.data()[i]).sum();
            assert!((whole.data()[i] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_ratio_cases() {
        assert_eq!(gap_ratio([2.0, 8.0, 4.0].into_iter()), Some(4.0));
        assert_eq!(gap_ratio([3.0].into_iter()), Some(1.0));
        assert_eq!(gap_ratio([0.0, 1.0].into_iter()), None);
    }

    #[test]
    fn config_validation() {
        assert!(RegConfig::default().validate().is_ok());
        assert!(cfg(-0.1, 0.0, 1e-6).validate().unwrap_err().contains("lambda_p"));
        assert!(cfg(0.1, f64::NAN, 1e-6).validate().unwrap_err().contains("lambda_f"));
        assert!(cfg(0.1, 0.1, 0.0).validate().unwrap_err().contains("epsilon"));
    }
}
