//! Small regularizer fixtures shared by the oracle and acceptance tests.

use std::collections::BTreeMap;

use fisherseg::autodiff::{Graph, Var};
use fisherseg::model::{self, ModalityOutput, ModalitySpec, Model, ModelConfig, Params, SCALES};
use fisherseg::regularizers::{fisher_feat, fisher_pred, reg_feat, reg_pred, RegConfig};
use fisherseg::rng::Stream;
use fisherseg::tensor::Tensor;

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Two single-channel modalities whose stems share identical weights.
pub fn duplicated_model() -> (Model, Params) {
    let cfg = ModelConfig::new(vec![ModalitySpec::new("a", 1), ModalitySpec::new("b", 1)], 3);
    let model = Model::new(cfg.clone()).unwrap();
    let mut params = Params::init(&cfg, 21);
    let layout = cfg.param_layout();
    for (i, (name, _)) in layout.iter().enumerate() {
        if let Some(rest) = name.strip_prefix("stem.b.") {
            let src = layout.iter().position(|(n, _)| n == &format!("stem.a.{rest}")).unwrap();
            params.tensors[i] = params.tensors[src].clone();
        }
    }
    (model, params)
}

pub fn random_tensor(seed: u64, shape: &[usize]) -> Tensor {
    let mut rng = Stream::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform()).collect()).unwrap()
}

pub fn random_labels(seed: u64, n: usize, classes: u64) -> Vec<u8> {
    let mut rng = Stream::new(seed);
    (0..n).map(|_| rng.below(classes) as u8).collect()
}

/// Both modalities of the duplicated model fed the same input: the
/// prediction-level pair and the per-scale feature-level pairs.
pub fn duplicated_fisher() -> ((f64, f64), Vec<(f64, f64)>) {
    let (model, params) = duplicated_model();
    let x = random_tensor(4, &[2, 1, 32, 32]);
    let labels = random_labels(5, 2 * 32 * 32, 3);
    let g = Graph::new();
    let p = params.bind(&g);
    let inputs = BTreeMap::from([("a".to_string(), g.param(x.clone())), ("b".to_string(), g.param(x))]);
    let active = names(&["a", "b"]);
    let outputs = model.forward(&p, &inputs, &active).unwrap();
    let logits: Vec<Var<'_>> = outputs.iter().map(|(_, o)| o.logits).collect();
    let fused = model::fuse_mean(&logits).unwrap();
    let pred = fisher_pred(&inputs, &fused, &labels, &active, 1e-6).unwrap();
    let pred = (pred[0].1.item().unwrap(), pred[1].1.item().unwrap());

    let feat = fisher_feat(&outputs, &RegConfig::default()).unwrap();
    assert_eq!(feat.len(), 2 * SCALES);
    let feat = feat
        .chunks(2)
        .map(|pair| {
            assert_eq!(pair[0].0 .0, pair[1].0 .0);
            (pair[0].1.item().unwrap(), pair[1].1.item().unwrap())
        })
        .collect();
    (pred, feat)
}

/// A hand-built two-modality network with a four-level pyramid and under
/// 200 parameters, returning `R_p + R_f` for the given weights.
fn toy_penalty<'g>(g: &'g Graph, w: &[Var<'g>], x: &[Tensor; 2], labels: &[u8], cfg: &RegConfig) -> Var<'g> {
    let inputs = BTreeMap::from([("a".to_string(), g.param(x[0].clone())), ("b".to_string(), g.param(x[1].clone()))]);
    let mut outputs = Vec::new();
    for (i, name) in ["a", "b"].iter().enumerate() {
        let stem = inputs[*name].conv2d(&w[i], 1, 0).unwrap();
        let f0 = stem.conv2d(&w[2], 1, 1).unwrap().square();
        let f1 = f0.conv2d(&w[3], 2, 1).unwrap();
        let f2 = f1.conv2d(&w[4], 2, 1).unwrap();
        let f3 = f2.conv2d(&w[5], 2, 1).unwrap();
        let logits = f0.conv2d(&w[6], 1, 0).unwrap().bias_add(&w[7]).unwrap();
        outputs.push((name.to_string(), ModalityOutput {
            pyramid: [f0, f1, f2, f3],
            logits,
        }));
    }
    let logits: Vec<Var<'_>> = outputs.iter().map(|(_, o)| o.logits).collect();
    let fused = model::fuse_mean(&logits).unwrap();
    let active = names(&["a", "b"]);
    let rp = reg_pred(g, &fisher_pred(&inputs, &fused, labels, &active, cfg.epsilon).unwrap(), cfg);
    let rf = reg_feat(g, &fisher_feat(&outputs, cfg).unwrap(), cfg);
    rp.add(&rf).unwrap()
}

/// Worst relative error between the analytic gradient of the toy penalty
/// and central differences, with the parameter count.
pub fn penalty_fd_error() -> (f64, usize) {
    let shapes: [&[usize]; 8] = [
        &[2, 1, 1, 1],
        &[2, 1, 1, 1],
        &[2, 2, 3, 3],
        &[2, 2, 3, 3],
        &[2, 2, 3, 3],
        &[2, 2, 3, 3],
        &[3, 2, 1, 1],
        &[3],
    ];
    let mut rng = Stream::new(77);
    let weights: Vec<Tensor> = shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s, (0..n).map(|_| 0.6 * rng.normal()).collect()).unwrap()
        })
        .collect();
    let count: usize = weights.iter().map(Tensor::len).sum();
    let x = [random_tensor(8, &[2, 1, 8, 8]), random_tensor(9, &[2, 1, 8, 8])];
    let labels = random_labels(10, 2 * 64, 3);
    // A detached target is invisible to finite differences.
    let cfg = RegConfig {
        feature_target_detached: false,
        ..RegConfig::default()
    };

    let g = Graph::new();
    let w: Vec<Var<'_>> = weights.iter().map(|t| g.param(t.clone())).collect();
    let analytic = g.gradients(toy_penalty(&g, &w, &x, &labels, &cfg), &w).unwrap();

    let value_at = |weights: &[Tensor]| {
        let g = Graph::new();
        let w: Vec<Var<'_>> = weights.iter().map(|t| g.constant(t.clone())).collect();
        toy_penalty(&g, &w, &x, &labels, &cfg).item().unwrap()
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (ti, t) in weights.iter().enumerate() {
        for k in 0..t.len() {
            let bump = |delta: f64| {
                let mut ws = weights.clone();
                let mut d = t.to_vec();
                d[k] += delta;
                ws[ti] = Tensor::new(t.shape(), d).unwrap();
                value_at(&ws)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let a = analytic[ti].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    (worst, count)
}
