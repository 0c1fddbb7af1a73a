use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError, Result};
use crate::autodiff::{Graph, Var};
use crate::checkpoint;
use crate::data::{self, Batch, MultiModalSample};
use crate::metrics::{balance_stats, combo_label, enumerate_combos, ComboResult, Confusion};
use crate::model::{Model, Params};

/// One evaluation table: a row per combo plus summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub combos: Vec<ComboResult>,
    pub mean: f64,
    pub std: f64,
    pub mean_accuracy: f64,
}

impl EvalSummary {
    pub fn combo(&self, members: &[&str]) -> Option<&ComboResult> {
        self.combos
            .iter()
            .find(|c| c.combo.len() == members.len() && c.combo.iter().zip(members).all(|(a, b)| a == b))
    }
}

/// Lowest-index argmax over the class axis of `(B, K, H, W)` logits.
fn argmax_labels(logits: &[f64], batch: usize, classes: usize, pixels: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(batch * pixels);
    for b in 0..batch {
        let base = b * classes * pixels;
        for p in 0..pixels {
            let mut best = (logits[base + p], 0u8);
            for k in 1..classes {
                let v = logits[base + k * pixels + p];
                if v > best.0 {
                    best = (v, k as u8);
                }
            }
            out.push(best.1);
        }
    }
    out
}

/// Scores every combo on `samples`.
///
/// Each modality of a batch is run once; a combo's prediction is the mean of
/// its members' logits, exactly as if the other modalities were zeroed and
/// left out of the forward pass.
pub fn evaluate_combos(
    model: &Model,
    params: &Params,
    samples: &[MultiModalSample],
    combos: &[Vec<String>],
    batch_size: usize,
) -> Result<EvalSummary> {
    let classes = model.config().classes;
    let mut needed: Vec<String> = Vec::new();
    for name in combos.iter().flatten() {
        if !needed.contains(name) {
            needed.push(name.clone());
        }
    }
    let mut confusion = vec![Confusion::new(classes); combos.len()];
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&MultiModalSample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs)?;
        let g = Graph::new();
        let p = params.bind_frozen(&g);
        let xs: BTreeMap<String, Var<'_>> = needed
            .iter()
            .map(|n| {
                let t = batch.inputs.get(n).ok_or_else(|| data::DataError::UnknownModality(n.clone()))?;
                Ok((n.clone(), g.constant(t.clone())))
            })
            .collect::<Result<_>>()?;
        let outputs = model.forward(&p, &xs, &needed)?;
        let logits: BTreeMap<&str, Vec<f64>> = outputs
            .iter()
            .map(|(n, o)| (n.as_str(), o.logits.value().to_vec()))
            .collect();
        let shape = outputs[0].1.logits.shape();
        let pixels = shape[2] * shape[3];
        for (combo, conf) in combos.iter().zip(&mut confusion) {
            // Same operation order as `fuse_mean`.
            let mut fused = logits[combo[0].as_str()].clone();
            for name in &combo[1..] {
                for (a, b) in fused.iter_mut().zip(&logits[name.as_str()]) {
                    *a += b;
                }
            }
            if combo.len() > 1 {
                let scale = 1.0 / combo.len() as f64;
                fused.iter_mut().for_each(|v| *v *= scale);
            }
            let pred = argmax_labels(&fused, shape[0], classes, pixels);
            conf.accumulate(&pred, &batch.labels)?;
        }
    }
    let results = combos
        .iter()
        .zip(&confusion)
        .map(|(combo, conf)| {
            let (per_class_iou, miou, accuracy) = conf.scores()?;
            Ok(ComboResult {
                combo: combo.clone(),
                miou,
                accuracy,
                per_class_iou,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = balance_stats(&results)?;
    let mean_accuracy = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
    Ok(EvalSummary {
        combos: results,
        mean,
        std,
        mean_accuracy,
    })
}

/// Human-readable table, values in percent.
pub fn format_table(summary: &EvalSummary) -> String {
    let mut s = format!("{:<10} {:>8} {:>8}\n", "combo", "mIoU", "Acc");
    for c in &summary.combos {
        let _ = writeln!(s, "{:<10} {:>8.2} {:>8.2}", combo_label(&c.combo), 100.0 * c.miou, 100.0 * c.accuracy);
    }
    let _ = writeln!(s, "{:<10} {:>8.2} {:>8.2}", "mean", 100.0 * summary.mean, 100.0 * summary.mean_accuracy);
    let _ = writeln!(s, "{:<10} {:>8.2}", "std", 100.0 * summary.std);
    s
}

fn format_csv(summary: &EvalSummary) -> String {
    let mut s = String::from("combo,modalities,miou,accuracy\n");
    for c in &summary.combos {
        let _ = writeln!(s, "{},{},{},{}", combo_label(&c.combo), c.combo.join("+"), c.miou, c.accuracy);
    }
    let _ = writeln!(s, "mean,,{},{}", summary.mean, summary.mean_accuracy);
    let _ = writeln!(s, "std,,{},", summary.std);
    s
}

/// Writes `eval.txt` and `eval.csv` into `out_dir`.
pub fn write_table(summary: &EvalSummary, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let txt = out_dir.join("eval.txt");
    let csv = out_dir.join("eval.csv");
    fs::write(&txt, format_table(summary)).map_err(io_err(&txt))?;
    fs::write(&csv, format_csv(summary)).map_err(io_err(&csv))?;
    Ok((txt, csv))
}

/// Evaluates a checkpoint on a dataset over every combo of `modalities`
/// (default: all of the checkpoint's) and writes the table to `out_dir`.
pub fn cmd_eval(checkpoint_path: &Path, dataset_dir: &Path, modalities: Option<&[String]>, out_dir: &Path) -> Result<EvalSummary> {
    let (config, params) = checkpoint::load(checkpoint_path)?;
    let dataset = data::read_dataset(dataset_dir)?;
    let names = |specs: &[crate::model::ModalitySpec]| {
        specs.iter().map(|s| format!("{}:{}", s.name, s.channels)).collect::<Vec<_>>().join(", ")
    };
    let available = dataset.specs();
    let mismatch = || HarnessError::ModalityMismatch {
        checkpoint: names(&config.modalities),
        dataset: names(&available),
    };
    for spec in &config.modalities {
        if !available.contains(spec) {
            return Err(mismatch());
        }
    }
    if dataset.classes != config.classes {
        return Err(HarnessError::Invalid(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            config.classes, dataset.classes
        )));
    }
    let all = config.modality_names();
    let chosen = match modalities {
        Some(list) if !list.is_empty() => {
            if let Some(bad) = list.iter().find(|m| !all.contains(m)) {
                return Err(HarnessError::Invalid(format!("modality `{bad}` is not in the checkpoint")));
            }
            all.iter().filter(|m| list.contains(m)).cloned().collect()
        }
        _ => all,
    };
    let model = Model::new(config)?;
    let summary = evaluate_combos(&model, &params, &dataset.samples, &enumerate_combos(&chosen), 16)?;
    write_table(&summary, out_dir)?;
    Ok(summary)
}
