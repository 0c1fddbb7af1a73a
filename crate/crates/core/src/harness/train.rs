use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::eval::{evaluate_combos, EvalSummary};
use super::{io_err, Config, HarnessError, Result};
use crate::autodiff::{Graph, Var};
use crate::checkpoint;
use crate::data::{self, Batch, Dataset, MultiModalSample};
use crate::metrics::enumerate_combos;
use crate::model::{self, Model, ModelConfig, Params};
use crate::optim::{poly_lr, Adam};
use crate::regularizers::{self, FisherReport, RegConfig};
use crate::rng::{derive_seed, Stream};
use crate::tensor::Tensor;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

// Stream indices for training randomness, far above any sample index.
const INIT_STREAM: u64 = 1 << 40;
const SHUFFLE_STREAM: u64 = (1 << 40) + 1;
const DROPOUT_STREAM: u64 = (1 << 40) + 2;

/// Writes `train/` and `eval/` datasets under `out_dir` and returns their
/// checksums.
pub fn cmd_generate(config: &Config, out_dir: &Path) -> Result<(String, String)> {
    config.validate()?;
    let mut sums = Vec::new();
    for (name, first, count) in [
        ("train", 0, config.split.train),
        ("eval", config.split.train as u64, config.split.eval),
    ] {
        let samples = data::generate_range(config.seed, &config.scene, first, count)?;
        let dataset = Dataset {
            classes: config.scene.classes,
            samples,
        };
        data::write_dataset(&dataset, &out_dir.join(name))?;
        sums.push(dataset.checksum());
    }
    let eval = sums.pop().expect("two splits");
    Ok((sums.pop().expect("two splits"), eval))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub final_eval: EvalSummary,
    pub final_report: FisherReport,
    pub params: Params,
}

struct StepResult {
    loss_sup: f64,
    reg_p: f64,
    reg_f: f64,
    total: f64,
    fisher: BTreeMap<String, f64>,
    grads: Vec<Tensor>,
}

/// One forward/backward pass of `L_sup + R_p + R_f` on `active`.
fn train_step(model: &Model, params: &Params, batch: &Batch, active: &[String], reg: &RegConfig) -> Result<StepResult> {
    let g = Graph::new();
    let p = params.bind(&g);
    let needs_input_grad = reg.lambda_p > 0.0;
    let xs: BTreeMap<String, Var<'_>> = active
        .iter()
        .map(|name| {
            let t = batch.inputs[name].clone();
            let v = if needs_input_grad { g.param(t) } else { g.constant(t) };
            (name.clone(), v)
        })
        .collect();
    let outputs = model.forward(&p, &xs, active)?;
    let logits: Vec<Var<'_>> = outputs.iter().map(|(_, o)| o.logits).collect();
    let fused = model::fuse_mean(&logits)?;
    let sup = model::supervised_loss(&fused, &batch.labels)?;

    let mut fisher = BTreeMap::new();
    let rp = if reg.lambda_p > 0.0 {
        let est = regularizers::fisher_pred(&xs, &fused, &batch.labels, active, reg.epsilon)?;
        for (name, v) in &est {
            fisher.insert(name.clone(), v.item().unwrap_or(f64::NAN));
        }
        regularizers::reg_pred(&g, &est, reg)
    } else {
        g.scalar(0.0)
    };
    let rf = if reg.lambda_f > 0.0 {
        let est = regularizers::fisher_feat(&outputs, reg)?;
        regularizers::reg_feat(&g, &est, reg)
    } else {
        g.scalar(0.0)
    };
    let total = regularizers::total_loss(&sup, &rp, &rf)?;
    let grads = g.gradients(total, &p).map_err(model::ModelError::from)?;
    let scalar = |v: &Var<'_>| v.item().unwrap_or(f64::NAN);
    Ok(StepResult {
        loss_sup: scalar(&sup),
        reg_p: scalar(&rp),
        reg_f: scalar(&rf),
        total: scalar(&total),
        fisher,
        grads,
    })
}

/// Resolves the configured modality list against the dataset's.
fn select_modalities(config: &Config, train: &Dataset, eval: &Dataset) -> Result<ModelConfig> {
    let specs = train.specs();
    if eval.specs() != specs {
        let names = |d: &Dataset| d.specs().iter().map(|s| s.name.clone()).collect::<Vec<_>>().join(", ");
        return Err(HarnessError::ModalityMismatch {
            checkpoint: names(train),
            dataset: names(eval),
        });
    }
    let wanted = &config.train.modalities;
    for name in wanted {
        if !specs.iter().any(|s| &s.name == name) {
            return Err(HarnessError::Invalid(format!(
                "train.modalities: `{name}` is not in the dataset"
            )));
        }
    }
    let chosen = specs
        .into_iter()
        .filter(|s| wanted.is_empty() || wanted.contains(&s.name))
        .collect();
    Ok(ModelConfig::new(chosen, train.classes))
}

struct MetricsLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsLog {
    fn create(path: PathBuf) -> Result<Self> {
        let file = File::create(&path).map_err(io_err(&path))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }

    fn record(&mut self, value: serde_json::Value) -> Result<()> {
        let line = serde_json::to_string(&value).expect("records serialize");
        writeln!(self.out, "{line}").map_err(io_err(&self.path))
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

fn eval_record(epoch: usize, step: u64, lr: f64, loss_sup: Option<f64>, summary: &EvalSummary, report: &FisherReport) -> serde_json::Value {
    json!({
        "type": "eval",
        "epoch": epoch,
        "step": step,
        "lr": lr,
        "loss_sup": loss_sup,
        "combos": summary.combos.iter().map(|c| json!({
            "combo": crate::metrics::combo_label(&c.combo),
            "modalities": c.combo,
            "miou": c.miou,
            "accuracy": c.accuracy,
        })).collect::<Vec<_>>(),
        "mean": summary.mean,
        "std": summary.std,
        "mean_accuracy": summary.mean_accuracy,
        "fisher": report.per_modality_pred,
        "gap_ratio": report.gap_ratio,
        "report": report,
    })
}

/// Trains a model as configured, writing `metrics.jsonl` and `model.ckpt`
/// into `config.train.out_dir`.
pub fn cmd_train(config: &Config) -> Result<TrainOutcome> {
    config.validate()?;
    let t = &config.train;
    let train = data::read_dataset(&t.data_dir.join("train"))?;
    let eval = data::read_dataset(&t.data_dir.join("eval"))?;
    let model_config = select_modalities(config, &train, &eval)?;
    let modalities = model_config.modality_names();
    let model = Model::new(model_config.clone())?;
    let reg = t.reg();

    fs::create_dir_all(&t.out_dir).map_err(io_err(&t.out_dir))?;
    let mut log = MetricsLog::create(t.out_dir.join(METRICS_FILE))?;
    log.record(json!({
        "type": "header",
        "config": config,
        "modalities": modalities,
        "param_count": model_config.param_count(),
        "train_checksum": train.checksum(),
        "eval_checksum": eval.checksum(),
    }))?;

    let mut params = Params::init(&model_config, derive_seed(config.seed, INIT_STREAM));
    let mut opt = Adam::new(&params.tensors);
    let mut shuffle = Stream::new(derive_seed(config.seed, SHUFFLE_STREAM));
    let mut dropout = Stream::new(derive_seed(config.seed, DROPOUT_STREAM));

    let combos = enumerate_combos(&modalities);
    let probe: Vec<&MultiModalSample> = eval.samples.iter().take(t.probe_size).collect();
    let probe = Batch::from_samples(&probe)?;
    let n = train.samples.len();
    let steps_per_epoch = n.div_ceil(t.batch_size) as u64;
    let total_steps = steps_per_epoch * t.epochs as u64;

    let evaluate = |params: &Params, step: u64| -> Result<(EvalSummary, FisherReport)> {
        let summary = evaluate_combos(&model, params, &eval.samples, &combos, t.eval_batch_size)?;
        let report = FisherReport::measure(&model, params, &probe.inputs, &probe.labels, &modalities, &reg, step)?;
        Ok((summary, report))
    };

    let (mut summary, mut report) = evaluate(&params, 0)?;
    log.record(eval_record(0, 0, poly_lr(t.base_lr, 0, total_steps, t.lr_power), None, &summary, &report))?;

    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0u64;
    for epoch in 1..=t.epochs {
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(t.batch_size) {
            let active = if t.dropout {
                model::modality_dropout(&mut dropout, &modalities)?
            } else {
                modalities.clone()
            };
            let samples: Vec<&MultiModalSample> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let batch = Batch::from_samples(&samples)?;
            let lr = poly_lr(t.base_lr, step, total_steps, t.lr_power);
            let r = train_step(&model, &params, &batch, &active, &reg)?;
            step += 1;
            if !r.total.is_finite() || r.grads.iter().any(|g| !g.all_finite()) {
                log.finish()?;
                return Err(HarnessError::NonFinite {
                    step,
                    report: serde_json::to_string(&report).expect("report serializes"),
                });
            }
            opt.update(&mut params.tensors, &r.grads, lr);
            loss_sum += r.loss_sup;
            batches += 1;
            log.record(json!({
                "type": "step",
                "epoch": epoch,
                "step": step,
                "lr": lr,
                "active": active,
                "loss_sup": r.loss_sup,
                "reg_p": r.reg_p,
                "reg_f": r.reg_f,
                "fisher": r.fisher,
            }))?;
        }
        let mean_loss = loss_sum / batches as f64;
        log.record(json!({"type": "epoch", "epoch": epoch, "step": step, "loss_sup": mean_loss}))?;
        if epoch % t.eval_every == 0 || epoch == t.epochs {
            (summary, report) = evaluate(&params, step)?;
            let lr = poly_lr(t.base_lr, step, total_steps, t.lr_power);
            log.record(eval_record(epoch, step, lr, Some(mean_loss), &summary, &report))?;
        }
    }
    log.finish()?;

    let checkpoint_path = t.out_dir.join(CHECKPOINT_FILE);
    checkpoint::save(&checkpoint_path, &model_config, &params)?;
    Ok(TrainOutcome {
        metrics_path: t.out_dir.join(METRICS_FILE),
        checkpoint_path,
        final_eval: summary,
        final_report: report,
        params,
    })
}
