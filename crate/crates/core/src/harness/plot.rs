use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use super::{io_err, HarnessError, Result};

/// Curves parsed from one metrics file.
#[derive(Debug, Default)]
struct RunCurves {
    label: String,
    modalities: Vec<String>,
    combos: Vec<String>,
    /// step → (per-modality Fisher, gap ratio)
    fisher: BTreeMap<u64, (BTreeMap<String, f64>, Option<f64>)>,
    /// epoch → (mean, std, per-combo mIoU)
    miou: BTreeMap<u64, (f64, f64, BTreeMap<String, f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotFiles {
    pub fisher: PathBuf,
    pub miou: PathBuf,
}

fn run_label(path: &Path) -> String {
    let stem = || path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(stem)
}

fn parse(path: &Path) -> Result<RunCurves> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let err = |line: usize, msg: String| HarnessError::Metric {
        path: path.to_path_buf(),
        line,
        msg,
    };
    if text.trim().is_empty() {
        return Err(err(1, "empty metrics file".into()));
    }
    let mut run = RunCurves {
        label: run_label(path),
        ..RunCurves::default()
    };
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let v: Value = serde_json::from_str(line).map_err(|e| err(n, e.to_string()))?;
        let kind = v["type"].as_str().ok_or_else(|| err(n, "record has no `type`".into()))?;
        if n == 1 && kind != "header" {
            return Err(err(n, "first record must be the header".into()));
        }
        match kind {
            "header" => {
                let m = v["modalities"]
                    .as_array()
                    .ok_or_else(|| err(n, "header lacks `modalities`".into()))?;
                run.modalities = m.iter().filter_map(|x| x.as_str().map(String::from)).collect();
            }
            "eval" => {
                let num = |key: &str| v[key].as_f64().ok_or_else(|| err(n, format!("`{key}` is not a number")));
                let step = v["step"].as_u64().ok_or_else(|| err(n, "`step` is not an integer".into()))?;
                let epoch = v["epoch"].as_u64().ok_or_else(|| err(n, "`epoch` is not an integer".into()))?;
                let fisher = v["fisher"]
                    .as_object()
                    .ok_or_else(|| err(n, "`fisher` is not an object".into()))?
                    .iter()
                    .map(|(k, x)| Ok((k.clone(), x.as_f64().ok_or_else(|| err(n, format!("fisher `{k}`")))?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                run.fisher.insert(step, (fisher, v["gap_ratio"].as_f64()));
                let mut per_combo = BTreeMap::new();
                let combos = v["combos"]
                    .as_array()
                    .ok_or_else(|| err(n, "`combos` is not a list".into()))?;
                let mut order = Vec::new();
                for c in combos {
                    let label = c["combo"].as_str().ok_or_else(|| err(n, "combo without a label".into()))?;
                    let miou = c["miou"].as_f64().ok_or_else(|| err(n, format!("combo {label} lacks miou")))?;
                    order.push(label.to_string());
                    per_combo.insert(label.to_string(), miou);
                }
                if run.combos.is_empty() {
                    run.combos = order;
                }
                run.miou.insert(epoch, (num("mean")?, num("std")?, per_combo));
            }
            "step" | "epoch" => {}
            other => return Err(err(n, format!("unknown record type `{other}`"))),
        }
    }
    if run.modalities.is_empty() {
        return Err(err(1, "no modalities in header".into()));
    }
    Ok(run)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `fisher.csv` (per-modality Fisher and gap ratio against step) and
/// `miou.csv` (mean, std and per-combo mIoU against epoch), with one column
/// group per run, aligned on the shared step and epoch axes.
pub fn cmd_plotdata(files: &[PathBuf], out_dir: &Path) -> Result<PlotFiles> {
    if files.is_empty() {
        return Err(HarnessError::Invalid("plotdata: at least one metrics file is required".into()));
    }
    let mut runs = files.iter().map(|p| parse(p)).collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeMap::new();
    for run in &mut runs {
        let count = seen.entry(run.label.clone()).or_insert(0usize);
        *count += 1;
        if *count > 1 {
            run.label = format!("{}#{}", run.label, count);
        }
    }

    let mut fisher = String::from("step");
    for r in &runs {
        for m in &r.modalities {
            let _ = write!(fisher, ",{}:{m}", r.label);
        }
        let _ = write!(fisher, ",{}:gap_ratio", r.label);
    }
    fisher.push('\n');
    let steps: BTreeSet<u64> = runs.iter().flat_map(|r| r.fisher.keys().copied()).collect();
    for step in steps {
        let _ = write!(fisher, "{step}");
        for r in &runs {
            let entry = r.fisher.get(&step);
            for m in &r.modalities {
                let _ = write!(fisher, ",{}", cell(entry.and_then(|(f, _)| f.get(m).copied())));
            }
            let _ = write!(fisher, ",{}", cell(entry.and_then(|(_, g)| *g)));
        }
        fisher.push('\n');
    }

    let mut miou = String::from("epoch");
    for r in &runs {
        let _ = write!(miou, ",{0}:mean,{0}:std", r.label);
        for c in &r.combos {
            let _ = write!(miou, ",{}:{c}", r.label);
        }
    }
    miou.push('\n');
    let epochs: BTreeSet<u64> = runs.iter().flat_map(|r| r.miou.keys().copied()).collect();
    for epoch in epochs {
        let _ = write!(miou, "{epoch}");
        for r in &runs {
            let entry = r.miou.get(&epoch);
            let _ = write!(miou, ",{},{}", cell(entry.map(|e| e.0)), cell(entry.map(|e| e.1)));
            for c in &r.combos {
                let _ = write!(miou, ",{}", cell(entry.and_then(|e| e.2.get(c).copied())));
            }
        }
        miou.push('\n');
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = PlotFiles {
        fisher: out_dir.join("fisher.csv"),
        miou: out_dir.join("miou.csv"),
    };
    fs::write(&files.fisher, fisher).map_err(io_err(&files.fisher))?;
    fs::write(&files.miou, miou).map_err(io_err(&files.miou))?;
    Ok(files)
}
