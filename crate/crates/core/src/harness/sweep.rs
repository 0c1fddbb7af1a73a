use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::EvalSummary;
use super::{cmd_train, io_err, Config, HarnessError, Result};
use crate::metrics::combo_label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    LambdaP,
    LambdaF,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::LambdaP => "lambda_p",
            Self::LambdaF => "lambda_f",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Self::LambdaP => vec![0.0, 0.1, 0.3, 0.5, 0.7],
            Self::LambdaF => vec![0.0, 0.02, 0.04, 0.06],
        }
    }

    /// Applies `value` to `config`. The prediction-level sweep runs without
    /// the feature term; the feature-level sweep keeps the configured
    /// prediction weight.
    fn apply(self, config: &mut Config, value: f64) {
        match self {
            Self::LambdaP => {
                config.train.lambda_p = value;
                config.train.lambda_f = 0.0;
            }
            Self::LambdaF => config.train.lambda_f = value,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda_p" | "lambda-p" => Ok(Self::LambdaP),
            "lambda_f" | "lambda-f" => Ok(Self::LambdaF),
            _ => Err(HarnessError::Invalid(format!("sweep axis `{s}`: expected lambda_p or lambda_f"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub summary: EvalSummary,
    /// Final gap ratio of the probe batch.
    pub gap_ratio: Option<f64>,
    /// Wall-clock training time; not written to the tables.
    pub seconds: f64,
}

/// One full training run per value with everything else fixed, each in its
/// own subdirectory of `out_dir`. Writes `sweep_<axis>.txt` and `.csv`.
pub fn cmd_sweep(config: &Config, axis: SweepAxis, values: Option<&[f64]>, out_dir: &Path) -> Result<Vec<SweepRow>> {
    let grid = values.map_or_else(|| axis.default_grid(), <[f64]>::to_vec);
    if grid.is_empty() {
        return Err(HarnessError::Invalid("sweep: no values given".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &value in &grid {
        let mut run = config.clone();
        axis.apply(&mut run, value);
        run.train.out_dir = out_dir.join(format!("{}={value}", axis.name()));
        let start = Instant::now();
        let outcome = cmd_train(&run)?;
        rows.push(SweepRow {
            value,
            summary: outcome.final_eval,
            gap_ratio: outcome.final_report.gap_ratio,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let (text, csv) = format_sweep_table(axis, &rows);
    for (ext, body) in [("txt", text), ("csv", csv)] {
        let path = out_dir.join(format!("sweep_{}.{ext}", axis.name()));
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(rows)
}

/// `(text, csv)` tables: one row per value, mIoU per combo and its mean, then
/// accuracy per combo and its mean. Values in percent.
pub fn format_sweep_table(axis: SweepAxis, rows: &[SweepRow]) -> (String, String) {
    let labels: Vec<String> = rows
        .first()
        .map(|r| r.summary.combos.iter().map(|c| combo_label(&c.combo)).collect())
        .unwrap_or_default();
    let mut text = format!("{:<9}|", axis.name());
    let mut csv = axis.name().to_string();
    for section in ["mIoU", "Acc"] {
        for l in &labels {
            let _ = write!(text, " {:>7}", l);
            let _ = write!(csv, ",{section} {l}");
        }
        let _ = write!(text, " | {:>7} |", "Mean");
        let _ = write!(csv, ",{section} Mean");
    }
    text.push('\n');
    csv.push('\n');
    for row in rows {
        let s = &row.summary;
        let _ = write!(text, "{:<9}|", row.value);
        let _ = write!(csv, "{}", row.value);
        for (values, mean) in [
            (s.combos.iter().map(|c| c.miou).collect::<Vec<_>>(), s.mean),
            (s.combos.iter().map(|c| c.accuracy).collect(), s.mean_accuracy),
        ] {
            for v in &values {
                let _ = write!(text, " {:>7.2}", 100.0 * v);
                let _ = write!(csv, ",{}", 100.0 * v);
            }
            let _ = write!(text, " | {:>7.2} |", 100.0 * mean);
            let _ = write!(csv, ",{}", 100.0 * mean);
        }
        text.push('\n');
        csv.push('\n');
    }
    (text, csv)
}
