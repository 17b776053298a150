//! Long-format CSV datasets (`output_id,x,y`) and prediction files.

use std::path::Path;

use mgp_core::predict::PredictiveGaussian;
use mgp_core::structures::{Dataset, OutputSeries};

use crate::error::{io_err, BenchError, Result};

const COLUMNS: [&str; 3] = ["output_id", "x", "y"];

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    /// Output ids in first-appearance order.
    pub ids: Vec<String>,
    /// Per-output `(mean, sd)` removed by standardization; `(0, 1)` when off.
    pub scaling: Vec<(f64, f64)>,
}

/// Reads a CSV with columns `output_id`, `x`, `y` (any order, extra columns
/// ignored). Rows are grouped by `output_id` in order of first appearance.
/// With `standardize`, each output's `y` is shifted and scaled to zero mean
/// and unit variance.
pub fn load_csv(path: &Path, standardize: bool) -> Result<LoadedData> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| BenchError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut index = [0usize; 3];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| BenchError::Parse {
                line: 1,
                message: format!("missing column `{name}`"),
            })?;
    }

    let mut ids: Vec<String> = Vec::new();
    let mut series: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| BenchError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| -> Result<&str> {
            record.get(index[k]).ok_or_else(|| BenchError::Parse {
                line,
                message: format!("missing value for `{}`", COLUMNS[k]),
            })
        };
        let number = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| BenchError::Parse {
                    line,
                    message: format!("column `{}`: `{raw}` is not a finite number", COLUMNS[k]),
                })
        };
        let id = field(0)?.to_string();
        let (x, y) = (number(1)?, number(2)?);
        let slot = match ids.iter().position(|i| *i == id) {
            Some(s) => s,
            None => {
                ids.push(id);
                series.push((Vec::new(), Vec::new()));
                ids.len() - 1
            }
        };
        series[slot].0.push(x);
        series[slot].1.push(y);
    }
    if ids.is_empty() {
        return Err(BenchError::EmptyFile(path.to_path_buf()));
    }

    let mut scaling = Vec::with_capacity(ids.len());
    let outputs = series
        .into_iter()
        .map(|(x, mut y)| {
            let (mean, sd) = if standardize { moments(&y) } else { (0.0, 1.0) };
            y.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            scaling.push((mean, sd));
            OutputSeries::new(x, y)
        })
        .collect();
    Ok(LoadedData {
        dataset: Dataset::new(outputs)?,
        ids,
        scaling,
    })
}

fn moments(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Writes `x,mean,variance` rows.
pub fn write_predictions(path: &Path, xs: &[f64], preds: &[PredictiveGaussian]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let to_io = |e: csv::Error| BenchError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(["x", "mean", "variance"]).map_err(to_io)?;
    for (x, p) in xs.iter().zip(preds) {
        w.write_record([x.to_string(), p.mean.to_string(), p.variance.to_string()])
            .map_err(to_io)?;
    }
    w.flush().map_err(io_err(path))
}
