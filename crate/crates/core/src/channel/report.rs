use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated pose. Metrics not computed for a run stay empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub pose_id: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    pub count: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<MetricSummary> {
        if values.is_empty() {
            return None;
        }
        Some(MetricSummary {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        })
    }
}

/// Per-metric min/mean/max over the rows that carry the metric.
pub fn summarize(rows: &[EvalRow]) -> BTreeMap<String, MetricSummary> {
    let mut out = BTreeMap::new();
    let cols: [(&str, fn(&EvalRow) -> Option<f64>); 3] = [("psnr", |r| r.psnr), ("ssim", |r| r.ssim), ("ratio", |r| r.ratio)];
    for (name, get) in cols {
        let v: Vec<f64> = rows.iter().filter_map(get).collect();
        if let Some(s) = MetricSummary::of(&v) {
            out.insert(name.to_string(), s);
        }
    }
    out
}

/// CSV with a `pose_id` column plus one column per requested metric.
pub fn write_eval_csv(path: &Path, rows: &[EvalRow], metrics: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["pose_id"];
    header.extend_from_slice(metrics);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.pose_id.to_string()];
        for m in metrics {
            let v = match *m {
                "psnr" => r.psnr,
                "ssim" => r.ssim,
                "ratio" => r.ratio,
                other => return Err(Error::invalid(format!("unknown metric {other:?}"))),
            };
            rec.push(v.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_summary_json(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let s = serde_json::to_string_pretty(&summarize(rows))?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
