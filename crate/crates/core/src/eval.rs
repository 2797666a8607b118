//! Accuracy metrics, structured run reports and ablation orchestration.
//!
//! Reports are written as JSON Lines (one report per line, each carrying
//! `schema_version`). The summary table is CSV with one row per task and one
//! column per method.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{ClassMap, Dataset};
use crate::error::{CmmsError, Result};
use crate::solver::{fit_uda_with, FitOptions, FitOutput, Hyperparams, LabelInitializer, Variant};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Percentage of positions where `pred` equals `truth`.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(CmmsError::DimensionMismatch(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(CmmsError::InvalidInput("accuracy of an empty label set".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(100.0 * hits as f64 / truth.len() as f64)
}

/// Accuracy restricted to each true class `0..n_classes`.
pub fn per_class_accuracy(pred: &[usize], truth: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(CmmsError::DimensionMismatch(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if t >= n_classes {
            return Err(CmmsError::InvalidInput(format!("true class {t} outside 0..{n_classes}")));
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    if let Some(c) = totals.iter().position(|&t| t == 0) {
        return Err(CmmsError::InvalidInput(format!("class {c} does not occur in the ground truth")));
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| 100.0 * h as f64 / t as f64)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Original label value for each entry of `per_class_accuracy`.
    pub class_labels: Vec<i64>,
    pub per_class_accuracy: Vec<f64>,
    pub mean_per_class: f64,
}

impl Metrics {
    /// Metrics over the classes present in `truth`.
    pub fn compute(pred: &[i64], truth: &[i64]) -> Result<Self> {
        let acc = accuracy(pred, truth)?;
        let map = ClassMap::from_labels(truth);
        let t = map.encode(truth)?;
        // predictions of classes absent from the truth never match
        let p: Vec<usize> = pred.iter().map(|&l| map.index_of(l).unwrap_or(usize::MAX)).collect();
        let per_class = per_class_accuracy(&p, &t, map.n_classes())?;
        let mean = per_class.iter().sum::<f64>() / per_class.len() as f64;
        Ok(Metrics {
            accuracy: acc,
            class_labels: map.classes().to_vec(),
            per_class_accuracy: per_class,
            mean_per_class: mean,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub task: String,
    pub mode: String,
    pub method: String,
    pub metrics: Metrics,
    /// Accuracy of the label initializer alone.
    pub init_accuracy: f64,
    pub iterations_run: usize,
    pub objective_trace: Vec<f64>,
    pub effective_dim: usize,
    pub delta: f64,
    pub lambda1: f64,
    pub hyperparams: Hyperparams,
    /// Free-form resolved run configuration.
    pub config: serde_json::Value,
    pub seed: u64,
    /// SHA-256 prefix of the preprocessed inputs.
    pub preprocessing_fingerprint: String,
    pub wall_time_secs: f64,
}

impl Report {
    /// Build a report from a finished fit. `pred`/`init` are original label values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fit(
        task: &str,
        mode: &str,
        out: &FitOutput,
        pred: &[i64],
        init: &[i64],
        truth: &[i64],
        hyper: &Hyperparams,
        config: serde_json::Value,
        seed: u64,
        fingerprint: String,
        wall_time_secs: f64,
    ) -> Result<Self> {
        Ok(Report {
            schema_version: REPORT_SCHEMA_VERSION,
            task: task.to_string(),
            mode: mode.to_string(),
            method: hyper.variant.method_name(),
            metrics: Metrics::compute(pred, truth)?,
            init_accuracy: accuracy(init, truth)?,
            iterations_run: out.state.iteration,
            objective_trace: out.state.objective_trace.clone(),
            effective_dim: out.state.effective_d,
            delta: out.delta,
            lambda1: out.state.lambda.0,
            hyperparams: hyper.clone(),
            config,
            seed,
            preprocessing_fingerprint: fingerprint,
            wall_time_secs,
        })
    }

    /// Serialized form with `wall_time_secs` zeroed, for reproducibility checks.
    pub fn deterministic_payload(&self) -> String {
        let mut r = self.clone();
        r.wall_time_secs = 0.0;
        serde_json::to_string(&r).expect("report serializes")
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn parse_reports(text: &str) -> Result<Vec<Report>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CmmsError::Report(format!("line {}: {e}", i + 1)))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == REPORT_SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(CmmsError::Report(format!("line {}: unsupported schema_version {v}", i + 1))),
            None => return Err(CmmsError::Report(format!("line {}: missing schema_version", i + 1))),
        }
        let report: Report =
            serde_json::from_value(value).map_err(|e| CmmsError::Report(format!("line {}: {e}", i + 1)))?;
        out.push(report);
    }
    Ok(out)
}

pub fn write_reports(path: impl AsRef<Path>, reports: &[Report]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in reports {
        text.push_str(&r.to_json_line());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CmmsError::io(path, e))
}

pub fn read_reports(path: impl AsRef<Path>) -> Result<Vec<Report>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CmmsError::io(path, e))?;
    parse_reports(&text)
}

/// CSV table of accuracies: rows are tasks, columns are methods, in first-seen
/// order. Missing cells are empty.
pub fn summary_csv(reports: &[Report]) -> Result<String> {
    let mut tasks: Vec<String> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for r in reports {
        if !tasks.contains(&r.task) {
            tasks.push(r.task.clone());
        }
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        cells.insert((r.task.clone(), r.method.clone()), r.metrics.accuracy);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["task".to_string()];
    header.extend(methods.iter().cloned());
    w.write_record(&header).map_err(|e| CmmsError::Report(e.to_string()))?;
    for t in &tasks {
        let mut row = vec![t.clone()];
        for m in &methods {
            row.push(
                cells
                    .get(&(t.clone(), m.clone()))
                    .map(|a| format!("{a:.1}"))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row).map_err(|e| CmmsError::Report(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CmmsError::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CmmsError::Report(e.to_string()))
}

/// SHA-256 (hex, first 16 bytes) over the features and labels of the datasets.
pub fn fingerprint(datasets: &[&Dataset]) -> String {
    let mut h = Sha256::new();
    for d in datasets {
        h.update((d.n_samples() as u64).to_le_bytes());
        h.update((d.n_dims() as u64).to_le_bytes());
        for r in 0..d.n_samples() {
            for c in 0..d.n_dims() {
                h.update(d.features()[(r, c)].to_le_bytes());
            }
        }
        if let Some(l) = d.labels() {
            for v in l {
                h.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(&h.finalize()[..16])
}

/// Run every requested variant on the same preprocessed task.
pub fn run_ablation(
    source: &Dataset,
    target: &Dataset,
    hyper: &Hyperparams,
    variants: &[Variant],
    initializer: &dyn LabelInitializer,
    seed: u64,
) -> Result<Vec<Report>> {
    let truth = target.require_labels()?;
    let fp = fingerprint(&[source, target]);
    let task = format!("{}->{}", source.name(), target.name());
    variants
        .iter()
        .map(|&v| {
            let h = Hyperparams { variant: v, ..hyper.clone() };
            let start = Instant::now();
            let (out, map) = fit_uda_with(source, target, &h, initializer, &FitOptions::default())?;
            let secs = start.elapsed().as_secs_f64();
            Report::from_fit(
                &task,
                "ablate",
                &out,
                &map.decode(&out.predicted),
                &map.decode(&out.initial),
                truth,
                &h,
                serde_json::Value::Null,
                seed,
                fp.clone(),
                secs,
            )
        })
        .collect()
}
