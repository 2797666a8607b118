use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use cmms::dataset::{split_sda, zscore, Dataset, PcaModel, SdaSplit};
use cmms::eval::{fingerprint, run_ablation, summary_csv, write_reports, Report};
use cmms::semi::{fit_sda_heterogeneous, fit_sda_homogeneous};
use cmms::solver::{fit_uda_with, FitOptions, RidgeInitializer, Variant};
use nalgebra::DMatrix;

use crate::config::{Mode, RunConfig};
use crate::CliError;

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<Report>,
    /// `(target row, predicted label)` for every row that was predicted.
    pub predictions: Vec<(usize, i64)>,
    pub summary: String,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".to_string())
}

fn load(config: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let source = Dataset::load(&config.source, Some(&config.source_labels), stem(&config.source))?;
    let target = Dataset::load(&config.target, config.target_labels.as_deref(), stem(&config.target))?;
    Ok((source, target))
}

fn reduce_jointly(source: &Dataset, target: &Dataset, dim: usize) -> Result<(Dataset, Dataset), CliError> {
    let (ns, m) = (source.n_samples(), source.n_dims());
    let mut stacked = DMatrix::zeros(ns + target.n_samples(), m);
    stacked.rows_mut(0, ns).copy_from(source.features());
    stacked.rows_mut(ns, target.n_samples()).copy_from(target.features());
    let model = PcaModel::fit(&stacked, dim)?;
    Ok((
        source.with_features(model.transform(source.features())?)?,
        target.with_features(model.transform(target.features())?)?,
    ))
}

fn reduce_alone(d: &Dataset, dim: usize) -> Result<Dataset, CliError> {
    let model = PcaModel::fit(d.features(), dim)?;
    Ok(d.with_features(model.transform(d.features())?)?)
}

/// Per-domain z-score, then PCA: one shared basis when both domains live in
/// the same space, one basis per domain otherwise.
pub fn preprocess(config: &RunConfig, source: Dataset, target: Dataset) -> Result<(Dataset, Dataset), CliError> {
    let (mut s, mut t) = if config.zscore {
        (zscore(&source)?, zscore(&target)?)
    } else {
        (source, target)
    };
    if let Some(dim) = config.pca {
        if config.mode == Mode::SdaHetero {
            s = reduce_alone(&s, dim)?;
            t = reduce_alone(&t, dim)?;
        } else {
            (s, t) = reduce_jointly(&s, &t, dim)?;
        }
    }
    Ok((s, t))
}

pub fn execute(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let (source, target) = load(config)?;
    if config.mode != Mode::SdaHetero && source.n_dims() != target.n_dims() {
        return Err(CliError::Data(format!(
            "source has {} features, target has {}; use sda-hetero for different feature spaces",
            source.n_dims(),
            target.n_dims()
        )));
    }
    let (source, target) = preprocess(config, source, target)?;
    let fp = fingerprint(&[&source, &target]);
    let echo = serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?;
    let task = format!("{}->{}", source.name(), target.name());
    let init = RidgeInitializer::default();

    let (reports, predictions) = match config.mode {
        Mode::Uda => {
            let start = Instant::now();
            let (out, map) = fit_uda_with(&source, &target, &config.hyper, &init, &FitOptions::default())?;
            let secs = start.elapsed().as_secs_f64();
            let pred = map.decode(&out.predicted);
            let reports = match target.labels() {
                Some(truth) => vec![Report::from_fit(
                    &task,
                    "uda",
                    &out,
                    &pred,
                    &map.decode(&out.initial),
                    truth,
                    &config.hyper,
                    echo,
                    config.seed,
                    fp,
                    secs,
                )?],
                None => Vec::new(),
            };
            (reports, pred.into_iter().enumerate().collect())
        }
        Mode::SdaHomo | Mode::SdaHetero => {
            let split: SdaSplit = split_sda(&target, config.per_class, config.seed)?;
            let start = Instant::now();
            let fit = if config.mode == Mode::SdaHomo {
                fit_sda_homogeneous(&source, &split, &config.hyper)?
            } else {
                fit_sda_heterogeneous(&source, &split, &config.hyper)?
            };
            let secs = start.elapsed().as_secs_f64();
            let truth = split.unlabeled.require_labels()?;
            let report = Report::from_fit(
                &task,
                config.mode.as_str(),
                &fit.output,
                &fit.predicted,
                &fit.classes.decode(&fit.output.initial),
                truth,
                &config.hyper,
                echo,
                config.seed,
                fp,
                secs,
            )?;
            let preds = split.unlabeled_indices.iter().copied().zip(fit.predicted.iter().copied()).collect();
            (vec![report], preds)
        }
        Mode::Ablate => {
            let mut reports = run_ablation(&source, &target, &config.hyper, &Variant::ALL, &init, config.seed)?;
            for r in &mut reports {
                r.config = echo.clone();
            }
            (reports, Vec::new())
        }
    };
    let summary = if reports.is_empty() {
        String::new()
    } else {
        summary_csv(&reports)?
    };
    Ok(RunOutcome {
        reports,
        predictions,
        summary,
    })
}

/// Write `reports.jsonl`, `summary.csv` and `predictions.csv` under `config.out`.
pub fn write_outputs(config: &RunConfig, outcome: &RunOutcome) -> Result<(), CliError> {
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    if !outcome.reports.is_empty() {
        write_reports(out.join("reports.jsonl"), &outcome.reports)?;
        fs::write(out.join("summary.csv"), &outcome.summary).map_err(|e| CliError::Io(e.to_string()))?;
    }
    if !outcome.predictions.is_empty() {
        let mut text = String::from("row,label\n");
        for (row, label) in &outcome.predictions {
            writeln!(text, "{row},{label}").expect("writing to a String");
        }
        fs::write(out.join("predictions.csv"), text).map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}
