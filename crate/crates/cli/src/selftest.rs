//! Desk-scale invariant suite on seeded synthetic data.

use std::time::Instant;

use cmms::dataset::split_sda;
use cmms::eval::accuracy;
use cmms::graphs::{estimate_delta, pairwise_sq_dists, update_similarity};
use cmms::semi::{fit_sda_homogeneous, fit_sda_homogeneous_parts, SemiOptions};
use cmms::solver::{assemble_constants, fit_uda_with, FitOptions, Hyperparams, LambdaMode, RidgeInitializer};
use cmms::synthetic::{random_problem, GaussianShift};
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<String, String>;

fn fail(e: impl ToString) -> String {
    e.to_string()
}

fn monotone(seed: u64) -> Outcome {
    let opts = FitOptions { early_stop: false, ..FitOptions::default() };
    for s in 0..5 {
        let task = random_problem(seed + s, 3, 12, 60, 50).map_err(fail)?;
        let hyper = Hyperparams { dim: 4, k: 6, ..Hyperparams::default() };
        let (out, _) = fit_uda_with(&task.source, &task.target, &hyper, &RidgeInitializer::default(), &opts)
            .map_err(fail)?;
        for w in out.state.objective_trace.windows(2) {
            if w[1] > w[0] + 1e-9 * w[0].abs() {
                return Err(format!("instance {s}: objective rose from {} to {}", w[0], w[1]));
            }
        }
    }
    Ok("5 instances, objective non-increasing".into())
}

fn similarity_rows(seed: u64) -> Outcome {
    let task = random_problem(seed, 2, 4, 10, 40).map_err(fail)?;
    let a = pairwise_sq_dists(task.target.features()).map_err(fail)?;
    let k = 6;
    let s = update_similarity(&a, k, estimate_delta(&a, k).map_err(fail)?).map_err(fail)?;
    for (i, row) in s.rows().enumerate() {
        let sum: f64 = row.iter().map(|&(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-10 || row.len() > k || row.iter().any(|&(j, w)| w < 0.0 || j == i) {
            return Err(format!("row {i} is not a k-sparse distribution"));
        }
    }
    Ok(format!("{} rows valid", s.n_rows()))
}

fn constraint(seed: u64) -> Outcome {
    let task = random_problem(seed, 3, 10, 50, 40).map_err(fail)?;
    let hyper = Hyperparams { dim: 5, ..Hyperparams::default() };
    let (out, _) = fit_uda_with(&task.source, &task.target, &hyper, &RidgeInitializer::default(), &FitOptions::default())
        .map_err(fail)?;
    let consts = assemble_constants(&task.source, &task.target).map_err(fail)?;
    let p = &out.state.p;
    let d = p.ncols();
    let dev = (p.transpose() * consts.xhx() * p - DMatrix::identity(d, d)).norm();
    if dev < 1e-6 * d as f64 {
        Ok(format!("deviation {dev:.1e}"))
    } else {
        Err(format!("deviation {dev:e}"))
    }
}

fn synthetic_uda(seed: u64) -> Outcome {
    let start = Instant::now();
    let task = GaussianShift::default().generate(seed).map_err(fail)?;
    let hyper = Hyperparams { dim: 2, ..Hyperparams::default() };
    let (out, map) = fit_uda_with(&task.source, &task.target, &hyper, &RidgeInitializer::default(), &FitOptions::default())
        .map_err(fail)?;
    let truth = task.target.require_labels().map_err(fail)?;
    let acc = accuracy(&map.decode(&out.predicted), truth).map_err(fail)?;
    let init = accuracy(&map.decode(&out.initial), truth).map_err(fail)?;
    let detail = format!("accuracy {acc:.1}% vs initializer {init:.1}% in {:.2} s", start.elapsed().as_secs_f64());
    if acc >= 95.0 && acc > init {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sda_reduction(seed: u64) -> Outcome {
    let task = random_problem(seed, 3, 8, 40, 40).map_err(fail)?;
    let hyper = Hyperparams { dim: 3, ..Hyperparams::default() };
    let init = RidgeInitializer::default();
    let (uda, map) = fit_uda_with(&task.source, &task.target, &hyper, &init, &FitOptions::default()).map_err(fail)?;
    let opts = SemiOptions { lambda: LambdaMode::Fixed(1.0), initializer: &init, early_stop: true };
    let sda = fit_sda_homogeneous_parts(&task.source, &DMatrix::zeros(0, 8), &[], &task.target, &hyper, &opts)
        .map_err(fail)?;
    if map.decode(&uda.predicted) == sda.predicted {
        Ok("identical predictions".into())
    } else {
        Err("predictions differ".into())
    }
}

fn sda_labeled_rows(seed: u64) -> Outcome {
    let task = random_problem(seed, 3, 8, 40, 45).map_err(fail)?;
    let split = split_sda(&task.target, 3, seed).map_err(fail)?;
    let fit = fit_sda_homogeneous(&task.source, &split, &Hyperparams { dim: 3, ..Hyperparams::default() })
        .map_err(fail)?;
    if fit.classes.decode(&fit.state.g_l) != split.labeled.require_labels().map_err(fail)? {
        return Err("labeled target rows changed class".into());
    }
    Ok(format!("lambda1 = {:.3}", fit.state.lambda1))
}

pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let checks: [(&'static str, fn(u64) -> Outcome); 6] = [
        ("monotone-objective", monotone),
        ("similarity-rows", similarity_rows),
        ("projection-constraint", constraint),
        ("synthetic-uda", synthetic_uda),
        ("sda-reduction", sda_reduction),
        ("sda-labeled-rows-fixed", sda_labeled_rows),
    ];
    checks
        .iter()
        .map(|&(name, f)| {
            let (passed, detail) = match f(seed) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name, passed, detail }
        })
        .collect()
}
