use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    centroids_from_projected, objective_terms, update_g, update_p, ConstantMatrices, Hyperparams, LabelInitializer,
    ModelState, RidgeInitializer, TargetManifold, Variant,
};
use crate::dataset::{ClassMap, Dataset};
use crate::error::{CmmsError, Result};
use crate::graphs::{estimate_delta_cols, heat_kernel_similarity_cols, TargetGraph};

/// How the source/labeled-target balance `(λ₁, λ₂)` evolves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMode {
    /// Held at `(λ₁, 1 − λ₁)`.
    Fixed(f64),
    /// Closed-form update after every centroid update, starting from `λ₁`.
    Adaptive(f64),
}

impl LambdaMode {
    fn initial(&self) -> (f64, f64) {
        match *self {
            LambdaMode::Fixed(l) | LambdaMode::Adaptive(l) => (l, 1.0 - l),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub lambda: LambdaMode,
    /// Re-estimate `δ` from projected distances every iteration instead of
    /// fixing it from input-space distances once.
    pub reestimate_delta: bool,
    /// Stop before `max_iter` when assignments are stable or the objective
    /// has stopped decreasing.
    pub early_stop: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lambda: LambdaMode::Fixed(1.0),
            reestimate_delta: false,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub objective: f64,
    pub changed_assignments: usize,
    pub empty_clusters: usize,
    pub effective_d: usize,
    pub lambda1: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub state: ModelState,
    /// Predicted class index for every unlabeled target sample.
    pub predicted: Vec<usize>,
    /// Assignments produced by the label initializer, same indexing.
    pub initial: Vec<usize>,
    pub log: Vec<IterationLog>,
    pub delta: f64,
    /// Neighbourhood size after clamping to the target size.
    pub k: usize,
}

fn clamp_k(k: usize, n_t: usize) -> Result<usize> {
    if n_t < 3 {
        return Err(CmmsError::InvalidInput(format!(
            "target domain needs at least 3 samples for the neighbour graph, got {n_t}"
        )));
    }
    let limit = n_t - 2;
    if k > limit {
        log::warn!("neighbourhood size k={k} exceeds target size limit, using k={limit}");
        Ok(limit)
    } else {
        Ok(k)
    }
}

/// Optimal `λ₁ ∈ [0, 1]` for `‖λ₁ A + (1 − λ₁) B − F‖²` given projected
/// source centroids `A` and labeled-target centroids `B`.
pub(crate) fn lambda_closed_form(src: &DMatrix<f64>, lab: &DMatrix<f64>, f: &DMatrix<f64>) -> (f64, f64) {
    let j = src - lab;
    let m = f - lab;
    let jj = j.norm_squared();
    let l1 = if jj < 1e-12 {
        0.5
    } else {
        (j.dot(&m) / jj).clamp(0.0, 1.0)
    };
    (l1, 1.0 - l1)
}

/// The alternating loop on assembled constants. `initial` holds one class
/// index per target column; its first `n_l` entries are the fixed labeled
/// target classes.
pub fn run_alternating(
    consts: &ConstantMatrices,
    initial: Vec<usize>,
    hyper: &Hyperparams,
    opts: &FitOptions,
) -> Result<FitOutput> {
    hyper.validate()?;
    let n_t = consts.n_t();
    if initial.len() != n_t {
        return Err(CmmsError::DimensionMismatch(format!(
            "{} initial labels for {n_t} target samples",
            initial.len()
        )));
    }
    if initial[..consts.n_l] != consts.labeled_target_labels[..] {
        return Err(CmmsError::InvalidInput("initial labels disagree with labeled target rows".into()));
    }
    let k = clamp_k(hyper.k, n_t)?;
    let xt0 = consts.target_cols().into_owned();
    let mut delta = estimate_delta_cols(&xt0, k)?;
    log::debug!("neighbour scale delta = {delta:e} (k = {k})");

    let mut manifold = match hyper.variant {
        Variant::Full | Variant::Cm | Variant::Op => TargetManifold::Graph(TargetGraph::learn(&xt0, k, delta)?),
        Variant::Pa => TargetManifold::Graph(TargetGraph::from_similarity(heat_kernel_similarity_cols(&xt0, k)?, delta, k)?),
        Variant::Rm => TargetManifold::None,
        Variant::Ds => TargetManifold::ClassScatter(initial.clone()),
    };
    drop(xt0);

    let fixed = consts.labeled_target_labels.clone();
    let mut lambda = opts.lambda.initial();
    let mut g_t = initial.clone();
    let mut trace = Vec::with_capacity(hyper.max_iter);
    let mut log = Vec::with_capacity(hyper.max_iter);
    let mut p = DMatrix::zeros(consts.dims(), 0);
    let mut f = DMatrix::zeros(0, consts.n_classes);
    let mut effective_d = 0;
    let mut iteration = 0;

    for t in 0..hyper.max_iter {
        iteration = t + 1;
        let eig = update_p(consts, &manifold, &g_t, lambda, hyper)?;
        effective_d = eig.effective_d;
        p = eig.vectors;
        let pt = p.transpose();
        let zt = &pt * consts.target_cols();

        f = centroids_from_projected(&(&pt * consts.xe(lambda)), &zt, &g_t, consts.n_classes, hyper.alpha)?;

        if let LambdaMode::Adaptive(_) = opts.lambda {
            lambda = lambda_closed_form(&(&pt * &consts.xs_es), &(&pt * &consts.xl_el), &f);
        }

        let new_g = update_g(&zt, &f, &fixed);
        let changed = new_g.iter().zip(&g_t).filter(|(a, b)| a != b).count();
        g_t = new_g;

        match hyper.variant {
            Variant::Full | Variant::Cm => {
                if opts.reestimate_delta {
                    delta = estimate_delta_cols(&zt, k)?;
                }
                manifold = TargetManifold::Graph(TargetGraph::learn(&zt, k, delta)?);
            }
            Variant::Ds => manifold = TargetManifold::ClassScatter(g_t.clone()),
            Variant::Rm | Variant::Pa | Variant::Op => {}
        }

        let state = ModelState {
            p: p.clone(),
            f: f.clone(),
            g_t: g_t.clone(),
            manifold: manifold.clone(),
            lambda,
            objective_trace: Vec::new(),
            iteration,
            effective_d,
        };
        let obj = objective_terms(&state, consts, hyper)?.total();
        let mut counts = vec![0usize; consts.n_classes];
        for &c in &g_t {
            counts[c] += 1;
        }
        let empty_clusters = counts.iter().filter(|&&c| c == 0).count();
        if empty_clusters > 0 {
            log::info!("iteration {iteration}: {empty_clusters} empty target cluster(s)");
        }
        log::debug!("iteration {iteration}: objective {obj:.10e}, {changed} assignment(s) changed");
        log.push(IterationLog {
            iteration,
            objective: obj,
            changed_assignments: changed,
            empty_clusters,
            effective_d,
            lambda1: lambda.0,
        });
        let prev = trace.last().copied();
        trace.push(obj);

        if opts.early_stop {
            if changed == 0 {
                break;
            }
            if let Some(prev) = prev {
                if (prev - obj) / prev.abs().max(f64::MIN_POSITIVE) < hyper.tol {
                    break;
                }
            }
        }
    }

    let predicted = g_t[consts.n_l..].to_vec();
    let initial_unlabeled = initial[consts.n_l..].to_vec();
    Ok(FitOutput {
        state: ModelState {
            p,
            f,
            g_t,
            manifold,
            lambda,
            objective_trace: trace,
            iteration,
            effective_d,
        },
        predicted,
        initial: initial_unlabeled,
        log,
        delta,
        k,
    })
}

/// Unsupervised adaptation with the default ridge initializer. Returns the
/// final state and predicted target labels in the source label vocabulary.
pub fn fit_uda(source: &Dataset, target: &Dataset, hyper: &Hyperparams) -> Result<(ModelState, Vec<i64>)> {
    let (out, map) = fit_uda_with(source, target, hyper, &RidgeInitializer::default(), &FitOptions::default())?;
    let labels = map.decode(&out.predicted);
    Ok((out.state, labels))
}

pub fn fit_uda_with(
    source: &Dataset,
    target: &Dataset,
    hyper: &Hyperparams,
    initializer: &dyn LabelInitializer,
    opts: &FitOptions,
) -> Result<(FitOutput, ClassMap)> {
    let consts = super::assemble_constants(source, target)?;
    let map = ClassMap::from_labels(source.require_labels()?);
    let ys = map.encode(source.require_labels()?)?;
    let initial = initializer.initial_labels(source.features(), &ys, map.n_classes(), target.features())?;
    let out = run_alternating(&consts, initial, hyper, opts)?;
    Ok((out, map))
}
