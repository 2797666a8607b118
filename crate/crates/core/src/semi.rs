//! Semi-supervised adaptation with a few labeled target samples.
//!
//! The homogeneous mode shares one projection between domains. The
//! heterogeneous mode stacks the two feature spaces block-diagonally so that
//! `P = [P_s; P_t]` and the same loop applies unchanged.
//!
//! Labeled target rows keep their labels throughout. Their class means enter
//! the centroid-matching term with weight `λ₂`, the source class means with
//! `λ₁ = 1 − λ₂`, and the balance is re-fitted in closed form after every
//! centroid update.

use nalgebra::DMatrix;

use crate::dataset::{ClassMap, Dataset, SdaSplit};
use crate::error::{CmmsError, Result};
use crate::solver::fit::lambda_closed_form;
use crate::solver::{
    run_alternating, ConstantMatrices, FitOptions, FitOutput, Hyperparams, LabelInitializer, LambdaMode, ModelState,
    RidgeInitializer,
};

#[derive(Debug, Clone)]
pub struct SemiState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub base: ModelState,
    /// Fixed class indices of the labeled target rows.
    pub g_l: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SemiFit {
    pub state: SemiState,
    /// Predicted labels of the unlabeled target rows, original label values.
    pub predicted: Vec<i64>,
    pub output: FitOutput,
    pub classes: ClassMap,
}

impl SemiFit {
    /// Row-split of the stacked projection for the heterogeneous mode:
    /// `(P_s, P_t)` with `source_dims` rows in the first block.
    pub fn split_projection(&self, source_dims: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = &self.state.base.p;
        let rest = p.nrows() - source_dims;
        (p.rows(0, source_dims).into_owned(), p.rows(source_dims, rest).into_owned())
    }
}

/// Balance factors minimising `‖λ₁PᵀX_sE_s + (1−λ₁)PᵀX_lE_l − F‖²` over
/// `λ₁ ∈ [0, 1]`. `xs_es` and `xl_el` are the `m × C` class-mean matrices
/// `X_s E_s` and `X_l E_l`. When the two centroid sets coincide every `λ₁`
/// is optimal and `0.5` is returned.
pub fn update_lambda(p: &DMatrix<f64>, xs_es: &DMatrix<f64>, xl_el: &DMatrix<f64>, f: &DMatrix<f64>) -> (f64, f64) {
    let pt = p.transpose();
    lambda_closed_form(&(&pt * xs_es), &(&pt * xl_el), f)
}

/// Options for the semi-supervised fits.
#[derive(Clone, Copy)]
pub struct SemiOptions<'a> {
    pub lambda: LambdaMode,
    pub initializer: &'a dyn LabelInitializer,
    pub early_stop: bool,
}

impl Default for SemiOptions<'_> {
    fn default() -> Self {
        SemiOptions {
            lambda: LambdaMode::Adaptive(0.5),
            initializer: &RidgeInitializer { ridge: 1.0 },
            early_stop: true,
        }
    }
}

fn finish(out: FitOutput, classes: ClassMap) -> SemiFit {
    let n_l = out.state.g_t.len() - out.predicted.len();
    let state = SemiState {
        lambda1: out.state.lambda.0,
        lambda2: out.state.lambda.1,
        base: out.state.clone(),
        g_l: out.state.g_t[..n_l].to_vec(),
    };
    let predicted = classes.decode(&out.predicted);
    SemiFit {
        state,
        predicted,
        output: out,
        classes,
    }
}

fn encode_labeled(classes: &ClassMap, labeled_y: &[i64]) -> Result<Vec<usize>> {
    classes
        .encode(labeled_y)
        .map_err(|e| CmmsError::InvalidInput(format!("labeled target: {e}")))
}

/// Homogeneous semi-supervised fit on a prepared split.
pub fn fit_sda_homogeneous(source: &Dataset, split: &SdaSplit, hyper: &Hyperparams) -> Result<SemiFit> {
    fit_sda_homogeneous_parts(
        source,
        split.labeled.features(),
        split.labeled.require_labels()?,
        &split.unlabeled,
        hyper,
        &SemiOptions::default(),
    )
}

/// Homogeneous fit from raw parts; `labeled_x` (rows = samples) may be empty.
///
/// The initializer is trained on the source plus the labeled target rows and
/// applied to the unlabeled rows.
pub fn fit_sda_homogeneous_parts(
    source: &Dataset,
    labeled_x: &DMatrix<f64>,
    labeled_y: &[i64],
    unlabeled: &Dataset,
    hyper: &Hyperparams,
    opts: &SemiOptions<'_>,
) -> Result<SemiFit> {
    let m = source.n_dims();
    if unlabeled.n_dims() != m || (labeled_x.nrows() > 0 && labeled_x.ncols() != m) {
        return Err(CmmsError::DimensionMismatch(format!(
            "source has {m} dims, target has {}",
            unlabeled.n_dims()
        )));
    }
    if labeled_x.nrows() != labeled_y.len() {
        return Err(CmmsError::DimensionMismatch("labeled target rows and labels differ in count".into()));
    }
    let classes = ClassMap::from_labels(source.require_labels()?);
    let ys = classes.encode(source.require_labels()?)?;
    let yl = encode_labeled(&classes, labeled_y)?;
    let labeled_x = if labeled_x.nrows() == 0 { DMatrix::zeros(0, m) } else { labeled_x.clone() };

    let consts = ConstantMatrices::from_blocks(
        &source.features().transpose(),
        &ys,
        &labeled_x.transpose(),
        &yl,
        &unlabeled.features().transpose(),
        classes.n_classes(),
    )?;

    let mut train_x = DMatrix::zeros(source.n_samples() + labeled_x.nrows(), m);
    train_x.rows_mut(0, source.n_samples()).copy_from(source.features());
    train_x.rows_mut(source.n_samples(), labeled_x.nrows()).copy_from(&labeled_x);
    let train_y: Vec<usize> = ys.iter().chain(&yl).copied().collect();
    let init_u = opts
        .initializer
        .initial_labels(&train_x, &train_y, classes.n_classes(), unlabeled.features())?;
    let initial: Vec<usize> = yl.iter().chain(&init_u).copied().collect();

    let fit_opts = FitOptions {
        lambda: opts.lambda,
        reestimate_delta: false,
        early_stop: opts.early_stop,
    };
    let out = run_alternating(&consts, initial, hyper, &fit_opts)?;
    Ok(finish(out, classes))
}

/// Heterogeneous semi-supervised fit: source and target feature spaces may
/// differ in dimension. The target-side initializer is trained on the
/// labeled target rows alone.
pub fn fit_sda_heterogeneous(source: &Dataset, split: &SdaSplit, hyper: &Hyperparams) -> Result<SemiFit> {
    fit_sda_heterogeneous_with(source, split, hyper, &SemiOptions::default())
}

pub fn fit_sda_heterogeneous_with(
    source: &Dataset,
    split: &SdaSplit,
    hyper: &Hyperparams,
    opts: &SemiOptions<'_>,
) -> Result<SemiFit> {
    let (ms, mt) = (source.n_dims(), split.labeled.n_dims());
    if split.unlabeled.n_dims() != mt {
        return Err(CmmsError::DimensionMismatch("labeled and unlabeled target dims differ".into()));
    }
    let classes = ClassMap::from_labels(source.require_labels()?);
    let ys = classes.encode(source.require_labels()?)?;
    let yl = encode_labeled(&classes, split.labeled.require_labels()?)?;

    let block = |x: &DMatrix<f64>, offset: usize| {
        let mut out = DMatrix::zeros(ms + mt, x.nrows());
        out.rows_mut(offset, x.ncols()).copy_from(&x.transpose());
        out
    };
    let consts = ConstantMatrices::from_blocks(
        &block(source.features(), 0),
        &ys,
        &block(split.labeled.features(), ms),
        &yl,
        &block(split.unlabeled.features(), ms),
        classes.n_classes(),
    )?;

    let init_u = opts.initializer.initial_labels(
        split.labeled.features(),
        &yl,
        classes.n_classes(),
        split.unlabeled.features(),
    )?;
    let initial: Vec<usize> = yl.iter().chain(&init_u).copied().collect();
    let fit_opts = FitOptions {
        lambda: opts.lambda,
        reestimate_delta: false,
        early_stop: opts.early_stop,
    };
    let out = run_alternating(&consts, initial, hyper, &fit_opts)?;
    Ok(finish(out, classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_substitution_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let xs_es = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let xl_el = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let f_src = p.transpose() * &xs_es;
        let f_lab = p.transpose() * &xl_el;
        assert_eq!(update_lambda(&p, &xs_es, &xl_el, &f_src).0, 1.0);
        assert_eq!(update_lambda(&p, &xs_es, &xl_el, &f_lab).0, 0.0);
        let (l1, l2) = update_lambda(&p, &xs_es, &xs_es, &f_lab);
        assert_eq!((l1, l2), (0.5, 0.5));
    }
}
