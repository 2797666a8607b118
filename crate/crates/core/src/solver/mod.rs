//! Unsupervised CMMS: constant matrices, the four block updates, the
//! objective, and the alternating loop.
//!
//! All sample matrices here are `m × n` with one sample per column, ordered
//! `[source | labeled target | unlabeled target]`. In the unsupervised case
//! the labeled-target block is empty. Class indices are dense and 0-based.

pub(crate) mod fit;
pub mod init;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CmmsError, Result};
use crate::graphs::{class_scatter_gram, class_scatter_trace, class_sizes, TargetGraph};
use crate::numerics::{gen_eig_smallest, EigResult};

pub use fit::{fit_uda, fit_uda_with, run_alternating, FitOptions, FitOutput, IterationLog, LambdaMode};
pub use init::{init_labels, LabelInitializer, NearestCentroidInitializer, RidgeInitializer};

/// Model variants used for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// All terms, self-learned target graph.
    #[default]
    Full,
    /// Centroid matching only: the manifold weight is forced to zero.
    Cm,
    /// Target manifold term removed; source discriminative term kept.
    Rm,
    /// Fixed heat-kernel k-NN graph built once in the input space.
    Pa,
    /// Target intra-class scatter from current pseudo-labels instead of a graph.
    Ds,
    /// Self-learned graph in the input space, frozen afterwards.
    Op,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Cm, Variant::Rm, Variant::Pa, Variant::Ds, Variant::Op, Variant::Full];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Cm => "cm",
            Variant::Rm => "rm",
            Variant::Pa => "pa",
            Variant::Ds => "ds",
            Variant::Op => "op",
        }
    }

    pub fn method_name(&self) -> String {
        match self {
            Variant::Full => "CMMS".to_string(),
            v => format!("CMMS_{}", v.as_str()),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = CmmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "cm" => Ok(Variant::Cm),
            "rm" => Ok(Variant::Rm),
            "pa" => Ok(Variant::Pa),
            "ds" => Ok(Variant::Ds),
            "op" => Ok(Variant::Op),
            other => Err(CmmsError::InvalidInput(format!(
                "unknown variant {other:?} (expected full, cm, rm, pa, ds or op)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub dim: usize,
    pub k: usize,
    pub max_iter: usize,
    /// Relative objective decrease below which the loop stops.
    pub tol: f64,
    pub variant: Variant,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.1,
            beta: 0.1,
            gamma: 5.0,
            dim: 100,
            k: 10,
            max_iter: 10,
            tol: 1e-6,
            variant: Variant::Full,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(CmmsError::InvalidInput(what.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and >= 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and >= 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and >= 0");
        }
        if self.dim < 1 {
            return bad("subspace dimension must be >= 1");
        }
        if self.k < 1 {
            return bad("neighbourhood size k must be >= 1");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be >= 1");
        }
        if self.tol.is_nan() {
            return bad("tol must not be NaN");
        }
        Ok(())
    }

    /// Manifold weight actually used by the variant.
    pub fn effective_gamma(&self) -> f64 {
        if self.variant == Variant::Cm {
            0.0
        } else {
            self.gamma
        }
    }
}

/// Data and label-derived constants shared by every iteration.
#[derive(Debug, Clone)]
pub struct ConstantMatrices {
    /// `m × n` joined samples.
    pub x: DMatrix<f64>,
    /// `n_s × C` source centroid selector: `1/n_s^c` on class-`c` rows.
    pub e_s: DMatrix<f64>,
    /// `n_l × C` labeled-target centroid selector, built like `e_s`.
    pub e_l: DMatrix<f64>,
    pub source_labels: Vec<usize>,
    pub labeled_target_labels: Vec<usize>,
    pub n_s: usize,
    pub n_l: usize,
    pub n_u: usize,
    pub n_classes: usize,
    /// `X H Xᵀ`.
    pub(crate) xhx: DMatrix<f64>,
    /// `X_s L_s X_sᵀ`.
    pub(crate) xs_ls_xs: DMatrix<f64>,
    /// `X_t X_tᵀ` (equivalently `X V Vᵀ Xᵀ`).
    pub(crate) xt_xt: DMatrix<f64>,
    /// `X_s E_s` and `X_l E_l`, both `m × C`.
    pub(crate) xs_es: DMatrix<f64>,
    pub(crate) xl_el: DMatrix<f64>,
}

pub(crate) fn centroid_selector(labels: &[usize], n_classes: usize) -> Result<DMatrix<f64>> {
    let sizes = class_sizes(labels, n_classes)?;
    let mut e = DMatrix::zeros(labels.len(), n_classes);
    for (i, &c) in labels.iter().enumerate() {
        e[(i, c)] = 1.0 / sizes[c] as f64;
    }
    Ok(e)
}

impl ConstantMatrices {
    /// Assemble from column-sample blocks. `x_l` may have zero columns.
    pub fn from_blocks(
        x_s: &DMatrix<f64>,
        source_labels: &[usize],
        x_l: &DMatrix<f64>,
        labeled_target_labels: &[usize],
        x_u: &DMatrix<f64>,
        n_classes: usize,
    ) -> Result<Self> {
        let m = x_s.nrows();
        if x_l.nrows() != m || x_u.nrows() != m {
            return Err(CmmsError::DimensionMismatch(format!(
                "feature dimensions differ: source {m}, labeled target {}, unlabeled target {}",
                x_l.nrows(),
                x_u.nrows()
            )));
        }
        if x_s.ncols() != source_labels.len() || x_l.ncols() != labeled_target_labels.len() {
            return Err(CmmsError::DimensionMismatch("label count does not match sample count".into()));
        }
        let (n_s, n_l, n_u) = (x_s.ncols(), x_l.ncols(), x_u.ncols());
        if n_s == 0 || n_u == 0 {
            return Err(CmmsError::InvalidInput("source and unlabeled target must be non-empty".into()));
        }
        let sizes = class_sizes(source_labels, n_classes)?;
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return Err(CmmsError::InvalidInput(format!("source class {c} has no samples")));
        }
        let n = n_s + n_l + n_u;
        let mut x = DMatrix::zeros(m, n);
        x.columns_mut(0, n_s).copy_from(x_s);
        x.columns_mut(n_s, n_l).copy_from(x_l);
        x.columns_mut(n_s + n_l, n_u).copy_from(x_u);

        let e_s = centroid_selector(source_labels, n_classes)?;
        let e_l = centroid_selector(labeled_target_labels, n_classes)?;

        let mean = x.column_mean();
        let mut centered = x.clone();
        for mut col in centered.column_iter_mut() {
            col -= &mean;
        }
        let xhx = &centered * centered.transpose();
        let xs_ls_xs = class_scatter_gram(x_s, source_labels, n_classes)?;
        let xt = x.columns(n_s, n_l + n_u);
        let xt_xt = xt * xt.transpose();
        let xs_es = x_s * &e_s;
        let xl_el = x_l * &e_l;
        Ok(ConstantMatrices {
            x,
            e_s,
            e_l,
            source_labels: source_labels.to_vec(),
            labeled_target_labels: labeled_target_labels.to_vec(),
            n_s,
            n_l,
            n_u,
            n_classes,
            xhx,
            xs_ls_xs,
            xt_xt,
            xs_es,
            xl_el,
        })
    }

    pub fn n(&self) -> usize {
        self.n_s + self.n_l + self.n_u
    }

    pub fn n_t(&self) -> usize {
        self.n_l + self.n_u
    }

    pub fn dims(&self) -> usize {
        self.x.nrows()
    }

    pub fn target_cols(&self) -> nalgebra::DMatrixView<'_, f64> {
        self.x.columns(self.n_s, self.n_t())
    }

    /// `n × C` selector `[λ₁E_s; λ₂E_l; 0]`.
    pub fn e(&self, lambda: (f64, f64)) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n(), self.n_classes);
        e.rows_mut(0, self.n_s).copy_from(&(&self.e_s * lambda.0));
        e.rows_mut(self.n_s, self.n_l).copy_from(&(&self.e_l * lambda.1));
        e
    }

    /// `X E` for the current balance factors, `m × C`.
    pub fn xe(&self, lambda: (f64, f64)) -> DMatrix<f64> {
        &self.xs_es * lambda.0 + &self.xl_el * lambda.1
    }

    /// Dense `V = diag(0_{n_s}, I_{n_t})`.
    pub fn v(&self) -> DMatrix<f64> {
        let mut d = DVector::zeros(self.n());
        d.rows_mut(self.n_s, self.n_t()).fill(1.0);
        DMatrix::from_diagonal(&d)
    }

    /// Dense centering matrix `H = I − (1/n)·11ᵀ`.
    pub fn h(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    /// `n × C` matrix `G = [0; G_t]` for target assignments.
    pub fn g(&self, g_t: &[usize]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n(), self.n_classes);
        for (i, &c) in g_t.iter().enumerate() {
            g[(self.n_s + i, c)] = 1.0;
        }
        g
    }

    pub fn xhx(&self) -> &DMatrix<f64> {
        &self.xhx
    }
}

/// Unsupervised constants from two datasets (rows = samples). Target labels,
/// if any, are ignored.
pub fn assemble_constants(source: &crate::dataset::Dataset, target: &crate::dataset::Dataset) -> Result<ConstantMatrices> {
    if source.n_dims() != target.n_dims() {
        return Err(CmmsError::DimensionMismatch(format!(
            "source has {} dims, target has {}",
            source.n_dims(),
            target.n_dims()
        )));
    }
    let map = crate::dataset::ClassMap::from_labels(source.require_labels()?);
    let ys = map.encode(source.require_labels()?)?;
    let m = source.n_dims();
    ConstantMatrices::from_blocks(
        &source.features().transpose(),
        &ys,
        &DMatrix::zeros(m, 0),
        &[],
        &target.features().transpose(),
        map.n_classes(),
    )
}

/// One-hot `n_rows × C` matrix.
pub fn one_hot(assign: &[usize], n_classes: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(assign.len(), n_classes);
    for (i, &c) in assign.iter().enumerate() {
        g[(i, c)] = 1.0;
    }
    g
}

/// Dense `R = EEᵀ + αVVᵀ − N K⁻¹ Nᵀ` with `N = E + αVG`, `K = I_C + αGᵀG`.
///
/// `tr(Pᵀ X R Xᵀ P)` is the centroid-matching plus clustering cost with the
/// centroids `F` already minimised out.
pub fn build_r(e: &DMatrix<f64>, v: &DMatrix<f64>, g: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    let (n, c) = (e.nrows(), e.ncols());
    if v.shape() != (n, n) || g.shape() != (n, c) {
        return Err(CmmsError::DimensionMismatch("build_r: E, V, G shapes disagree".into()));
    }
    let nmat = e + v * g * alpha;
    let k = DMatrix::identity(c, c) + g.transpose() * g * alpha;
    let k_inv = k
        .cholesky()
        .ok_or_else(|| CmmsError::NotPositiveDefinite("I + αGᵀG".into()))?
        .inverse();
    let r = e * e.transpose() + v * v.transpose() * alpha - &nmat * k_inv * nmat.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Target manifold regulariser in use for the current variant.
#[derive(Debug, Clone)]
pub enum TargetManifold {
    /// No target term.
    None,
    /// Graph Laplacian of a (learned or fixed) similarity.
    Graph(TargetGraph),
    /// Intra-class scatter under the given pseudo-labels.
    ClassScatter(Vec<usize>),
}

impl TargetManifold {
    pub fn graph(&self) -> Option<&TargetGraph> {
        match self {
            TargetManifold::Graph(g) => Some(g),
            _ => None,
        }
    }

    /// `X_t L_t X_tᵀ` for target columns `xt`.
    fn gram(&self, xt: &DMatrix<f64>, n_classes: usize) -> Result<DMatrix<f64>> {
        match self {
            TargetManifold::None => Ok(DMatrix::zeros(xt.nrows(), xt.nrows())),
            TargetManifold::Graph(g) => Ok(g.laplacian.gram(xt)),
            TargetManifold::ClassScatter(labels) => class_scatter_gram(xt, labels, n_classes),
        }
    }

    /// `2 tr(Z_t L_t Z_tᵀ) + δ‖S‖²_F`.
    fn penalty(&self, zt: &DMatrix<f64>, n_classes: usize) -> Result<f64> {
        match self {
            TargetManifold::None => Ok(0.0),
            TargetManifold::Graph(g) => Ok(2.0 * g.laplacian.trace_form(zt) + g.delta * g.s.frobenius_sq()),
            TargetManifold::ClassScatter(labels) => Ok(2.0 * class_scatter_trace(zt, labels, n_classes)?),
        }
    }
}

/// Variables of the alternating minimisation.
#[derive(Debug, Clone)]
pub struct ModelState {
    /// `m × d'` projection, `d' = effective_d`.
    pub p: DMatrix<f64>,
    /// `d' × C` target cluster centroids.
    pub f: DMatrix<f64>,
    /// Target cluster assignment per target column (labeled rows first).
    pub g_t: Vec<usize>,
    pub manifold: TargetManifold,
    pub lambda: (f64, f64),
    pub objective_trace: Vec<f64>,
    pub iteration: usize,
    pub effective_d: usize,
}

/// `X R Xᵀ` without forming any `n × n` matrix.
pub fn x_r_xt(consts: &ConstantMatrices, lambda: (f64, f64), g_t: &[usize], alpha: f64) -> Result<DMatrix<f64>> {
    let c = consts.n_classes;
    let xe = consts.xe(lambda);
    let xt = consts.target_cols();
    // X V G: per-cluster sums of target columns
    let mut xg = DMatrix::zeros(consts.dims(), c);
    for (i, &k) in g_t.iter().enumerate() {
        let mut col = xg.column_mut(k);
        col += xt.column(i);
    }
    let counts = class_sizes(g_t, c)?;
    let xn = &xe + &xg * alpha;
    let mut xn_scaled = xn.clone();
    for (k, &cnt) in counts.iter().enumerate() {
        let mut col = xn_scaled.column_mut(k);
        col /= 1.0 + alpha * cnt as f64;
    }
    let r = &xe * xe.transpose() + &consts.xt_xt * alpha - xn_scaled * xn.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Left-hand matrix `X R Xᵀ + γ X L Xᵀ + β I` of the projection pencil.
pub fn projection_lhs(
    consts: &ConstantMatrices,
    manifold: &TargetManifold,
    g_t: &[usize],
    lambda: (f64, f64),
    hyper: &Hyperparams,
) -> Result<DMatrix<f64>> {
    let m = consts.dims();
    let mut a = x_r_xt(consts, lambda, g_t, hyper.alpha)?;
    let gamma = hyper.effective_gamma();
    if gamma != 0.0 {
        let xt = consts.target_cols().into_owned();
        let xlx = (&consts.xs_ls_xs + manifold.gram(&xt, consts.n_classes)?) * 2.0;
        a += xlx * gamma;
    }
    for i in 0..m {
        a[(i, i)] += hyper.beta;
    }
    Ok((&a + a.transpose()) * 0.5)
}

/// Projection update: the `d` smallest generalized eigenvectors of
/// `(X R Xᵀ + γ X L Xᵀ + β I) p = π X H Xᵀ p`.
pub fn update_p(
    consts: &ConstantMatrices,
    manifold: &TargetManifold,
    g_t: &[usize],
    lambda: (f64, f64),
    hyper: &Hyperparams,
) -> Result<EigResult> {
    let a = projection_lhs(consts, manifold, g_t, lambda, hyper)?;
    gen_eig_smallest(&a, &consts.xhx, hyper.dim.min(consts.dims()))
}

/// Closed-form centroids `F = (PᵀXE + αPᵀXVG)(αGᵀG + I)⁻¹`.
pub fn update_f(p: &DMatrix<f64>, consts: &ConstantMatrices, g_t: &[usize], lambda: (f64, f64), alpha: f64) -> Result<DMatrix<f64>> {
    let zt = p.transpose() * consts.target_cols();
    let ze = p.transpose() * consts.xe(lambda);
    centroids_from_projected(&ze, &zt, g_t, consts.n_classes, alpha)
}

pub(crate) fn centroids_from_projected(
    ze: &DMatrix<f64>,
    zt: &DMatrix<f64>,
    g_t: &[usize],
    n_classes: usize,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let counts = class_sizes(g_t, n_classes)?;
    let mut f = ze.clone();
    for (i, &c) in g_t.iter().enumerate() {
        let mut col = f.column_mut(c);
        col.axpy(alpha, &zt.column(i), 1.0);
    }
    for (c, &cnt) in counts.iter().enumerate() {
        let mut col = f.column_mut(c);
        col /= 1.0 + alpha * cnt as f64;
    }
    Ok(f)
}

/// Nearest-centroid assignment of every column of `zt`; ties go to the lower
/// cluster index. The first `n_fixed` columns keep their entry in `fixed`.
pub fn update_g(zt: &DMatrix<f64>, f: &DMatrix<f64>, fixed: &[usize]) -> Vec<usize> {
    (0..zt.ncols())
        .map(|i| {
            if i < fixed.len() {
                return fixed[i];
            }
            let z = zt.column(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..f.ncols() {
                let d = (z - f.column(c)).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Terms of the objective, for logging and tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub centroid_matching: f64,
    pub clustering: f64,
    pub regularization: f64,
    pub manifold: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.centroid_matching + self.clustering + self.regularization + self.manifold
    }
}

/// `‖PᵀXE − F‖² + α‖PᵀXV − FGᵀ‖² + β‖P‖² + γ(tr(PᵀXLXᵀP) + δ‖S‖²)`,
/// with `L = diag(2L_s, 2L_t)`.
pub fn objective_terms(state: &ModelState, consts: &ConstantMatrices, hyper: &Hyperparams) -> Result<ObjectiveTerms> {
    let pt = state.p.transpose();
    let ze = &pt * consts.xe(state.lambda);
    let centroid_matching = (&ze - &state.f).norm_squared();
    let zt = &pt * consts.target_cols();
    let mut clustering = 0.0;
    for (i, &c) in state.g_t.iter().enumerate() {
        clustering += (zt.column(i) - state.f.column(c)).norm_squared();
    }
    let gamma = hyper.effective_gamma();
    let manifold = if gamma == 0.0 {
        0.0
    } else {
        let zs = &pt * consts.x.columns(0, consts.n_s);
        let source = 2.0 * class_scatter_trace(&zs, &consts.source_labels, consts.n_classes)?;
        gamma * (source + state.manifold.penalty(&zt, consts.n_classes)?)
    };
    Ok(ObjectiveTerms {
        centroid_matching,
        clustering: hyper.alpha * clustering,
        regularization: hyper.beta * state.p.norm_squared(),
        manifold,
    })
}

pub fn objective(state: &ModelState, consts: &ConstantMatrices, hyper: &Hyperparams) -> Result<f64> {
    Ok(objective_terms(state, consts, hyper)?.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ConstantMatrices {
        // two class-0 source samples and one target sample
        let xs = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 2.0]);
        let xu = DMatrix::from_row_slice(2, 1, &[5.0, 5.0]);
        ConstantMatrices::from_blocks(&xs, &[0, 0], &DMatrix::zeros(2, 0), &[], &xu, 1).unwrap()
    }

    #[test]
    fn tiny_constants() {
        let c = tiny();
        assert_eq!(c.e((1.0, 0.0)).as_slice(), &[0.5, 0.5, 0.0]);
        assert_eq!(c.v(), DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0])));
        // XE column = class mean of the source
        assert_eq!(c.xe((1.0, 0.0)).as_slice(), &[2.0, 1.0]);
        let h1 = c.h() * DVector::from_element(3, 1.0);
        assert!(h1.amax() < 1e-15);
    }

    #[test]
    fn r_vanishes_without_clustering() {
        let c = tiny();
        let r = build_r(&c.e((1.0, 0.0)), &c.v(), &c.g(&[0]), 0.0).unwrap();
        assert!(r.amax() < 1e-15);
    }

    #[test]
    fn update_g_nearest_and_ties() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 10.0, 0.0, 10.0]);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 1.0, 5.0]);
        assert_eq!(update_g(&z, &f, &[]), vec![0, 0]);
        assert_eq!(update_g(&z, &f, &[1]), vec![1, 0]);
    }

    #[test]
    fn objective_of_zero_state_is_zero() {
        let c = tiny();
        let state = ModelState {
            p: DMatrix::zeros(2, 1),
            f: DMatrix::zeros(1, 1),
            g_t: vec![0],
            manifold: TargetManifold::None,
            lambda: (1.0, 0.0),
            objective_trace: vec![],
            iteration: 0,
            effective_d: 1,
        };
        assert_eq!(objective(&state, &c, &Hyperparams::default()).unwrap(), 0.0);
    }

    #[test]
    fn variant_parse() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("xx".parse::<Variant>().is_err());
        assert_eq!(Variant::Rm.method_name(), "CMMS_rm");
    }
}
