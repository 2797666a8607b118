//! Independent reference implementations used as test oracles. Everything
//! here is deliberately naive: dense matrices, explicit loops, bisection.

#![allow(dead_code)]

use cmms::solver::{ConstantMatrices, Hyperparams, ModelState, TargetManifold};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `M Mᵀ + shift·I` with `M` of the given inner rank.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, shift: f64) -> DMatrix<f64> {
    let m = uniform(rng, n, rank);
    &m * m.transpose() + DMatrix::identity(n, n) * shift
}

/// Indices of the `k` smallest entries of `row` excluding `i`, ties to the
/// lower index, found by a full sort.
pub fn k_nearest_by_sort(row: &[f64], i: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Row of the similarity subproblem
/// `min Σ_j s_j a_j + δ s_j²  s.t. s ≥ 0, Σ s = 1, supp(s) ⊆ kNN(i)`,
/// solved as a Euclidean projection of `−a/(2δ)` onto the simplex by
/// bisection on the threshold.
pub fn simplex_qp_row(row: &[f64], i: usize, k: usize, delta: f64) -> Vec<f64> {
    let nn = k_nearest_by_sort(row, i, k);
    let v: Vec<f64> = nn.iter().map(|&j| -row[j] / (2.0 * delta)).collect();
    let mass = |tau: f64| v.iter().map(|&x| (x - tau).max(0.0)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let mut out = vec![0.0; row.len()];
    for (&j, &x) in nn.iter().zip(&v) {
        out[j] = (x - tau).max(0.0);
    }
    out
}

/// Dense source Laplacian `I − Σ_c 1_c 1_cᵀ / n_c` built entry by entry.
pub fn naive_class_laplacian(labels: &[usize]) -> DMatrix<f64> {
    let n = labels.len();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let size = labels.iter().filter(|&&c| c == labels[i]).count() as f64;
        for j in 0..n {
            let w = if labels[i] == labels[j] { 1.0 / size } else { 0.0 };
            l[(i, j)] = if i == j { 1.0 - w } else { -w };
        }
    }
    l
}

/// `D − (S + Sᵀ)/2` from a dense similarity.
pub fn naive_graph_laplacian(s: &DMatrix<f64>) -> DMatrix<f64> {
    let n = s.nrows();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut deg = 0.0;
        for j in 0..n {
            let w = 0.5 * (s[(i, j)] + s[(j, i)]);
            deg += w;
            l[(i, j)] -= w;
        }
        l[(i, i)] += deg;
    }
    l
}

fn sum_sq(m: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for v in m.iter() {
        acc += v * v;
    }
    acc
}

/// Full objective from dense `E`, `V`, `G` and a dense block Laplacian.
pub fn naive_objective(state: &ModelState, consts: &ConstantMatrices, hyper: &Hyperparams) -> f64 {
    let (n_s, n_t, n) = (consts.n_s, consts.n_t(), consts.n());
    let z = state.p.transpose() * &consts.x;
    let e = consts.e(state.lambda);
    let v = consts.v();
    let g = consts.g(&state.g_t);
    let mut obj = sum_sq(&(&z * &e - &state.f));
    obj += hyper.alpha * sum_sq(&(&z * &v - &state.f * g.transpose()));
    obj += hyper.beta * sum_sq(&state.p);
    let gamma = hyper.effective_gamma();
    if gamma != 0.0 {
        let mut l = DMatrix::zeros(n, n);
        l.view_mut((0, 0), (n_s, n_s))
            .copy_from(&(naive_class_laplacian(&consts.source_labels) * 2.0));
        let mut s_pen = 0.0;
        let lt = match &state.manifold {
            TargetManifold::None => DMatrix::zeros(n_t, n_t),
            TargetManifold::Graph(graph) => {
                let s = graph.s.to_dense();
                s_pen = graph.delta * sum_sq(&s);
                naive_graph_laplacian(&s)
            }
            TargetManifold::ClassScatter(labels) => naive_class_laplacian(labels),
        };
        l.view_mut((n_s, n_s), (n_t, n_t)).copy_from(&(lt * 2.0));
        obj += gamma * ((&z * l * z.transpose()).trace() + s_pen);
    }
    obj
}

/// `‖Z E − F‖² + α‖Z V − F Gᵀ‖²` as a function of `F` only.
pub fn centroid_cost(z: &DMatrix<f64>, e: &DMatrix<f64>, v: &DMatrix<f64>, g: &DMatrix<f64>, f: &DMatrix<f64>, alpha: f64) -> f64 {
    sum_sq(&(z * e - f)) + alpha * sum_sq(&(z * v - f * g.transpose()))
}

/// Central-difference gradient of `cost` at `f`.
pub fn fd_gradient(f: &DMatrix<f64>, h: f64, cost: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut grad = DMatrix::zeros(f.nrows(), f.ncols());
    for r in 0..f.nrows() {
        for c in 0..f.ncols() {
            let mut plus = f.clone();
            plus[(r, c)] += h;
            let mut minus = f.clone();
            minus[(r, c)] -= h;
            grad[(r, c)] = (cost(&plus) - cost(&minus)) / (2.0 * h);
        }
    }
    grad
}

/// Symmetric inverse square root via eigen-decomposition.
pub fn inv_sqrt(b: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = b.clone().symmetric_eigen();
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&x| 1.0 / x.sqrt()));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Random `m × d` frame with `Qᵀ B Q = I`, or `None` if `WᵀBW` is not
/// numerically positive definite. Uses `Q = W L⁻ᵀ` with `WᵀBW = L Lᵀ`.
pub fn random_b_orthonormal(rng: &mut ChaCha8Rng, b: &DMatrix<f64>, d: usize) -> Option<DMatrix<f64>> {
    let w = uniform(rng, b.nrows(), d);
    let gram = w.transpose() * b * &w;
    let gram = (&gram + gram.transpose()) * 0.5;
    if gram.clone().symmetric_eigen().eigenvalues.min() < 1e-8 {
        return None;
    }
    let l = gram.cholesky()?.l();
    let lt_inv = l.transpose().try_inverse()?;
    Some(w * lt_inv)
}

/// Minimiser of `‖λA + (1−λ)B − F‖²` on a uniform grid over `[0, 1]`.
pub fn lambda_grid(a: &DMatrix<f64>, b: &DMatrix<f64>, f: &DMatrix<f64>, step: f64) -> f64 {
    let steps = (1.0 / step).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for s in 0..=steps {
        let l = s as f64 * step;
        let cost = sum_sq(&(a * l + b * (1.0 - l) - f));
        if cost < best.0 {
            best = (cost, l);
        }
    }
    best.1
}

/// Random one-hot assignment in which every class occurs.
pub fn covering_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Vec<usize> {
    (0..n).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect()
}
