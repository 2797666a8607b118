//! Source discriminative Laplacian and the target adaptive-neighbour graph.
//!
//! Sample matrices passed to the `*_cols` helpers hold one sample per column,
//! matching the solver's `m × n` layout. The public dense entry points
//! ([`pairwise_sq_dists`], [`estimate_delta`], [`update_similarity`]) take
//! explicit distance matrices.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{CmmsError, Result};

/// Below this `δ` the similarity update degenerates; rows fall back to
/// uniform weights on the `k` nearest neighbours.
pub const DELTA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SourceLaplacian {
    pub matrix: DMatrix<f64>,
    pub class_sizes: Vec<usize>,
}

/// `(L_s)_ii = 1 − 1/n_c`, `(L_s)_ij = −1/n_c` for distinct same-class
/// samples, zero across classes. `labels` are 0-based class indices.
pub fn source_laplacian(labels: &[usize], n_classes: usize) -> Result<SourceLaplacian> {
    let sizes = class_sizes(labels, n_classes)?;
    if let Some(c) = sizes.iter().position(|&s| s == 0) {
        return Err(CmmsError::InvalidInput(format!("source class {c} has no samples")));
    }
    let n = labels.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        let (ci, cj) = (labels[i], labels[j]);
        if ci != cj {
            0.0
        } else if i == j {
            1.0 - 1.0 / sizes[ci] as f64
        } else {
            -1.0 / sizes[ci] as f64
        }
    });
    Ok(SourceLaplacian {
        matrix,
        class_sizes: sizes,
    })
}

pub(crate) fn class_sizes(labels: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    let mut sizes = vec![0usize; n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(CmmsError::InvalidInput(format!(
                "class index {l} at position {i} outside 0..{n_classes}"
            )));
        }
        sizes[l] += 1;
    }
    Ok(sizes)
}

/// `X L Xᵀ` for the class-scatter Laplacian of `labels`, i.e. the summed
/// within-class scatter of the columns of `x`. Empty classes contribute nothing.
pub fn class_scatter_gram(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Result<DMatrix<f64>> {
    if x.ncols() != labels.len() {
        return Err(CmmsError::DimensionMismatch(format!(
            "{} samples but {} labels",
            x.ncols(),
            labels.len()
        )));
    }
    let centered = center_within_class(x, labels, n_classes)?;
    Ok(&centered * centered.transpose())
}

fn center_within_class(x: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Result<DMatrix<f64>> {
    let sizes = class_sizes(labels, n_classes)?;
    let mut means = DMatrix::zeros(x.nrows(), n_classes);
    for (j, &c) in labels.iter().enumerate() {
        let mut col = means.column_mut(c);
        col += x.column(j);
    }
    for (c, &s) in sizes.iter().enumerate() {
        if s > 0 {
            let mut col = means.column_mut(c);
            col /= s as f64;
        }
    }
    let mut centered = x.clone();
    for (j, &c) in labels.iter().enumerate() {
        let mut col = centered.column_mut(j);
        col -= means.column(c);
    }
    Ok(centered)
}

/// `tr(Z L Zᵀ)` for the class-scatter Laplacian, `Z` holding samples in columns.
pub fn class_scatter_trace(z: &DMatrix<f64>, labels: &[usize], n_classes: usize) -> Result<f64> {
    Ok(center_within_class(z, labels, n_classes)?.norm_squared())
}

/// Squared Euclidean distances between the rows of `points`.
pub fn pairwise_sq_dists(points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if points.nrows() < 2 {
        return Err(CmmsError::InvalidInput("pairwise distances need at least 2 points".into()));
    }
    let cols = points.transpose();
    let n = cols.ncols();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| sq_dist_row(&cols, i)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Distances from column `i` of `cols` to every column; entry `i` is 0.
pub(crate) fn sq_dist_row(cols: &DMatrix<f64>, i: usize) -> Vec<f64> {
    let xi = cols.column(i);
    (0..cols.ncols())
        .map(|j| {
            if j == i {
                0.0
            } else {
                xi.iter().zip(cols.column(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
            }
        })
        .collect()
}

/// Indices of the `count` smallest off-diagonal entries of `row`, ascending by
/// (distance, index). `row[self_idx]` is never selected.
fn nearest(row: &[f64], self_idx: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != self_idx).collect();
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if count < idx.len() {
        idx.select_nth_unstable_by(count, cmp);
        idx.truncate(count + 1);
    }
    idx.sort_unstable_by(cmp);
    idx.truncate(count);
    idx
}

fn check_neighbourhood(n: usize, k: usize, need_extra: bool) -> Result<()> {
    let limit = if need_extra { n.saturating_sub(2) } else { n.saturating_sub(1) };
    if k < 1 || k > limit {
        return Err(CmmsError::InvalidInput(format!(
            "neighbourhood size k={k} invalid for {n} points (allowed 1..={limit})"
        )));
    }
    Ok(())
}

fn check_finite_row(row: &[f64], i: usize) -> Result<()> {
    if let Some(j) = row.iter().position(|v| !v.is_finite()) {
        return Err(CmmsError::InvalidInput(format!("non-finite distance at ({}, {})", i + 1, j + 1)));
    }
    Ok(())
}

/// Contribution of one row to the neighbour-scale estimate:
/// `(k/2)·b̃_{k+1} − ½ Σ_{j≤k} b̃_j` over the sorted off-diagonal entries.
fn delta_row_term(row: &[f64], i: usize, k: usize) -> f64 {
    let nn = nearest(row, i, k + 1);
    let head: f64 = nn[..k].iter().map(|&j| row[j]).sum();
    0.5 * k as f64 * row[nn[k]] - 0.5 * head
}

/// Neighbour-scale parameter `δ` averaged over the rows of the distance
/// matrix `b`. Requires `k ≤ n − 2` so that a `(k+1)`-th neighbour exists.
pub fn estimate_delta(b: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = b.nrows();
    check_neighbourhood(n, k, true)?;
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = b.row(i).iter().copied().collect();
            check_finite_row(&row, i)?;
            Ok(delta_row_term(&row, i, k))
        })
        .collect::<Result<_>>()?;
    Ok((terms.iter().sum::<f64>() / n as f64).max(0.0))
}

/// [`estimate_delta`] on the pairwise distances of the columns of `x`,
/// without materialising the distance matrix.
pub fn estimate_delta_cols(x: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = x.ncols();
    check_neighbourhood(n, k, true)?;
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| delta_row_term(&sq_dist_row(x, i), i, k))
        .collect();
    Ok((terms.iter().sum::<f64>() / n as f64).max(0.0))
}

/// Row-stochastic sparse matrix stored as per-row `(column, weight)` lists
/// sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(n_cols: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        for r in &mut rows {
            r.sort_unstable_by_key(|&(j, _)| j);
        }
        SparseRows { n_cols, rows }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        SparseRows::new(m.ncols(), rows)
    }

    pub fn zeros(n: usize) -> Self {
        SparseRows {
            n_cols: n,
            rows: vec![Vec::new(); n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64)]> {
        self.rows.iter().map(|r| r.as_slice())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.n_cols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[(i, j)] += w;
            }
        }
        m
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.rows.iter().flatten().map(|&(_, w)| w * w).sum()
    }

    /// `Σ_ij S_ij · d_ij` for a distance function.
    pub fn weighted_sum(&self, mut dist: impl FnMut(usize, usize) -> f64) -> f64 {
        let mut total = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                total += w * dist(i, j);
            }
        }
        total
    }
}

/// Exact minimiser of `Σ_j a_j s_j + δ s_j²` over the probability simplex
/// with support restricted to the `k` nearest neighbours of point `i`.
///
/// When all `k` weights are positive this is `s_j = z − a_j/(2δ)` with
/// `z = 1/k + Σ_{j≤k} ã_j/(2kδ)`. Otherwise the support shrinks to the
/// largest prefix of the sorted neighbours whose weights stay positive.
fn similarity_row(row: &[f64], i: usize, k: usize, delta: f64) -> Vec<(usize, f64)> {
    let nn = nearest(row, i, k);
    if delta <= DELTA_FLOOR {
        let w = 1.0 / k as f64;
        return nn.into_iter().map(|j| (j, w)).collect();
    }
    let two_delta = 2.0 * delta;
    let mut support = 1usize;
    let mut prefix = 0.0;
    let mut z = 0.0;
    for (r, &j) in nn.iter().enumerate() {
        prefix += row[j];
        let cnt = (r + 1) as f64;
        let zr = 1.0 / cnt + prefix / (cnt * two_delta);
        if zr - row[j] / two_delta > 0.0 {
            support = r + 1;
            z = zr;
        } else {
            break;
        }
    }
    let mut out: Vec<(usize, f64)> = nn[..support].iter().map(|&j| (j, z - row[j] / two_delta)).collect();
    out.sort_unstable_by_key(|&(j, _)| j);
    out
}

/// Learn the row-stochastic similarity from a dense distance matrix `a`.
pub fn update_similarity(a: &DMatrix<f64>, k: usize, delta: f64) -> Result<SparseRows> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CmmsError::DimensionMismatch("distance matrix must be square".into()));
    }
    check_neighbourhood(n, k, false)?;
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = a.row(i).iter().copied().collect();
            check_finite_row(&row, i)?;
            Ok(similarity_row(&row, i, k, delta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseRows::new(n, rows))
}

/// [`update_similarity`] on the distances between the columns of `z`.
pub fn update_similarity_cols(z: &DMatrix<f64>, k: usize, delta: f64) -> Result<SparseRows> {
    let n = z.ncols();
    check_neighbourhood(n, k, false)?;
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = sq_dist_row(z, i);
            check_finite_row(&row, i)?;
            Ok(similarity_row(&row, i, k, delta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseRows::new(n, rows))
}

/// Fixed heat-kernel k-NN adjacency on the columns of `x`: weights
/// `exp(−d_ij/σ)` on the `k` nearest neighbours, `σ` the mean neighbour
/// distance, each row normalised to sum to one.
pub fn heat_kernel_similarity_cols(x: &DMatrix<f64>, k: usize) -> Result<SparseRows> {
    let n = x.ncols();
    check_neighbourhood(n, k, false)?;
    let rows: Vec<(Vec<f64>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = sq_dist_row(x, i);
            let nn = nearest(&row, i, k);
            (row, nn)
        })
        .collect();
    let sigma = rows
        .iter()
        .map(|(row, nn)| nn.iter().map(|&j| row[j]).sum::<f64>())
        .sum::<f64>()
        / (n * k) as f64;
    let out = rows
        .into_iter()
        .map(|(row, nn)| {
            let w: Vec<f64> = if sigma > DELTA_FLOOR {
                nn.iter().map(|&j| (-row[j] / sigma).exp()).collect()
            } else {
                vec![1.0; k]
            };
            let total: f64 = w.iter().sum();
            nn.into_iter().zip(w).map(|(j, w)| (j, w / total)).collect()
        })
        .collect();
    Ok(SparseRows::new(n, out))
}

/// Laplacian `D̄ − S̄` of the symmetrised similarity `S̄ = (S + Sᵀ)/2`.
#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    degree: Vec<f64>,
    /// Symmetric adjacency `S̄` per row, sorted by column.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl GraphLaplacian {
    pub fn size(&self) -> usize {
        self.degree.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut l = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.degree));
        for i in 0..n {
            for &(j, w) in &self.adjacency[i] {
                l[(i, j)] -= w;
            }
        }
        l
    }

    /// `X L` for `X` holding samples in columns.
    pub fn right_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for i in 0..self.size() {
            let mut col = out.column_mut(i);
            col.axpy(self.degree[i], &x.column(i), 0.0);
            for &(j, w) in &self.adjacency[i] {
                col.axpy(-w, &x.column(j), 1.0);
            }
        }
        out
    }

    /// `X L Xᵀ`.
    pub fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.right_mul(x) * x.transpose()
    }

    /// `tr(Z L Zᵀ)`, equal to `½ Σ_ij S̄_ij ‖z_i − z_j‖²`.
    pub fn trace_form(&self, z: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..self.size() {
            for &(j, w) in &self.adjacency[i] {
                if j > i {
                    total += w * (z.column(i) - z.column(j)).norm_squared();
                }
            }
        }
        total
    }
}

pub fn laplacian_from_similarity(s: &SparseRows) -> Result<GraphLaplacian> {
    let n = s.n_rows();
    if s.n_cols() != n {
        return Err(CmmsError::DimensionMismatch("similarity matrix must be square".into()));
    }
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, row) in s.rows().enumerate() {
        for &(j, w) in row {
            adjacency[i].push((j, 0.5 * w));
            adjacency[j].push((i, 0.5 * w));
        }
    }
    let mut degree = vec![0.0; n];
    for (i, row) in adjacency.iter_mut().enumerate() {
        row.sort_unstable_by_key(|&(j, _)| j);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(j, w) in row.iter() {
            match merged.last_mut() {
                Some((last, acc)) if *last == j => *acc += w,
                _ => merged.push((j, w)),
            }
        }
        // self-loops do not contribute to the Laplacian
        merged.retain(|&(j, _)| j != i);
        degree[i] = merged.iter().map(|&(_, w)| w).sum();
        *row = merged;
    }
    Ok(GraphLaplacian { degree, adjacency })
}

/// Learned target similarity together with its Laplacian.
#[derive(Debug, Clone)]
pub struct TargetGraph {
    pub s: SparseRows,
    pub delta: f64,
    pub k: usize,
    pub laplacian: GraphLaplacian,
}

impl TargetGraph {
    pub fn from_similarity(s: SparseRows, delta: f64, k: usize) -> Result<Self> {
        let laplacian = laplacian_from_similarity(&s)?;
        Ok(TargetGraph { s, delta, k, laplacian })
    }

    /// Self-learned graph over the columns of `z` with a given `δ`.
    pub fn learn(z: &DMatrix<f64>, k: usize, delta: f64) -> Result<Self> {
        TargetGraph::from_similarity(update_similarity_cols(z, k, delta)?, delta, k)
    }
}
