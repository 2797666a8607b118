//! Dense symmetric eigensolvers.
//!
//! [`sym_eig`] is a thin wrapper over nalgebra's symmetric QR iteration that
//! adds ordering and a deterministic sign convention. [`gen_eig_smallest`]
//! solves the symmetric-definite pencil `A p = π B p` for the smallest `π`
//! by Cholesky whitening of `A`, which tolerates a singular `B`.

use nalgebra::{DMatrix, DVector};

use crate::error::{CmmsError, Result};

/// Eigenvalues of the whitened pencil at or below this are treated as the
/// null space of `B` (infinite generalized eigenvalue) and dropped.
pub const NULL_SPACE_CUTOFF: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-8;

/// Solution of a generalized eigenproblem, columns ordered by ascending value.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
    /// Number of columns actually returned; may be below the request when
    /// `B` is rank deficient.
    pub effective_d: usize,
}

/// Largest absolute entry of `M - Mᵀ`, scaled by `max(1, max|M_ij|)`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let scale = m.amax().max(1.0);
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(CmmsError::DimensionMismatch(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Flip each column so that its entry of largest magnitude is positive.
/// Ties in magnitude resolve to the lowest row index.
pub fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigen-decomposition of a symmetric matrix: values ascending, eigenvectors
/// orthonormal in the matching columns.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_square(m, "sym_eig input")?;
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL {
        return Err(CmmsError::NotSymmetric(asym));
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrized(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_signs(&mut vectors);
    Ok((values, vectors))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(a, "cholesky input")?;
    nalgebra::Cholesky::new(symmetrized(a))
        .map(|c| c.l())
        .ok_or_else(|| {
            CmmsError::NotPositiveDefinite(format!("Cholesky failed on {0}x{0} matrix", a.nrows()))
        })
}

/// Generalized eigenvectors of `A p = π B p` for the `d` smallest `π`.
///
/// `A` must be symmetric positive definite and `B` symmetric positive
/// semidefinite. With `A = L Lᵀ` the pencil is equivalent to the standard
/// problem `M v = ν v`, `M = L⁻¹ B L⁻ᵀ`, `π = 1/ν`, `p = L⁻ᵀ v / √ν`, so the
/// smallest `π` come from the largest `ν` and the returned columns satisfy
/// `Pᵀ B P = I`. Directions with `ν ≤ NULL_SPACE_CUTOFF` lie in the null space
/// of `B` and are never returned.
pub fn gen_eig_smallest(a: &DMatrix<f64>, b: &DMatrix<f64>, d: usize) -> Result<EigResult> {
    if d < 1 {
        return Err(CmmsError::InvalidInput("requested eigenvector count d must be >= 1".into()));
    }
    check_square(a, "A")?;
    check_square(b, "B")?;
    if a.nrows() != b.nrows() {
        return Err(CmmsError::DimensionMismatch(format!(
            "pencil sizes differ: A is {0}x{0}, B is {1}x{1}",
            a.nrows(),
            b.nrows()
        )));
    }
    let asym = asymmetry(a).max(asymmetry(b));
    if asym > SYMMETRY_TOL {
        return Err(CmmsError::NotSymmetric(asym));
    }

    let l = cholesky(a)?;
    let b = symmetrized(b);
    let linv_b = l
        .solve_lower_triangular(&b)
        .ok_or_else(|| CmmsError::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let m = l
        .solve_lower_triangular(&linv_b.transpose())
        .ok_or_else(|| CmmsError::NotPositiveDefinite("singular Cholesky factor".into()))?;
    let (nu, v) = sym_eig(&symmetrized(&m))?;

    let size = nu.len();
    let effective_d = (0..d.min(size))
        .take_while(|&r| nu[size - 1 - r] > NULL_SPACE_CUTOFF)
        .count();
    if effective_d < d {
        log::warn!(
            "generalized eigensolver: requested {d} directions, only {effective_d} lie outside the null space of B"
        );
    }

    let lt = l.transpose();
    let mut vectors = DMatrix::zeros(size, effective_d);
    let mut values = DVector::zeros(effective_d);
    for r in 0..effective_d {
        let idx = size - 1 - r;
        let p = lt
            .solve_upper_triangular(&v.column(idx).into_owned())
            .ok_or_else(|| CmmsError::NotPositiveDefinite("singular Cholesky factor".into()))?;
        let norm = p.dot(&(&b * &p)).sqrt();
        vectors.set_column(r, &(p / norm));
        values[r] = 1.0 / nu[idx];
    }
    fix_signs(&mut vectors);
    Ok(EigResult {
        vectors,
        values,
        effective_d,
    })
}
