//! Baseline classifiers that seed the target label matrix.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{ClassMap, Dataset};
use crate::error::{CmmsError, Result};

/// Anything that turns labeled training rows into hard labels for other rows.
/// Inputs are samples-by-dims; labels are dense 0-based class indices.
pub trait LabelInitializer: Send + Sync {
    fn initial_labels(
        &self,
        train_x: &DMatrix<f64>,
        train_y: &[usize],
        n_classes: usize,
        apply_x: &DMatrix<f64>,
    ) -> Result<Vec<usize>>;
}

/// One-vs-rest ridge regression on `{0,1}` targets with an appended bias
/// feature (penalised like the others), decided by argmax.
#[derive(Debug, Clone, Copy)]
pub struct RidgeInitializer {
    pub ridge: f64,
}

impl Default for RidgeInitializer {
    fn default() -> Self {
        RidgeInitializer { ridge: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NearestCentroidInitializer;

pub(crate) fn augment(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(x.ncols(), 1.0)
}

pub(crate) fn indicator(y: &[usize], n_classes: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(y.len(), n_classes);
    for (i, &c) in y.iter().enumerate() {
        t[(i, c)] = 1.0;
    }
    t
}

/// Row-wise argmax; ties go to the lower column.
pub fn argmax_rows(scores: &DMatrix<f64>) -> Vec<usize> {
    scores
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn check_shapes(train_x: &DMatrix<f64>, train_y: &[usize], n_classes: usize, apply_x: &DMatrix<f64>) -> Result<()> {
    if train_x.nrows() != train_y.len() {
        return Err(CmmsError::DimensionMismatch(format!(
            "{} training rows, {} labels",
            train_x.nrows(),
            train_y.len()
        )));
    }
    if train_x.ncols() != apply_x.ncols() {
        return Err(CmmsError::DimensionMismatch(format!(
            "training data has {} dims, prediction data has {}",
            train_x.ncols(),
            apply_x.ncols()
        )));
    }
    if train_y.is_empty() {
        return Err(CmmsError::InvalidInput("no training rows for the label initializer".into()));
    }
    if let Some(&bad) = train_y.iter().find(|&&c| c >= n_classes) {
        return Err(CmmsError::InvalidInput(format!("class index {bad} outside 0..{n_classes}")));
    }
    Ok(())
}

impl RidgeInitializer {
    /// Weight matrix `(m+1) × C` from the primal or dual normal equations,
    /// whichever system is smaller.
    pub fn weights(&self, train_x: &DMatrix<f64>, train_y: &[usize], n_classes: usize) -> Result<DMatrix<f64>> {
        let xa = augment(train_x);
        let t = indicator(train_y, n_classes);
        let (n, p) = (xa.nrows(), xa.ncols());
        let singular = || CmmsError::NotPositiveDefinite("ridge normal equations are singular".into());
        if p <= n {
            let gram = xa.transpose() * &xa + DMatrix::identity(p, p) * self.ridge;
            let chol = nalgebra::Cholesky::new(gram).ok_or_else(singular)?;
            Ok(chol.solve(&(xa.transpose() * t)))
        } else {
            let gram = &xa * xa.transpose() + DMatrix::identity(n, n) * self.ridge;
            let chol = nalgebra::Cholesky::new(gram).ok_or_else(singular)?;
            Ok(xa.transpose() * chol.solve(&t))
        }
    }
}

impl LabelInitializer for RidgeInitializer {
    fn initial_labels(
        &self,
        train_x: &DMatrix<f64>,
        train_y: &[usize],
        n_classes: usize,
        apply_x: &DMatrix<f64>,
    ) -> Result<Vec<usize>> {
        check_shapes(train_x, train_y, n_classes, apply_x)?;
        match self.weights(train_x, train_y, n_classes) {
            Ok(w) => Ok(argmax_rows(&(augment(apply_x) * w))),
            Err(e) => {
                log::warn!("ridge initializer failed ({e}); falling back to nearest class centroid");
                NearestCentroidInitializer.initial_labels(train_x, train_y, n_classes, apply_x)
            }
        }
    }
}

impl LabelInitializer for NearestCentroidInitializer {
    fn initial_labels(
        &self,
        train_x: &DMatrix<f64>,
        train_y: &[usize],
        n_classes: usize,
        apply_x: &DMatrix<f64>,
    ) -> Result<Vec<usize>> {
        check_shapes(train_x, train_y, n_classes, apply_x)?;
        let m = train_x.ncols();
        let mut means = vec![DVector::zeros(m); n_classes];
        let mut counts = vec![0usize; n_classes];
        for (i, &c) in train_y.iter().enumerate() {
            means[c] += train_x.row(i).transpose();
            counts[c] += 1;
        }
        for (mean, &cnt) in means.iter_mut().zip(&counts) {
            if cnt > 0 {
                *mean /= cnt as f64;
            }
        }
        Ok(apply_x
            .row_iter()
            .map(|row| {
                let mut best = usize::MAX;
                let mut best_d = f64::INFINITY;
                for (c, mean) in means.iter().enumerate() {
                    if counts[c] == 0 {
                        continue;
                    }
                    let d = (row.transpose() - mean).norm_squared();
                    if d < best_d {
                        best_d = d;
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

/// Default ridge initialization: train on the labeled source, label the target.
/// Returns dense class indices in the order of `ClassMap::from_labels(source labels)`.
pub fn init_labels(source: &Dataset, target: &Dataset) -> Result<Vec<usize>> {
    let map = ClassMap::from_labels(source.require_labels()?);
    let ys = map.encode(source.require_labels()?)?;
    RidgeInitializer::default().initial_labels(source.features(), &ys, map.n_classes(), target.features())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn argmax_tie_prefers_lower_class() {
        let s = DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.1, 0.0, 0.2, 0.2]);
        assert_eq!(argmax_rows(&s), vec![0, 1]);
    }

    #[test]
    fn separable_source_labels_shifted_target() {
        let xs = DMatrix::from_row_slice(6, 2, &[
            -5.0, 0.0, -5.2, 0.3, -4.8, -0.2, //
            5.0, 0.0, 5.1, 0.2, 4.9, -0.3,
        ]);
        let ys = vec![0, 0, 0, 1, 1, 1];
        let xt = &xs.add_scalar(0.5);
        let out = RidgeInitializer::default().initial_labels(&xs, &ys, 2, xt).unwrap();
        assert_eq!(out, ys);
        let nc = NearestCentroidInitializer.initial_labels(&xs, &ys, 2, xt).unwrap();
        assert_eq!(nc, ys);
    }

    #[test]
    fn equidistant_sample_goes_to_lower_class() {
        let xs = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let ys = vec![0, 1];
        let xt = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert_eq!(RidgeInitializer::default().initial_labels(&xs, &ys, 2, &xt).unwrap(), vec![0]);
        assert_eq!(NearestCentroidInitializer.initial_labels(&xs, &ys, 2, &xt).unwrap(), vec![0]);
    }

    #[test]
    fn dual_and_primal_agree() {
        // 3 samples, 5 dims → dual route; compare against the primal solve
        let xs = DMatrix::from_row_slice(3, 5, &[
            1.0, 0.2, -0.3, 0.0, 2.0, //
            -1.0, 0.5, 0.1, 1.0, 0.0, //
            0.3, -0.7, 0.9, -0.4, 1.1,
        ]);
        let ys = vec![0, 1, 1];
        let w = RidgeInitializer::default().weights(&xs, &ys, 2).unwrap();
        let xa = augment(&xs);
        let primal = (xa.transpose() * &xa + DMatrix::identity(6, 6)).try_inverse().unwrap()
            * xa.transpose()
            * indicator(&ys, 2);
        assert!((w - primal).amax() < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let xs = DMatrix::zeros(2, 2);
        assert!(RidgeInitializer::default().initial_labels(&xs, &[0], 1, &xs).is_err());
        assert!(RidgeInitializer::default().initial_labels(&xs, &[0, 0], 1, &DMatrix::zeros(1, 3)).is_err());
        assert!(RidgeInitializer::default().initial_labels(&xs, &[0, 2], 2, &xs).is_err());
    }
}
