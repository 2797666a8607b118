//! Feature datasets: loading, standardization, PCA reduction and the
//! semi-supervised labeled/unlabeled split.
//!
//! Features are stored samples-by-dims (`n × m`). Labels keep their original
//! integer values; solvers work with dense 0-based class indices obtained
//! from [`ClassMap`].

pub mod io;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CmmsError, Result};
use crate::numerics::sym_eig;

pub use io::Format;

/// Columns whose standard deviation is at or below this are zeroed by [`zscore`].
pub const ZSCORE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: Option<Vec<i64>>,
    name: String,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: Option<Vec<i64>>, name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if features.nrows() == 0 {
            return Err(CmmsError::InvalidInput(format!("dataset {name:?}: no rows")));
        }
        if features.ncols() == 0 {
            return Err(CmmsError::InvalidInput(format!("dataset {name:?}: no columns")));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (r, c) = (pos % features.nrows(), pos / features.nrows());
            return Err(CmmsError::parse(Some(r + 1), Some(c + 1), "non-finite value"));
        }
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(CmmsError::DimensionMismatch(format!(
                    "dataset {name:?}: {} labels for {} samples",
                    l.len(),
                    features.nrows()
                )));
            }
        }
        Ok(Dataset { features, labels, name })
    }

    /// Load features (format sniffed from content) and an optional label file.
    pub fn load(features: impl AsRef<Path>, labels: Option<&Path>, name: impl Into<String>) -> Result<Self> {
        let x = io::load_features_auto(features)?;
        let y = labels.map(io::load_labels).transpose()?;
        Dataset::new(x, y, name)
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.features.ncols()
    }

    pub fn require_labels(&self) -> Result<&[i64]> {
        self.labels()
            .ok_or_else(|| CmmsError::InvalidInput(format!("dataset {:?} has no labels", self.name)))
    }

    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        Dataset::new(features, self.labels.clone(), self.name.clone())
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize], name: impl Into<String>) -> Result<Self> {
        let x = self.features.select_rows(rows.iter());
        let y = self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect());
        Dataset::new(x, y, name)
    }
}

/// Mapping between original label values and dense 0-based class indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    classes: Vec<i64>,
}

impl ClassMap {
    pub fn from_labels(labels: &[i64]) -> Self {
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        ClassMap { classes }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[i64] {
        &self.classes
    }

    pub fn index_of(&self, label: i64) -> Option<usize> {
        self.classes.binary_search(&label).ok()
    }

    pub fn encode(&self, labels: &[i64]) -> Result<Vec<usize>> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                self.index_of(l).ok_or_else(|| {
                    CmmsError::InvalidInput(format!("label {l} at row {} is not a known class", i + 1))
                })
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<i64> {
        indices.iter().map(|&i| self.classes[i]).collect()
    }
}

/// Column-wise z-score with population standard deviation.
pub fn zscore(d: &Dataset) -> Result<Dataset> {
    let n = d.n_samples();
    if n < 2 {
        return Err(CmmsError::InvalidInput(format!(
            "zscore needs at least 2 samples, dataset {:?} has {n}",
            d.name()
        )));
    }
    let mut x = d.features().clone();
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let std = (col.norm_squared() / n as f64).sqrt();
        if std > ZSCORE_EPS {
            col /= std;
        } else {
            col.fill(0.0);
        }
    }
    d.with_features(x)
}

/// Principal axes of mean-centred data.
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `m × out_dim`, orthonormal columns ordered by decreasing variance.
    pub basis: DMatrix<f64>,
    /// Population variance along each basis column.
    pub variances: DVector<f64>,
}

impl PcaModel {
    pub fn fit(x: &DMatrix<f64>, out_dim: usize) -> Result<Self> {
        let (n, m) = (x.nrows(), x.ncols());
        let max_dim = n.saturating_sub(1).min(m);
        if out_dim < 1 || out_dim > max_dim {
            return Err(CmmsError::InvalidInput(format!(
                "PCA output dimension {out_dim} outside 1..={max_dim} (n={n}, m={m})"
            )));
        }
        let mean = x.row_mean().transpose();
        let centered = center_rows(x, &mean);
        let cov = centered.transpose() * &centered / n as f64;
        let (vals, vecs) = sym_eig(&cov)?;
        let basis = DMatrix::from_fn(m, out_dim, |r, c| vecs[(r, m - 1 - c)]);
        let variances = DVector::from_fn(out_dim, |c, _| vals[m - 1 - c]);
        Ok(PcaModel { mean, basis, variances })
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(CmmsError::DimensionMismatch(format!(
                "PCA fitted on {} dims, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        Ok(center_rows(x, &self.mean) * &self.basis)
    }

    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = z * self.basis.transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

fn center_rows(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Reduce `d` to its top `out_dim` principal components.
pub fn pca(d: &Dataset, out_dim: usize) -> Result<(Dataset, DMatrix<f64>)> {
    let model = PcaModel::fit(d.features(), out_dim)?;
    let reduced = d.with_features(model.transform(d.features())?)?;
    Ok((reduced, model.basis))
}

/// Target data split into a few labeled samples per class and the rest.
#[derive(Debug, Clone)]
pub struct SdaSplit {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub per_class_count: usize,
    /// Row indices into the original target, ascending.
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
}

/// Seeded draw of `per_class` labeled samples from every class.
pub fn split_sda(d: &Dataset, per_class: usize, seed: u64) -> Result<SdaSplit> {
    let labels = d.require_labels()?;
    if per_class == 0 {
        return Err(CmmsError::InvalidInput("per-class labeled count must be >= 1".into()));
    }
    let mut by_class: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labeled = Vec::with_capacity(per_class * by_class.len());
    for (class, mut idx) in by_class {
        if idx.len() <= per_class {
            return Err(CmmsError::InvalidInput(format!(
                "class {class} has {} samples, need more than {per_class}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        labeled.extend_from_slice(&idx[..per_class]);
    }
    labeled.sort_unstable();
    let mut is_labeled = vec![false; d.n_samples()];
    for &i in &labeled {
        is_labeled[i] = true;
    }
    let unlabeled: Vec<usize> = (0..d.n_samples()).filter(|&i| !is_labeled[i]).collect();
    Ok(SdaSplit {
        labeled: d.select_rows(&labeled, format!("{}-labeled", d.name()))?,
        unlabeled: d.select_rows(&unlabeled, format!("{}-unlabeled", d.name()))?,
        per_class_count: per_class,
        labeled_indices: labeled,
        unlabeled_indices: unlabeled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ds(rows: usize, cols: usize, vals: &[f64]) -> Dataset {
        Dataset::new(DMatrix::from_row_slice(rows, cols, vals), None, "t").unwrap()
    }

    fn random_ds(seed: u64, n: usize, m: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, m, |_, c| rng.random_range(-2.0..2.0) * (c + 1) as f64 + c as f64);
        Dataset::new(x, None, "rand").unwrap()
    }

    #[test]
    fn dataset_rejects_bad_shapes() {
        assert!(Dataset::new(DMatrix::zeros(0, 3), None, "e").is_err());
        assert!(Dataset::new(DMatrix::zeros(2, 2), Some(vec![1]), "e").is_err());
        let err = Dataset::new(DMatrix::from_row_slice(1, 2, &[0.0, f64::INFINITY]), None, "e").unwrap_err();
        assert!(err.to_string().contains("row 1, col 2"));
    }

    #[test]
    fn zscore_two_points() {
        let z = zscore(&ds(2, 1, &[1.0, 3.0])).unwrap();
        assert_eq!(z.features().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn zscore_constant_column() {
        let z = zscore(&ds(3, 1, &[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(z.features().as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zscore_moments_and_idempotence() {
        let d = random_ds(3, 50, 8);
        let z = zscore(&d).unwrap();
        for col in z.features().column_iter() {
            // independent recomputation of the moments
            let mean: f64 = col.iter().sum::<f64>() / 50.0;
            let var: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-12);
        }
        let zz = zscore(&z).unwrap();
        assert!((zz.features() - z.features()).amax() < 1e-10);
    }

    #[test]
    fn zscore_needs_two_rows() {
        assert!(zscore(&ds(1, 2, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn pca_rank_one_reconstructs() {
        let dir = [1.0, -2.0, 0.5];
        let vals: Vec<f64> = (0..6)
            .flat_map(|i| {
                let t = i as f64 * 0.7 - 1.0;
                dir.iter().map(move |d| 3.0 + t * d).collect::<Vec<_>>()
            })
            .collect();
        let d = ds(6, 3, &vals);
        let model = PcaModel::fit(d.features(), 1).unwrap();
        let recon = model.inverse_transform(&model.transform(d.features()).unwrap());
        assert!((recon - d.features()).amax() < 1e-10);
    }

    #[test]
    fn pca_full_dimension_keeps_variance() {
        let d = random_ds(4, 12, 5);
        let (r, basis) = pca(&d, 5).unwrap();
        let total = |x: &DMatrix<f64>| {
            let mean = x.row_mean();
            x.row_iter().map(|row| (row - &mean).norm_squared()).sum::<f64>()
        };
        assert!((total(r.features()) - total(d.features())).abs() / total(d.features()) < 1e-9);
        let gram = basis.transpose() * &basis;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
    }

    #[test]
    fn pca_retained_variance_matches_top_eigenvalues() {
        let d = random_ds(8, 40, 10);
        let (r, _) = pca(&d, 3).unwrap();
        // oracle: full eigendecomposition of the covariance via nalgebra directly
        let x = d.features();
        let mean = x.row_mean();
        let mut c = x.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        let cov = c.transpose() * &c / 40.0;
        let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top3: f64 = eig[..3].iter().sum();
        let retained: f64 = r.features().column_iter().map(|col| col.norm_squared() / 40.0).sum();
        assert!((retained - top3).abs() / top3 < 1e-10);
    }

    #[test]
    fn pca_reconstruction_error_non_increasing() {
        let d = random_ds(13, 15, 7);
        let mut last = f64::INFINITY;
        for k in 1..=7 {
            let model = PcaModel::fit(d.features(), k).unwrap();
            let recon = model.inverse_transform(&model.transform(d.features()).unwrap());
            let err = (recon - d.features()).norm_squared();
            assert!(err <= last + 1e-9, "dim {k}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-9);
    }

    #[test]
    fn pca_dimension_bounds() {
        let d = random_ds(1, 5, 8);
        assert!(pca(&d, 0).is_err());
        assert!(pca(&d, 5).is_err());
        assert!(pca(&d, 4).is_ok());
    }

    fn labeled(per: usize, classes: usize) -> Dataset {
        let n = per * classes;
        let labels: Vec<i64> = (0..n).map(|i| (i % classes) as i64 + 1).collect();
        Dataset::new(DMatrix::from_fn(n, 2, |r, c| (r * 2 + c) as f64), Some(labels), "tgt").unwrap()
    }

    #[test]
    fn split_counts_and_partition() {
        let d = labeled(10, 4);
        let s = split_sda(&d, 3, 7).unwrap();
        assert_eq!(s.labeled.n_samples(), 12);
        assert_eq!(s.unlabeled.n_samples(), 28);
        let mut counts = BTreeMap::new();
        for l in s.labeled.labels().unwrap() {
            *counts.entry(*l).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c == 3));
        let mut all: Vec<usize> = s.labeled_indices.iter().chain(&s.unlabeled_indices).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic() {
        let d = labeled(10, 3);
        let a = split_sda(&d, 3, 99).unwrap();
        let b = split_sda(&d, 3, 99).unwrap();
        assert_eq!(a.labeled_indices, b.labeled_indices);
        let c = split_sda(&d, 3, 100).unwrap();
        assert_ne!(a.labeled_indices, c.labeled_indices);
    }

    #[test]
    fn split_errors() {
        let d = labeled(3, 2);
        assert!(split_sda(&d, 0, 1).is_err());
        assert!(split_sda(&d, 3, 1).is_err());
        let unlabeled = Dataset::new(DMatrix::zeros(4, 1), None, "u").unwrap();
        assert!(split_sda(&unlabeled, 1, 1).is_err());
    }

    #[test]
    fn class_map_round_trip() {
        let map = ClassMap::from_labels(&[7, 3, 7, 10]);
        assert_eq!(map.classes(), &[3, 7, 10]);
        assert_eq!(map.encode(&[10, 3]).unwrap(), vec![2, 0]);
        assert_eq!(map.decode(&[1, 2]), vec![7, 10]);
        assert!(map.encode(&[4]).is_err());
    }
}
