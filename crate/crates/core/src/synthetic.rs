//! Seeded toy domain-shift problems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{CmmsError, Result};

/// A labeled source domain and a target domain whose labels are held out
/// for scoring only.
#[derive(Debug, Clone)]
pub struct ShiftTask {
    pub source: Dataset,
    pub target: Dataset,
}

#[derive(Debug, Clone)]
pub struct GaussianShift {
    pub n_classes: usize,
    pub per_class_source: usize,
    pub per_class_target: usize,
    pub ambient_dim: usize,
    /// Distance between neighbouring class means in the latent plane.
    pub separation: f64,
    /// Latent translation applied to the whole target domain.
    pub shift: [f64; 2],
    /// Per-coordinate std inside the latent plane.
    pub spread: f64,
    /// Isotropic ambient noise std.
    pub noise: f64,
}

impl Default for GaussianShift {
    fn default() -> Self {
        GaussianShift {
            n_classes: 3,
            per_class_source: 60,
            per_class_target: 60,
            ambient_dim: 30,
            separation: 4.0,
            shift: [1.5, 1.0],
            spread: 0.6,
            noise: 0.05,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random `m × 2` matrix with orthonormal columns.
fn random_plane(rng: &mut ChaCha8Rng, m: usize) -> Result<DMatrix<f64>> {
    if m < 2 {
        return Err(CmmsError::InvalidInput("ambient dimension must be at least 2".into()));
    }
    let g = DMatrix::from_fn(m, 2, |_, _| normal(rng));
    Ok(g.qr().q())
}

fn embed(
    rng: &mut ChaCha8Rng,
    plane: &DMatrix<f64>,
    latent: &[(f64, f64, i64)],
    noise: f64,
    name: &str,
) -> Result<Dataset> {
    let m = plane.nrows();
    let mut x = DMatrix::zeros(latent.len(), m);
    let mut labels = Vec::with_capacity(latent.len());
    for (i, &(a, b, y)) in latent.iter().enumerate() {
        let v = plane.column(0) * a + plane.column(1) * b;
        let eps = DVector::from_fn(m, |_, _| noise * normal(rng));
        x.row_mut(i).copy_from(&(v + eps).transpose());
        labels.push(y);
    }
    Dataset::new(x, Some(labels), name)
}

impl GaussianShift {
    pub fn generate(&self, seed: u64) -> Result<ShiftTask> {
        if self.n_classes < 2 {
            return Err(CmmsError::InvalidInput("need at least two classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane = random_plane(&mut rng, self.ambient_dim)?;
        let means: Vec<(f64, f64)> = (0..self.n_classes)
            .map(|c| {
                let t = std::f64::consts::TAU * c as f64 / self.n_classes as f64;
                let r = self.separation / (2.0 * (std::f64::consts::PI / self.n_classes as f64).sin());
                (r * t.cos(), r * t.sin())
            })
            .collect();
        let draw = |per_class: usize, offset: [f64; 2], rng: &mut ChaCha8Rng| {
            let mut pts = Vec::with_capacity(per_class * self.n_classes);
            for (c, &(mx, my)) in means.iter().enumerate() {
                for _ in 0..per_class {
                    pts.push((
                        mx + offset[0] + self.spread * normal(rng),
                        my + offset[1] + self.spread * normal(rng),
                        c as i64,
                    ));
                }
            }
            pts
        };
        let src = draw(self.per_class_source, [0.0, 0.0], &mut rng);
        let tgt = draw(self.per_class_target, self.shift, &mut rng);
        Ok(ShiftTask {
            source: embed(&mut rng, &plane, &src, self.noise, "gauss-src")?,
            target: embed(&mut rng, &plane, &tgt, self.noise, "gauss-tgt")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MoonsShift {
    pub per_class: usize,
    pub ambient_dim: usize,
    /// Latent translation of the target domain.
    pub shift: [f64; 2],
    /// Target rotation about the data centre, radians.
    pub angle: f64,
    /// Latent jitter std.
    pub spread: f64,
    /// Isotropic ambient noise std.
    pub noise: f64,
}

impl Default for MoonsShift {
    fn default() -> Self {
        MoonsShift {
            per_class: 100,
            ambient_dim: 10,
            shift: [0.0, 0.5],
            angle: 0.0,
            spread: 0.1,
            noise: 0.02,
        }
    }
}

impl MoonsShift {
    /// Two interleaved half-moons embedded in `ambient_dim` dimensions.
    pub fn generate(&self, seed: u64) -> Result<ShiftTask> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane = random_plane(&mut rng, self.ambient_dim)?;
        let draw = |rot: f64, offset: [f64; 2], rng: &mut ChaCha8Rng| {
            let (s, c) = rot.sin_cos();
            let mut pts = Vec::with_capacity(2 * self.per_class);
            for label in 0..2 {
                for _ in 0..self.per_class {
                    let t = rng.random_range(0.0..std::f64::consts::PI);
                    let (x, y) = if label == 0 {
                        (t.cos(), t.sin())
                    } else {
                        (1.0 - t.cos(), 0.5 - t.sin())
                    };
                    let x = x - 0.5 + self.spread * normal(rng);
                    let y = y - 0.25 + self.spread * normal(rng);
                    pts.push((c * x - s * y + offset[0], s * x + c * y + offset[1], label));
                }
            }
            pts
        };
        let src = draw(0.0, [0.0, 0.0], &mut rng);
        let tgt = draw(self.angle, self.shift, &mut rng);
        Ok(ShiftTask {
            source: embed(&mut rng, &plane, &src, self.noise, "moons-src")?,
            target: embed(&mut rng, &plane, &tgt, self.noise, "moons-tgt")?,
        })
    }
}

/// Small random problem with random shape, used for invariant checks.
/// Every class appears at least twice in the source.
pub fn random_problem(seed: u64, n_classes: usize, dims: usize, n_source: usize, n_target: usize) -> Result<ShiftTask> {
    if n_source < 2 * n_classes {
        return Err(CmmsError::InvalidInput("source too small for the class count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<DVector<f64>> = (0..n_classes).map(|_| DVector::from_fn(dims, |_, _| 2.0 * normal(&mut rng))).collect();
    let shift = DVector::from_fn(dims, |_, _| 0.5 * normal(&mut rng));
    let sample = |n: usize, offset: &DVector<f64>, rng: &mut ChaCha8Rng| {
        let mut x = DMatrix::zeros(n, dims);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = if i < 2 * n_classes { i % n_classes } else { rng.random_range(0..n_classes) };
            let row = &means[c] + offset + DVector::from_fn(dims, |_, _| normal(rng));
            x.row_mut(i).copy_from(&row.transpose());
            y.push(c as i64);
        }
        (x, y)
    };
    let (xs, ys) = sample(n_source, &DVector::zeros(dims), &mut rng);
    let (xt, yt) = sample(n_target, &shift, &mut rng);
    Ok(ShiftTask {
        source: Dataset::new(xs, Some(ys), "rand-src")?,
        target: Dataset::new(xt, Some(yt), "rand-tgt")?,
    })
}
