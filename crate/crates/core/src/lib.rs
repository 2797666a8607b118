//! Domain adaptation by class-centroid matching with a self-learned local
//! manifold on the target domain.
//!
//! Unsupervised mode transfers labels from a labeled source to an unlabeled
//! target; the semi-supervised modes additionally use a few labeled target
//! samples, with either a shared or a per-domain feature space.
//!
//! ```no_run
//! use cmms::{dataset::Dataset, solver::{fit_uda, Hyperparams}};
//!
//! let source = Dataset::load("src.csv", Some("src.labels".as_ref()), "src")?;
//! let target = Dataset::load("tgt.csv", None, "tgt")?;
//! let (_state, labels) = fit_uda(&source, &target, &Hyperparams::default())?;
//! println!("{labels:?}");
//! # Ok::<(), cmms::CmmsError>(())
//! ```

pub mod dataset;
pub mod error;
pub mod eval;
pub mod graphs;
pub mod numerics;
pub mod semi;
pub mod solver;
pub mod synthetic;

pub use error::{CmmsError, Result};
