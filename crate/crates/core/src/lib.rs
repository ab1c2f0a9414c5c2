//! Weakly supervised point-cloud segmentation by consistency training.
//!
//! Two augmented views of each scene are predicted by a shared per-point
//! classifier. Confident predictions on view A become pseudo-labels for
//! view B, both point by point and after averaging over super-points
//! (clusters of nearby, similarly colored points). An adaptive weight moves
//! trust from the super-point labels to the point-wise ones as training
//! proceeds.
//!
//! ```
//! use pointmatch::losses::{pointwise_pseudolabel, superpoint_pseudolabel};
//! use pointmatch::types::{ProbMatrix, SuperPointPartition};
//! use ndarray::array;
//!
//! let q = ProbMatrix::new(array![[0.6, 0.4], [0.8, 0.2], [0.7, 0.3]]).unwrap();
//! let part = SuperPointPartition::new(vec![0, 0, 0], 1).unwrap();
//! let sp = superpoint_pseudolabel(&q, &part, 0.7).unwrap();
//! assert_eq!(sp.classes, vec![0, 0, 0]);
//! assert!(sp.mask.iter().all(|&m| m));
//! assert_eq!(pointwise_pseudolabel(&q, 0.7).mask, vec![false, true, true]);
//! ```

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod knn;
pub mod losses;
pub mod model;
pub mod seed;
pub mod superpoint;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use types::{ProbMatrix, PointCloud, PseudoLabel, SuperPointPartition, WeakLabels};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/superpoints.md")]
    mod superpoints {}
    #[doc = include_str!("../../../book/src/pseudo-labels.md")]
    mod pseudo_labels {}
    #[doc = include_str!("../../../book/src/schedule.md")]
    mod schedule {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/determinism.md")]
    mod determinism {}
}
