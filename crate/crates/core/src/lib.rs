//! Data-independent filter pruning for convolutional networks.
//!
//! The crate scores the filters of each conv layer (norm, cosine-sum,
//! distance-sum, dissimilarity, hybrid and weighted hybrid criteria), turns
//! scores and pruning rates into deterministic plans, applies plans to weight
//! stores by zero-masking or structural removal, and accounts for the FLOPs a
//! plan removes.
//!
//! ```
//! use filterprune::criteria::{score, CriterionKind, FilterMatrix};
//!
//! let fm = FilterMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.5], [0.0, 1.0]]).unwrap();
//! let report = score(&fm, CriterionKind::whc()).unwrap();
//! assert_eq!(report.scores, vec![1.5, 0.5, 1.0]);
//! ```

pub mod archmodel;
pub mod compare;
pub mod criteria;
mod error;
pub mod fsutil;
pub mod planner;
pub mod tensor_io;

pub use error::{Error, Result};
