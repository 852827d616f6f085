//! Contrast trees and contrast boosting.
//!
//! A contrast tree partitions predictor space into regions where two
//! outcomes `y` and `z` disagree the most under a chosen discrepancy
//! measure. Boosting with contrast trees repairs that disagreement, either
//! by per-region offsets to `z` or by per-region monotone transforms that
//! turn a simple `z` distribution into an estimate of the conditional
//! distribution of `y`.

pub mod boosting;
pub mod dataset;
pub mod diagnostics;
pub mod discrepancy;
pub mod error;
pub mod rng;
pub mod simgen;
pub mod tree;

pub use dataset::{ColumnRoles, ContrastSample, Frame, Value};
pub use discrepancy::{DiscrepancyValue, Measure};
pub use error::{DiscrepancyError, Error, Result};
pub use tree::{grow, ContrastTree, GrowConfig};
