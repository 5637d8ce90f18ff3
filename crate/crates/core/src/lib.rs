//! Robust gradient boosting with concave-composite losses.
//!
//! A loss `g(s(y, f))` pairs a convex loss `s` with a concave component `g`.
//! Fitting alternates between weighting observations by `g'` of their current
//! losses and boosting Newton regression trees on the weighted convex loss.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod booster;
pub mod concave;
pub mod data;
mod error;
pub mod irco;
pub mod loss;
pub mod metrics;
mod sum;
pub mod tree;

pub use booster::{fit_boosted, BoostConfig, BoosterModel};
pub use concave::{Concave, ConcaveKind, ConcaveSpec};
pub use data::Dataset;
pub use error::{Error, Result};
pub use irco::{irboost, objective_rho, weight_snapshot, IrcoConfig, IrcoResult, OuterMode, StopReason};
pub use loss::{Label, LabelKind, Loss, LossKind};
pub use tree::{RegressionTree, TreeParams};
