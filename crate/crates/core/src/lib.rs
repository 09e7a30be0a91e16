//! Pairwise learning with adaptive sample sizes.
//!
//! The optimizer solves a sequence of regularized pairwise ERM problems on
//! nested, geometrically growing prefixes of the training set. Each stage runs
//! doubly stochastic proximal gradient descent, drawing one (positive,
//! negative) pair per step and reweighting its gradient so the estimate stays
//! unbiased for the chosen objective normalization.
//!
//! Modules:
//! - [`data`]: sparse rows, LIBSVM I/O, label binarization, splits, stage prefixes
//! - [`pairloss`]: pairwise surrogate losses and exact full-objective oracles
//! - [`prox`]: elastic-net regularizer and its proximal operator
//! - [`sampling`]: pair distributions, importance weights, gradient variance
//! - [`optimizer`]: the adaptive outer loop and the inner stochastic loop
//! - [`theory`]: closed-form bounds and the uniform-stability probe
//! - [`metrics`]: exact AUC and summary statistics

pub mod data;
mod error;
pub mod metrics;
pub mod optimizer;
pub mod pairloss;
pub mod prox;
pub mod rng;
pub mod sampling;
pub mod theory;

pub use data::{Dataset, Label, RawDataset, SparseVector};
pub use error::{Error, Result};
pub use metrics::TiesPolicy;
pub use optimizer::{InnerSchedule, StepSchedule, TrainConfig, TrainTrace};
pub use pairloss::{Model, Normalization, PairLoss};
pub use prox::Regularizer;
pub use sampling::{PairDistribution, PairSampling};
