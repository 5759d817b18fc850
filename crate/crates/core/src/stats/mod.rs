//! Rank correlation with permutation significance, and the lagged F-test
//! used for cross-sectional Granger causality over bucket-ordered series.

mod granger;
mod ols;
pub mod special;
mod spearman;

pub use granger::{granger_f, min_length as granger_min_length, GrangerResult};
pub use ols::{fit as least_squares, LeastSquares};
pub use spearman::{average_ranks, spearman, spearman_rho, CorrelationResult};
