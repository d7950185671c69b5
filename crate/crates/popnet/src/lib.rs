//! Two-sample inference over populations of Gaussian graphical models.
//!
//! Given one multivariate time series per subject and a two-group labeling,
//! this crate estimates each subject's conditional-independence graph by
//! penalized maximum likelihood and tests, edge by edge, whether the
//! group-level probability of the edge differs between groups. The
//! recommended procedure combines bootstrap resampling, random penalization
//! and a beta-binomial random-effects test statistic; the classical
//! single-fit difference-of-proportions baseline and both intermediate
//! ablations are available for comparison.
//!
//! Module map:
//! - [`ggm`]: weighted graphical lasso, edge supports, KKT verification
//! - [`whiten`]: autoregressive prewhitening and the Ljung-Box check
//! - [`stars`]: stability-based selection of the pilot penalty level
//! - [`resample`]: bootstrap edge-selection proportions, random penalties,
//!   edge filtering
//! - [`infer`]: beta-binomial fits, Wald/binomial statistics, permutation
//!   p-values, BY and Storey FDR
//! - [`sim`]: synthetic populations of graphical models and scoring
//! - [`pipeline`]: end-to-end orchestration of the four methods
//! - [`io`]: dataset manifests, result tables, run metadata
//! - [`bench`]: replicated scenario sweeps
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod bench;
pub mod edges;
pub mod error;
pub mod ggm;
pub mod infer;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod resample;
pub mod rngstream;
pub mod sim;
pub mod stars;
pub mod types;
pub mod whiten;

pub use error::{Error, Result};
