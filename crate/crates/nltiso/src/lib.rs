//! Streaming identification of sparse, time-varying, nonlinear dependencies
//! among N jointly observed time series.
//!
//! The core estimator fits, for every target node, a kernel expansion over
//! lagged samples of all nodes and updates it one sample at a time with a
//! composite-objective mirror-descent step: a gradient step on the
//! instantaneous squared prediction error followed by closed-form group
//! shrinkage that drives entire (source, lag) coefficient groups to exact
//! zero. The l2 norm of each surviving group is the estimated strength of the
//! directed edge source -> target at that lag.
//!
//! Module map:
//! - [`series`]: sample containers, lag indexing, the sliding window of
//!   retained sample times shared by the whole pipeline.
//! - [`kernel`]: Gaussian kernel and the stacked kernel vector over all
//!   (lag, source, retained time) triples.
//! - [`estimator`]: per-node coefficient state, instantaneous loss/gradient,
//!   the mirror-descent update, and the online driver.
//! - [`baselines`]: linear counterpart of the estimator (raw lagged samples
//!   as features) for method comparisons.
//! - [`synthgen`]: synthetic generators with known ground-truth topology.
//! - [`metrics`]: error traces, adjacency extraction, support recovery.
//! - [`ingest`]: CSV loading, standardization, uniform resampling.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod ingest;
pub mod kernel;
pub mod metrics;
pub mod series;
pub mod synthgen;

pub use error::{Error, Result};
