//! Replicable statistical clustering.
//!
//! Two executions of the algorithms in this crate that share internal
//! randomness (a [`SharedRandomness`] stream) but see independent i.i.d.
//! samples return the *same* artifact with high probability: the same
//! weighted coreset, the same centers, or the same clustering function.
//!
//! Layout:
//! - [`norm`], [`rng`], [`source`]: geometry, shared randomness and data sources.
//! - [`grid`]: hierarchical and fixed grids over `[-1/2, 1/2]^d`.
//! - [`primitives`]: replicable heavy hitters, rounding, mass estimation, SQ oracle.
//! - [`oracle`]: black-box clustering oracles and cost evaluation.
//! - [`coreset`]: the replicable quad tree and weighted coreset.
//! - [`optest`]: replicable estimation of the optimal cost.
//! - [`dimred`]: Euclidean pipeline with random projections.
//! - [`kcenters`]: replicable k-centers on a fixed grid.
//! - [`pipelines`]: end-to-end algorithms, evaluation and paired trials.

// `!(x > 0.0)` style checks reject NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coreset;
pub mod dimred;
mod error;
pub mod grid;
pub mod kcenters;
pub mod norm;
pub mod optest;
pub mod oracle;
pub mod pipelines;
pub mod primitives;
pub mod rng;
pub mod source;

pub use error::{Error, Result};
pub use norm::{CostPower, NormFamily, NormSpec};
pub use rng::SharedRandomness;
pub use source::{DistributionSource, Point, PointSet, Sampler, SourceSpec};
