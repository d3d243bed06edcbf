//! Seedling quality classification standards built from clustered indicator data.
//!
//! The crate covers the whole numeric path: loading and normalizing a raw
//! indicator table ([`dataset`]), normality and correlation testing
//! ([`stats`]), factor analysis and view partitioning ([`factors`]),
//! clustering with Lloyd's K-Means ([`kmeans`]) or a weighted multi-view
//! contrastive deep clusterer ([`cvcl`]), and turning the resulting cluster
//! geometry into a graded standard with half-meeting rules ([`grading`]).
//! Internal validity indices live in [`cluster_eval`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster_eval;
pub mod clustering;
pub mod cvcl;
pub mod dataset;
pub mod error;
pub mod factors;
pub mod grading;
pub mod kmeans;
pub mod special;
pub mod stats;

pub use clustering::{ClusteringResult, Method};
pub use dataset::{
    DescriptiveStats, Direction, IndicatorSpec, RawDataset, ScaleParams, Scaling,
    StandardizedDataset,
};
pub use error::{Error, ErrorKind, Result};
