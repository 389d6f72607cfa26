//! Maximum mean discrepancy (MMD) kernels between bags of feature vectors.
//!
//! Each sample (for instance a whole slide image) is a [`dataio::FeatureSet`]:
//! an unordered bag of patch feature vectors. [`mmd`] turns a dataset of bags
//! into a matrix of squared MMD distances under a Gaussian patch kernel and
//! exponentiates it into a positive semi-definite kernel over bags. That kernel
//! drives hierarchical clustering ([`cluster`]), a precomputed-kernel SVM
//! ([`ksvm`]), and a kernel survival SVM ([`ksurv`]); [`eval`] holds the
//! evaluation statistics and [`workflow`] the end-to-end pipelines.

pub mod dataio;
pub mod error;
pub mod mmd;
pub mod cluster;
pub mod eval;
pub mod ksurv;
pub mod ksvm;
pub mod util;
pub mod workflow;

pub use error::{Error, ErrorCategory, Result};
