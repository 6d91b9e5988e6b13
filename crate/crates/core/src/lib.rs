//! # l3svm
//!
//! Locally linear landmark SVMs. The input space is partitioned with k-means,
//! every point is projected onto a shared set of landmarks, and one linear
//! model per cluster is learned jointly with a single common offset:
//!
//! ```text
//! f(x, k) = theta_k . mu(x) + b,     mu(x) = [mu(x, l_1), ..., mu(x, l_L)]
//! ```
//!
//! The crate is organized bottom-up:
//!
//! - [`dataio`]: sparse datasets, LIBSVM text format, standardization, folds,
//!   synthetic XOR and swiss-roll generators.
//! - [`clustering`]: k-means++ seeded Lloyd iterations and nearest-centroid
//!   assignment.
//! - [`landmarks`]: random and PCA landmark selection, the linear / RBF
//!   projection and the block feature map.
//! - [`solver`]: dual coordinate descent on the bias-regularized problem and an
//!   SMO reference solver for the dual with an unregularized offset.
//! - [`model`]: the training pipeline, one-vs-all multiclass, cross-validation
//!   and model documents.
//! - [`bounds`]: uniform-stability constant, generalization bound and an
//!   empirical stability audit.
//! - [`cli`]: the `l3svm` command line.
//!
//! ## Feature Flags
//!
//! - `parallel` (default): data-parallel loops (k-means assignment, one-vs-all
//!   solves, cross-validation grid, audit trials) run on rayon. Without it, or
//!   after [`par::set_enabled(false)`](par::set_enabled), the same loops run
//!   sequentially and produce bitwise-identical results.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod clustering;
pub mod dataio;
pub mod error;
pub mod landmarks;
pub mod model;
pub mod par;
pub mod solver;

pub use error::{L3Error, Result};
