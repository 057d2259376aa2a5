//! Spectral estimation of a low-dimensional linear representation shared by
//! many heterogeneous clients.
//!
//! Each client `i` holds `n_i` samples `(x_ij, y_ij)` with
//! `E[y x] = B* alpha_i`. The replica estimator forms two independent local
//! averages of `y x` per client and takes the top-k singular subspace of
//! `Z = sum_i n_i zbar_i ztilde_i^T`. Baselines, diagnostics, transfer to new
//! clients, and a reproducible simulation harness live alongside it.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diversity;
pub mod estimators;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod subspace;
pub mod transfer;

pub use error::{Error, Result};
pub use estimators::{estimator_replica, EstimatorKind};
pub use model::{FederatedDataset, GroundTruth};
pub use subspace::{principal_angle_distance, SubspaceEstimate};
