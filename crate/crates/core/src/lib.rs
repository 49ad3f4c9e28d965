//! # knn-kl
//!
//! Nonparametric estimation of the Kullback–Leibler divergence D(P‖Q) and the
//! Shannon differential entropy H(P) from i.i.d. samples, using k-nearest
//! neighbor distances.
//!
//! - [`knn`]: exact k-th neighbor queries (brute force and kd-tree) with a
//!   deterministic (distance, index) tie-break.
//! - [`estimators`]: the divergence estimator D̂ₙ,ₘ(k, l), its per-point
//!   order generalization, and the Kozachenko–Leonenko entropy estimator.
//! - [`functionals`]: Monte-Carlo evaluators for the K, Q, T and L integral
//!   functionals whose finiteness gives asymptotic unbiasedness and
//!   L²-consistency.
//! - [`models`]: Gaussian and uniform-box models with seeded sampling and
//!   closed-form oracles.
//! - [`special`]: digamma, trigamma, iterated logarithms, the G_N gauge.
//! - [`experiment`]: convergence sweeps and the Erlang limit-law diagnostic.
//!
//! Logarithms are natural throughout.
//!
//! ```
//! use knn_kl::{kl_estimate, OrderSpec, PointSample};
//!
//! let x = PointSample::from_scalars(&[0.0, 1.0]).unwrap();
//! let y = PointSample::from_scalars(&[0.5]).unwrap();
//! let report = kl_estimate(&x, &y, &OrderSpec::uniform(1, 1)).unwrap();
//! assert!((report.value - 0.5f64.ln()).abs() < 1e-12);
//! ```

#![forbid(unsafe_code)]

pub mod error;
pub mod estimators;
pub mod experiment;
pub mod functionals;
pub mod knn;
pub mod models;
pub mod sample;
pub mod special;

pub use error::{Error, Result};
pub use estimators::{
    entropy_estimate, kl_estimate, kl_estimate_equal_orders, EntropyOrders, EstimateReport,
    OrderSpec,
};
pub use knn::{NeighborAnswer, NeighborQuery, SearchMethod};
pub use models::{DensityModel, SeededStream};
pub use sample::PointSample;
