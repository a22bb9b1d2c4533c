//! Bernstein copula estimation on adaptive rank grids.
//!
//! The crate is organised in layers:
//!
//! * [`bernstein`] — multivariate Bernstein polynomial and density kernels:
//!   beta densities, alternating-sign corner differences over hyperboxes,
//!   coefficient tensors and a grid monotonicity check.
//! * [`skeleton`] — the discrete side of the estimator: rank matrices,
//!   pseudo-rank augmentation, reduction onto a coarser grid and the
//!   admissibility check that makes a skeleton a valid copula support.
//! * [`copula`] — Bernstein copulas built from admissible skeletons, a
//!   Gaussian copula fitted from normal scores, and the independence /
//!   comonotonic / countermonotonic references, all with seeded samplers.
//! * [`risk`] — marginal quantile models, portfolio aggregation by Monte
//!   Carlo, value-at-risk / tail value-at-risk estimators, bootstrap
//!   standard errors and histograms.
//! * [`io`] — CSV rank tables, JSON skeleton files, density grids, sample
//!   dumps and the TOML portfolio configuration format.
//! * [`exec`] — deterministic chunked execution. Samplers draw each fixed
//!   size chunk from its own RNG stream, so parallel and sequential runs
//!   produce bit-identical output.
//!
//! Samplers and the portfolio simulator run on a rayon pool when the
//! default `parallel` feature is enabled; `*_seq` variants always run on
//! the calling thread and are kept public so the two paths can be compared
//! directly. The `COPULA_FORGE_THREADS` environment variable caps the pool
//! size (unset or `0` means one worker per core).

pub mod bernstein;
pub mod copula;
mod error;
pub mod exec;
pub mod io;
pub mod risk;
pub mod skeleton;

pub use error::{Error, Result};
