//! Spatially repulsive maxima-nominated sampling (DUST-MNS) for estimating the
//! proportion of areal units whose latent prevalence exceeds a threshold.
//!
//! The crate is organised bottom-up:
//!
//! - [`mathkit`]: numeric kernels (calibration map, binomial and incomplete-beta
//!   functions, order-statistic exceedance, bracketed root finding)
//! - [`frame`]: the finite areal population, its adjacency graph and diagnostics
//! - [`sampler`]: SRS, sequential pps-DUST and random set partitions
//! - [`design`]: one survey run (ranking, nomination, within-unit measurement)
//! - [`estimators`]: point estimates, bias and variance, intervals, imperfect-ranking calibration
//! - [`efficiency`]: closed-form efficiency analytics and table generators
//! - [`montecarlo`]: the replicated design comparison over a fixed frame

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod design;
pub mod efficiency;
pub mod error;
pub mod estimators;
pub mod frame;
pub mod mathkit;
pub mod montecarlo;
pub mod sampler;

pub use error::{Error, Result};
