//! Traveling waves of nonlocal bistable equations
//! `u_t = d u_xx + S(u, w * g(u))`, certified L² spectral-gap constants for
//! the frozen-wave operator, and Monte-Carlo checks of stochastic stability.

pub mod config;
pub mod discretize;
pub mod error;
pub mod gap;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod quad;
pub mod report;
pub mod smallc;
pub mod spectral;
pub mod stochastic;
pub mod wave;

pub use error::{Error, Result};
