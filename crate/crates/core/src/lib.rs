//! Particle and grid solvers for Fredholm integral equations of the first
//! kind, `h(y) = int f(x) g(y | x) dx`, with `h` observed through samples.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod numeric;
pub mod particle;
pub mod problems;
pub mod timing;

pub use domain::{DataSource, Domain, ForwardKernel, FredholmProblem, Points, SmoothingKernel};
pub use error::{Error, Result};
