//! Estimation of KL divergence and entropy between discrete distributions on
//! large alphabets.
//!
//! The crate is organised in the order data flows through it:
//!
//! - [`distributions`]: probability vectors, bounded-ratio pairs, the
//!   adversarial families used for validation, exact functionals, and
//!   seeded multinomial / Poissonized sampling.
//! - [`approx`]: best uniform polynomial approximation of `x ln x` by Remez
//!   exchange, interval rescaling, and the factorial-moment coefficient sets
//!   that turn those polynomials into unbiased estimators of Poisson means.
//! - [`estimators`]: plug-in, augmented plug-in and polynomial-approximation
//!   divergence estimators, plus the plug-in entropy estimator.
//! - [`oracle`]: exact moments of estimators by enumeration, and the risk
//!   rate expressions with unit constants.
//! - [`bench`]: the Monte Carlo RMSE harness and its CSV format.
//!
//! All logarithms are natural.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod bench;
pub mod distributions;
mod error;
pub mod estimators;
pub mod oracle;

pub use error::{Error, Result};
