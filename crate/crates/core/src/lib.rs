//! Trust-region stochastic variational inference.
//!
//! Conjugate exponential-family models (Bernoulli mixtures, Gaussian
//! mixtures with normal-inverse-Wishart priors, and latent Dirichlet
//! allocation) trained with either the classic natural-gradient SVI step or
//! the trust-region step, on fixed datasets or on a growing observation
//! database.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod expfam;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod special;
pub mod streaming;

pub use error::{Error, Result};
pub use expfam::{FamilySpec, NaturalParams, NiwParams};
