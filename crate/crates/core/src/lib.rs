//! Two-locus sampling distributions under recombination and parent-independent
//! mutation.
//!
//! The crate provides the universal asymptotic terms `q0`/`q1` of the sampling
//! distribution in inverse powers of the recombination rate, the exact sampling
//! distribution of the Gaussian diffusion approximation, an exact oracle for the
//! standard finite-alleles model, a forward Moran simulator, and the backward
//! ancestral processes (ARG, artificial-recombination process, their coupling and
//! the loose-linkage coalescent) together with Monte Carlo estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod accuracy;
pub mod asymptotics;
pub mod coalescent;
pub mod error;
pub mod gaussian;
pub mod model;
pub mod moran;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, ErrorFamily, Result};
pub use model::{Locus, ModelParams, SampleConfig};
