//! Estimators of average derivatives in nonparametric instrumental variables
//! models: sieve minimum distance over spline and neural-network sieves,
//! identity and efficient score estimators, analytic and bootstrap inference,
//! and the Monte Carlo designs used to exercise them.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and
//! parallel replication live in the `npiv` crate.

#![no_std]

extern crate alloc;

pub mod ann;
pub mod data;
pub mod dgp;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod nuisance;
pub mod pipeline;
pub mod score;
pub mod sieve;
pub mod smd;

pub use data::Dataset;
pub use error::{Error, Result};
