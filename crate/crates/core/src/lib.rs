//! Simulation laboratory for weighted sums of independent random variables
//! regulated by a mass sequence.

pub mod catalog;
pub mod empirical;
pub mod error;
pub mod ext;
pub mod mass_seq;
pub mod montecarlo;
pub mod rng;
pub mod rv_family;
pub mod stats;
pub mod summation;

pub use error::{Error, Result};
