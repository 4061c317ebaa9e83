//! Sliced-Wasserstein distances with Monte Carlo, quasi-Monte Carlo and
//! Bayesian-optimized projection directions.

pub mod error;
pub mod experiment;
pub mod flows;
pub mod gp;
pub mod io;
pub mod landscapes;
pub mod ot1d;
pub mod qsw;
pub mod selectors;
pub mod sphere;
pub mod svg;

pub use error::{Error, Result};
