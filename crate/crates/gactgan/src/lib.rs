//! Tabular data synthesis with a conditional GAN whose generator carries a
//! Gaussian weight posterior built from the optimization trajectory, plus the
//! utility/risk evaluation and Pareto-front model selection that goes with it.

pub mod artifact;
pub mod data;
pub mod eval;
pub mod exp;
pub mod gan;
pub mod nn;
pub mod swag;
pub mod error;

pub use error::{Error, Result};
