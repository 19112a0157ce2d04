//! Neural network stack: autodiff tape, layers, the generator/discriminator
//! architectures, and the Adam optimizer.

pub mod adam;
pub mod layers;
pub mod nets;
pub mod tape;

pub use tape::{Tape, Var};
