//! Spiking neural network simulation, surrogate-gradient training and
//! temporal layer-adaptive magnitude pruning.

pub mod audit;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod prune;
pub mod rng;
pub mod snn;
pub mod tensor;
pub mod train;

pub use error::{Result, SlampError};
pub use rng::Rng;
pub use tensor::Tensor;
