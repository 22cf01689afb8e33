//! Integrate-and-fire network simulation.

mod layer;
mod network;
mod neuron;
mod record;

pub use layer::{LayerKind, LayerState, PoolGeometry};
pub use network::{stack_frames, Architecture, ForwardOptions, LayerSpec, Network};
pub use neuron::{if_step, NeuronConfig, SpikeFn};
pub use record::{LayerTrace, SpikeRecord};
