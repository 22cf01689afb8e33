//! Synthetic datasets, input encoders and the checkpoint file format.

mod checkpoint;
mod dataset;
mod encode;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, LayerParams, CHECKPOINT_VERSION};
pub use dataset::{
    event_rate_maps, gen_event_classes, gen_static_classes, Dataset, Encoding, EventSpec, Sample,
    Split, Splits, StaticData, StaticSpec,
};
pub use encode::{encode_direct, encode_poisson};
