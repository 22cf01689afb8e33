use crate::error::{Result, SlampError};
use crate::tensor::Tensor;

/// Per-layer activity captured during a rollout.
///
/// `activity` and `membranes` are laid out `[T, batch, neurons]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Spikes for spiking layers, pooled values for pooling layers and the
    /// accumulated potential for the readout.
    pub activity: Tensor,
    pub membranes: Option<Tensor>,
    pub spiking: bool,
}

/// Everything a rollout observed, indexed `(layer, timestep, sample, neuron)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRecord {
    pub timesteps: usize,
    pub batch: usize,
    /// Network input, `[T, batch, inputs]`.
    pub input: Tensor,
    pub layers: Vec<LayerTrace>,
}

impl SpikeRecord {
    /// Activity arriving at layer `layer`, `[T, batch, layer inputs]`.
    pub fn presynaptic(&self, layer: usize) -> &Tensor {
        if layer == 0 {
            &self.input
        } else {
            &self.layers[layer - 1].activity
        }
    }

    /// Slice of a `[T, batch, n]` tensor for one `(t, b)` pair.
    pub fn frame(t: &Tensor, timestep: usize, sample: usize) -> &[f32] {
        let [_, batch, n] = t.shape() else {
            panic!("record tensors are [T, batch, n]");
        };
        let start = (timestep * batch + sample) * n;
        &t.data()[start..start + n]
    }

    pub fn has_membranes(&self) -> bool {
        self.layers
            .iter()
            .filter(|l| l.spiking)
            .all(|l| l.membranes.is_some())
    }

    /// Concatenates records of equal `T` along the batch axis.
    pub fn concat(records: &[SpikeRecord]) -> Result<SpikeRecord> {
        let first = records.first().ok_or(SlampError::EmptyDataset)?;
        for r in records {
            if r.timesteps != first.timesteps || r.layers.len() != first.layers.len() {
                return Err(SlampError::RecordMismatch(
                    "records differ in timesteps or depth".into(),
                ));
            }
        }
        let batch = records.iter().map(|r| r.batch).sum();
        let join = |pick: &dyn Fn(&SpikeRecord) -> &Tensor| -> Tensor {
            let n = pick(first).shape()[2];
            let mut data = Vec::with_capacity(first.timesteps * batch * n);
            for t in 0..first.timesteps {
                for r in records {
                    let src = pick(r);
                    data.extend_from_slice(
                        &src.data()[t * r.batch * n..(t + 1) * r.batch * n],
                    );
                }
            }
            Tensor::new(vec![first.timesteps, batch, n], data).expect("concatenated record")
        };
        let input = join(&|r| &r.input);
        let layers = (0..first.layers.len())
            .map(|l| LayerTrace {
                activity: join(&|r| &r.layers[l].activity),
                membranes: if records.iter().all(|r| r.layers[l].membranes.is_some()) {
                    Some(join(&|r| r.layers[l].membranes.as_ref().unwrap()))
                } else {
                    None
                },
                spiking: first.layers[l].spiking,
            })
            .collect();
        Ok(SpikeRecord {
            timesteps: first.timesteps,
            batch,
            input,
            layers,
        })
    }
}
