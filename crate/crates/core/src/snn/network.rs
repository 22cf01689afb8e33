use serde::{Deserialize, Serialize};

use super::layer::{LayerKind, LayerState};
use super::neuron::{NeuronConfig, SpikeFn};
use super::record::{LayerTrace, SpikeRecord};
use crate::error::{Result, SlampError};
use crate::rng::Rng;
use crate::tensor::Tensor;

fn one() -> usize {
    1
}

/// One entry of an architecture description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        out: usize,
    },
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    AvgPool {
        size: usize,
    },
}

/// Input shape plus layer list. The final layer must be dense; it becomes the
/// non-spiking readout whose accumulated potential gives the logits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// `[n]` for flat inputs or `[C, H, W]` for image-shaped inputs.
    pub input: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Dense IF 64 → dense IF 32 → readout.
    pub fn dense_default(inputs: usize, classes: usize) -> Self {
        Self {
            input: vec![inputs],
            layers: vec![
                LayerSpec::Dense { out: 64 },
                LayerSpec::Dense { out: 32 },
                LayerSpec::Dense { out: classes },
            ],
        }
    }

    /// Conv 8ch 3×3 IF → avgpool 2 → dense IF 32 → readout.
    pub fn conv_default(input: [usize; 3], classes: usize) -> Self {
        Self {
            input: input.to_vec(),
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::Dense { out: 32 },
                LayerSpec::Dense { out: classes },
            ],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Resolves every layer's geometry, returning the layer kinds in order.
    pub fn resolve(&self) -> Result<Vec<LayerKind>> {
        if self.layers.is_empty() {
            return Err(SlampError::EmptyNetwork);
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(SlampError::Config("the last layer must be dense".into()));
        }
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(SlampError::Config(format!(
                "invalid input shape {:?}",
                self.input
            )));
        }
        let mut shape = self.input.clone();
        let mut kinds = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let as_image = |shape: &[usize]| -> Result<[usize; 3]> {
                <[usize; 3]>::try_from(shape).map_err(|_| {
                    SlampError::Config(format!("{spec:?} needs a [C, H, W] input, got {shape:?}"))
                })
            };
            let kind = match *spec {
                LayerSpec::Dense { out } => {
                    if out == 0 {
                        return Err(SlampError::Config("dense layer with zero outputs".into()));
                    }
                    LayerKind::Dense {
                        inputs: shape.iter().product(),
                        outputs: out,
                    }
                }
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let [c, h, w] = as_image(&shape)?;
                    if out_channels == 0 {
                        return Err(SlampError::Config("conv layer with zero channels".into()));
                    }
                    LayerKind::Conv(crate::tensor::ConvGeometry::from_shapes(
                        &[c, h, w],
                        &[out_channels, c, kernel, kernel],
                        stride,
                        padding,
                    )?)
                }
                LayerSpec::AvgPool { size } => {
                    let input = as_image(&shape)?;
                    *LayerState::avg_pool(input, size)?.kind()
                }
            };
            shape = kind.output_shape();
            kinds.push(kind);
        }
        Ok(kinds)
    }
}

/// A feed-forward spiking network: integrate-and-fire hidden layers and a
/// non-spiking readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerState>,
    neuron: NeuronConfig,
    generation: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub record: bool,
    pub record_membranes: bool,
    pub spike_fn: SpikeFn,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            record: false,
            record_membranes: false,
            spike_fn: SpikeFn::Heaviside,
        }
    }
}

impl ForwardOptions {
    pub fn recording() -> Self {
        Self {
            record: true,
            record_membranes: true,
            ..Self::default()
        }
    }
}

impl Network {
    /// Builds a network with weights drawn uniformly from
    /// `±gain·sqrt(3 / fan_in)` (so their standard deviation is
    /// `gain / sqrt(fan_in)`).
    pub fn init(arch: &Architecture, neuron: NeuronConfig, gain: f32, rng: &mut Rng) -> Result<Self> {
        neuron.validate()?;
        let kinds = arch.resolve()?;
        let last = kinds.len() - 1;
        let mut layers = Vec::with_capacity(kinds.len());
        for (i, kind) in kinds.into_iter().enumerate() {
            let layer = match kind {
                LayerKind::Dense { inputs, outputs } => {
                    let bound = gain * (3.0 / inputs as f32).sqrt();
                    LayerState::dense(rng.uniform(&[inputs, outputs], -bound, bound), i == last)?
                }
                LayerKind::Conv(geo) => {
                    let bound = gain * (3.0 / kind.fan_in() as f32).sqrt();
                    LayerState::conv(
                        rng.uniform(&geo.kernel_shape(), -bound, bound),
                        geo.input_shape(),
                        geo.stride,
                        geo.padding,
                    )?
                }
                LayerKind::AvgPool(p) => LayerState::avg_pool([p.channels, p.in_h, p.in_w], p.size)?,
            };
            layers.push(layer);
        }
        Ok(Self {
            input_shape: arch.input.clone(),
            layers,
            neuron,
            generation: 0,
        })
    }

    /// Assembles a network from explicit layers. The last layer must be a
    /// dense readout and consecutive layer sizes must agree.
    pub fn from_layers(input_shape: Vec<usize>, layers: Vec<LayerState>, neuron: NeuronConfig) -> Result<Self> {
        neuron.validate()?;
        let last = layers.last().ok_or(SlampError::EmptyNetwork)?;
        if !last.is_readout() || !matches!(last.kind(), LayerKind::Dense { .. }) {
            return Err(SlampError::Config("the last layer must be a dense readout".into()));
        }
        let mut width: usize = input_shape.iter().product();
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_len() != width {
                return Err(SlampError::ShapeMismatch {
                    op: "network assembly",
                    left: vec![width],
                    right: vec![layer.input_len()],
                });
            }
            if layer.is_readout() && i + 1 != layers.len() {
                return Err(SlampError::Config("only the last layer may be a readout".into()));
            }
            width = layer.output_len();
        }
        Ok(Self {
            input_shape,
            layers,
            neuron,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[LayerState] {
        &self.layers
    }

    pub fn neuron(&self) -> &NeuronConfig {
        &self.neuron
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().map_or(0, LayerState::output_len)
    }

    /// Counter bumped whenever weights or masks change; used to detect stale
    /// gradient tapes.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Indices of layers carrying weights.
    pub fn prunable(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].is_prunable())
            .collect()
    }

    pub fn set_weights(&mut self, layer: usize, weights: Tensor) -> Result<()> {
        self.layer_mut(layer)?.set_weights(weights)?;
        self.generation += 1;
        Ok(())
    }

    pub fn set_mask(&mut self, layer: usize, mask: Tensor) -> Result<()> {
        self.layer_mut(layer)?.set_mask(mask)?;
        self.generation += 1;
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self, layer: usize) -> Option<&mut Tensor> {
        self.generation += 1;
        self.layers.get_mut(layer)?.weights_mut()
    }

    fn layer_mut(&mut self, layer: usize) -> Result<&mut LayerState> {
        let n = self.layers.len();
        self.layers
            .get_mut(layer)
            .ok_or_else(|| SlampError::Config(format!("layer {layer} out of range ({n} layers)")))
    }

    pub fn reset(&mut self) {
        for layer in &mut self.layers {
            layer.reset();
        }
    }

    /// Simulates every sample of `input` (`[T, batch, inputs]`) from a rested
    /// state and returns `[batch, classes]` logits: the readout potential after
    /// the last timestep, i.e. the input current summed over time.
    pub fn forward(&mut self, input: &Tensor, opts: &ForwardOptions) -> Result<(Tensor, Option<SpikeRecord>)> {
        let &[timesteps, batch, n_in] = input.shape() else {
            return Err(SlampError::InvalidShape {
                shape: input.shape().to_vec(),
                reason: "network input must be [T, batch, inputs]".into(),
            });
        };
        if timesteps != self.neuron.timesteps {
            return Err(SlampError::TimestepMismatch {
                expected: self.neuron.timesteps,
                actual: timesteps,
            });
        }
        if n_in != self.input_len() {
            return Err(SlampError::ShapeMismatch {
                op: "network forward",
                left: vec![self.input_len()],
                right: vec![n_in],
            });
        }
        let w_eff: Vec<Option<Vec<f32>>> = self.layers.iter().map(LayerState::effective_weights).collect();
        let mut bufs: Vec<Vec<f32>> = self.layers.iter().map(|l| vec![0.0; l.output_len()]).collect();
        let widths: Vec<usize> = self.layers.iter().map(LayerState::output_len).collect();

        let mut activity: Vec<Vec<f32>> = Vec::new();
        let mut membranes: Vec<Option<Vec<f32>>> = Vec::new();
        if opts.record {
            for (layer, &n) in self.layers.iter().zip(&widths) {
                activity.push(vec![0.0; timesteps * batch * n]);
                let keep = opts.record_membranes && !matches!(layer.kind(), LayerKind::AvgPool(_));
                membranes.push(keep.then(|| vec![0.0; timesteps * batch * n]));
            }
        }

        let classes = self.classes();
        let mut logits = vec![0.0f32; batch * classes];
        let cfg = self.neuron;
        for b in 0..batch {
            self.reset();
            for t in 0..timesteps {
                let offset = (t * batch + b) * n_in;
                let frame = &input.data()[offset..offset + n_in];
                for (l, layer) in self.layers.iter_mut().enumerate() {
                    let (done, rest) = bufs.split_at_mut(l);
                    let x: &[f32] = if l == 0 { frame } else { &done[l - 1] };
                    layer.step(w_eff[l].as_deref(), x, &cfg, opts.spike_fn, &mut rest[0]);
                    if opts.record {
                        let n = widths[l];
                        let at = (t * batch + b) * n;
                        activity[l][at..at + n].copy_from_slice(&bufs[l]);
                        if let Some(m) = membranes[l].as_mut() {
                            m[at..at + n].copy_from_slice(layer.membrane().data());
                        }
                    }
                }
            }
            logits[b * classes..(b + 1) * classes].copy_from_slice(self.layers.last().unwrap().membrane().data());
        }
        let logits = Tensor::new(vec![batch, classes], logits)?;

        let record = opts.record.then(|| SpikeRecord {
            timesteps,
            batch,
            input: input.clone(),
            layers: activity
                .into_iter()
                .zip(membranes)
                .zip(self.layers.iter().zip(&widths))
                .map(|((act, mem), (layer, &n))| LayerTrace {
                    activity: Tensor::new(vec![timesteps, batch, n], act).expect("activity shape"),
                    membranes: mem.map(|m| Tensor::new(vec![timesteps, batch, n], m).expect("membrane shape")),
                    spiking: layer.is_spiking(),
                })
                .collect(),
        });
        Ok((logits, record))
    }
}

/// Stacks per-sample `[T, n]` frame tensors into a `[T, batch, n]` input.
pub fn stack_frames(samples: &[&Tensor]) -> Result<Tensor> {
    let first = samples.first().ok_or(SlampError::EmptyDataset)?;
    let &[timesteps, n] = first.shape() else {
        return Err(SlampError::InvalidShape {
            shape: first.shape().to_vec(),
            reason: "frames must be [T, n]".into(),
        });
    };
    let batch = samples.len();
    let mut data = vec![0.0f32; timesteps * batch * n];
    for (b, s) in samples.iter().enumerate() {
        if s.shape() != first.shape() {
            return Err(SlampError::ShapeMismatch {
                op: "stack_frames",
                left: first.shape().to_vec(),
                right: s.shape().to_vec(),
            });
        }
        for t in 0..timesteps {
            let dst = (t * batch + b) * n;
            data[dst..dst + n].copy_from_slice(&s.data()[t * n..(t + 1) * n]);
        }
    }
    Tensor::new(vec![timesteps, batch, n], data)
}
