//! Backpropagation through time over a recorded rollout.
//!
//! The forward pass is recorded once (inputs, membranes and outputs of every
//! layer at every step); [`backward`] then walks layers from the readout down
//! and, within each layer, time from `T` down to 1.

use super::surrogate::SurrogateConfig;
use crate::error::{Result, SlampError};
use crate::snn::{ForwardOptions, LayerKind, Network, SpikeFn, SpikeRecord};
use crate::tensor::{conv2d_grad_input, conv2d_grad_kernel, Tensor};

/// How the reset terms `H_{t−1} ⊙ (1 − S_{t−1})` and `H_reset ⊙ S_{t−1}` are
/// differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetGradient {
    /// `S_{t−1}` is treated as a constant; time-gradients flow only through
    /// `H_{t−1}`.
    #[default]
    Detached,
    /// Full derivative, including the path through the previous spike.
    Through,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOp {
    /// Weighted current into integrate-and-fire neurons.
    Spiking,
    /// Weighted current into the non-spiking integrator.
    Readout,
    AvgPool,
}

/// One recorded layer application. Its saved activations (input, membrane,
/// output per step) live in the tape's record under the same layer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeNode {
    pub layer: usize,
    pub op: NodeOp,
}

#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    spike_fn: SpikeFn,
    nodes: Vec<TapeNode>,
    record: SpikeRecord,
}

impl Tape {
    pub fn record(&self) -> &SpikeRecord {
        &self.record
    }

    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    pub fn spike_fn(&self) -> SpikeFn {
        self.spike_fn
    }
}

/// Per-layer weight gradients; `None` for parameter-free layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| l.weights().map(|w| Tensor::zeros(w.shape())))
                .collect(),
        }
    }
}

/// Runs the forward pass and keeps everything `backward` needs.
pub fn record_tape(net: &mut Network, input: &Tensor, spike_fn: SpikeFn) -> Result<(Tensor, Tape)> {
    let opts = ForwardOptions {
        record: true,
        record_membranes: true,
        spike_fn,
    };
    let (logits, record) = net.forward(input, &opts)?;
    let nodes = net
        .layers()
        .iter()
        .enumerate()
        .map(|(layer, l)| TapeNode {
            layer,
            op: if l.is_readout() {
                NodeOp::Readout
            } else if l.is_spiking() {
                NodeOp::Spiking
            } else {
                NodeOp::AvgPool
            },
        })
        .collect();
    Ok((
        logits,
        Tape {
            generation: net.generation(),
            spike_fn,
            nodes,
            record: record.expect("recording was requested"),
        },
    ))
}

/// Weight gradients of a loss whose gradient with respect to the logits is
/// `loss_grad` (`[batch, classes]`).
///
/// Gradients are taken with respect to the effective weights `M ⊙ W` and
/// reported for every entry, masked or not; the optimizer's mask
/// re-projection keeps pruned weights at zero.
pub fn backward(
    net: &Network,
    tape: &Tape,
    loss_grad: &Tensor,
    surrogate: &SurrogateConfig,
    reset: ResetGradient,
) -> Result<Gradients> {
    if tape.generation != net.generation() {
        return Err(SlampError::StaleTape("weights changed since the forward pass"));
    }
    let record = &tape.record;
    if tape.nodes.len() != net.layers().len() || !record.has_membranes() {
        return Err(SlampError::StaleTape("tape does not cover this network"));
    }
    let (timesteps, batch) = (record.timesteps, record.batch);
    if loss_grad.shape() != [batch, net.classes()] {
        return Err(SlampError::ShapeMismatch {
            op: "backward",
            left: vec![batch, net.classes()],
            right: loss_grad.shape().to_vec(),
        });
    }
    let cfg = *net.neuron();
    let w_eff: Vec<Option<Vec<f32>>> = net.layers().iter().map(|l| l.effective_weights()).collect();
    let mut grads = Gradients::zeros_like(net);
    let classes = net.classes();

    for b in 0..batch {
        let last = net.layers().len() - 1;
        // Gradient w.r.t. each layer's output activity, [T * n].
        let mut grad_act = vec![0.0f32; timesteps * classes];
        grad_act[(timesteps - 1) * classes..].copy_from_slice(&loss_grad.data()[b * classes..(b + 1) * classes]);

        for l in (0..=last).rev() {
            let layer = &net.layers()[l];
            let n_out = layer.output_len();
            let n_in = layer.input_len();
            let trace = &record.layers[l];
            let mut grad_cur = vec![0.0f32; timesteps * n_out];
            match tape.nodes[l].op {
                NodeOp::Readout => {
                    let mut carry = vec![0.0f32; n_out];
                    for t in (0..timesteps).rev() {
                        for o in 0..n_out {
                            carry[o] += grad_act[t * n_out + o];
                            grad_cur[t * n_out + o] = carry[o];
                        }
                    }
                }
                NodeOp::Spiking => {
                    let membranes = trace.membranes.as_ref().expect("checked above");
                    let mut next = vec![0.0f32; n_out];
                    for t in (0..timesteps).rev() {
                        let h = SpikeRecord::frame(membranes, t, b);
                        let s = SpikeRecord::frame(&trace.activity, t, b);
                        for o in 0..n_out {
                            let mut ds = grad_act[t * n_out + o];
                            if reset == ResetGradient::Through {
                                ds += next[o] * (cfg.reset - h[o]);
                            }
                            let dh = ds * surrogate.grad(h[o], cfg.threshold) + next[o] * (1.0 - s[o]);
                            grad_cur[t * n_out + o] = dh;
                            next[o] = dh;
                        }
                    }
                }
                NodeOp::AvgPool => grad_cur.copy_from_slice(&grad_act),
            }

            let x_all = record.presynaptic(l);
            let mut grad_in = vec![0.0f32; if l > 0 { timesteps * n_in } else { 0 }];
            for t in 0..timesteps {
                let x = SpikeRecord::frame(x_all, t, b);
                let d = &grad_cur[t * n_out..(t + 1) * n_out];
                match layer.kind() {
                    LayerKind::Dense { inputs, outputs } => {
                        let w = w_eff[l].as_deref().expect("dense weights");
                        let gw = grads.layers[l].as_mut().expect("dense gradient").data_mut();
                        for i in 0..*inputs {
                            let xi = x[i];
                            if xi != 0.0 {
                                for o in 0..*outputs {
                                    gw[i * outputs + o] += xi * d[o];
                                }
                            }
                            if l > 0 {
                                let row = &w[i * outputs..(i + 1) * outputs];
                                let mut acc = 0.0f32;
                                for o in 0..*outputs {
                                    acc += row[o] * d[o];
                                }
                                grad_in[t * n_in + i] = acc;
                            }
                        }
                    }
                    LayerKind::Conv(geo) => {
                        let w = w_eff[l].as_deref().expect("conv weights");
                        let gw = grads.layers[l].as_mut().expect("conv gradient").data_mut();
                        conv2d_grad_kernel(geo, d, x, gw);
                        if l > 0 {
                            conv2d_grad_input(geo, d, w, &mut grad_in[t * n_in..(t + 1) * n_in]);
                        }
                    }
                    LayerKind::AvgPool(p) => {
                        if l > 0 {
                            p.pool_grad(d, &mut grad_in[t * n_in..(t + 1) * n_in]);
                        }
                    }
                }
            }
            grad_act = grad_in;
        }
    }
    for g in grads.layers.iter().flatten() {
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(SlampError::NonFinite("backward"));
        }
    }
    Ok(grads)
}
