use super::neuron::{integrate, NeuronConfig, SpikeFn};
use crate::error::{Result, SlampError};
use crate::tensor::{conv2d_raw, ConvGeometry, Tensor};

/// Non-overlapping average pooling over a `C×H×W` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub size: usize,
}

impl PoolGeometry {
    pub fn out_h(&self) -> usize {
        self.in_h / self.size
    }

    pub fn out_w(&self) -> usize {
        self.in_w / self.size
    }

    pub(crate) fn pool(&self, x: &[f32], out: &mut [f32]) {
        let (oh, ow) = (self.out_h(), self.out_w());
        let scale = 1.0 / (self.size * self.size) as f32;
        for c in 0..self.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let iy = oy * self.size + dy;
                            let ix = ox * self.size + dx;
                            acc += x[(c * self.in_h + iy) * self.in_w + ix];
                        }
                    }
                    out[(c * oh + oy) * ow + ox] = acc * scale;
                }
            }
        }
    }

    pub(crate) fn pool_grad(&self, grad_out: &[f32], grad_in: &mut [f32]) {
        let (oh, ow) = (self.out_h(), self.out_w());
        let scale = 1.0 / (self.size * self.size) as f32;
        for c in 0..self.channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad_out[(c * oh + oy) * ow + ox] * scale;
                    for dy in 0..self.size {
                        for dx in 0..self.size {
                            let iy = oy * self.size + dy;
                            let ix = ox * self.size + dx;
                            grad_in[(c * self.in_h + iy) * self.in_w + ix] += g;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Fully connected; weights are stored `inputs × outputs`.
    Dense { inputs: usize, outputs: usize },
    Conv(ConvGeometry),
    AvgPool(PoolGeometry),
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv(g) => g.input_shape().iter().product(),
            LayerKind::AvgPool(p) => p.channels * p.in_h * p.in_w,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            LayerKind::Dense { outputs, .. } => *outputs,
            LayerKind::Conv(g) => g.output_shape().iter().product(),
            LayerKind::AvgPool(p) => p.channels * p.out_h() * p.out_w(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            LayerKind::Dense { outputs, .. } => vec![*outputs],
            LayerKind::Conv(g) => g.output_shape().to_vec(),
            LayerKind::AvgPool(p) => vec![p.channels, p.out_h(), p.out_w()],
        }
    }

    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match self {
            LayerKind::Dense { inputs, outputs } => Some(vec![*inputs, *outputs]),
            LayerKind::Conv(g) => Some(g.kernel_shape().to_vec()),
            LayerKind::AvgPool(_) => None,
        }
    }

    pub fn fan_in(&self) -> usize {
        match self {
            LayerKind::Dense { inputs, .. } => *inputs,
            LayerKind::Conv(g) => g.in_channels * g.kernel * g.kernel,
            LayerKind::AvgPool(p) => p.size * p.size,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv(_) => "conv",
            LayerKind::AvgPool(_) => "avgpool",
        }
    }
}

/// Weights, mask and neuron state of one layer.
///
/// The effective weight used by every forward pass is `mask ⊙ weights`.
/// A readout layer is a non-spiking integrator: its membrane accumulates the
/// input current and is never reset.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    kind: LayerKind,
    readout: bool,
    weights: Option<Tensor>,
    mask: Option<Tensor>,
    membrane: Tensor,
    prev_spikes: Tensor,
}

impl LayerState {
    pub fn dense(weights: Tensor, readout: bool) -> Result<Self> {
        let [inputs, outputs] = weights.shape() else {
            return Err(SlampError::InvalidShape {
                shape: weights.shape().to_vec(),
                reason: "dense weights must be inputs × outputs".into(),
            });
        };
        let kind = LayerKind::Dense {
            inputs: *inputs,
            outputs: *outputs,
        };
        Ok(Self::with_parts(kind, readout, Some(weights)))
    }

    pub fn conv(kernel: Tensor, input_shape: [usize; 3], stride: usize, padding: usize) -> Result<Self> {
        let geo = ConvGeometry::from_shapes(&input_shape, kernel.shape(), stride, padding)?;
        Ok(Self::with_parts(LayerKind::Conv(geo), false, Some(kernel)))
    }

    pub fn avg_pool(input_shape: [usize; 3], size: usize) -> Result<Self> {
        let [channels, in_h, in_w] = input_shape;
        if size == 0 || size > in_h || size > in_w {
            return Err(SlampError::InvalidShape {
                shape: input_shape.to_vec(),
                reason: format!("pool size {size} does not fit"),
            });
        }
        let geo = PoolGeometry {
            channels,
            in_h,
            in_w,
            size,
        };
        Ok(Self::with_parts(LayerKind::AvgPool(geo), false, None))
    }

    fn with_parts(kind: LayerKind, readout: bool, weights: Option<Tensor>) -> Self {
        let n = kind.output_len();
        let mask = weights.as_ref().map(|w| Tensor::ones(w.shape()));
        Self {
            kind,
            readout,
            weights,
            mask,
            membrane: Tensor::zeros(&[n]),
            prev_spikes: Tensor::zeros(&[n]),
        }
    }

    pub fn kind(&self) -> &LayerKind {
        &self.kind
    }

    pub fn is_readout(&self) -> bool {
        self.readout
    }

    /// Whether this layer runs integrate-and-fire dynamics.
    pub fn is_spiking(&self) -> bool {
        !self.readout && self.weights.is_some()
    }

    pub fn is_prunable(&self) -> bool {
        self.weights.is_some()
    }

    pub fn weights(&self) -> Option<&Tensor> {
        self.weights.as_ref()
    }

    pub fn mask(&self) -> Option<&Tensor> {
        self.mask.as_ref()
    }

    pub fn membrane(&self) -> &Tensor {
        &self.membrane
    }

    pub fn prev_spikes(&self) -> &Tensor {
        &self.prev_spikes
    }

    pub fn input_len(&self) -> usize {
        self.kind.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.kind.output_len()
    }

    /// `mask ⊙ weights`, or `None` for parameter-free layers.
    pub fn effective_weights(&self) -> Option<Vec<f32>> {
        let (w, m) = (self.weights.as_ref()?, self.mask.as_ref()?);
        Some(w.data().iter().zip(m.data()).map(|(w, m)| m * w).collect())
    }

    pub(crate) fn set_weights(&mut self, weights: Tensor) -> Result<()> {
        self.check_param_shape(&weights)?;
        self.weights = Some(weights);
        Ok(())
    }

    pub(crate) fn set_mask(&mut self, mask: Tensor) -> Result<()> {
        self.check_param_shape(&mask)?;
        if !mask.is_binary() {
            return Err(SlampError::NotBinary("mask"));
        }
        self.mask = Some(mask);
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self) -> Option<&mut Tensor> {
        self.weights.as_mut()
    }

    fn check_param_shape(&self, t: &Tensor) -> Result<()> {
        match self.kind.weight_shape() {
            Some(shape) if shape == t.shape() => Ok(()),
            Some(shape) => Err(SlampError::ShapeMismatch {
                op: "layer parameters",
                left: shape,
                right: t.shape().to_vec(),
            }),
            None => Err(SlampError::Config(format!(
                "{} layer has no parameters",
                self.kind.name()
            ))),
        }
    }

    pub fn reset(&mut self) {
        self.membrane.data_mut().fill(0.0);
        self.prev_spikes.data_mut().fill(0.0);
    }

    /// Input current `(M ⊙ W)ᵀ x` (or its convolutional analogue) written into
    /// `out`. Pooling layers write the pooled input instead.
    pub(crate) fn current(&self, w_eff: Option<&[f32]>, x: &[f32], out: &mut [f32]) {
        out.fill(0.0);
        match (&self.kind, w_eff) {
            (LayerKind::Dense { inputs, outputs }, Some(w)) => {
                // Same accumulation order as `tensor::matmul` on a 1×inputs row.
                for i in 0..*inputs {
                    let xi = x[i];
                    if xi == 0.0 {
                        continue;
                    }
                    let row = &w[i * outputs..(i + 1) * outputs];
                    for (o, &wv) in out.iter_mut().zip(row) {
                        *o += xi * wv;
                    }
                }
            }
            (LayerKind::Conv(geo), Some(w)) => conv2d_raw(geo, x, w, out),
            (LayerKind::AvgPool(p), _) => p.pool(x, out),
            _ => unreachable!("parameterised layer without effective weights"),
        }
    }

    /// Advances this layer by one timestep given input activity `x` and
    /// precomputed effective weights. On return `out` holds the layer's
    /// output activity: spikes for spiking layers, the accumulated membrane
    /// for the readout, pooled values for pooling layers.
    pub(crate) fn step(
        &mut self,
        w_eff: Option<&[f32]>,
        x: &[f32],
        cfg: &NeuronConfig,
        spike_fn: SpikeFn,
        out: &mut [f32],
    ) {
        self.current(w_eff, x, out);
        if matches!(self.kind, LayerKind::AvgPool(_)) {
            return;
        }
        if self.readout {
            for (h, &i) in self.membrane.data_mut().iter_mut().zip(out.iter()) {
                *h += i;
            }
            out.copy_from_slice(self.membrane.data());
        } else {
            integrate(
                self.membrane.data_mut(),
                self.prev_spikes.data_mut(),
                out,
                cfg,
                spike_fn,
            );
            out.copy_from_slice(self.prev_spikes.data());
        }
    }

    /// Advances the layer one timestep on input `input` and returns its output
    /// activity.
    pub fn forward_t(&mut self, input: &Tensor, cfg: &NeuronConfig) -> Result<Tensor> {
        if input.len() != self.input_len() {
            return Err(SlampError::ShapeMismatch {
                op: "layer forward",
                left: vec![self.input_len()],
                right: input.shape().to_vec(),
            });
        }
        let w_eff = self.effective_weights();
        let mut out = vec![0.0; self.output_len()];
        self.step(w_eff.as_deref(), input.data(), cfg, SpikeFn::Heaviside, &mut out);
        Tensor::new(self.kind.output_shape(), out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NeuronConfig {
        NeuronConfig {
            threshold: 1.0,
            reset: 0.0,
            timesteps: 1,
        }
    }

    #[test]
    fn silent_input_keeps_state_at_rest() {
        let w = Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.1, 0.3, 0.7]).unwrap();
        let mut layer = LayerState::dense(w, false).unwrap();
        let out = layer.forward_t(&Tensor::zeros(&[3]), &cfg()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(layer.membrane().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_synapse_fires() {
        let w = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let mut layer = LayerState::dense(w, false).unwrap();
        let out = layer.forward_t(&Tensor::ones(&[1]), &cfg()).unwrap();
        assert_eq!(out.data(), &[1.0]);
        assert_eq!(layer.membrane().data(), &[2.0]);
    }

    #[test]
    fn fully_masked_layer_only_resets() {
        let w = Tensor::new(vec![2, 1], vec![3.0, 3.0]).unwrap();
        let mut layer = LayerState::dense(w, false).unwrap();
        layer.membrane.data_mut()[0] = 1.5;
        layer.prev_spikes.data_mut()[0] = 1.0;
        layer.set_mask(Tensor::zeros(&[2, 1])).unwrap();
        let out = layer.forward_t(&Tensor::ones(&[2]), &cfg()).unwrap();
        // Reset path with zero current lands on the reset potential.
        assert_eq!(layer.membrane().data(), &[0.0]);
        assert_eq!(out.data(), &[0.0]);
        let out = layer.forward_t(&Tensor::ones(&[2]), &cfg()).unwrap();
        assert_eq!((layer.membrane().data()[0], out.data()[0]), (0.0, 0.0));
    }

    #[test]
    fn readout_integrates_without_reset() {
        let w = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let mut layer = LayerState::dense(w, true).unwrap();
        layer.forward_t(&Tensor::ones(&[1]), &cfg()).unwrap();
        let out = layer.forward_t(&Tensor::ones(&[1]), &cfg()).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn pooling_averages() {
        let mut layer = LayerState::avg_pool([1, 2, 4], 2).unwrap();
        let x = Tensor::new(vec![8], vec![1., 0., 1., 1., 1., 0., 0., 1.]).unwrap();
        let out = layer.forward_t(&x, &cfg()).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2]);
        assert_eq!(out.data(), &[0.5, 0.75]);
        assert!(!layer.is_prunable());
    }

    #[test]
    fn rejects_wrong_input_and_mask() {
        let w = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let mut layer = LayerState::dense(w, false).unwrap();
        assert!(layer.forward_t(&Tensor::zeros(&[3]), &cfg()).is_err());
        assert!(layer.set_mask(Tensor::filled(&[2, 2], 0.5)).is_err());
        assert!(layer.set_mask(Tensor::ones(&[2, 3])).is_err());
    }
}
