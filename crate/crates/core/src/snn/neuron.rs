//! Integrate-and-fire neuron update.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuronConfig {
    /// Firing threshold `h`.
    pub threshold: f32,
    /// Potential a neuron returns to after firing.
    pub reset: f32,
    pub timesteps: usize,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            threshold: 1.0,
            reset: 0.0,
            timesteps: 2,
        }
    }
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(SlampError::Config("timesteps must be at least 1".into()));
        }
        if !self.threshold.is_finite() || !self.reset.is_finite() {
            return Err(SlampError::Config("threshold and reset must be finite".into()));
        }
        if self.threshold <= self.reset {
            return Err(SlampError::Config(format!(
                "threshold {} must exceed reset potential {}",
                self.threshold, self.reset
            )));
        }
        Ok(())
    }
}

/// How a membrane potential is turned into a spike value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    /// Step function with `θ(0) = 1`: a neuron sitting exactly on the
    /// threshold fires.
    Heaviside,
    /// The integral of the triangle surrogate of half-width `width`, a
    /// continuous stand-in for the step used for gradient checking.
    Relaxed { width: f32 },
}

impl SpikeFn {
    #[inline]
    pub fn fire(self, membrane: f32, threshold: f32) -> f32 {
        let x = membrane - threshold;
        match self {
            SpikeFn::Heaviside => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeFn::Relaxed { width } => {
                if x <= -width {
                    0.0
                } else if x <= 0.0 {
                    let d = x + width;
                    d * d / (2.0 * width * width)
                } else if x < width {
                    let d = width - x;
                    1.0 - d * d / (2.0 * width * width)
                } else {
                    1.0
                }
            }
        }
    }
}

/// One step of the reset-then-integrate update, in place.
///
/// `H ← H ⊙ (1 − S_prev) + I + H_reset ⊙ S_prev`, then `S ← fire(H)`.
/// On return `spikes` holds the new spikes.
#[inline]
pub(crate) fn integrate(
    membrane: &mut [f32],
    spikes: &mut [f32],
    current: &[f32],
    cfg: &NeuronConfig,
    spike_fn: SpikeFn,
) {
    for ((h, s), &i) in membrane.iter_mut().zip(spikes.iter_mut()).zip(current) {
        *h = *h * (1.0 - *s) + i + cfg.reset * *s;
        *s = spike_fn.fire(*h, cfg.threshold);
    }
}

/// Single integrate-and-fire update over a tensor of neurons.
///
/// Returns the new membrane potential and the binary spike tensor.
pub fn if_step(
    membrane: &Tensor,
    prev_spikes: &Tensor,
    current: &Tensor,
    cfg: &NeuronConfig,
) -> Result<(Tensor, Tensor)> {
    for other in [prev_spikes, current] {
        if other.shape() != membrane.shape() {
            return Err(SlampError::ShapeMismatch {
                op: "if_step",
                left: membrane.shape().to_vec(),
                right: other.shape().to_vec(),
            });
        }
    }
    if !prev_spikes.is_binary() {
        return Err(SlampError::NotBinary("previous spikes"));
    }
    let mut h = membrane.clone();
    let mut s = prev_spikes.clone();
    integrate(
        h.data_mut(),
        s.data_mut(),
        current.data(),
        cfg,
        SpikeFn::Heaviside,
    );
    Ok((h.ensure_finite("if_step")?, s))
}
