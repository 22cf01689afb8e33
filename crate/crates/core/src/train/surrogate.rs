use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};
use crate::snn::SpikeFn;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Triangle,
}

/// Stand-in derivative of the spike step used during backpropagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub kind: SurrogateKind,
    /// Half-width of the triangle's support.
    pub width: f32,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            kind: SurrogateKind::Triangle,
            width: 1.0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(SlampError::Config(format!(
                "surrogate width must be positive, got {}",
                self.width
            )));
        }
        Ok(())
    }

    /// `max(0, 1 − |u − h| / γ) / γ`.
    #[inline]
    pub fn grad(&self, membrane: f32, threshold: f32) -> f32 {
        match self.kind {
            SurrogateKind::Triangle => {
                let w = self.width;
                (1.0 - (membrane - threshold).abs() / w).max(0.0) / w
            }
        }
    }

    /// Spike function whose exact derivative is this surrogate.
    pub fn relaxed(&self) -> SpikeFn {
        SpikeFn::Relaxed { width: self.width }
    }
}

/// Element-wise surrogate derivative of the spike with respect to the membrane.
pub fn surrogate_grad(membrane: &Tensor, threshold: f32, cfg: &SurrogateConfig) -> Tensor {
    let data = membrane.data().iter().map(|&u| cfg.grad(u, threshold)).collect();
    Tensor::new(membrane.shape().to_vec(), data).expect("surrogate values are finite")
}
