use serde::{Deserialize, Serialize};

use super::bptt::Gradients;
use crate::error::{Result, SlampError};
use crate::snn::Network;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// `η₀ · ½(1 + cos(π · step / total))`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub schedule: LrSchedule,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            momentum: 0.9,
            schedule: LrSchedule::Cosine,
            epochs: 40,
            batch_size: 16,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(SlampError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SlampError::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(SlampError::Config("batch size must be positive".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize, total_steps: usize) -> f32 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let frac = if total_steps == 0 {
                    0.0
                } else {
                    step as f64 / total_steps as f64
                };
                (self.learning_rate as f64 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())) as f32
            }
        }
    }
}

/// Momentum buffers, one per parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Option<Tensor>>,
}

impl SgdState {
    pub fn new(net: &Network) -> Self {
        Self {
            velocity: net
                .layers()
                .iter()
                .map(|l| l.weights().map(|w| Tensor::zeros(w.shape())))
                .collect(),
        }
    }
}

/// One momentum-SGD update at learning rate `lr`, followed by re-projection
/// onto the mask so pruned weights stay exactly zero.
///
/// `v ← μ·v + g`, `w ← M ⊙ (w − lr·v)`.
pub fn sgd_step(net: &mut Network, grads: &Gradients, momentum: f32, lr: f32, state: &mut SgdState) -> Result<()> {
    if grads.layers.len() != net.layers().len() || state.velocity.len() != net.layers().len() {
        return Err(SlampError::ShapeMismatch {
            op: "sgd_step",
            left: vec![net.layers().len()],
            right: vec![grads.layers.len(), state.velocity.len()],
        });
    }
    for l in 0..net.layers().len() {
        let (Some(g), Some(v)) = (&grads.layers[l], &mut state.velocity[l]) else {
            continue;
        };
        let mask = net.layers()[l].mask().expect("parameterised layer has a mask").clone();
        let w = net.weights_mut(l).expect("parameterised layer has weights");
        if g.shape() != w.shape() || v.shape() != w.shape() {
            return Err(SlampError::ShapeMismatch {
                op: "sgd_step",
                left: w.shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
        let (wd, vd) = (w.data_mut(), v.data_mut());
        for i in 0..wd.len() {
            vd[i] = momentum * vd[i] + g.data()[i];
            wd[i] = if mask.data()[i] == 0.0 { 0.0 } else { wd[i] - lr * vd[i] };
        }
        if wd.iter().any(|x| !x.is_finite()) {
            return Err(SlampError::NonFinite("sgd_step"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{LayerState, NeuronConfig};

    fn one_weight_net(w: f32) -> Network {
        let layer = LayerState::dense(Tensor::new(vec![1, 1], vec![w]).unwrap(), true).unwrap();
        Network::from_layers(vec![1], vec![layer], NeuronConfig::default()).unwrap()
    }

    fn grad(g: f32) -> Gradients {
        Gradients {
            layers: vec![Some(Tensor::new(vec![1, 1], vec![g]).unwrap())],
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut net = one_weight_net(0.7);
        let mut st = SgdState::new(&net);
        sgd_step(&mut net, &grad(3.0), 0.9, 0.0, &mut st).unwrap();
        assert_eq!(net.layers()[0].weights().unwrap().data(), &[0.7]);
    }

    #[test]
    fn plain_step_is_w_minus_lr_g() {
        let mut net = one_weight_net(0.7);
        let mut st = SgdState::new(&net);
        sgd_step(&mut net, &grad(2.0), 0.0, 0.1, &mut st).unwrap();
        assert_eq!(net.layers()[0].weights().unwrap().data(), &[0.7 - 0.1 * 2.0]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut net = one_weight_net(0.0);
        let mut st = SgdState::new(&net);
        sgd_step(&mut net, &grad(1.0), 0.5, 1.0, &mut st).unwrap();
        sgd_step(&mut net, &grad(1.0), 0.5, 1.0, &mut st).unwrap();
        assert_eq!(net.layers()[0].weights().unwrap().data(), &[-2.5]);
    }

    #[test]
    fn masked_weight_stays_zero() {
        let mut net = one_weight_net(0.7);
        net.set_mask(0, Tensor::zeros(&[1, 1])).unwrap();
        let mut st = SgdState::new(&net);
        for _ in 0..3 {
            sgd_step(&mut net, &grad(-5.0), 0.9, 0.3, &mut st).unwrap();
            assert_eq!(net.layers()[0].weights().unwrap().data()[0].to_bits(), 0.0f32.to_bits());
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let cfg = OptimConfig {
            learning_rate: 0.02,
            schedule: LrSchedule::Cosine,
            ..OptimConfig::default()
        };
        assert_eq!(cfg.learning_rate_at(0, 10), 0.02);
        assert!((cfg.learning_rate_at(5, 10) - 0.01).abs() < 1e-9);
        assert!(cfg.learning_rate_at(10, 10).abs() < 1e-9);
        let constant = OptimConfig {
            schedule: LrSchedule::Constant,
            ..cfg
        };
        assert_eq!(constant.learning_rate_at(7, 10), 0.02);
    }

    #[test]
    fn validation() {
        assert!(OptimConfig::default().validate().is_ok());
        assert!(OptimConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(OptimConfig { momentum: 1.0, ..Default::default() }.validate().is_err());
        assert!(OptimConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }
}
