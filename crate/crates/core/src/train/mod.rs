//! Surrogate-gradient training: BPTT, loss, optimizer and the epoch loop.

mod bptt;
mod loss;
mod optim;
mod surrogate;

use serde::{Deserialize, Serialize};

pub use bptt::{backward, record_tape, Gradients, NodeOp, ResetGradient, Tape, TapeNode};
pub use loss::cross_entropy_loss;
pub use optim::{sgd_step, LrSchedule, OptimConfig, SgdState};
pub use surrogate::{surrogate_grad, SurrogateConfig, SurrogateKind};

use crate::data::Dataset;
use crate::error::{Result, SlampError};
use crate::metrics::argmax;
use crate::rng::Rng;
use crate::snn::{Network, SpikeFn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based epoch index within this training call.
    pub epoch: usize,
    pub loss: f64,
    /// Training accuracy measured on the logits seen during the epoch.
    pub accuracy: f64,
}

/// Runs `optim.epochs` epochs of shuffled mini-batch training.
///
/// Shuffling draws from `rng`, so the run is a pure function of the seed.
pub fn train_epochs(
    net: &mut Network,
    data: &Dataset,
    optim: &OptimConfig,
    surrogate: &SurrogateConfig,
    rng: &mut Rng,
    state: &mut SgdState,
) -> Result<Vec<EpochStats>> {
    data.validate()?;
    optim.validate()?;
    surrogate.validate()?;
    if data.classes != net.classes() {
        return Err(SlampError::Config(format!(
            "dataset has {} classes but the network outputs {}",
            data.classes,
            net.classes()
        )));
    }
    let timesteps = net.neuron().timesteps;
    let batches_per_epoch = data.len().div_ceil(optim.batch_size);
    let total_steps = optim.epochs * batches_per_epoch;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(optim.epochs);
    let mut step = 0;
    for epoch in 1..=optim.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in order.chunks(optim.batch_size) {
            let input = data.batch(chunk, timesteps)?;
            let labels = data.labels(chunk);
            let (logits, tape) = record_tape(net, &input, SpikeFn::Heaviside)?;
            let (loss, dlogits) = cross_entropy_loss(&logits, &labels)?;
            loss_sum += loss * chunk.len() as f64;
            correct += labels
                .iter()
                .enumerate()
                .filter(|&(b, &y)| argmax(&logits.data()[b * net.classes()..(b + 1) * net.classes()]) == y)
                .count();
            let grads = backward(net, &tape, &dlogits, surrogate, ResetGradient::Detached)?;
            let lr = optim.learning_rate_at(step, total_steps);
            sgd_step(net, &grads, optim.momentum, lr, state)?;
            step += 1;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(history)
}
