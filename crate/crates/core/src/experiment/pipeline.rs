use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Scorer};
use crate::data::{gen_event_classes, gen_static_classes, Dataset, Splits};
use crate::error::Result;
use crate::metrics::{evaluate, rollout, EvalResult};
use crate::prune::{allocate_and_mask, apply_prune, connectivity, current_masks, lamp_scores, slamp_scores, ImportanceMap};
use crate::rng::Rng;
use crate::snn::Network;
use crate::train::{train_epochs, EpochStats, SgdState};

// Independent random streams derived from the run seed.
const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const FINETUNE_STREAM: u64 = 4;

pub fn build_data(cfg: &RunConfig) -> Result<Splits> {
    let mut rng = Rng::new(cfg.seed).derive(DATA_STREAM);
    let dims = cfg.dataset.dims();
    let t = cfg.neuron.timesteps;
    if let Some(spec) = cfg.dataset.static_spec() {
        Ok(gen_static_classes(&mut rng, &spec, dims, t)?.splits)
    } else {
        let spec = cfg.dataset.event_spec().expect("dataset is static or events");
        Ok(gen_event_classes(&mut rng, &spec, dims, t)?.1)
    }
}

pub fn build_network(cfg: &RunConfig) -> Result<Network> {
    let mut rng = Rng::new(cfg.seed).derive(INIT_STREAM);
    Network::init(&cfg.architecture(), cfg.neuron, cfg.init_gain, &mut rng)
}

/// Trains a freshly initialised network on the training split.
pub fn train_network(cfg: &RunConfig, data: &Splits) -> Result<(Network, SgdState, Vec<EpochStats>)> {
    let mut net = build_network(cfg)?;
    let mut state = SgdState::new(&net);
    let mut rng = Rng::new(cfg.seed).derive(TRAIN_STREAM);
    let history = train_epochs(&mut net, &data.train, &cfg.train, &cfg.surrogate, &mut rng, &mut state)?;
    Ok((net, state, history))
}

/// Importance scores from the first `samples` training samples.
pub fn score(net: &mut Network, data: &Dataset, scorer: Scorer, samples: usize) -> Result<ImportanceMap> {
    match scorer {
        Scorer::Lamp => Ok(lamp_scores(net)),
        Scorer::Slamp => {
            let subset = data.head(samples);
            let (_, record, _) = rollout(net, &subset, 256)?;
            slamp_scores(net, &record, net.neuron().timesteps)
        }
    }
}

/// One row of a prune-loop report. Stage 0 is the unpruned network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: usize,
    pub fraction: f64,
    pub connectivity: f64,
    pub params: usize,
    pub removed: usize,
    pub removed_mass: f64,
    pub top1: f64,
    pub top5: f64,
    pub sops: f64,
    pub membrane_variance: f64,
    /// Training loss of the last fine-tuning epoch, if any ran.
    pub finetune_loss: Option<f64>,
}

impl StageRow {
    fn new(stage: usize, fraction: f64, removed: usize, removed_mass: f64, eval: &EvalResult, params: usize, loss: Option<f64>) -> Self {
        Self {
            stage,
            fraction,
            connectivity: eval.connectivity,
            params,
            removed,
            removed_mass,
            top1: eval.top1,
            top5: eval.top5,
            sops: eval.sops,
            membrane_variance: eval.membrane_variance,
            finetune_loss: loss,
        }
    }
}

/// Iterative score → cut → fine-tune loop following `cfg.schedule`.
///
/// Each step scores the current network, removes the scheduled fraction of
/// the remaining weights across all layers, fine-tunes for
/// `schedule.frequency` epochs and evaluates on the eval split.
pub fn prune_loop(cfg: &RunConfig, net: &mut Network, data: &Splits) -> Result<Vec<StageRow>> {
    let mut rng = Rng::new(cfg.seed).derive(FINETUNE_STREAM);
    let finetune = cfg.finetune();
    let base = evaluate(net, &data.eval)?;
    let mut rows = vec![StageRow::new(0, 0.0, 0, 0.0, &base, connectivity(net).params, None)];
    let c = connectivity(net);
    for (k, p) in cfg.schedule.steps(c.params, c.total).into_iter().enumerate() {
        let imap = score(net, &data.train, cfg.scorer, cfg.scoring_samples)?;
        let decision = allocate_and_mask(&imap, &current_masks(net, &imap)?, p)?;
        apply_prune(net, &decision)?;
        let mut state = SgdState::new(net);
        let history = train_epochs(net, &data.train, &finetune, &cfg.surrogate, &mut rng, &mut state)?;
        let eval = evaluate(net, &data.eval)?;
        let mass = decision.layers.iter().map(|l| l.removed_mass).sum();
        rows.push(StageRow::new(
            k + 1,
            p,
            decision.removed,
            mass,
            &eval,
            connectivity(net).params,
            history.last().map(|h| h.loss),
        ));
    }
    Ok(rows)
}
