//! Importance scoring, global sparsity allocation and mask application.

mod allocate;
mod schedule;
mod scores;

use serde::{Deserialize, Serialize};

pub use allocate::{allocate_and_mask, apply_prune, current_masks, prune_order, LayerDecision, PruneDecision};
pub use schedule::{PruneSchedule, Stage};
pub use scores::{lamp_scores, slamp_scores, ImportanceMap, LayerScores};

use crate::snn::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connectivity {
    /// Unmasked fraction over all prunable weights.
    pub global: f64,
    pub per_layer: Vec<f64>,
    /// Unmasked weight count.
    pub params: usize,
    pub total: usize,
}

pub fn connectivity(net: &Network) -> Connectivity {
    let mut per_layer = Vec::new();
    let (mut params, mut total) = (0usize, 0usize);
    for l in net.prunable() {
        let mask = net.layers()[l].mask().expect("prunable layer has a mask");
        let kept = mask.data().iter().filter(|&&m| m != 0.0).count();
        per_layer.push(kept as f64 / mask.len() as f64);
        params += kept;
        total += mask.len();
    }
    Connectivity {
        global: if total == 0 { 1.0 } else { params as f64 / total as f64 },
        per_layer,
        params,
        total,
    }
}
