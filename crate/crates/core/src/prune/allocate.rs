use serde::{Deserialize, Serialize};

use super::scores::ImportanceMap;
use crate::error::{Result, SlampError};
use crate::snn::Network;
use crate::tensor::Tensor;

/// Outcome of one pruning step for a single layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDecision {
    pub layer: usize,
    /// New binary mask, a subset of the previous one.
    pub mask: Tensor,
    /// Smallest surviving score; `None` if nothing survives.
    pub threshold: Option<f64>,
    /// Score mass of every weight that is masked after this step.
    pub removed_mass: f64,
    /// Weights removed by this step.
    pub removed: usize,
    pub connectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub fraction: f64,
    pub removed: usize,
    pub layers: Vec<LayerDecision>,
    pub connectivity: f64,
}

impl PruneDecision {
    /// A decision that removes nothing.
    pub fn keep(imap: &ImportanceMap, masks: &[Tensor]) -> Result<Self> {
        allocate(imap, masks, 0.0)
    }

    pub fn layer(&self, net_layer: usize) -> Option<&LayerDecision> {
        self.layers.iter().find(|l| l.layer == net_layer)
    }
}

/// Current masks of the layers covered by `imap`, in map order.
pub fn current_masks(net: &Network, imap: &ImportanceMap) -> Result<Vec<Tensor>> {
    imap.layers
        .iter()
        .map(|ls| {
            net.layers()
                .get(ls.layer)
                .and_then(|l| l.mask())
                .cloned()
                .ok_or_else(|| SlampError::RecordMismatch(format!("layer {} has no mask", ls.layer)))
        })
        .collect()
}

fn check_cover(imap: &ImportanceMap, masks: &[Tensor]) -> Result<()> {
    if imap.layers.is_empty() {
        return Err(SlampError::EmptyNetwork);
    }
    if masks.len() != imap.layers.len() {
        return Err(SlampError::ShapeMismatch {
            op: "allocate_and_mask",
            left: vec![imap.layers.len()],
            right: vec![masks.len()],
        });
    }
    for (ls, m) in imap.layers.iter().zip(masks) {
        if m.shape() != ls.shape.as_slice() || ls.scores.len() != m.len() {
            return Err(SlampError::ShapeMismatch {
                op: "allocate_and_mask",
                left: ls.shape.clone(),
                right: m.shape().to_vec(),
            });
        }
        if !m.is_binary() {
            return Err(SlampError::NotBinary("mask"));
        }
    }
    Ok(())
}

/// Every unmasked weight as `(map layer position, flat index)`, in ascending
/// score order with ties broken by layer then flat index.
pub fn prune_order(imap: &ImportanceMap, masks: &[Tensor]) -> Result<Vec<(usize, usize)>> {
    check_cover(imap, masks)?;
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (pos, m) in masks.iter().enumerate() {
        order.extend(
            m.data()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, _)| (pos, j)),
        );
    }
    order.sort_by(|a, b| {
        imap.layers[a.0].scores[a.1]
            .total_cmp(&imap.layers[b.0].scores[b.1])
            .then(a.cmp(b))
    });
    Ok(order)
}

fn allocate(imap: &ImportanceMap, masks: &[Tensor], p: f64) -> Result<PruneDecision> {
    let order = prune_order(imap, masks)?;
    // The last entry of each layer in ascending order is its top weight.
    let mut guard = vec![None; masks.len()];
    for &(pos, j) in &order {
        guard[pos] = Some(j);
    }
    let guarded = guard.iter().filter(|g| g.is_some()).count();
    let target = ((p * order.len() as f64).floor() as usize).min(order.len() - guarded);

    let mut new_masks: Vec<Vec<f32>> = masks.iter().map(|m| m.data().to_vec()).collect();
    let mut removed_per = vec![0usize; masks.len()];
    let mut removed = 0;
    for &(pos, j) in &order {
        if removed == target {
            break;
        }
        if guard[pos] == Some(j) {
            continue;
        }
        new_masks[pos][j] = 0.0;
        removed_per[pos] += 1;
        removed += 1;
    }

    let mut layers = Vec::with_capacity(masks.len());
    let (mut kept_total, mut total) = (0usize, 0usize);
    for (pos, (ls, data)) in imap.layers.iter().zip(new_masks).enumerate() {
        let mut removed_mass = 0.0f64;
        let mut threshold: Option<f64> = None;
        let mut kept = 0usize;
        for (&m, &s) in data.iter().zip(&ls.scores) {
            if m == 0.0 {
                removed_mass += s;
            } else {
                kept += 1;
                threshold = Some(threshold.map_or(s, |t| t.min(s)));
            }
        }
        kept_total += kept;
        total += data.len();
        layers.push(LayerDecision {
            layer: ls.layer,
            connectivity: kept as f64 / data.len() as f64,
            mask: Tensor::new(ls.shape.clone(), data)?,
            threshold,
            removed_mass,
            removed: removed_per[pos],
        });
    }
    Ok(PruneDecision {
        fraction: p,
        removed,
        layers,
        connectivity: kept_total as f64 / total as f64,
    })
}

/// Ranks every unmasked weight of every layer by score and masks the lowest
/// `⌊p · unmasked⌋`, never removing the top-scoring weight of a layer.
pub fn allocate_and_mask(imap: &ImportanceMap, masks: &[Tensor], p: f64) -> Result<PruneDecision> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SlampError::OutOfRange {
            name: "prune fraction",
            value: p,
        });
    }
    allocate(imap, masks, p)
}

/// Installs the decision's masks and zeroes the weights beneath them.
pub fn apply_prune(net: &mut Network, decision: &PruneDecision) -> Result<()> {
    for ld in &decision.layers {
        let layer = net.layers().get(ld.layer).ok_or(SlampError::ShapeMismatch {
            op: "apply_prune",
            left: vec![net.layers().len()],
            right: vec![ld.layer],
        })?;
        let (Some(w), Some(old)) = (layer.weights(), layer.mask()) else {
            return Err(SlampError::RecordMismatch(format!("layer {} is not prunable", ld.layer)));
        };
        if w.shape() != ld.mask.shape() {
            return Err(SlampError::ShapeMismatch {
                op: "apply_prune",
                left: w.shape().to_vec(),
                right: ld.mask.shape().to_vec(),
            });
        }
        let mask: Vec<f32> = old.data().iter().zip(ld.mask.data()).map(|(a, b)| a * b).collect();
        let weights: Vec<f32> = w.data().iter().zip(&mask).map(|(&w, &m)| if m == 0.0 { 0.0 } else { w }).collect();
        let shape = w.shape().to_vec();
        net.set_mask(ld.layer, Tensor::new(shape.clone(), mask)?)?;
        net.set_weights(ld.layer, Tensor::new(shape, weights)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prune::scores::LayerScores;
    use proptest::prelude::*;

    fn map(layers: &[&[f64]]) -> ImportanceMap {
        ImportanceMap {
            layers: layers
                .iter()
                .enumerate()
                .map(|(i, s)| LayerScores {
                    layer: i,
                    shape: vec![s.len()],
                    scores: s.to_vec(),
                    normalizer: 1.0,
                    spike_mass: vec![],
                    fallback: false,
                })
                .collect(),
        }
    }

    fn full(imap: &ImportanceMap) -> Vec<Tensor> {
        imap.layers.iter().map(|l| Tensor::ones(&l.shape)).collect()
    }

    #[test]
    fn tiny_fraction_removes_nothing() {
        let m = map(&[&[0.2, 0.8], &[0.5, 0.5]]);
        let d = allocate_and_mask(&m, &full(&m), 1e-9).unwrap();
        assert_eq!(d.removed, 0);
        assert!(d.layers.iter().all(|l| l.removed_mass == 0.0));
        assert_eq!(d.connectivity, 1.0);
    }

    #[test]
    fn two_layer_example() {
        let m = map(&[&[0.1, 0.9], &[0.3, 0.7]]);
        let d = allocate_and_mask(&m, &full(&m), 0.5).unwrap();
        assert_eq!(d.layers[0].mask.data(), &[0.0, 1.0]);
        assert_eq!(d.layers[1].mask.data(), &[0.0, 1.0]);
        assert_eq!(d.layers[0].threshold, Some(0.9));
        assert!((d.layers[1].removed_mass - 0.3).abs() < 1e-15);
    }

    #[test]
    fn guard_keeps_each_layer_alive() {
        let m = map(&[&[0.01, 0.02], &[0.3, 0.3, 0.4]]);
        let d = allocate_and_mask(&m, &full(&m), 1.0).unwrap();
        assert_eq!(d.removed, 3);
        assert_eq!(d.layers[0].mask.data(), &[0.0, 1.0]);
        assert_eq!(d.layers[1].mask.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_fraction_and_shapes() {
        let m = map(&[&[0.5, 0.5]]);
        assert!(allocate_and_mask(&m, &full(&m), 0.0).is_err());
        assert!(allocate_and_mask(&m, &full(&m), 1.5).is_err());
        assert!(allocate_and_mask(&m, &[Tensor::ones(&[3])], 0.5).is_err());
        assert!(allocate_and_mask(&ImportanceMap { layers: vec![] }, &[], 0.5).is_err());
    }

    // Reference: sort (score, layer, index) tuples, drop guards, cut a prefix.
    fn brute_force(layers: &[Vec<f64>], masks: &[Vec<f32>], p: f64) -> Vec<Vec<f32>> {
        let mut all = Vec::new();
        for (l, s) in layers.iter().enumerate() {
            for (j, &v) in s.iter().enumerate() {
                if masks[l][j] != 0.0 {
                    all.push((v, l, j));
                }
            }
        }
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
        let mut tops = vec![None; layers.len()];
        for &(_, l, j) in &all {
            tops[l] = Some(j);
        }
        let k = ((p * all.len() as f64).floor() as usize).min(all.len() - tops.iter().flatten().count());
        let mut out = masks.to_vec();
        let mut n = 0;
        for &(_, l, j) in &all {
            if n == k {
                break;
            }
            if tops[l] != Some(j) {
                out[l][j] = 0.0;
                n += 1;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn matches_sort_and_cut_reference(
            raw in prop::collection::vec(prop::collection::vec(0u8..6, 1..12), 1..4),
            keep in prop::collection::vec(any::<bool>(), 40),
            p in 0.01f64..1.0,
        ) {
            // Scores drawn from a small alphabet so ties are common.
            let layers: Vec<Vec<f64>> = raw.iter().map(|l| l.iter().map(|&v| v as f64 / 8.0).collect()).collect();
            let mut k = keep.iter().cycle();
            let masks: Vec<Vec<f32>> = layers.iter().map(|l| l.iter().map(|_| if *k.next().unwrap() { 1.0 } else { 0.0 }).collect()).collect();
            let refs: Vec<&[f64]> = layers.iter().map(|v| v.as_slice()).collect();
            let m = map(&refs);
            let tensors: Vec<Tensor> = masks.iter().map(|v| Tensor::new(vec![v.len()], v.clone()).unwrap()).collect();
            let d = allocate_and_mask(&m, &tensors, p).unwrap();
            let want = brute_force(&layers, &masks, p);
            for (ld, w) in d.layers.iter().zip(&want) {
                prop_assert_eq!(ld.mask.data(), w.as_slice());
                for (new, old) in ld.mask.data().iter().zip(&masks[ld.layer]) {
                    prop_assert!(new <= old);
                }
            }
            let before: usize = masks.iter().flatten().filter(|&&v| v != 0.0).count();
            let after: usize = want.iter().flatten().filter(|&&v| v != 0.0).count();
            prop_assert_eq!(before - after, d.removed);
        }
    }
}
