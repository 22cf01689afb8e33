//! Exact worst-case output distortion of pruned dense layers.
//!
//! For a pruned layer with removed weights `ΔW = W − W̃` the accumulated
//! deviation over `T` steps is `Σ_t ΔWᵀ S_t`, which depends on the spike
//! trains only through the per-unit counts `c = Σ_t S_t ∈ {0..T}ⁿ`. The audit
//! enumerates every count vector to get the supremum of `‖ΔWᵀ c‖²` and
//! compares it against `T² · max_{s ∈ {0,1}ⁿ} ‖ΔWᵀ s‖²`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};
use crate::prune::{allocate_and_mask, current_masks, ImportanceMap, PruneDecision};
use crate::snn::{LayerKind, Network};
use crate::tensor::Tensor;

/// Largest presynaptic width the audit will enumerate.
pub const MAX_AUDIT_INPUTS: usize = 14;
/// Largest number of count vectors visited by one enumeration.
pub const MAX_AUDIT_STATES: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissibleSet {
    /// Any binary spike train.
    AllBinary,
    /// Spikes only on units that were active in the scoring data.
    ObservedSupport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    /// Supremum over all admissible count vectors.
    pub enumerated: f64,
    /// `T²` times the single-step binary maximum.
    pub shortcut: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub layer: usize,
    pub fraction: f64,
    pub timesteps: usize,
    pub admissible: AdmissibleSet,
    pub pruned_mass: f64,
    pub worst_case_lhs: f64,
    pub shortcut_lhs: f64,
    /// `worst_case_lhs / pruned_mass`; 0 when both vanish and infinite when
    /// only the mass does.
    pub empirical_c: f64,
    /// Distortion with zero pruned mass: no finite constant bounds it.
    pub unbounded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLayer {
    pub layer: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSweep {
    pub reports: Vec<AuditReport>,
    pub skipped: Vec<SkippedLayer>,
}

/// Maximum of `‖Σ_i c_i · rows[i]‖²` over `c_i ∈ {0..=top}` for the listed
/// rows. Sums run over rows in ascending order so that scaling every count
/// by a power of two scales each partial sum exactly.
fn max_over_counts(rows: &[&[f64]], outputs: usize, top: usize) -> f64 {
    let n = rows.len();
    // prefix[d] holds Σ_{i<d} c_i · rows[i].
    let mut prefix = vec![vec![0.0f64; outputs]; n + 1];
    let mut counts = vec![0usize; n];
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let mut best = norm(&prefix[n]);
    if n == 0 {
        return best;
    }
    let mut depth = 0;
    // Depth-first walk over the odometer, rebuilding prefixes below the
    // digit that changed.
    loop {
        while depth < n {
            let (lo, hi) = prefix.split_at_mut(depth + 1);
            let c = counts[depth] as f64;
            for ((dst, src), w) in hi[0].iter_mut().zip(&lo[depth]).zip(rows[depth]) {
                *dst = src + c * w;
            }
            depth += 1;
        }
        best = best.max(norm(&prefix[n]));
        loop {
            if depth == 0 {
                return best;
            }
            depth -= 1;
            if counts[depth] < top {
                counts[depth] += 1;
                break;
            }
            counts[depth] = 0;
        }
    }
}

/// Worst-case accumulated deviation between a dense layer and its pruned
/// version, both `[inputs, outputs]`, over `timesteps` steps.
///
/// `allowed` restricts which presynaptic units may spike; `None` admits all.
pub fn worst_case_distortion(w: &Tensor, w_pruned: &Tensor, timesteps: usize, allowed: Option<&[bool]>) -> Result<Distortion> {
    let &[inputs, outputs] = w.shape() else {
        return Err(SlampError::InvalidShape {
            shape: w.shape().to_vec(),
            reason: "audited weights must be [inputs, outputs]".into(),
        });
    };
    if w_pruned.shape() != w.shape() {
        return Err(SlampError::ShapeMismatch {
            op: "worst_case_distortion",
            left: w.shape().to_vec(),
            right: w_pruned.shape().to_vec(),
        });
    }
    if let Some(a) = allowed {
        if a.len() != inputs {
            return Err(SlampError::ShapeMismatch {
                op: "worst_case_distortion",
                left: vec![inputs],
                right: vec![a.len()],
            });
        }
    }
    if inputs > MAX_AUDIT_INPUTS {
        return Err(SlampError::EnumerationLimit {
            inputs,
            cap: MAX_AUDIT_INPUTS,
        });
    }
    let delta: Vec<f64> = w
        .data()
        .iter()
        .zip(w_pruned.data())
        .map(|(&a, &b)| a as f64 - b as f64)
        .collect();
    let rows: Vec<&[f64]> = (0..inputs)
        .filter(|&i| allowed.is_none_or(|a| a[i]))
        .map(|i| &delta[i * outputs..(i + 1) * outputs])
        .collect();
    let states = (timesteps as u64 + 1).checked_pow(rows.len() as u32);
    if states.is_none_or(|s| s > MAX_AUDIT_STATES) {
        let cap = (MAX_AUDIT_STATES as f64).log((timesteps + 1) as f64).floor() as usize;
        return Err(SlampError::EnumerationLimit { inputs: rows.len(), cap });
    }
    let t = timesteps as f64;
    Ok(Distortion {
        enumerated: max_over_counts(&rows, outputs, timesteps),
        shortcut: t * t * max_over_counts(&rows, outputs, 1),
    })
}

fn empirical_c(lhs: f64, mass: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if mass == 0.0 {
        f64::INFINITY
    } else {
        lhs / mass
    }
}

/// Audits one dense layer of `net` against a pruning decision computed from
/// `imap`.
pub fn audit_layer(
    net: &Network,
    layer: usize,
    imap: &ImportanceMap,
    decision: &PruneDecision,
    timesteps: usize,
    admissible: AdmissibleSet,
) -> Result<AuditReport> {
    let state = net.layers().get(layer).ok_or(SlampError::EmptyNetwork)?;
    if !matches!(state.kind(), LayerKind::Dense { .. }) {
        return Err(SlampError::Config(format!("layer {layer} is not dense")));
    }
    let scores = imap
        .layer(layer)
        .ok_or_else(|| SlampError::RecordMismatch(format!("no scores for layer {layer}")))?;
    let ld = decision
        .layer(layer)
        .ok_or_else(|| SlampError::RecordMismatch(format!("no decision for layer {layer}")))?;
    let shape = state.weights().expect("dense layer has weights").shape().to_vec();
    let w = Tensor::new(shape.clone(), state.effective_weights().expect("dense layer has weights"))?;
    let pruned: Vec<f32> = w
        .data()
        .iter()
        .zip(ld.mask.data())
        .map(|(&v, &m)| if m == 0.0 { 0.0 } else { v })
        .collect();
    let w_pruned = Tensor::new(shape, pruned)?;
    let support: Vec<bool> = scores.spike_mass.iter().map(|&m| m > 0.0).collect();
    let allowed = match admissible {
        AdmissibleSet::AllBinary => None,
        AdmissibleSet::ObservedSupport => Some(support.as_slice()),
    };
    let d = worst_case_distortion(&w, &w_pruned, timesteps, allowed)?;
    Ok(AuditReport {
        layer,
        fraction: decision.fraction,
        timesteps,
        admissible,
        pruned_mass: ld.removed_mass,
        worst_case_lhs: d.enumerated,
        shortcut_lhs: d.shortcut,
        empirical_c: empirical_c(d.enumerated, ld.removed_mass),
        unbounded: ld.removed_mass == 0.0 && d.enumerated > 0.0,
    })
}

/// Audits every dense prunable layer at each fraction. Each fraction is cut
/// from the network's current masks; a fraction of 0 removes nothing.
/// Layers that are not dense or too wide to enumerate are listed as skipped.
pub fn audit_sweep(
    net: &Network,
    imap: &ImportanceMap,
    fractions: &[f64],
    timesteps: usize,
    admissible: AdmissibleSet,
) -> Result<AuditSweep> {
    let masks = current_masks(net, imap)?;
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let mut skip_set = Vec::new();
    for &p in fractions {
        let decision = if p == 0.0 {
            PruneDecision::keep(imap, &masks)?
        } else {
            allocate_and_mask(imap, &masks, p)?
        };
        for ls in &imap.layers {
            if skip_set.contains(&ls.layer) {
                continue;
            }
            match audit_layer(net, ls.layer, imap, &decision, timesteps, admissible) {
                Ok(r) => reports.push(r),
                Err(e @ (SlampError::EnumerationLimit { .. } | SlampError::Config(_))) => {
                    skip_set.push(ls.layer);
                    skipped.push(SkippedLayer {
                        layer: ls.layer,
                        reason: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    reports.sort_by_key(|r| r.layer);
    Ok(AuditSweep { reports, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prune::lamp_scores;
    use crate::rng::Rng;
    use crate::snn::{Architecture, NeuronConfig};

    fn t(shape: &[usize], v: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn no_pruning_gives_zero() {
        let w = Rng::new(1).uniform(&[5, 3], -1.0, 1.0);
        let d = worst_case_distortion(&w, &w, 3, None).unwrap();
        assert_eq!((d.enumerated, d.shortcut), (0.0, 0.0));
    }

    #[test]
    fn single_pruned_weight() {
        let w = t(&[3, 2], &[0.1, 0.2, -0.7, 0.4, 0.5, 0.6]);
        let mut p = w.clone();
        p.data_mut()[2] = 0.0;
        let d = worst_case_distortion(&w, &p, 1, None).unwrap();
        assert_eq!(d.enumerated, (-0.7f32 as f64).powi(2));
    }

    // Enumerates every per-timestep assignment (2ⁿ)ᵀ directly.
    fn per_step_oracle(delta: &[f64], inputs: usize, outputs: usize, steps: usize) -> f64 {
        let patterns = 1usize << inputs;
        let mut best = 0.0f64;
        for code in 0..patterns.pow(steps as u32) {
            let mut y = vec![0.0f64; outputs];
            let mut rest = code;
            for _ in 0..steps {
                let s = rest % patterns;
                rest /= patterns;
                for i in 0..inputs {
                    if s >> i & 1 == 1 {
                        for o in 0..outputs {
                            y[o] += delta[i * outputs + o];
                        }
                    }
                }
            }
            best = best.max(y.iter().map(|v| v * v).sum());
        }
        best
    }

    #[test]
    fn matches_double_enumeration() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let w = rng.uniform(&[3, 2], -1.0, 1.0);
            let mask = rng.bernoulli(0.5, &[3, 2]).unwrap();
            let p: Vec<f32> = w.data().iter().zip(mask.data()).map(|(a, b)| a * b).collect();
            let delta: Vec<f64> = w.data().iter().zip(&p).map(|(a, b)| *a as f64 - *b as f64).collect();
            let d = worst_case_distortion(&w, &t(&[3, 2], &p), 2, None).unwrap();
            let oracle = per_step_oracle(&delta, 3, 2, 2);
            assert!((d.enumerated - oracle).abs() <= 1e-12 * oracle.max(1.0));
            assert_eq!(d.enumerated, d.shortcut);
        }
    }

    #[test]
    fn doubling_timesteps_quadruples() {
        let mut rng = Rng::new(6);
        let w = rng.uniform(&[8, 4], -1.0, 1.0);
        let p: Vec<f32> = w.data().iter().map(|&v| if v.abs() < 0.5 { 0.0 } else { v }).collect();
        let p = t(&[8, 4], &p);
        let d1 = worst_case_distortion(&w, &p, 1, None).unwrap().enumerated;
        let d2 = worst_case_distortion(&w, &p, 2, None).unwrap().enumerated;
        let d4 = worst_case_distortion(&w, &p, 4, None).unwrap().enumerated;
        assert_eq!(d2, 4.0 * d1);
        assert_eq!(d4, 4.0 * d2);
    }

    #[test]
    fn silent_support_hides_pruned_weights() {
        let w = t(&[2, 2], &[0.9, -0.3, 0.4, 0.8]);
        let p = t(&[2, 2], &[0.0, 0.0, 0.4, 0.8]);
        let d = worst_case_distortion(&w, &p, 2, Some(&[false, true])).unwrap();
        assert_eq!(d.enumerated, 0.0);
        assert!(worst_case_distortion(&w, &p, 2, None).unwrap().enumerated > 0.0);
    }

    #[test]
    fn larger_cuts_can_lower_the_supremum() {
        // Pruning an extra weight of opposite sign can cancel part of the
        // worst-case sum.
        let w = t(&[2, 2], &[1.0, -1.0, 1.0, 1.0]);
        let small = t(&[2, 2], &[0.0, -1.0, 0.0, 0.0]);
        let large = t(&[2, 2], &[0.0, 0.0, 0.0, 0.0]);
        let a = worst_case_distortion(&w, &small, 1, None).unwrap().enumerated;
        let b = worst_case_distortion(&w, &large, 1, None).unwrap().enumerated;
        assert_eq!((a, b), (5.0, 4.0));
    }

    #[test]
    fn enumeration_limits() {
        let w = Tensor::zeros(&[15, 2]);
        assert!(matches!(
            worst_case_distortion(&w, &w, 1, None),
            Err(SlampError::EnumerationLimit { inputs: 15, .. })
        ));
        let w = Tensor::zeros(&[14, 2]);
        assert!(matches!(
            worst_case_distortion(&w, &w, 7, None),
            Err(SlampError::EnumerationLimit { .. })
        ));
    }

    fn audit_net() -> Network {
        let arch = Architecture {
            input: vec![6],
            layers: vec![
                crate::snn::LayerSpec::Dense { out: 5 },
                crate::snn::LayerSpec::Dense { out: 3 },
            ],
        };
        Network::init(&arch, NeuronConfig::default(), 1.0, &mut Rng::new(7)).unwrap()
    }

    #[test]
    fn sweep_at_zero_is_all_zero_and_mass_is_monotone() {
        let net = audit_net();
        let imap = lamp_scores(&net);
        let sweep = audit_sweep(&net, &imap, &[0.0, 0.1, 0.3, 0.6], 2, AdmissibleSet::AllBinary).unwrap();
        assert!(sweep.skipped.is_empty());
        for layer in [0, 1] {
            let rows: Vec<&AuditReport> = sweep.reports.iter().filter(|r| r.layer == layer).collect();
            assert_eq!(rows.len(), 4);
            assert_eq!((rows[0].worst_case_lhs, rows[0].pruned_mass, rows[0].empirical_c), (0.0, 0.0, 0.0));
            assert!(rows.windows(2).all(|w| w[1].pruned_mass >= w[0].pruned_mass));
            assert!(rows.iter().all(|r| r.worst_case_lhs == r.shortcut_lhs));
        }
    }

    #[test]
    fn zero_mass_with_distortion_is_flagged() {
        let net = audit_net();
        let imap = lamp_scores(&net);
        let masks = current_masks(&net, &imap).unwrap();
        let decision = allocate_and_mask(&imap, &masks, 0.5).unwrap();
        // Scores that claim the pruned weights carry no importance.
        let mut fake = imap.clone();
        for (ls, ld) in fake.layers.iter_mut().zip(&decision.layers) {
            for (s, m) in ls.scores.iter_mut().zip(ld.mask.data()) {
                if *m == 0.0 {
                    *s = 0.0;
                }
            }
        }
        let d = allocate_and_mask(&fake, &masks, 0.5).unwrap();
        let r = audit_layer(&net, 0, &fake, &d, 1, AdmissibleSet::AllBinary).unwrap();
        assert!(r.unbounded);
        assert_eq!(r.empirical_c, f64::INFINITY);
    }
}
