use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};

/// One entry of a pruning schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    /// Remove `fraction` of the remaining weights once.
    Fraction { fraction: f64 },
    /// Remove `fraction` of the remaining weights per step for as long as a
    /// full step keeps global connectivity at or above `until`, then prune
    /// straight to `until`.
    Repeat { fraction: f64, until: f64 },
    /// Prune straight to the given global connectivity.
    Target { connectivity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSchedule {
    /// Fine-tuning epochs after every pruning step.
    pub frequency: usize,
    pub stages: Vec<Stage>,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        Self {
            frequency: 15,
            stages: vec![
                Stage::Repeat {
                    fraction: 0.15,
                    until: 0.10,
                },
                Stage::Target { connectivity: 0.02 },
                Stage::Target { connectivity: 0.004 },
            ],
        }
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(SlampError::Config(format!("stage fraction {p} is outside (0, 1]")))
    }
}

fn check_level(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(SlampError::Config(format!("target connectivity {c} is outside (0, 1)")))
    }
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(SlampError::Config("pruning schedule has no stages".into()));
        }
        let mut floor = 1.0f64;
        for stage in &self.stages {
            match *stage {
                Stage::Fraction { fraction } => check_fraction(fraction)?,
                Stage::Repeat { fraction, until } => {
                    check_fraction(fraction)?;
                    check_level(until)?;
                    if until >= floor {
                        return Err(SlampError::Config("schedule targets must decrease".into()));
                    }
                    floor = until;
                }
                Stage::Target { connectivity } => {
                    check_level(connectivity)?;
                    if connectivity >= floor {
                        return Err(SlampError::Config("schedule targets must decrease".into()));
                    }
                    floor = connectivity;
                }
            }
        }
        Ok(())
    }

    /// Expands the schedule into per-step fractions for a network with
    /// `total` prunable weights of which `kept` are unmasked. Each step
    /// removes `⌊p · unmasked⌋` weights, which the expansion simulates
    /// exactly.
    pub fn steps(&self, kept: usize, total: usize) -> Vec<f64> {
        fn cut(p: f64, kept: &mut usize, steps: &mut Vec<f64>) {
            *kept -= (p * *kept as f64).floor() as usize;
            steps.push(p);
        }
        let mut steps = Vec::new();
        let mut kept = kept;
        for stage in &self.stages {
            match *stage {
                Stage::Fraction { fraction } => cut(fraction, &mut kept, &mut steps),
                Stage::Repeat { fraction, until } => {
                    let goal = until * total as f64;
                    while (kept - (fraction * kept as f64).floor() as usize) as f64 >= goal {
                        cut(fraction, &mut kept, &mut steps);
                    }
                    if let Some(p) = fraction_to(kept, goal) {
                        cut(p, &mut kept, &mut steps);
                    }
                }
                Stage::Target { connectivity } => {
                    if let Some(p) = fraction_to(kept, connectivity * total as f64) {
                        cut(p, &mut kept, &mut steps);
                    }
                }
            }
        }
        steps
    }
}

/// Fraction of `kept` to remove so that `⌈goal⌉` weights remain.
fn fraction_to(kept: usize, goal: f64) -> Option<f64> {
    let want = (goal.ceil() as usize).max(1);
    if want >= kept {
        return None;
    }
    let remove = kept - want;
    // Aim midway inside the floor bucket so rounding cannot drop a weight.
    Some(((remove as f64 + 0.5) / kept as f64).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulate(steps: &[f64], total: usize) -> Vec<usize> {
        let mut kept = total;
        steps
            .iter()
            .map(|p| {
                kept -= (p * kept as f64).floor() as usize;
                kept
            })
            .collect()
    }

    #[test]
    fn default_schedule_hits_targets() {
        let total = 6464;
        let steps = PruneSchedule::default().steps(total, total);
        let kept = simulate(&steps, total);
        assert_eq!(steps.len(), 17);
        for (k, &w) in kept.iter().take(14).enumerate() {
            let ideal = 0.85f64.powi(k as i32 + 1) * total as f64;
            assert!((w as f64 - ideal).abs() <= (k + 1) as f64, "{k}: {w} vs {ideal}");
        }
        for (i, target) in [(14, 0.10), (15, 0.02), (16, 0.004)] {
            assert!((kept[i] as f64 - target * total as f64).abs() <= 1.0, "{}", kept[i]);
        }
        assert!(kept.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn single_fraction_stage() {
        let s = PruneSchedule {
            frequency: 1,
            stages: vec![Stage::Fraction { fraction: 0.15 }],
        };
        assert_eq!(simulate(&s.steps(100, 100), 100), vec![85]);
    }

    #[test]
    fn validation() {
        assert!(PruneSchedule::default().validate().is_ok());
        let bad = |stages| PruneSchedule { frequency: 1, stages }.validate().is_err();
        assert!(bad(vec![]));
        assert!(bad(vec![Stage::Fraction { fraction: 0.0 }]));
        assert!(bad(vec![Stage::Target { connectivity: 1.0 }]));
        assert!(bad(vec![Stage::Target { connectivity: 0.1 }, Stage::Target { connectivity: 0.2 }]));
    }

    #[test]
    fn serde_shape() {
        let json = serde_json::to_string(&PruneSchedule::default()).unwrap();
        assert!(json.contains(r#""kind":"repeat""#));
        let back: PruneSchedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, PruneSchedule::default());
        assert!(serde_json::from_str::<Stage>(r#"{"kind":"target","connectivity":0.1,"x":1}"#).is_err());
    }
}
