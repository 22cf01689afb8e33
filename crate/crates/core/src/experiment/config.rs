use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::AdmissibleSet;
use crate::data::{Encoding, EventSpec, StaticSpec};
use crate::error::{Result, SlampError};
use crate::prune::PruneSchedule;
use crate::snn::{Architecture, NeuronConfig};
use crate::train::{OptimConfig, SurrogateConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Slamp,
    Lamp,
}

fn direct() -> Encoding {
    Encoding::Direct
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Static {
        dims: usize,
        classes: usize,
        train_per_class: usize,
        eval_per_class: usize,
        noise: f32,
        #[serde(default = "direct")]
        encoding: Encoding,
        #[serde(default)]
        silent_range: Option<[usize; 2]>,
    },
    Events {
        dims: usize,
        classes: usize,
        train_per_class: usize,
        eval_per_class: usize,
        base_rate: f32,
        contrast: f32,
        #[serde(default)]
        silent_range: Option<[usize; 2]>,
    },
}

impl DatasetConfig {
    pub fn dims(&self) -> usize {
        match self {
            Self::Static { dims, .. } | Self::Events { dims, .. } => *dims,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Self::Static { classes, .. } | Self::Events { classes, .. } => *classes,
        }
    }

    pub fn static_spec(&self) -> Option<StaticSpec> {
        match *self {
            Self::Static {
                classes,
                train_per_class,
                eval_per_class,
                noise,
                encoding,
                silent_range,
                ..
            } => Some(StaticSpec {
                classes,
                train_per_class,
                eval_per_class,
                noise,
                encoding,
                silent_range,
            }),
            Self::Events { .. } => None,
        }
    }

    pub fn event_spec(&self) -> Option<EventSpec> {
        match *self {
            Self::Events {
                classes,
                train_per_class,
                eval_per_class,
                base_rate,
                contrast,
                silent_range,
                ..
            } => Some(EventSpec {
                classes,
                train_per_class,
                eval_per_class,
                base_rate,
                contrast,
                silent_range,
            }),
            Self::Static { .. } => None,
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::Static {
            dims: 64,
            classes: 10,
            train_per_class: 40,
            eval_per_class: 20,
            noise: 0.25,
            encoding: Encoding::Direct,
            silent_range: None,
        }
    }
}

fn default_fractions() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
}

fn default_admissible() -> Vec<AdmissibleSet> {
    vec![AdmissibleSet::AllBinary, AdmissibleSet::ObservedSupport]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_admissible")]
    pub admissible: Vec<AdmissibleSet>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            fractions: default_fractions(),
            admissible: default_admissible(),
        }
    }
}

fn default_frequencies() -> Vec<usize> {
    vec![10, 15, 25]
}

fn default_rates() -> Vec<f32> {
    vec![0.005, 0.01, 0.02]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_frequencies")]
    pub frequencies: Vec<usize>,
    #[serde(default = "default_rates")]
    pub learning_rates: Vec<f32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            frequencies: default_frequencies(),
            learning_rates: default_rates(),
        }
    }
}

fn default_gain() -> f32 {
    2.0
}

fn default_finetune_lr() -> f32 {
    0.01
}

fn default_scoring_samples() -> usize {
    256
}

fn default_scorer() -> Scorer {
    Scorer::Slamp
}

/// Everything a command needs. Unknown keys are rejected; every section has
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    /// Defaults to the dense desk-scale architecture sized to the dataset.
    #[serde(default)]
    pub architecture: Option<Architecture>,
    #[serde(default)]
    pub neuron: NeuronConfig,
    /// Half-width of the uniform initialiser relative to `sqrt(3 / fan_in)`.
    #[serde(default = "default_gain")]
    pub init_gain: f32,
    #[serde(default)]
    pub train: OptimConfig,
    /// Initial learning rate of each fine-tuning block.
    #[serde(default = "default_finetune_lr")]
    pub finetune_learning_rate: f32,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub schedule: PruneSchedule,
    #[serde(default = "default_scorer")]
    pub scorer: Scorer,
    /// Training samples used to gather spike statistics for scoring.
    #[serde(default = "default_scoring_samples")]
    pub scoring_samples: usize,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SlampError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
            .clone()
            .unwrap_or_else(|| Architecture::dense_default(self.dataset.dims(), self.dataset.classes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        self.train.validate()?;
        self.surrogate.validate()?;
        self.schedule.validate()?;
        OptimConfig {
            learning_rate: self.finetune_learning_rate,
            ..self.train.clone()
        }
        .validate()?;
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return Err(SlampError::Config(format!("init_gain must be positive, got {}", self.init_gain)));
        }
        if self.scoring_samples == 0 {
            return Err(SlampError::Config("scoring_samples must be positive".into()));
        }
        let arch = self.architecture();
        if arch.input_len() != self.dataset.dims() {
            return Err(SlampError::Config(format!(
                "architecture expects {} inputs but the dataset has {}",
                arch.input_len(),
                self.dataset.dims()
            )));
        }
        let kinds = arch.resolve()?;
        if kinds.last().map(|k| k.output_len()) != Some(self.dataset.classes()) {
            return Err(SlampError::Config("architecture output does not match the class count".into()));
        }
        if let Some(spec) = self.dataset.static_spec() {
            if spec.encoding == Encoding::Events {
                return Err(SlampError::Config("static data cannot use event encoding".into()));
            }
        }
        if self.audit.fractions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SlampError::Config("audit fractions must lie in [0, 1]".into()));
        }
        if self.sweep.frequencies.is_empty() || self.sweep.learning_rates.is_empty() {
            return Err(SlampError::Config("sweep grid is empty".into()));
        }
        if self.sweep.learning_rates.iter().any(|&lr| !(lr > 0.0)) {
            return Err(SlampError::Config("sweep learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration, not
    /// counting the output directory.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(&Self {
            output_dir: None,
            ..self.clone()
        })
        .expect("config serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn finetune(&self) -> OptimConfig {
        OptimConfig {
            learning_rate: self.finetune_learning_rate,
            epochs: self.schedule.frequency,
            ..self.train.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_a_valid_config() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.architecture(), Architecture::dense_default(64, 10));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"seeed": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"lr": 0.1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dataset": {"kind": "static", "dims": 4}}"#).is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"neuron": {"threshold": 0.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"scoring_samples": 0}"#).is_err());
        assert!(RunConfig::from_json(
            r#"{"architecture": {"input": [10], "layers": [{"kind": "dense", "out": 10}]}}"#
        )
        .is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::from_json(
            r#"{"seed": 5, "dataset": {"kind": "events", "dims": 16, "classes": 4, "train_per_class": 3,
                "eval_per_class": 2, "base_rate": 0.3, "contrast": 0.2}, "scorer": "lamp"}"#,
        )
        .unwrap();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
