//! End-to-end commands: train, prune-finetune loop, evaluation, distortion
//! audit and hyperparameter sweep. Every command is a pure function of its
//! configuration and input files.

mod config;
mod pipeline;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{AuditConfig, DatasetConfig, RunConfig, Scorer, SweepConfig};
pub use pipeline::{build_data, build_network, prune_loop, score, train_network, StageRow};
pub use report::{write_csv, write_json, REPORT_SCHEMA_VERSION};

use crate::audit::{audit_sweep, AuditReport, SkippedLayer};
use crate::data::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::error::{Result, SlampError};
use crate::metrics::{evaluate, EvalResult};
use crate::prune::connectivity;
use crate::snn::Network;
use crate::train::EpochStats;

pub const CHECKPOINT_FILE: &str = "checkpoint.slmp";
pub const PRUNED_CHECKPOINT_FILE: &str = "pruned.slmp";

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Loads a checkpoint and checks it was produced for this configuration's
/// network.
pub fn load_for(cfg: &RunConfig, path: &Path) -> Result<(Network, Checkpoint)> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.architecture != cfg.architecture() || ckpt.neuron != cfg.neuron {
        return Err(SlampError::Config(format!(
            "checkpoint {} was written for a different architecture or neuron model",
            path.display()
        )));
    }
    let (net, _) = ckpt.restore()?;
    Ok((net, ckpt))
}

fn checkpoint_or_default(cfg: &RunConfig, checkpoint: Option<&Path>, file: &str) -> Result<PathBuf> {
    Ok(match checkpoint {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join(file),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub eval: EvalResult,
    pub checkpoint: PathBuf,
}

/// Trains from scratch, writing `checkpoint.slmp`, `train.csv` and
/// `train.json` to the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.hash();
    let data = build_data(cfg)?;
    let (mut net, state, history) = train_network(cfg, &data)?;
    let path = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&path, &Checkpoint::capture(&net, &cfg.architecture(), Some(&state), cfg.seed, history.len()))?;
    let summary = TrainSummary {
        epochs: history.len(),
        final_loss: history.last().map(|h| h.loss),
        final_train_accuracy: history.last().map(|h| h.accuracy),
        eval: evaluate(&mut net, &data.eval)?,
        checkpoint: PathBuf::from(CHECKPOINT_FILE),
    };
    write_csv::<EpochStats>(&dir.join("train.csv"), &hash, &history)?;
    write_json(&dir.join("train.json"), "train", &hash, cfg.seed, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSummary {
    pub stages: usize,
    pub baseline_top1: f64,
    pub final_top1: f64,
    pub final_connectivity: f64,
    pub checkpoint: PathBuf,
}

/// Runs the pruning schedule from a trained checkpoint (default:
/// `<out>/checkpoint.slmp`), writing `pruned.slmp`, `prune_loop.csv` and
/// `prune_loop.json`.
pub fn cmd_prune_loop(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(PruneSummary, Vec<StageRow>)> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.hash();
    let (mut net, ckpt) = load_for(cfg, &checkpoint_or_default(cfg, checkpoint, CHECKPOINT_FILE)?)?;
    let data = build_data(cfg)?;
    let rows = prune_loop(cfg, &mut net, &data)?;
    let epochs = ckpt.epoch + (rows.len() - 1) * cfg.schedule.frequency;
    save_checkpoint(
        dir.join(PRUNED_CHECKPOINT_FILE),
        &Checkpoint::capture(&net, &cfg.architecture(), None, cfg.seed, epochs),
    )?;
    let last = rows.last().expect("baseline row");
    let summary = PruneSummary {
        stages: rows.len() - 1,
        baseline_top1: rows[0].top1,
        final_top1: last.top1,
        final_connectivity: last.connectivity,
        checkpoint: PathBuf::from(PRUNED_CHECKPOINT_FILE),
    };
    write_csv(&dir.join("prune_loop.csv"), &hash, &rows)?;
    write_json(&dir.join("prune_loop.json"), "prune-loop", &hash, cfg.seed, &summary)?;
    Ok((summary, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub top1: f64,
    pub top5: f64,
    pub sops: f64,
    pub membrane_variance: f64,
    pub connectivity: f64,
    pub params: usize,
}

/// Evaluates a checkpoint on the eval split, writing `eval.csv` and
/// `eval.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<EvalRow> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.hash();
    let (mut net, _) = load_for(cfg, &checkpoint_or_default(cfg, checkpoint, CHECKPOINT_FILE)?)?;
    let data = build_data(cfg)?;
    let r = evaluate(&mut net, &data.eval)?;
    let row = EvalRow {
        top1: r.top1,
        top5: r.top5,
        sops: r.sops,
        membrane_variance: r.membrane_variance,
        connectivity: r.connectivity,
        params: connectivity(&net).params,
    };
    write_csv(&dir.join("eval.csv"), &hash, std::slice::from_ref(&row))?;
    write_json(&dir.join("eval.json"), "eval", &hash, cfg.seed, &row)?;
    Ok(row)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub reports: Vec<AuditReport>,
    pub skipped: Vec<SkippedLayer>,
}

/// Audits every dense layer of a checkpoint at each configured fraction and
/// admissible set, writing `audit.csv` and `audit.json`. Layers too wide to
/// enumerate are listed as skipped.
pub fn cmd_audit(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<AuditSummary> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.hash();
    let (mut net, _) = load_for(cfg, &checkpoint_or_default(cfg, checkpoint, CHECKPOINT_FILE)?)?;
    let data = build_data(cfg)?;
    let imap = score(&mut net, &data.train, cfg.scorer, cfg.scoring_samples)?;
    let mut summary = AuditSummary {
        reports: Vec::new(),
        skipped: Vec::new(),
    };
    for &set in &cfg.audit.admissible {
        let sweep = audit_sweep(&net, &imap, &cfg.audit.fractions, cfg.neuron.timesteps, set)?;
        summary.reports.extend(sweep.reports);
        for s in sweep.skipped {
            if !summary.skipped.contains(&s) {
                summary.skipped.push(s);
            }
        }
    }
    write_csv(&dir.join("audit.csv"), &hash, &summary.reports)?;
    write_json(&dir.join("audit.json"), "audit", &hash, cfg.seed, &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub frequency: usize,
    pub learning_rate: f32,
    pub top1: Option<f64>,
    pub top5: Option<f64>,
    /// Top-1 of the best cell minus this cell's.
    pub delta_vs_best: Option<f64>,
    pub target_connectivity: f64,
    pub achieved_connectivity: Option<f64>,
    pub sparsity_deviation: Option<f64>,
    pub error: Option<String>,
}

/// Runs one prune loop per `(frequency, learning rate)` cell from the same
/// trained checkpoint, writing `sweep.csv` and `sweep.json`. A failing cell
/// is reported and the grid continues.
pub fn cmd_sweep(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let hash = cfg.hash();
    let (net, _) = load_for(cfg, &checkpoint_or_default(cfg, checkpoint, CHECKPOINT_FILE)?)?;
    let data = build_data(cfg)?;
    let c = connectivity(&net);
    let mut kept = c.params;
    for p in cfg.schedule.steps(c.params, c.total) {
        kept -= (p * kept as f64).floor() as usize;
    }
    let target = kept as f64 / c.total as f64;

    let mut rows = Vec::new();
    for &frequency in &cfg.sweep.frequencies {
        for &learning_rate in &cfg.sweep.learning_rates {
            let mut cell = cfg.clone();
            cell.schedule.frequency = frequency;
            cell.finetune_learning_rate = learning_rate;
            let mut cell_net = net.clone();
            let outcome = cell.validate().and_then(|_| prune_loop(&cell, &mut cell_net, &data));
            rows.push(match outcome {
                Ok(stages) => {
                    let last = stages.last().expect("baseline row");
                    SweepRow {
                        frequency,
                        learning_rate,
                        top1: Some(last.top1),
                        top5: Some(last.top5),
                        delta_vs_best: None,
                        target_connectivity: target,
                        achieved_connectivity: Some(last.connectivity),
                        sparsity_deviation: Some((last.connectivity - target).abs()),
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    frequency,
                    learning_rate,
                    top1: None,
                    top5: None,
                    delta_vs_best: None,
                    target_connectivity: target,
                    achieved_connectivity: None,
                    sparsity_deviation: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    let best = rows.iter().filter_map(|r| r.top1).fold(f64::NEG_INFINITY, f64::max);
    for r in &mut rows {
        r.delta_vs_best = r.top1.map(|t| best - t);
    }
    write_csv(&dir.join("sweep.csv"), &hash, &rows)?;
    write_json(&dir.join("sweep.json"), "sweep", &hash, cfg.seed, &rows)?;
    Ok(rows)
}
