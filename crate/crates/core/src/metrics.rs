//! Evaluation quantities: top-k accuracy, synaptic operations and membrane
//! variance.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SlampError};
use crate::snn::{ForwardOptions, LayerKind, Network, SpikeRecord};
use crate::tensor::Tensor;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows of `[batch, classes]` logits whose label ranks among the
/// `k` largest entries. Equal logits rank the lower class index first.
pub fn topk_accuracy(logits: &Tensor, labels: &[usize], k: usize) -> Result<f64> {
    let &[batch, classes] = logits.shape() else {
        return Err(SlampError::InvalidShape {
            shape: logits.shape().to_vec(),
            reason: "logits must be [batch, classes]".into(),
        });
    };
    if labels.len() != batch {
        return Err(SlampError::ShapeMismatch {
            op: "topk_accuracy",
            left: vec![batch],
            right: vec![labels.len()],
        });
    }
    if k == 0 || k > classes {
        return Err(SlampError::OutOfRange {
            name: "k",
            value: k as f64,
        });
    }
    if batch == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (b, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(SlampError::LabelOutOfRange { label, classes });
        }
        let row = &logits.data()[b * classes..(b + 1) * classes];
        let target = row[label];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(c, &v)| v > target || (v == target && c < label))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / batch as f64)
}

/// Mean number of synaptic operations per sample.
///
/// Every non-zero presynaptic value arriving at a weighted layer counts one
/// operation per surviving (unmasked) synapse it drives. For binary spike
/// inputs this is the usual spike × fan-out count.
pub fn count_sops(net: &Network, record: &SpikeRecord) -> Result<f64> {
    if record.layers.len() != net.layers().len() {
        return Err(SlampError::RecordMismatch(format!(
            "record has {} layers, network has {}",
            record.layers.len(),
            net.layers().len()
        )));
    }
    if record.batch == 0 {
        return Ok(0.0);
    }
    let mut total = 0u64;
    for (l, layer) in net.layers().iter().enumerate() {
        let Some(mask) = layer.mask() else { continue };
        let pre = record.presynaptic(l);
        if pre.shape()[2] != layer.input_len() {
            return Err(SlampError::RecordMismatch(format!(
                "layer {l} input width differs from the record"
            )));
        }
        match layer.kind() {
            LayerKind::Dense { inputs, outputs } => {
                let fanout: Vec<u64> = (0..*inputs)
                    .map(|i| mask.data()[i * outputs..(i + 1) * outputs].iter().filter(|&&m| m != 0.0).count() as u64)
                    .collect();
                for t in 0..record.timesteps {
                    for b in 0..record.batch {
                        let x = SpikeRecord::frame(pre, t, b);
                        total += x.iter().zip(&fanout).filter(|(v, _)| **v != 0.0).map(|(_, f)| f).sum::<u64>();
                    }
                }
            }
            LayerKind::Conv(geo) => {
                let k = geo.kernel;
                let plane = geo.in_h * geo.in_w;
                for t in 0..record.timesteps {
                    for b in 0..record.batch {
                        let x = SpikeRecord::frame(pre, t, b);
                        for co in 0..geo.out_channels {
                            for oy in 0..geo.out_h() {
                                for ox in 0..geo.out_w() {
                                    for ci in 0..geo.in_channels {
                                        for ky in 0..k {
                                            for kx in 0..k {
                                                let Some((iy, ix)) = geo.source(oy, ox, ky, kx) else {
                                                    continue;
                                                };
                                                let m = mask.data()[((co * geo.in_channels + ci) * k + ky) * k + kx];
                                                if m != 0.0 && x[ci * plane + iy * geo.in_w + ix] != 0.0 {
                                                    total += 1;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::AvgPool(_) => {}
        }
    }
    Ok(total as f64 / record.batch as f64)
}

/// Population variance of each spiking neuron's membrane over time, averaged
/// over all spiking neurons and samples.
pub fn membrane_variance(record: &SpikeRecord) -> Result<f64> {
    if record.timesteps < 2 {
        return Err(SlampError::OutOfRange {
            name: "timesteps for membrane variance",
            value: record.timesteps as f64,
        });
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for trace in record.layers.iter().filter(|l| l.spiking) {
        let m = trace.membranes.as_ref().ok_or_else(|| {
            SlampError::RecordMismatch("membranes were not recorded".into())
        })?;
        let n = m.shape()[2];
        let t_len = record.timesteps as f64;
        for b in 0..record.batch {
            for i in 0..n {
                let mut mean = 0.0f64;
                for t in 0..record.timesteps {
                    mean += SpikeRecord::frame(m, t, b)[i] as f64;
                }
                mean /= t_len;
                let mut var = 0.0f64;
                for t in 0..record.timesteps {
                    let d = SpikeRecord::frame(m, t, b)[i] as f64 - mean;
                    var += d * d;
                }
                sum += var / t_len;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(SlampError::RecordMismatch("record has no spiking layers".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub top1: f64,
    pub top5: f64,
    /// Mean synaptic operations per sample.
    pub sops: f64,
    pub membrane_variance: f64,
    pub connectivity: f64,
}

/// Runs the network over `data` in chunks of `chunk` samples and returns the
/// concatenated logits and record.
pub fn rollout(net: &mut Network, data: &Dataset, chunk: usize) -> Result<(Tensor, SpikeRecord, Vec<usize>)> {
    data.validate()?;
    let timesteps = net.neuron().timesteps;
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut logits = Vec::with_capacity(data.len() * net.classes());
    let mut records = Vec::new();
    for part in idx.chunks(chunk.max(1)) {
        let (l, r) = net.forward(&data.batch(part, timesteps)?, &ForwardOptions::recording())?;
        logits.extend_from_slice(l.data());
        records.push(r.expect("recording requested"));
    }
    Ok((
        Tensor::new(vec![data.len(), net.classes()], logits)?,
        SpikeRecord::concat(&records)?,
        data.labels(&idx),
    ))
}

/// Top-1/top-5 accuracy, SOPs, membrane variance and connectivity over `data`.
pub fn evaluate(net: &mut Network, data: &Dataset) -> Result<EvalResult> {
    let (logits, record, labels) = rollout(net, data, 256)?;
    let classes = net.classes();
    Ok(EvalResult {
        top1: topk_accuracy(&logits, &labels, 1)?,
        top5: topk_accuracy(&logits, &labels, 5.min(classes))?,
        sops: count_sops(net, &record)?,
        membrane_variance: if record.timesteps >= 2 {
            membrane_variance(&record)?
        } else {
            0.0
        },
        connectivity: crate::prune::connectivity(net).global,
    })
}
