use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};
use crate::snn::{LayerKind, Network, SpikeRecord};

/// Normalised importance scores for one prunable layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerScores {
    /// Index of the layer inside the network.
    pub layer: usize,
    pub shape: Vec<usize>,
    /// Flat, same layout as the layer's weights. Sums to 1 unless every
    /// weight in the layer is zero.
    pub scores: Vec<f64>,
    pub normalizer: f64,
    /// Per presynaptic unit, `Σ_t S_t²` averaged over samples.
    pub spike_mass: Vec<f64>,
    /// Set when the layer saw no presynaptic activity and fell back to
    /// magnitude scores.
    pub fallback: bool,
}

impl LayerScores {
    fn normalised(layer: usize, shape: Vec<usize>, raw: Vec<f64>, spike_mass: Vec<f64>, fallback: bool) -> Self {
        let total: f64 = raw.iter().sum();
        let normalizer = if total > 0.0 { 1.0 / total } else { 1.0 };
        let scores = raw.iter().map(|r| r * normalizer).collect();
        Self {
            layer,
            shape,
            scores,
            normalizer,
            spike_mass,
            fallback,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMap {
    pub layers: Vec<LayerScores>,
}

impl ImportanceMap {
    pub fn layer(&self, net_layer: usize) -> Option<&LayerScores> {
        self.layers.iter().find(|l| l.layer == net_layer)
    }
}

/// Magnitude scores `λ · W²` per prunable layer, computed on the effective
/// (masked) weights.
pub fn lamp_scores(net: &Network) -> ImportanceMap {
    let layers = net
        .prunable()
        .into_iter()
        .map(|l| {
            let layer = &net.layers()[l];
            let w = layer.effective_weights().expect("prunable layer has weights");
            let raw = w.iter().map(|&v| (v as f64) * (v as f64)).collect();
            let shape = layer.weights().expect("prunable layer has weights").shape().to_vec();
            LayerScores::normalised(l, shape, raw, vec![1.0; layer.input_len()], false)
        })
        .collect();
    ImportanceMap { layers }
}

/// Per presynaptic unit: `Σ_t x_t²` averaged over the samples in `record`.
fn unit_mass(record: &SpikeRecord, layer: usize) -> Vec<f64> {
    let pre = record.presynaptic(layer);
    let n = pre.shape()[2];
    let mut mass = vec![0.0f64; n];
    for t in 0..record.timesteps {
        for b in 0..record.batch {
            for (m, &x) in mass.iter_mut().zip(SpikeRecord::frame(pre, t, b)) {
                *m += (x as f64) * (x as f64);
            }
        }
    }
    if record.batch > 0 {
        for m in &mut mass {
            *m /= record.batch as f64;
        }
    }
    mass
}

/// Activity-weighted temporal scores.
///
/// Each weight scores `λ · W² · Σ_t S_t²` where `S_t` is the activity of its
/// presynaptic unit, averaged over the samples in `record`. For a kernel
/// element the presynaptic activity is the mean over the input positions the
/// element touches. Layers with no presynaptic activity at all fall back to
/// [`lamp_scores`].
pub fn slamp_scores(net: &Network, record: &SpikeRecord, timesteps: usize) -> Result<ImportanceMap> {
    if record.timesteps != timesteps {
        return Err(SlampError::TimestepMismatch {
            expected: timesteps,
            actual: record.timesteps,
        });
    }
    if record.layers.len() != net.layers().len() {
        return Err(SlampError::RecordMismatch(format!(
            "record has {} layers, network has {}",
            record.layers.len(),
            net.layers().len()
        )));
    }
    let mut layers = Vec::new();
    for l in net.prunable() {
        let layer = &net.layers()[l];
        let pre = record.presynaptic(l);
        if pre.shape().len() != 3 || pre.shape()[2] != layer.input_len() {
            return Err(SlampError::RecordMismatch(format!(
                "presynaptic activity for layer {l} has shape {:?}",
                pre.shape()
            )));
        }
        let w = layer.effective_weights().expect("prunable layer has weights");
        let shape = layer.weights().expect("prunable layer has weights").shape().to_vec();
        let mass = unit_mass(record, l);
        if mass.iter().all(|&m| m == 0.0) {
            let raw = w.iter().map(|&v| (v as f64) * (v as f64)).collect();
            layers.push(LayerScores::normalised(l, shape, raw, mass, true));
            continue;
        }
        let raw: Vec<f64> = match layer.kind() {
            LayerKind::Dense { outputs, .. } => w
                .iter()
                .enumerate()
                .map(|(j, &v)| (v as f64) * (v as f64) * mass[j / outputs])
                .collect(),
            LayerKind::Conv(geo) => {
                let k = geo.kernel;
                let per_out = geo.in_channels * k * k;
                let plane = geo.in_h * geo.in_w;
                let mut elem = vec![0.0f64; per_out];
                for ci in 0..geo.in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut sum = 0.0f64;
                            let mut count = 0usize;
                            for oy in 0..geo.out_h() {
                                for ox in 0..geo.out_w() {
                                    if let Some((iy, ix)) = geo.source(oy, ox, ky, kx) {
                                        sum += mass[ci * plane + iy * geo.in_w + ix];
                                        count += 1;
                                    }
                                }
                            }
                            if count > 0 {
                                elem[(ci * k + ky) * k + kx] = sum / count as f64;
                            }
                        }
                    }
                }
                w.iter()
                    .enumerate()
                    .map(|(j, &v)| (v as f64) * (v as f64) * elem[j % per_out])
                    .collect()
            }
            LayerKind::AvgPool(_) => unreachable!("pooling layers are not prunable"),
        };
        layers.push(LayerScores::normalised(l, shape, raw, mass, false));
    }
    Ok(ImportanceMap { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::snn::{LayerState, LayerTrace, NeuronConfig};
    use crate::tensor::Tensor;

    fn one_layer(w: Tensor) -> Network {
        let inputs = w.shape()[0];
        Network::from_layers(
            vec![inputs],
            vec![LayerState::dense(w, true).unwrap()],
            NeuronConfig::default(),
        )
        .unwrap()
    }

    fn record(input: Tensor, outputs: usize) -> SpikeRecord {
        let [t, b, _] = input.shape() else { unreachable!() };
        SpikeRecord {
            timesteps: *t,
            batch: *b,
            layers: vec![LayerTrace {
                activity: Tensor::zeros(&[*t, *b, outputs]),
                membranes: None,
                spiking: false,
            }],
            input,
        }
    }

    #[test]
    fn t1_all_ones_gives_squared_fractions() {
        let net = one_layer(Tensor::new(vec![4, 1], vec![1., 2., 3., 4.]).unwrap());
        let map = slamp_scores(&net, &record(Tensor::ones(&[1, 1, 4]), 1), 1).unwrap();
        let want = [1. / 30., 4. / 30., 9. / 30., 16. / 30.];
        for (s, w) in map.layers[0].scores.iter().zip(want) {
            assert!((s - w).abs() < 1e-12);
        }
        assert_eq!(map.layers[0].scores, lamp_scores(&net).layers[0].scores);
    }

    #[test]
    fn silent_record_falls_back_to_lamp() {
        let net = one_layer(Rng::new(2).uniform(&[3, 2], -1.0, 1.0));
        let map = slamp_scores(&net, &record(Tensor::zeros(&[2, 3, 3]), 2), 2).unwrap();
        assert!(map.layers[0].fallback);
        assert_eq!(map.layers[0].scores, lamp_scores(&net).layers[0].scores);
    }

    #[test]
    fn lamp_examples() {
        let net = one_layer(Tensor::new(vec![2, 2], vec![0., 0., 0., 5.]).unwrap());
        assert_eq!(lamp_scores(&net).layers[0].scores, vec![0., 0., 0., 1.]);
        let net = one_layer(Tensor::filled(&[3, 2], -0.4));
        for s in &lamp_scores(&net).layers[0].scores {
            assert!((s - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_term_by_term_sum() {
        let mut rng = Rng::new(9);
        let w = rng.uniform(&[5, 3], -1.0, 1.0);
        let net = one_layer(w.clone());
        let spikes = rng.bernoulli(0.4, &[4, 2, 5]).unwrap();
        let map = slamp_scores(&net, &record(spikes.clone(), 3), 4).unwrap();
        let mut raw = vec![0.0f64; 15];
        for b in 0..2 {
            for t in 0..4 {
                for i in 0..5 {
                    for o in 0..3 {
                        let term = w.data()[i * 3 + o] as f64 * spikes.data()[(t * 2 + b) * 5 + i] as f64;
                        raw[i * 3 + o] += term * term / 2.0;
                    }
                }
            }
        }
        let total: f64 = raw.iter().sum();
        for (s, r) in map.layers[0].scores.iter().zip(&raw) {
            assert!((s - r / total).abs() <= 1e-9 * (r / total).max(1e-12));
        }
        assert!((map.layers[0].scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conv_all_ones_matches_lamp() {
        let kernel = Rng::new(4).uniform(&[2, 1, 3, 3], -1.0, 1.0);
        let conv = LayerState::conv(kernel, [1, 4, 4], 1, 1).unwrap();
        let readout = LayerState::dense(Rng::new(5).uniform(&[32, 2], -1.0, 1.0), true).unwrap();
        let net = Network::from_layers(vec![1, 4, 4], vec![conv, readout], NeuronConfig::default()).unwrap();
        let rec = SpikeRecord {
            timesteps: 1,
            batch: 1,
            input: Tensor::ones(&[1, 1, 16]),
            layers: vec![
                LayerTrace {
                    activity: Tensor::ones(&[1, 1, 32]),
                    membranes: None,
                    spiking: true,
                },
                LayerTrace {
                    activity: Tensor::zeros(&[1, 1, 2]),
                    membranes: None,
                    spiking: false,
                },
            ],
        };
        assert_eq!(slamp_scores(&net, &rec, 1).unwrap(), lamp_scores(&net));
    }

    #[test]
    fn record_mismatch_is_rejected() {
        let net = one_layer(Tensor::ones(&[3, 2]));
        assert!(slamp_scores(&net, &record(Tensor::ones(&[1, 1, 4]), 2), 1).is_err());
        assert!(matches!(
            slamp_scores(&net, &record(Tensor::ones(&[1, 1, 3]), 2), 2),
            Err(SlampError::TimestepMismatch { .. })
        ));
    }
}
