//! Synthetic classification datasets standing in for static images and
//! event-camera streams.

use serde::{Deserialize, Serialize};

use super::encode::{encode_direct, encode_poisson};
use crate::error::{Result, SlampError};
use crate::rng::Rng;
use crate::snn::stack_frames;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// Samples are images fed as constant current on every step.
    Direct,
    /// Samples are images pre-sampled into Bernoulli spike frames.
    Poisson,
    /// Samples are native binary event frames.
    Events,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[n]` image for direct encoding, `[T, n]` frames otherwise.
    pub input: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub encoding: Encoding,
    pub classes: usize,
    pub input_len: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(SlampError::EmptyDataset);
        }
        for s in &self.samples {
            if s.label >= self.classes {
                return Err(SlampError::LabelOutOfRange {
                    label: s.label,
                    classes: self.classes,
                });
            }
        }
        Ok(())
    }

    /// `[T, n]` network input for one sample.
    pub fn frames(&self, index: usize, timesteps: usize) -> Result<Tensor> {
        let sample = &self.samples[index];
        match self.encoding {
            Encoding::Direct => encode_direct(&sample.input, timesteps),
            Encoding::Poisson | Encoding::Events => {
                let t = sample.input.shape()[0];
                if t != timesteps {
                    return Err(SlampError::TimestepMismatch {
                        expected: timesteps,
                        actual: t,
                    });
                }
                Ok(sample.input.clone())
            }
        }
    }

    /// `[T, batch, n]` input for the given sample indices.
    pub fn batch(&self, indices: &[usize], timesteps: usize) -> Result<Tensor> {
        let frames = indices
            .iter()
            .map(|&i| self.frames(i, timesteps))
            .collect::<Result<Vec<_>>>()?;
        stack_frames(&frames.iter().collect::<Vec<_>>())
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.samples[i].label).collect()
    }

    /// Every sample, in order.
    pub fn all(&self, timesteps: usize) -> Result<(Tensor, Vec<usize>)> {
        let idx: Vec<usize> = (0..self.len()).collect();
        Ok((self.batch(&idx, timesteps)?, self.labels(&idx)))
    }

    /// The first `n` samples (or all of them), as a new dataset.
    pub fn head(&self, n: usize) -> Dataset {
        Dataset {
            samples: self.samples.iter().take(n).cloned().collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub eval: Dataset,
}

/// Parameters of the static-image generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    /// Standard deviation of the Gaussian noise added to each prototype.
    pub noise: f32,
    #[serde(default = "direct")]
    pub encoding: Encoding,
    /// Flat pixel range `[start, end)` forced to zero in every sample.
    #[serde(default)]
    pub silent_range: Option<[usize; 2]>,
}

fn direct() -> Encoding {
    Encoding::Direct
}

/// Parameters of the event-stream generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub classes: usize,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    /// Mean per-step firing probability of a pixel.
    pub base_rate: f32,
    /// Spread of class-specific rates around the base rate.
    pub contrast: f32,
    #[serde(default)]
    pub silent_range: Option<[usize; 2]>,
}

fn check_silent(range: Option<[usize; 2]>, dims: usize) -> Result<Option<std::ops::Range<usize>>> {
    match range {
        None => Ok(None),
        Some([a, b]) if a <= b && b <= dims => Ok(Some(a..b)),
        Some(r) => Err(SlampError::Config(format!(
            "silent range {r:?} does not fit {dims} inputs"
        ))),
    }
}

fn check_counts(classes: usize, train: usize, eval: usize) -> Result<()> {
    if classes == 0 || train == 0 || eval == 0 {
        return Err(SlampError::Config(
            "datasets need at least one class and one sample per class and split".into(),
        ));
    }
    Ok(())
}

/// Generated static data plus the class prototypes it was drawn around.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticData {
    pub prototypes: Vec<Tensor>,
    pub splits: Splits,
}

/// Draws one prototype in `[0,1]^dims` per class, then samples
/// `clip(prototype + N(0, noise²), 0, 1)`.
pub fn gen_static_classes(rng: &mut Rng, spec: &StaticSpec, dims: usize, timesteps: usize) -> Result<StaticData> {
    check_counts(spec.classes, spec.train_per_class, spec.eval_per_class)?;
    if !(spec.noise >= 0.0) {
        return Err(SlampError::OutOfRange {
            name: "noise",
            value: spec.noise as f64,
        });
    }
    let silent = check_silent(spec.silent_range, dims)?;
    let mut prototypes: Vec<Tensor> = (0..spec.classes).map(|_| rng.uniform01(&[dims])).collect();
    if let Some(r) = &silent {
        for p in &mut prototypes {
            p.data_mut()[r.clone()].fill(0.0);
        }
    }
    let draw = |split: Split, per_class: usize, rng: &mut Rng| -> Result<Dataset> {
        let mut samples = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for (label, proto) in prototypes.iter().enumerate() {
                let mut img: Vec<f32> = proto
                    .data()
                    .iter()
                    .map(|&p| (p + rng.normal(0.0, spec.noise)).clamp(0.0, 1.0))
                    .collect();
                if let Some(r) = &silent {
                    img[r.clone()].fill(0.0);
                }
                let image = Tensor::from_vec(img)?;
                let input = match spec.encoding {
                    Encoding::Direct => image,
                    Encoding::Poisson => encode_poisson(&image, timesteps, rng)?,
                    Encoding::Events => {
                        return Err(SlampError::Config(
                            "static data cannot use native event encoding".into(),
                        ))
                    }
                };
                samples.push(Sample { input, label });
            }
        }
        Ok(Dataset {
            split,
            encoding: spec.encoding,
            classes: spec.classes,
            input_len: dims,
            samples,
        })
    };
    let train = draw(Split::Train, spec.train_per_class, rng)?;
    let eval = draw(Split::Eval, spec.eval_per_class, rng)?;
    Ok(StaticData {
        prototypes,
        splits: Splits { train, eval },
    })
}

/// Per-class rate maps `clip(base + contrast·(2u − 1), 0, 1)` with
/// `u ~ U[0,1)` per pixel.
pub fn event_rate_maps(rng: &mut Rng, spec: &EventSpec, dims: usize) -> Result<Vec<Tensor>> {
    if !(0.0..=1.0).contains(&spec.base_rate) {
        return Err(SlampError::OutOfRange {
            name: "base_rate",
            value: spec.base_rate as f64,
        });
    }
    if !(spec.contrast >= 0.0) {
        return Err(SlampError::OutOfRange {
            name: "contrast",
            value: spec.contrast as f64,
        });
    }
    let silent = check_silent(spec.silent_range, dims)?;
    (0..spec.classes)
        .map(|_| {
            let mut rates: Vec<f32> = (0..dims)
                .map(|_| (spec.base_rate + spec.contrast * (2.0 * rng.next_f32() - 1.0)).clamp(0.0, 1.0))
                .collect();
            if let Some(r) = &silent {
                rates[r.clone()].fill(0.0);
            }
            Tensor::from_vec(rates)
        })
        .collect()
}

/// Event-stream classes: each sample is `[T, dims]` binary frames with pixel
/// `p` of class `c` spiking independently per step at rate `rates[c][p]`.
pub fn gen_event_classes(rng: &mut Rng, spec: &EventSpec, dims: usize, timesteps: usize) -> Result<(Vec<Tensor>, Splits)> {
    check_counts(spec.classes, spec.train_per_class, spec.eval_per_class)?;
    let rates = event_rate_maps(rng, spec, dims)?;
    let draw = |split: Split, per_class: usize, rng: &mut Rng| -> Result<Dataset> {
        let mut samples = Vec::with_capacity(per_class * spec.classes);
        for _ in 0..per_class {
            for (label, r) in rates.iter().enumerate() {
                samples.push(Sample {
                    input: encode_poisson(r, timesteps, rng)?,
                    label,
                });
            }
        }
        Ok(Dataset {
            split,
            encoding: Encoding::Events,
            classes: spec.classes,
            input_len: dims,
            samples,
        })
    };
    let train = draw(Split::Train, spec.train_per_class, rng)?;
    let eval = draw(Split::Eval, spec.eval_per_class, rng)?;
    Ok((rates, Splits { train, eval }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_spec(noise: f32) -> StaticSpec {
        StaticSpec {
            classes: 4,
            train_per_class: 20,
            eval_per_class: 5,
            noise,
            encoding: Encoding::Direct,
            silent_range: None,
        }
    }

    #[test]
    fn noiseless_samples_equal_prototypes() {
        let d = gen_static_classes(&mut Rng::new(1), &static_spec(0.0), 16, 2).unwrap();
        for s in &d.splits.train.samples {
            assert_eq!(&s.input, &d.prototypes[s.label]);
        }
        assert_eq!(d.splits.train.len(), 80);
        assert_eq!(d.splits.eval.len(), 20);
    }

    #[test]
    fn static_generation_is_reproducible_and_in_range() {
        let a = gen_static_classes(&mut Rng::new(5), &static_spec(0.3), 16, 2).unwrap();
        let b = gen_static_classes(&mut Rng::new(5), &static_spec(0.3), 16, 2).unwrap();
        assert_eq!(a, b);
        for s in a.splits.train.samples.iter().chain(&a.splits.eval.samples) {
            assert!(s.input.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn nearest_prototype_separates_low_noise_classes() {
        let spec = StaticSpec {
            classes: 10,
            train_per_class: 50,
            ..static_spec(0.05)
        };
        let d = gen_static_classes(&mut Rng::new(2), &spec, 64, 2).unwrap();
        let correct = d
            .splits
            .train
            .samples
            .iter()
            .filter(|s| {
                let nearest = (0..spec.classes)
                    .min_by(|&a, &b| {
                        let dist = |c: usize| -> f32 {
                            d.prototypes[c]
                                .data()
                                .iter()
                                .zip(s.input.data())
                                .map(|(p, x)| (p - x) * (p - x))
                                .sum()
                        };
                        dist(a).total_cmp(&dist(b))
                    })
                    .unwrap();
                nearest == s.label
            })
            .count();
        assert!(correct as f64 / d.splits.train.len() as f64 >= 0.99);
    }

    #[test]
    fn silent_range_is_zero_everywhere() {
        let spec = StaticSpec {
            silent_range: Some([0, 8]),
            ..static_spec(0.5)
        };
        let d = gen_static_classes(&mut Rng::new(3), &spec, 16, 2).unwrap();
        for s in &d.splits.train.samples {
            assert!(s.input.data()[..8].iter().all(|&v| v == 0.0));
        }
        let bad = StaticSpec {
            silent_range: Some([4, 20]),
            ..static_spec(0.5)
        };
        assert!(gen_static_classes(&mut Rng::new(3), &bad, 16, 2).is_err());
    }

    #[test]
    fn poisson_static_frames_are_binary() {
        let spec = StaticSpec {
            encoding: Encoding::Poisson,
            ..static_spec(0.1)
        };
        let d = gen_static_classes(&mut Rng::new(3), &spec, 16, 3).unwrap();
        let f = d.splits.train.frames(0, 3).unwrap();
        assert_eq!(f.shape(), &[3, 16]);
        assert!(f.is_binary());
        assert!(d.splits.train.frames(0, 2).is_err());
    }

    fn event_spec(contrast: f32) -> EventSpec {
        EventSpec {
            classes: 3,
            train_per_class: 10,
            eval_per_class: 2,
            base_rate: 0.5,
            contrast,
            silent_range: None,
        }
    }

    #[test]
    fn zero_contrast_classes_share_rates() {
        let (rates, _) = gen_event_classes(&mut Rng::new(0), &event_spec(0.0), 12, 4).unwrap();
        assert!(rates.iter().all(|r| r.data().iter().all(|&v| v == 0.5)));
    }

    #[test]
    fn saturated_rate_spikes_every_step() {
        let spec = EventSpec {
            base_rate: 1.0,
            contrast: 0.0,
            ..event_spec(0.0)
        };
        let (_, splits) = gen_event_classes(&mut Rng::new(0), &spec, 6, 5).unwrap();
        assert!(splits.train.samples.iter().all(|s| s.input.data().iter().all(|&v| v == 1.0)));
    }

    #[test]
    fn event_frequencies_match_rates() {
        let spec = EventSpec {
            classes: 2,
            train_per_class: 400,
            eval_per_class: 1,
            base_rate: 0.4,
            contrast: 0.35,
            silent_range: Some([0, 2]),
        };
        let t = 5;
        let (rates, splits) = gen_event_classes(&mut Rng::new(9), &spec, 8, t).unwrap();
        for (c, r) in rates.iter().enumerate() {
            let samples: Vec<_> = splits.train.samples.iter().filter(|s| s.label == c).collect();
            let trials = (samples.len() * t) as f64;
            for p in 0..8 {
                let hits: f32 = samples
                    .iter()
                    .map(|s| (0..t).map(|k| s.input.data()[k * 8 + p]).sum::<f32>())
                    .sum();
                let rate = r.data()[p] as f64;
                let freq = hits as f64 / trials;
                let sigma = (rate * (1.0 - rate) / trials).sqrt();
                assert!((freq - rate).abs() <= 3.0 * sigma + 1e-12, "class {c} pixel {p}");
            }
        }
    }

    #[test]
    fn batches_are_time_major() {
        let d = gen_static_classes(&mut Rng::new(1), &static_spec(0.1), 4, 2).unwrap();
        let b = d.splits.train.batch(&[2, 0], 2).unwrap();
        assert_eq!(b.shape(), &[2, 2, 4]);
        assert_eq!(&b.data()[0..4], d.splits.train.samples[2].input.data());
        assert_eq!(&b.data()[12..16], d.splits.train.samples[0].input.data());
        assert_eq!(d.splits.train.labels(&[2, 0]), vec![2, 0]);
    }
}
