//! Seeded synthetic classification data: one smooth random template per
//! class, observed under a random circular shift plus Gaussian pixel noise.

use serde::{Deserialize, Serialize};

use crate::data::dataset::Dataset;
use crate::par::map_range;
use crate::rng::CounterRng;
use crate::tensor::Tensor;

const TEMPLATE_TAG: u64 = 0x5445_4d50;
const SAMPLE_TAG: u64 = 0x5341_4d50;

/// Template pixels are `CENTER + SPREAD·z` with `z` a unit-variance field.
const CENTER: f64 = 0.5;
const SPREAD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_classes: usize,
    pub hw: usize,
    pub channels: usize,
    /// Noise std as a fraction of the template std.
    pub noise: f64,
    /// Shifts are drawn uniformly from `-max_shift..=max_shift` on each axis.
    pub max_shift: usize,
    /// Passes of a 3×3 circular box blur applied to the template field.
    pub smoothing: usize,
}

impl SynthSpec {
    pub fn new(seed: u64, n_classes: usize, hw: usize) -> Self {
        Self {
            seed,
            n_classes,
            hw,
            channels: 3,
            noise: 0.3,
            max_shift: 2,
            smoothing: 1,
        }
    }

    /// `(n_classes, channels, hw, hw)` templates.
    pub fn templates(&self) -> Tensor<f32> {
        let (c, hw) = (self.channels, self.hw);
        let per = c * hw * hw;
        let mut data = Vec::with_capacity(self.n_classes * per);
        for k in 0..self.n_classes {
            let mut rng = CounterRng::derive(self.seed, &[TEMPLATE_TAG, k as u64]);
            let mut field: Vec<f64> = (0..per).map(|_| rng.normal()).collect();
            for _ in 0..self.smoothing {
                field = box_blur(&field, c, hw);
            }
            let mean = field.iter().sum::<f64>() / per as f64;
            let std = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per as f64).sqrt();
            let std = if std > 0.0 { std } else { 1.0 };
            data.extend(
                field
                    .iter()
                    .map(|v| (CENTER + SPREAD * (v - mean) / std) as f32),
            );
        }
        Tensor::new([self.n_classes, c, hw, hw], data).expect("sized by spec")
    }

    /// `n_per_class` samples per class from stream `split` (0 = train,
    /// 1 = test, …), interleaved by class. Normalization is computed from
    /// these samples.
    pub fn generate(&self, split: u64, n_per_class: usize) -> Dataset {
        let templates = self.templates();
        let (c, hw) = (self.channels, self.hw);
        let sigma = self.noise * SPREAD;
        let total = n_per_class * self.n_classes;
        let span = 2 * self.max_shift + 1;
        let samples = map_range(total, |i| {
            let (j, k) = (i / self.n_classes, i % self.n_classes);
            let mut rng = CounterRng::derive(self.seed, &[SAMPLE_TAG, split, k as u64, j as u64]);
            let sy = rng.below(span);
            let sx = rng.below(span);
            let t = templates.sample(k);
            let mut img = Vec::with_capacity(c * hw * hw);
            for ch in 0..c {
                for y in 0..hw {
                    let ty = (y + hw * span + sy - self.max_shift) % hw;
                    for x in 0..hw {
                        let tx = (x + hw * span + sx - self.max_shift) % hw;
                        let v = t[(ch * hw + ty) * hw + tx] as f64 + sigma * rng.normal();
                        img.push(v as f32);
                    }
                }
            }
            img
        });
        let images = Tensor::new([total, c, hw, hw], samples.concat()).expect("sized by spec");
        let labels = (0..total).map(|i| i % self.n_classes).collect();
        Dataset::new(images, labels, self.n_classes).expect("labels below class count")
    }

    /// Training and test splits; the test split uses the training normalization.
    pub fn train_test(&self, train_per_class: usize, test_per_class: usize) -> (Dataset, Dataset) {
        let train = self.generate(0, train_per_class);
        let test = self
            .generate(1, test_per_class)
            .with_normalization(train.normalization.clone());
        (train, test)
    }
}

fn box_blur(field: &[f64], c: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for ch in 0..c {
        for y in 0..hw {
            for x in 0..hw {
                let mut acc = 0.0;
                for dy in [hw - 1, 0, 1] {
                    for dx in [hw - 1, 0, 1] {
                        acc += field[(ch * hw + (y + dy) % hw) * hw + (x + dx) % hw];
                    }
                }
                out[(ch * hw + y) * hw + x] = acc / 9.0;
            }
        }
    }
    out
}

/// Training split of [`SynthSpec::new`] with its default noise and shift.
pub fn synth_dataset(seed: u64, n_classes: usize, n_per_class: usize, hw: usize) -> Dataset {
    SynthSpec::new(seed, n_classes, hw).generate(0, n_per_class)
}

/// Accuracy of labelling each raw image by the closest template in squared
/// Euclidean distance.
pub fn nearest_template_accuracy(data: &Dataset, templates: &Tensor<f32>) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = map_range(data.len(), |i| {
        let img = data.images.sample(i);
        let best = (0..templates.n())
            .map(|k| {
                let d: f64 = img
                    .iter()
                    .zip(templates.sample(k))
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum();
                (d, k)
            })
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
            .1;
        best == data.labels[i]
    });
    hits.iter().filter(|h| **h).count() as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = synth_dataset(7, 4, 5, 8);
        let b = synth_dataset(7, 4, 5, 8);
        assert_eq!(a, b);
        assert_ne!(a.images, synth_dataset(8, 4, 5, 8).images);
        assert_eq!(a.labels[..4], [0, 1, 2, 3]);
    }

    #[test]
    fn noiseless_unshifted_samples_are_the_templates() {
        let spec = SynthSpec {
            noise: 0.0,
            max_shift: 0,
            ..SynthSpec::new(3, 10, 8)
        };
        let data = spec.generate(0, 4);
        assert_eq!(nearest_template_accuracy(&data, &spec.templates()), 1.0);
        assert_eq!(data.images.sample(3), spec.templates().sample(3));
    }

    #[test]
    fn templates_have_the_documented_spread() {
        let t = SynthSpec::new(1, 3, 8).templates();
        for k in 0..3 {
            let s = t.sample(k);
            let mean = s.iter().map(|v| *v as f64).sum::<f64>() / s.len() as f64;
            let std =
                (s.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
            assert!((mean - CENTER).abs() < 1e-6);
            assert!((std - SPREAD).abs() < 1e-6);
        }
    }

    #[test]
    fn splits_differ_but_share_templates() {
        let spec = SynthSpec::new(2, 3, 6);
        let (train, test) = spec.train_test(4, 2);
        assert_eq!(train.len(), 12);
        assert_eq!(test.len(), 6);
        assert_eq!(test.normalization, train.normalization);
        assert_ne!(train.images.sample(0), test.images.sample(0));
    }

    #[test]
    fn shifted_noiseless_samples_are_circular_shifts() {
        let spec = SynthSpec {
            noise: 0.0,
            ..SynthSpec::new(4, 2, 6)
        };
        let t = spec.templates();
        let data = spec.generate(0, 3);
        for i in 0..data.len() {
            let k = data.labels[i];
            let img = data.images.sample(i);
            let found = (0..6).any(|sy| {
                (0..6).any(|sx| {
                    (0..3 * 36).all(|p| {
                        let (ch, y, x) = (p / 36, p / 6 % 6, p % 6);
                        img[p] == t.sample(k)[(ch * 6 + (y + sy) % 6) * 6 + (x + sx) % 6]
                    })
                })
            });
            assert!(found);
        }
    }
}
