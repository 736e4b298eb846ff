use serde::{Deserialize, Serialize};

use crate::data::augment::{crop_flip, Crop};
use crate::error::{Error, Result};
use crate::par::map_range;
use crate::rng::CounterRng;
use crate::tensor::{Scalar, Tensor};

const AUGMENT_TAG: u64 = 0x4155_4720;

/// Per-channel affine map `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Lower bound on a channel's std so constant channels stay finite.
    pub const STD_FLOOR: f64 = 1e-6;

    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Population statistics per channel; identity for an empty set.
    pub fn from_images(images: &Tensor<f32>) -> Self {
        let [n, c, h, w] = images.shape();
        if n == 0 || h * w == 0 {
            return Self::identity(c);
        }
        let hw = h * w;
        let count = (n * hw) as f64;
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for i in 0..n {
            let sample = images.sample(i);
            for ch in 0..c {
                for &v in &sample[ch * hw..(ch + 1) * hw] {
                    mean[ch] += v as f64;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        for i in 0..n {
            let sample = images.sample(i);
            for ch in 0..c {
                for &v in &sample[ch * hw..(ch + 1) * hw] {
                    sq[ch] += (v as f64 - mean[ch]).powi(2);
                }
            }
        }
        let std = sq
            .iter()
            .map(|s| (s / count).sqrt().max(Self::STD_FLOOR))
            .collect();
        Self { mean, std }
    }

    pub fn apply<T: Scalar>(&self, x: &mut Tensor<T>) {
        let [n, c, h, w] = x.shape();
        let hw = h * w;
        let data = x.data_mut();
        for i in 0..n {
            for ch in 0..c {
                let (m, s) = (self.mean[ch], self.std[ch]);
                for v in &mut data[(i * c + ch) * hw..(i * c + ch + 1) * hw] {
                    *v = T::of_f64((v.as_f64() - m) / s);
                }
            }
        }
    }
}

/// Images kept as raw pixels in `[0, 1]`; normalization is applied when
/// batches are drawn, after any augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub normalization: Normalization,
}

impl Dataset {
    /// Checks labels and computes normalization from these images.
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.len() != images.n() {
            return Err(Error::Input(format!(
                "{} labels for {} images",
                labels.len(),
                images.n()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        let normalization = Normalization::from_images(&images);
        Ok(Self {
            images,
            labels,
            class_count,
            normalization,
        })
    }

    /// Replaces the normalization, e.g. with the training split's.
    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.images.c()
    }

    pub fn hw(&self) -> usize {
        self.images.h()
    }

    pub fn normalized_images<T: Scalar>(&self) -> Tensor<T> {
        let mut x = self.images.cast();
        self.normalization.apply(&mut x);
        x
    }

    /// Normalized images at `indices`. With `augment = Some((seed, epoch))`
    /// each image is padded, randomly cropped and flipped using a stream
    /// derived from `(seed, epoch, index)`.
    pub fn batch<T: Scalar>(
        &self,
        indices: &[usize],
        augment: Option<(u64, u64)>,
    ) -> (Tensor<T>, Vec<usize>) {
        let [_, c, h, w] = self.images.shape();
        let per = c * h * w;
        let samples = map_range(indices.len(), |j| {
            let i = indices[j];
            let img = self.images.sample(i);
            match augment {
                Some((seed, epoch)) => {
                    let mut rng = CounterRng::derive(seed, &[AUGMENT_TAG, epoch, i as u64]);
                    crop_flip(img, [c, h, w], Crop::draw(&mut rng))
                }
                None => img.to_vec(),
            }
        });
        let mut data = Vec::with_capacity(indices.len() * per);
        for s in samples {
            data.extend(s.into_iter().map(|v| T::of_f64(v as f64)));
        }
        let mut x = Tensor::new([indices.len(), c, h, w], data).expect("sized by dataset");
        self.normalization.apply(&mut x);
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Samples at `indices`, keeping this normalization.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let [_, c, h, w] = self.images.shape();
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        for &i in indices {
            data.extend_from_slice(self.images.sample(i));
        }
        Self {
            images: Tensor::new([indices.len(), c, h, w], data).expect("sized by dataset"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            normalization: self.normalization.clone(),
        }
    }

    /// Appends `other`; the normalization is recomputed.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let images = Tensor::concat_samples(&[self.images.clone(), other.images.clone()])?;
        let labels = self.labels.iter().chain(&other.labels).copied().collect();
        Self::new(images, labels, self.class_count.max(other.class_count))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let images = Tensor::from_fn([4, 2, 2, 2], |[i, c, y, x]| {
            (i + 2 * c + y + x) as f32 / 10.0
        });
        Dataset::new(images, vec![0, 1, 2, 1], 3).unwrap()
    }

    #[test]
    fn normalized_channels_are_standardized() {
        let d = tiny();
        let x: Tensor<f64> = d.normalized_images();
        for c in 0..2 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|i| x.sample(i)[c * 4..(c + 1) * 4].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn labels_are_checked() {
        let images = Tensor::zeros([2, 1, 1, 1]);
        assert!(Dataset::new(images.clone(), vec![0, 5], 3).is_err());
        assert!(Dataset::new(images, vec![0], 3).is_err());
    }

    #[test]
    fn constant_channel_stays_finite() {
        let d = Dataset::new(Tensor::full([3, 1, 2, 2], 0.5), vec![0, 0, 0], 1).unwrap();
        assert!(d
            .normalized_images::<f32>()
            .data()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn batch_without_augmentation_matches_normalized_images() {
        let d = tiny();
        let (x, y) = d.batch::<f64>(&[2, 0], None);
        let all: Tensor<f64> = d.normalized_images();
        assert_eq!(x.sample(0), all.sample(2));
        assert_eq!(x.sample(1), all.sample(0));
        assert_eq!(y, vec![2, 0]);
    }

    #[test]
    fn augmented_batches_are_reproducible_and_keep_labels() {
        let d = tiny();
        let a = d.batch::<f32>(&[0, 1, 2, 3], Some((9, 1)));
        let b = d.batch::<f32>(&[0, 1, 2, 3], Some((9, 1)));
        assert_eq!(a, b);
        assert_eq!(a.0.shape(), [4, 2, 2, 2]);
        assert_eq!(a.1, d.labels);
    }

    #[test]
    fn subset_and_concat() {
        let d = tiny();
        let s = d.subset(&[3, 1]);
        assert_eq!(s.labels, vec![1, 1]);
        assert_eq!(s.images.sample(0), d.images.sample(3));
        let both = d.concat(&s).unwrap();
        assert_eq!(both.len(), 6);
    }
}
