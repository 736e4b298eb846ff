use crate::rng::CounterRng;
use crate::tensor::{Scalar, Tensor};

/// Zero padding on each side before cropping.
pub const AUGMENT_PAD: usize = 4;

/// Crop offset into the padded image plus a horizontal mirror flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub dy: usize,
    pub dx: usize,
    pub flip: bool,
}

impl Crop {
    /// Offsets `(AUGMENT_PAD, AUGMENT_PAD)`, no flip: the identity.
    pub const CENTER: Crop = Crop {
        dy: AUGMENT_PAD,
        dx: AUGMENT_PAD,
        flip: false,
    };

    pub fn draw(rng: &mut CounterRng) -> Self {
        let span = 2 * AUGMENT_PAD + 1;
        Self {
            dy: rng.below(span),
            dx: rng.below(span),
            flip: rng.bernoulli_half(),
        }
    }
}

/// Pads one `c×h×w` image by [`AUGMENT_PAD`] zeros, crops `h×w` at the
/// offset, and mirrors if asked.
pub fn crop_flip<T: Scalar>(img: &[T], [c, h, w]: [usize; 3], crop: Crop) -> Vec<T> {
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..h {
            let sy = (y + crop.dy) as isize - AUGMENT_PAD as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let src_x = if crop.flip { w - 1 - x } else { x };
                let sx = (src_x + crop.dx) as isize - AUGMENT_PAD as isize;
                if sx < 0 || sx >= w as isize {
                    continue;
                }
                out[(ch * h + y) * w + x] = img[(ch * h + sy as usize) * w + sx as usize];
            }
        }
    }
    out
}

/// Random crop and flip of every image, drawing from `rng` in sample order.
pub fn augment<T: Scalar>(batch: &Tensor<T>, rng: &mut CounterRng) -> Tensor<T> {
    let [n, c, h, w] = batch.shape();
    let mut data = Vec::with_capacity(batch.len());
    for i in 0..n {
        data.extend(crop_flip(batch.sample(i), [c, h, w], Crop::draw(rng)));
    }
    Tensor::new(batch.shape(), data).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(seed: u64) -> (Vec<f64>, [usize; 3]) {
        let mut rng = CounterRng::new(seed);
        (
            (0..3 * 6 * 5).map(|_| rng.uniform() + 0.5).collect(),
            [3, 6, 5],
        )
    }

    #[test]
    fn center_crop_is_identity() {
        let (img, dims) = image(1);
        assert_eq!(crop_flip(&img, dims, Crop::CENTER), img);
    }

    #[test]
    fn double_flip_is_identity() {
        let (img, dims) = image(2);
        let flip = Crop {
            flip: true,
            ..Crop::CENTER
        };
        let once = crop_flip(&img, dims, flip);
        assert_ne!(once, img);
        assert_eq!(crop_flip(&once, dims, flip), img);
    }

    #[test]
    fn shifted_crop_moves_pixels() {
        let img: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let out = crop_flip(
            &img,
            [1, 3, 3],
            Crop {
                dy: 5,
                dx: 3,
                flip: false,
            },
        );
        // content moves up a row and right a column; zeros enter from the padding
        assert_eq!(out, vec![0.0, 4.0, 5.0, 0.0, 7.0, 8.0, 0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn crops_only_contain_padded_pixels(seed in 0u64..10_000) {
            let (img, dims) = image(seed);
            let mut rng = CounterRng::new(seed ^ 0xabc);
            let out = crop_flip(&img, dims, Crop::draw(&mut rng));
            prop_assert_eq!(out.len(), img.len());
            for v in out {
                prop_assert!(v == 0.0 || img.contains(&v));
            }
        }
    }

    #[test]
    fn batch_augmentation_is_deterministic() {
        let batch = Tensor::from_fn([4, 3, 8, 8], |[i, c, y, x]| {
            (i * 100 + c * 10 + y + x) as f32
        });
        let a = augment(&batch, &mut CounterRng::new(5));
        let b = augment(&batch, &mut CounterRng::new(5));
        assert_eq!(a, b);
        assert_eq!(a.shape(), batch.shape());
    }
}
