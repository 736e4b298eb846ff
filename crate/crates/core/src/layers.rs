//! Batch norm, ReLU, global average pooling, the fully connected head and
//! softmax cross-entropy, each with its backward pass.

use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{Matrix, Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize by batch statistics.
    Train,
    /// Normalize by running statistics.
    Eval,
}

/// Per-channel affine parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    /// `gamma = 1`, `beta = 0`, running mean 0 and variance 1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Folds the batch statistics of a train-mode pass into the running ones.
    pub fn update_running(&mut self, cache: &BnCache<T>) {
        if cache.mode != BnMode::Train {
            return;
        }
        let keep = T::of_f64(BN_MOMENTUM);
        let take = T::of_f64(1.0 - BN_MOMENTUM);
        for c in 0..self.channels() {
            self.running_mean[c] = keep * self.running_mean[c] + take * cache.mean[c];
            self.running_var[c] = keep * self.running_var[c] + take * cache.var[c];
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub mode: BnMode,
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Statistics used for normalization (batch or running, by mode).
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn channel_stats<T: Scalar>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let count = (n * hw) as f64;
    let mut means = Vec::with_capacity(c);
    let mut vars = Vec::with_capacity(c);
    for ch in 0..c {
        let plane = |i: usize| &x.data()[(i * c + ch) * hw..(i * c + ch + 1) * hw];
        let mut sum = 0.0;
        for i in 0..n {
            sum += plane(i).iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / count;
        let mut sq = 0.0;
        for i in 0..n {
            sq += plane(i)
                .iter()
                .map(|v| (v.as_f64() - mean).powi(2))
                .sum::<f64>();
        }
        means.push(T::of_f64(mean));
        vars.push(T::of_f64(sq / count));
    }
    (means, vars)
}

pub fn batchnorm_forward<T: Scalar>(
    input: &Tensor<T>,
    bn: &BatchNorm<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let [n, c, h, w] = input.shape();
    if bn.channels() != c {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input has {c}",
            bn.channels()
        )));
    }
    let (mean, var) = match mode {
        BnMode::Train => channel_stats(input),
        BnMode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let eps = T::of_f64(BN_EPSILON);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let hw = h * w;
    let mut x_hat = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * hw;
            for o in base..base + hw {
                let xh = (input.data()[o] - mean[ch]) * inv_std[ch];
                x_hat.data_mut()[o] = xh;
                out.data_mut()[o] = bn.gamma[ch] * xh + bn.beta[ch];
            }
        }
    }
    Ok((
        out,
        BnCache {
            mode,
            x_hat,
            inv_std,
            mean,
            var,
        },
    ))
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BnCache<T>,
    bn: &BatchNorm<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    grad_out.expect_shape(cache.x_hat.shape(), "batch norm backward")?;
    let [n, c, h, w] = grad_out.shape();
    let hw = h * w;
    let m = (n * hw) as f64;
    let mut g_gamma = vec![T::zero(); c];
    let mut g_beta = vec![T::zero(); c];
    let mut gx = Tensor::zeros(grad_out.shape());
    for ch in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for i in 0..n {
            let base = (i * c + ch) * hw;
            for o in base..base + hw {
                let g = grad_out.data()[o].as_f64();
                sum_g += g;
                sum_gx += g * cache.x_hat.data()[o].as_f64();
            }
        }
        g_beta[ch] = T::of_f64(sum_g);
        g_gamma[ch] = T::of_f64(sum_gx);
        let gamma = bn.gamma[ch].as_f64();
        let inv_std = cache.inv_std[ch].as_f64();
        for i in 0..n {
            let base = (i * c + ch) * hw;
            for o in base..base + hw {
                let g = grad_out.data()[o].as_f64();
                let v = match cache.mode {
                    BnMode::Eval => g * gamma * inv_std,
                    BnMode::Train => {
                        let xh = cache.x_hat.data()[o].as_f64();
                        gamma * inv_std / m * (m * g - sum_g - xh * sum_gx)
                    }
                };
                gx.data_mut()[o] = T::of_f64(v);
            }
        }
    }
    Ok((gx, g_gamma, g_beta))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through ReLU given its output (positive exactly where input was).
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    output.zip_map(grad_out, |y, g| if y > T::zero() { g } else { T::zero() })
}

/// `(N, C, H, W)` to `(N, C, 1, 1)`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let hw = h * w;
    let inv = T::of_f64(1.0 / hw as f64);
    let data = x
        .data()
        .chunks(hw)
        .map(|plane| plane.iter().copied().fold(T::zero(), |a, b| a + b) * inv)
        .collect();
    Tensor::new([n, c, 1, 1], data).expect("n*c elements")
}

pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: [usize; 4],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape;
    grad_out.expect_shape([n, c, 1, 1], "global average pool backward")?;
    let inv = T::of_f64(1.0 / (h * w) as f64);
    let data = grad_out
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * inv, h * w))
        .collect();
    Tensor::new(input_shape, data)
}

/// Fully connected layer with bias: `logits = x · Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `out × in`.
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn in_features(&self) -> usize {
        self.weight.cols()
    }
    pub fn out_features(&self) -> usize {
        self.weight.rows()
    }
}

/// `x` is `(N, C, 1, 1)` (or anything with `C·H·W == in_features`).
pub fn fully_connected<T: Scalar>(x: &Tensor<T>, fc: &Linear<T>) -> Result<Matrix<T>> {
    let n = x.n();
    let features = x.len() / n.max(1);
    if features != fc.in_features() {
        return Err(Error::Shape(format!(
            "fully connected layer expects {} features, input {:?} has {features}",
            fc.in_features(),
            x.shape()
        )));
    }
    let out = fc.out_features();
    let mut logits = Matrix::zeros(n, out);
    gemm_nt(
        n,
        features,
        out,
        x.data(),
        fc.weight.data(),
        logits.data_mut(),
    );
    for row in logits.data_mut().chunks_mut(out) {
        row.iter_mut().zip(&fc.bias).for_each(|(v, &b)| *v += b);
    }
    Ok(logits)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn fully_connected_backward<T: Scalar>(
    x: &Tensor<T>,
    fc: &Linear<T>,
    grad_logits: &Matrix<T>,
) -> Result<(Tensor<T>, Matrix<T>, Vec<T>)> {
    let n = x.n();
    let features = fc.in_features();
    let out = fc.out_features();
    if grad_logits.rows() != n || grad_logits.cols() != out {
        return Err(Error::Shape(format!(
            "logit gradient is {}x{}, expected {n}x{out}",
            grad_logits.rows(),
            grad_logits.cols()
        )));
    }
    let mut gw = Matrix::zeros(out, features);
    gemm_tn(
        out,
        n,
        features,
        grad_logits.data(),
        x.data(),
        gw.data_mut(),
    );
    let mut gb = vec![T::zero(); out];
    for row in grad_logits.data().chunks(out) {
        gb.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
    }
    let mut gx = vec![T::zero(); n * features];
    gemm_nn(
        n,
        out,
        features,
        grad_logits.data(),
        fc.weight.data(),
        &mut gx,
    );
    Ok((Tensor::new(x.shape(), gx)?, gw, gb))
}

/// Mean cross-entropy of softmax(logits) against `labels`, and its gradient.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Matrix<T>,
    labels: &[usize],
) -> Result<(f64, Matrix<T>)> {
    let n = logits.rows();
    let k = logits.cols();
    if labels.len() != n {
        return Err(Error::Input(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut grad = Matrix::zeros(n, k);
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - row[label].as_f64();
        for (j, e) in exps.iter().enumerate() {
            let p = e / z - if j == label { 1.0 } else { 0.0 };
            grad.set(i, j, T::of_f64(p * inv_n));
        }
    }
    Ok((loss * inv_n, grad))
}

/// Index of the largest logit in each row (first on ties).
pub fn argmax_rows<T: Scalar>(logits: &Matrix<T>) -> Vec<usize> {
    logits
        .data()
        .chunks(logits.cols().max(1))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (j, &v)| {
                    if v > best.1 {
                        (j, v)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error};
    use crate::rng::CounterRng;

    fn random(shape: [usize; 4], rng: &mut CounterRng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.normal())
    }

    fn weighted(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = Tensor::<f64>::full([3, 2, 2, 2], 4.0);
        let (y, _) = batchnorm_forward(&x, &BatchNorm::new(2), BnMode::Train).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut rng = CounterRng::new(31);
        let x = random([2, 3, 2, 2], &mut rng);
        let mut bn = BatchNorm::new(3);
        bn.gamma = vec![0.0; 3];
        bn.beta = vec![0.5, -1.0, 2.0];
        let (y, _) = batchnorm_forward(&x, &bn, BnMode::Train).unwrap();
        for i in 0..2 {
            for c in 0..3 {
                for p in 0..4 {
                    assert_eq!(y.get([i, c, p / 2, p % 2]), bn.beta[c]);
                }
            }
        }
    }

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = CounterRng::new(32);
        // eps leaves var/(var + eps) after normalization; input variance ~16 keeps that within 1e-6
        let x = random([4, 3, 5, 5], &mut rng).map(|v| 4.0 * v + 1.5);
        let (y, _) = batchnorm_forward(&x, &BatchNorm::new(3), BnMode::Train).unwrap();
        let (mean, var) = channel_stats(&y);
        for c in 0..3 {
            assert!(mean[c].abs() < 1e-6);
            assert!((var[c] - 1.0).abs() < 1e-6, "{}", var[c]);
        }
    }

    #[test]
    fn running_stats_use_momentum_and_drive_eval() {
        let mut rng = CounterRng::new(33);
        let x = random([4, 2, 3, 3], &mut rng).map(|v| v + 2.0);
        let mut bn = BatchNorm::new(2);
        let (_, cache) = batchnorm_forward(&x, &bn, BnMode::Train).unwrap();
        bn.update_running(&cache);
        for c in 0..2 {
            assert!((bn.running_mean[c] - 0.1 * cache.mean[c]).abs() < 1e-15);
            assert!((bn.running_var[c] - (0.9 + 0.1 * cache.var[c])).abs() < 1e-15);
        }
        let (y, _) = batchnorm_forward(&x, &bn, BnMode::Eval).unwrap();
        let expect =
            (x.get([0, 1, 0, 0]) - bn.running_mean[1]) / (bn.running_var[1] + BN_EPSILON).sqrt();
        assert!((y.get([0, 1, 0, 0]) - expect).abs() < 1e-15);
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::<f64>::zeros([1, 3, 2, 2]);
        assert!(matches!(
            batchnorm_forward(&x, &BatchNorm::new(2), BnMode::Train),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let mut rng = CounterRng::new(34);
        let x = random([3, 2, 3, 3], &mut rng);
        let mut bn = BatchNorm::new(2);
        bn.gamma = vec![1.3, -0.7];
        bn.beta = vec![0.2, 0.4];
        bn.running_mean = vec![0.1, -0.3];
        bn.running_var = vec![0.8, 1.7];
        let wts = random(x.shape(), &mut rng);
        for mode in [BnMode::Train, BnMode::Eval] {
            let (_, cache) = batchnorm_forward(&x, &bn, mode).unwrap();
            let (gx, gg, gb) = batchnorm_backward(&cache, &bn, &wts).unwrap();
            let num_x = central_difference(x.data(), 1e-5, |v| {
                let t = Tensor::new(x.shape(), v.to_vec()).unwrap();
                weighted(&batchnorm_forward(&t, &bn, mode).unwrap().0, &wts)
            });
            assert!(max_relative_error(gx.data(), &num_x) < 1e-6, "{mode:?}");
            let affine: Vec<f64> = bn.gamma.iter().chain(&bn.beta).copied().collect();
            let num_affine = central_difference(&affine, 1e-5, |v| {
                let mut b = bn.clone();
                b.gamma = v[..2].to_vec();
                b.beta = v[2..].to_vec();
                weighted(&batchnorm_forward(&x, &b, mode).unwrap().0, &wts)
            });
            let analytic: Vec<f64> = gg.iter().chain(&gb).copied().collect();
            assert!(max_relative_error(&analytic, &num_affine) < 1e-6);
        }
    }

    #[test]
    fn relu_values() {
        let x = Tensor::new([1, 1, 1, 2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let g = Tensor::new([1, 1, 1, 2], vec![5.0, 7.0]).unwrap();
        assert_eq!(relu_backward(&relu(&x), &g).unwrap().data(), &[0.0, 7.0]);
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Matrix::<f64>::zeros(3, 10);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 4, 9]).unwrap();
        assert!((loss - (10f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let logits = Matrix::<f64>::zeros(1, 3);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = CounterRng::new(35);
        let logits = Matrix::from_fn(4, 5, |_, _| 2.0 * rng.normal());
        let labels = [1, 0, 4, 2];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let num = central_difference(logits.data(), 1e-5, |v| {
            softmax_cross_entropy(&Matrix::new(4, 5, v.to_vec()).unwrap(), &labels)
                .unwrap()
                .0
        });
        assert!(max_relative_error(grad.data(), &num) < 1e-6);
    }

    #[test]
    fn pool_and_fc_backward_match_finite_differences() {
        let mut rng = CounterRng::new(36);
        let x = random([3, 4, 3, 2], &mut rng);
        let fc = Linear {
            weight: Matrix::from_fn(5, 4, |_, _| rng.normal()),
            bias: (0..5).map(|_| rng.normal()).collect(),
        };
        let wts = Matrix::from_fn(3, 5, |_, _| rng.normal());
        let objective = |x: &Tensor<f64>, fc: &Linear<f64>| -> f64 {
            let l = fully_connected(&global_avg_pool(x), fc).unwrap();
            l.data().iter().zip(wts.data()).map(|(a, b)| a * b).sum()
        };
        let pooled = global_avg_pool(&x);
        let (gp, gw, gb) = fully_connected_backward(&pooled, &fc, &wts).unwrap();
        let gx = global_avg_pool_backward(x.shape(), &gp).unwrap();
        let num_x = central_difference(x.data(), 1e-5, |v| {
            objective(&Tensor::new(x.shape(), v.to_vec()).unwrap(), &fc)
        });
        assert!(max_relative_error(gx.data(), &num_x) < 1e-6);
        let num_w = central_difference(fc.weight.data(), 1e-5, |v| {
            let mut f = fc.clone();
            f.weight = Matrix::new(5, 4, v.to_vec()).unwrap();
            objective(&x, &f)
        });
        assert!(max_relative_error(gw.data(), &num_w) < 1e-6);
        let num_b = central_difference(&fc.bias, 1e-5, |v| {
            let mut f = fc.clone();
            f.bias = v.to_vec();
            objective(&x, &f)
        });
        assert!(max_relative_error(&gb, &num_b) < 1e-6);
    }

    #[test]
    fn argmax_picks_first_maximum() {
        let m = Matrix::<f64>::from_rows(&[vec![1.0, 3.0, 3.0], vec![-1.0, -2.0, -0.5]]).unwrap();
        assert_eq!(argmax_rows(&m), vec![1, 2]);
    }
}
