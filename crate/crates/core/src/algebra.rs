//! Matrix view of an IGC block and the constructions that express other
//! blocks as IGC instances.
//!
//! With per-position input `x` of length `L·M_in·S` (channel-major, tap-minor,
//! the same row order as [`crate::conv::im2col`]) a block computes
//! `x' = P·Wᵈ·Pᵀ·Wᵖ·x`.

use crate::block::{
    igc_block_forward, permutation_indices, IgcBlockParams, IgcConfig, SpatialPlacement,
};
use crate::conv::conv2d_forward;
use crate::error::{Error, Result};
use crate::linalg::matmul;
use crate::par::map_range;
use crate::rng::CounterRng;
use crate::tensor::{Matrix, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFactorSet<T> {
    pub l: usize,
    pub m: usize,
    pub m_in: usize,
    pub s: usize,
    /// `(L·M) × (L·M_in·S)`, block-diagonal with `L` blocks of `M × M_in·S`.
    pub wp: Matrix<T>,
    /// `(M·L) × (M·L)`, block-diagonal with `M` blocks of `L × L`.
    pub wd: Matrix<T>,
    /// `(L·M) × (L·M)` permutation taking secondary layout to primary layout.
    pub p: Matrix<T>,
}

impl<T: Scalar> SparseFactorSet<T> {
    /// `‖Wᵖ‖₀ + ‖Wᵈ‖₀`.
    pub fn l0_norm(&self) -> usize {
        self.wp.l0_norm() + self.wd.l0_norm()
    }

    /// Whether every entry outside the declared diagonal blocks is zero.
    pub fn is_block_diagonal(&self) -> bool {
        let wp_ok = (0..self.wp.rows()).all(|r| {
            (0..self.wp.cols())
                .all(|c| c / (self.m_in * self.s) == r / self.m || self.wp.get(r, c) == T::zero())
        });
        let wd_ok = (0..self.wd.rows()).all(|r| {
            (0..self.wd.cols()).all(|c| c / self.l == r / self.l || self.wd.get(r, c) == T::zero())
        });
        wp_ok && wd_ok
    }
}

/// Builds `Wᵖ`, `Wᵈ` and `P` from block parameters (spatial primary only).
pub fn assemble_factors<T: Scalar>(
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
) -> Result<SparseFactorSet<T>> {
    params.check(config)?;
    if config.placement != SpatialPlacement::Primary {
        return Err(Error::config(
            "the matrix form needs a point-wise secondary convolution",
        ));
    }
    let (l, m, m_in, s) = (config.l, config.m, config.m_in, config.s());
    let g = l * m;
    let primary = params.primary.data();
    let wp = Matrix::from_fn(g, l * m_in * s, |r, c| {
        let part = r / m;
        let local = c as isize - (part * m_in * s) as isize;
        if local < 0 || local >= (m_in * s) as isize {
            T::zero()
        } else {
            primary[r * m_in * s + local as usize]
        }
    });
    let secondary = params.secondary.data();
    let wd = Matrix::from_fn(g, g, |r, c| {
        if r / l == c / l {
            secondary[r * l + c % l]
        } else {
            T::zero()
        }
    });
    let perm = permutation_indices(l, m);
    let mut p = Matrix::zeros(g, g);
    for (s_idx, &f) in perm.forward_index.iter().enumerate() {
        p.set(f, s_idx, T::one());
    }
    Ok(SparseFactorSet {
        l,
        m,
        m_in,
        s,
        wp,
        wd,
        p,
    })
}

/// `W = P·Wᵈ·Pᵀ·Wᵖ`, an `(L·M) × (L·M_in·S)` matrix.
pub fn compose_kernel<T: Scalar>(factors: &SparseFactorSet<T>) -> Result<Matrix<T>> {
    let inner = matmul(&factors.p.transpose(), &factors.wp)?;
    let inner = matmul(&factors.wd, &inner)?;
    matmul(&factors.p, &inner)
}

/// Reshapes a `C_out × (C_in·k·k)` kernel matrix into a conv kernel tensor.
pub fn matrix_to_kernel<T: Scalar>(w: &Matrix<T>, k: usize) -> Result<Tensor<T>> {
    let s = k * k;
    if s == 0 || !w.cols().is_multiple_of(s) {
        return Err(Error::shape(format!(
            "{} columns do not split into {k}x{k} taps",
            w.cols()
        )));
    }
    Tensor::new([w.rows(), w.cols() / s, k, k], w.data().to_vec())
}

/// Inverse of [`matrix_to_kernel`].
pub fn kernel_to_matrix<T: Scalar>(kernel: &Tensor<T>) -> Matrix<T> {
    let [co, ci, kh, kw] = kernel.shape();
    Matrix::new(co, ci * kh * kw, kernel.data().to_vec()).expect("sized by kernel")
}

/// Block parameters realizing some other operator, applied to the input
/// replicated `input_replication` times along channels.
#[derive(Debug, Clone, PartialEq)]
pub struct IgcEmbedding<T> {
    pub config: IgcConfig,
    pub params: IgcBlockParams<T>,
    pub input_replication: usize,
}

impl<T: Scalar> IgcEmbedding<T> {
    pub fn factors(&self) -> Result<SparseFactorSet<T>> {
        assemble_factors(&self.config, &self.params)
    }

    /// Replicates `input` and runs the block.
    pub fn apply(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        igc_block_forward(
            &input.replicate_channels(self.input_replication),
            &self.config,
            &self.params,
        )
    }
}

fn one_zero(on: bool) -> f64 {
    if on {
        1.0
    } else {
        0.0
    }
}

/// A dense kernel `(C_out, C_in, k, k)` as an IGC block with `L = q²`
/// partitions over a `q`-fold replicated input.
///
/// The kernel is cut into a `q×q` grid of blocks `W_ij`; primary partition
/// `i·q + j` applies `W_ij` to input slice `x_j`, and every secondary block sums
/// partitions `(p mod q)·q + j` over `j`. The output is `Wx` repeated `q` times.
pub fn regular_conv_as_igc<T: Scalar>(kernel: &Tensor<T>, l: usize) -> Result<IgcEmbedding<T>> {
    let q = (1..=l).find(|q| q * q >= l).unwrap_or(0);
    if l == 0 || q * q != l {
        return Err(Error::config(format!(
            "partition count {l} is not a perfect square"
        )));
    }
    let [co, ci, k, kw] = kernel.shape();
    if k != kw || co % q != 0 || ci % q != 0 || co == 0 || ci == 0 {
        return Err(Error::config(format!(
            "kernel {:?} does not split into a {q}x{q} block grid",
            kernel.shape()
        )));
    }
    let (m, m_in) = (co / q, ci / q);
    let config = IgcConfig::new(l, m, k).with_m_in(m_in);
    config.validate()?;
    let primary: Vec<Tensor<T>> = (0..l)
        .map(|p| {
            let (i, j) = (p / q, p % q);
            Tensor::from_fn([m, m_in, k, k], |[a, c, y, x]| {
                kernel.get([i * m + a, j * m_in + c, y, x])
            })
        })
        .collect();
    let block = Matrix::from_fn(l, l, |r, c| T::of_f64(one_zero(c / q == r % q)));
    let params = IgcBlockParams::from_partitions(&config, &primary, &vec![block; m])?;
    Ok(IgcEmbedding {
        config,
        params,
        input_replication: q,
    })
}

/// `L` branch kernels `(M, M, k, k)` fused by summation. Every output
/// partition equals `Σᵢ yᵢ`.
pub fn summation_fusion_as_igc<T: Scalar>(branches: &[Tensor<T>]) -> Result<IgcEmbedding<T>> {
    let first = branches
        .first()
        .ok_or_else(|| Error::config("summation fusion needs at least one branch"))?;
    let [m, m_in, k, kw] = first.shape();
    if m != m_in || k != kw {
        return Err(Error::config(format!(
            "branch kernels must be square in channels and space, got {:?}",
            first.shape()
        )));
    }
    if let Some(bad) = branches.iter().find(|b| b.shape() != first.shape()) {
        return Err(Error::config(format!(
            "branch kernel {:?} differs from {:?}",
            bad.shape(),
            first.shape()
        )));
    }
    let l = branches.len();
    let config = IgcConfig::new(l, m, k);
    let ones = Matrix::from_fn(l, l, |_, _| T::one());
    let params = IgcBlockParams::from_partitions(&config, branches, &vec![ones; m])?;
    Ok(IgcEmbedding {
        config,
        params,
        input_replication: l,
    })
}

/// A dense kernel `(C, C, k, k)` as an IGC block of `C²` single-channel
/// partitions over a `C`-fold replicated input; the output is the dense
/// convolution repeated `C` times.
pub fn channelwise_extreme_as_igc<T: Scalar>(kernel: &Tensor<T>) -> Result<IgcEmbedding<T>> {
    let [co, ci, k, kw] = kernel.shape();
    if co != ci || k != kw || co == 0 {
        return Err(Error::config(format!(
            "channel-wise form needs a square kernel, got {:?}",
            kernel.shape()
        )));
    }
    let c = co;
    let l = c * c;
    let config = IgcConfig::new(l, 1, k);
    let primary: Vec<Tensor<T>> = (0..l)
        .map(|p| {
            Tensor::from_fn([1, 1, k, k], |[_, _, y, x]| {
                kernel.get([p / c, p % c, y, x])
            })
        })
        .collect();
    // row r·C + i sums the C partitions i·C..(i+1)·C
    let block = Matrix::from_fn(l, l, |row, col| T::of_f64(one_zero(col / c == row % c)));
    let params = IgcBlockParams::from_partitions(&config, &primary, &[block])?;
    Ok(IgcEmbedding {
        config,
        params,
        input_replication: c,
    })
}

/// Worst absolute gap between the block path and a dense convolution with
/// the composed kernel over `trials` random `2×C×6×6` inputs.
pub fn verify_equivalence(
    config: &IgcConfig,
    params: &IgcBlockParams<f64>,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::config("verify_equivalence needs at least one trial"));
    }
    let config = config.with_bn_relu(false);
    let params = IgcBlockParams {
        bn: None,
        ..params.clone()
    };
    let composite = matrix_to_kernel(
        &compose_kernel(&assemble_factors(&config, &params)?)?,
        config.k,
    )?;
    let errors = map_range(trials, |t| -> Result<f64> {
        let mut rng = CounterRng::derive(seed, &[t as u64]);
        let x = Tensor::from_fn([2, config.in_channels(), 6, 6], |_| rng.normal());
        let path = igc_block_forward(&x, &config, &params)?;
        let dense = conv2d_forward(&x, &composite, config.stride, config.pad())?;
        path.max_abs_diff(&dense)
    });
    errors
        .into_iter()
        .try_fold(0.0_f64, |acc, e| Ok(acc.max(e?)))
}
