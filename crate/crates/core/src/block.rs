//! The interleaved group convolution block and the GPC alternative.
//!
//! Channel layouts: the *primary* layout groups the `G = L·M` channels as `L`
//! partitions of `M` consecutive channels; the *secondary* layout groups them
//! as `M` partitions of `L`, the `m`-th gathering channel `m` of every primary
//! partition. Primary index `l·M + m` sits at secondary index `m·L + l`.
//!
//! A block is: primary group conv (`L` groups) → interleave to secondary
//! layout → secondary group conv (`M` groups) → interleave back. By default the
//! primary conv carries the `k×k` kernel and the secondary one is `1×1`;
//! [`SpatialPlacement::Secondary`] swaps that. Batch norm and ReLU, when
//! enabled, follow the whole block and never sit between the two convolutions.

use serde::{Deserialize, Serialize};

use crate::conv::{group_conv2d_backward, group_conv2d_forward, same_pad};
use crate::error::{Error, Result};
use crate::layers::{
    batchnorm_backward, batchnorm_forward, relu, relu_backward, BatchNorm, BnMode,
};
use crate::rng::CounterRng;
use crate::tensor::{Matrix, Scalar, Tensor};

/// Which of the two group convolutions carries the spatial kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialPlacement {
    #[default]
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IgcConfig {
    /// Number of primary partitions.
    pub l: usize,
    /// Output channels per primary partition (= number of secondary partitions).
    pub m: usize,
    /// Input channels per primary partition. Equals `m` except in blocks that
    /// change width.
    pub m_in: usize,
    /// Spatial kernel side; odd.
    pub k: usize,
    pub stride: usize,
    pub with_bn_relu: bool,
    pub placement: SpatialPlacement,
}

impl IgcConfig {
    pub fn new(l: usize, m: usize, k: usize) -> Self {
        Self {
            l,
            m,
            m_in: m,
            k,
            stride: 1,
            with_bn_relu: false,
            placement: SpatialPlacement::Primary,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_m_in(mut self, m_in: usize) -> Self {
        self.m_in = m_in;
        self
    }

    pub fn with_bn_relu(mut self, on: bool) -> Self {
        self.with_bn_relu = on;
        self
    }

    pub fn with_placement(mut self, placement: SpatialPlacement) -> Self {
        self.placement = placement;
        self
    }

    /// Block width `G = L·M`.
    pub fn width(&self) -> usize {
        self.l * self.m
    }

    pub fn in_channels(&self) -> usize {
        self.l * self.m_in
    }

    /// Spatial kernel size `S = k²`.
    pub fn s(&self) -> usize {
        self.k * self.k
    }

    pub fn pad(&self) -> usize {
        same_pad(self.k)
    }

    /// Kernel sides of the primary and secondary convolutions.
    pub fn kernel_sides(&self) -> (usize, usize) {
        match self.placement {
            SpatialPlacement::Primary => (self.k, 1),
            SpatialPlacement::Secondary => (1, self.k),
        }
    }

    pub fn primary_shape(&self) -> [usize; 4] {
        let (kp, _) = self.kernel_sides();
        [self.l * self.m, self.m_in, kp, kp]
    }

    pub fn secondary_shape(&self) -> [usize; 4] {
        let (_, ks) = self.kernel_sides();
        [self.m * self.l, self.l, ks, ks]
    }

    /// Kernel entries: `L·M·M_in·S + M·L²` for the default placement.
    pub fn param_count(&self) -> usize {
        self.primary_shape().iter().product::<usize>()
            + self.secondary_shape().iter().product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.m == 0 || self.m_in == 0 || self.k == 0 || self.stride == 0 {
            return Err(Error::config(format!(
                "IGC sizes must be positive: {self:?}"
            )));
        }
        if self.k.is_multiple_of(2) {
            return Err(Error::config(format!("kernel side {} must be odd", self.k)));
        }
        if self.placement == SpatialPlacement::Secondary && self.m_in != self.m {
            return Err(Error::config(
                "a block with a point-wise primary convolution cannot change width",
            ));
        }
        Ok(())
    }

    fn strides(&self) -> (usize, usize) {
        match self.placement {
            SpatialPlacement::Primary => (self.stride, 1),
            SpatialPlacement::Secondary => (1, self.stride),
        }
    }
}

/// Channel interleave between the primary and secondary layouts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSpec {
    /// `forward_index[m·L + l] = l·M + m`: secondary position → primary channel.
    pub forward_index: Vec<usize>,
    /// Inverse of `forward_index`: primary position → secondary channel.
    pub inverse_index: Vec<usize>,
}

pub fn permutation_indices(l: usize, m: usize) -> PermutationSpec {
    let g = l * m;
    let mut forward_index = vec![0; g];
    let mut inverse_index = vec![0; g];
    for li in 0..l {
        for mi in 0..m {
            forward_index[mi * l + li] = li * m + mi;
            inverse_index[li * m + mi] = mi * l + li;
        }
    }
    PermutationSpec {
        forward_index,
        inverse_index,
    }
}

/// `out[:, s] = input[:, index[s]]`.
pub fn gather_channels<T: Scalar>(input: &Tensor<T>, index: &[usize]) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    if index.len() != c {
        return Err(Error::shape(format!(
            "permutation of {} channels applied to {c} channels",
            index.len()
        )));
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(input.len());
    for i in 0..n {
        let sample = input.sample(i);
        for &src in index {
            data.extend_from_slice(&sample[src * hw..(src + 1) * hw]);
        }
    }
    Tensor::new(input.shape(), data)
}

/// Primary layout → secondary layout.
pub fn interleave<T: Scalar>(input: &Tensor<T>, perm: &PermutationSpec) -> Result<Tensor<T>> {
    gather_channels(input, &perm.forward_index)
}

/// Secondary layout → primary layout.
pub fn deinterleave<T: Scalar>(input: &Tensor<T>, perm: &PermutationSpec) -> Result<Tensor<T>> {
    gather_channels(input, &perm.inverse_index)
}

/// Kernels of one block, stacked by partition.
#[derive(Debug, Clone, PartialEq)]
pub struct IgcBlockParams<T> {
    /// `(L·M, M_in, kp, kp)`; primary partition `l` owns rows `l·M..(l+1)·M`.
    pub primary: Tensor<T>,
    /// `(M·L, L, ks, ks)`; secondary partition `m` owns rows `m·L..(m+1)·L`.
    pub secondary: Tensor<T>,
    pub bn: Option<BatchNorm<T>>,
}

impl<T: Scalar> IgcBlockParams<T> {
    pub fn zeros(config: &IgcConfig) -> Self {
        Self {
            primary: Tensor::zeros(config.primary_shape()),
            secondary: Tensor::zeros(config.secondary_shape()),
            bn: config.with_bn_relu.then(|| BatchNorm::new(config.width())),
        }
    }

    /// He initialization: `N(0, 2 / fan_in)` per kernel block.
    pub fn he_init(config: &IgcConfig, rng: &mut CounterRng) -> Self {
        let mut p = Self::zeros(config);
        he_fill(&mut p.primary, rng);
        he_fill(&mut p.secondary, rng);
        p
    }

    /// From per-partition kernels: `L` tensors `(M, M_in, k, k)` and `M`
    /// matrices `L×L`.
    pub fn from_partitions(
        config: &IgcConfig,
        primary: &[Tensor<T>],
        secondary: &[Matrix<T>],
    ) -> Result<Self> {
        config.validate()?;
        if config.placement != SpatialPlacement::Primary {
            return Err(Error::config(
                "secondary blocks given as matrices must be 1x1",
            ));
        }
        if primary.len() != config.l || secondary.len() != config.m {
            return Err(Error::config(format!(
                "expected {} primary and {} secondary kernels, got {} and {}",
                config.l,
                config.m,
                primary.len(),
                secondary.len()
            )));
        }
        let [_, m_in, k, _] = config.primary_shape();
        let mut pdata = Vec::new();
        for t in primary {
            t.expect_shape([config.m, m_in, k, k], "primary partition kernel")?;
            pdata.extend_from_slice(t.data());
        }
        let mut sdata = Vec::new();
        for s in secondary {
            if s.rows() != config.l || s.cols() != config.l {
                return Err(Error::shape(format!(
                    "secondary partition kernel is {}x{}, expected {}x{}",
                    s.rows(),
                    s.cols(),
                    config.l,
                    config.l
                )));
            }
            sdata.extend_from_slice(s.data());
        }
        Ok(Self {
            primary: Tensor::new(config.primary_shape(), pdata)?,
            secondary: Tensor::new(config.secondary_shape(), sdata)?,
            bn: config.with_bn_relu.then(|| BatchNorm::new(config.width())),
        })
    }

    /// Kernel of primary partition `l`: `(M, M_in, kp, kp)`.
    pub fn primary_partition(&self, config: &IgcConfig, l: usize) -> Tensor<T> {
        let [_, m_in, kp, _] = config.primary_shape();
        let len = config.m * m_in * kp * kp;
        Tensor::new(
            [config.m, m_in, kp, kp],
            self.primary.data()[l * len..(l + 1) * len].to_vec(),
        )
        .expect("sized by config")
    }

    /// `L×L` kernel of secondary partition `m` (point-wise secondary only).
    pub fn secondary_partition(&self, config: &IgcConfig, m: usize) -> Matrix<T> {
        let (_, ks) = config.kernel_sides();
        let len = config.l * config.l * ks * ks;
        let block = &self.secondary.data()[m * len..(m + 1) * len];
        Matrix::from_fn(config.l, config.l, |r, c| {
            block[(r * config.l + c) * ks * ks + (ks * ks) / 2]
        })
    }

    /// Number of kernel entries.
    pub fn kernel_param_count(&self) -> usize {
        self.primary.len() + self.secondary.len()
    }

    pub fn check(&self, config: &IgcConfig) -> Result<()> {
        config.validate()?;
        if self.primary.shape() != config.primary_shape()
            || self.secondary.shape() != config.secondary_shape()
        {
            return Err(Error::config(format!(
                "params {:?}/{:?} do not match config {:?}/{:?}",
                self.primary.shape(),
                self.secondary.shape(),
                config.primary_shape(),
                config.secondary_shape()
            )));
        }
        match (&self.bn, config.with_bn_relu) {
            (Some(bn), true) if bn.channels() == config.width() => Ok(()),
            (_, false) => Ok(()),
            _ => Err(Error::config(
                "with_bn_relu needs batch norm over the block width",
            )),
        }
    }
}

pub(crate) fn he_fill<T: Scalar>(kernel: &mut Tensor<T>, rng: &mut CounterRng) {
    let [_, c, kh, kw] = kernel.shape();
    let std = (2.0 / (c * kh * kw) as f64).sqrt();
    kernel
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = T::of_f64(std * rng.normal()));
}

fn check_input<T: Scalar>(input: &Tensor<T>, channels: usize, what: &str) -> Result<()> {
    if input.c() != channels {
        return Err(Error::config(format!(
            "{what} expects {channels} input channels, got {}",
            input.c()
        )));
    }
    Ok(())
}

/// `L` independent convolutions over consecutive channel partitions.
pub fn primary_group_conv<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
) -> Result<Tensor<T>> {
    check_input(input, config.in_channels(), "primary group convolution")?;
    let (kp, _) = config.kernel_sides();
    let (sp, _) = config.strides();
    group_conv2d_forward(input, &params.primary, config.l, sp, same_pad(kp))
}

/// `M` independent convolutions over the secondary partitions; `input` must
/// already be in secondary layout.
pub fn secondary_group_conv<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
) -> Result<Tensor<T>> {
    check_input(input, config.width(), "secondary group convolution")?;
    let (_, ks) = config.kernel_sides();
    let (_, ss) = config.strides();
    group_conv2d_forward(input, &params.secondary, config.m, ss, same_pad(ks))
}

/// Intermediates kept by [`forward_traced`] for the backward pass.
#[derive(Debug, Clone)]
pub struct IgcTrace<T> {
    /// Primary output in secondary layout (input of the secondary conv).
    pub secondary_input: Tensor<T>,
}

/// Block without batch norm or ReLU, keeping intermediates.
pub fn forward_traced<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
) -> Result<(Tensor<T>, IgcTrace<T>)> {
    params.check(config)?;
    let perm = permutation_indices(config.l, config.m);
    let primary_out = primary_group_conv(input, config, params)?;
    let secondary_input = interleave(&primary_out, &perm)?;
    let secondary_out = secondary_group_conv(&secondary_input, config, params)?;
    let out = deinterleave(&secondary_out, &perm)?;
    Ok((out, IgcTrace { secondary_input }))
}

/// Backward of [`forward_traced`]: `(grad_input, grad_primary, grad_secondary)`.
pub fn backward_traced<T: Scalar>(
    input: &Tensor<T>,
    trace: &IgcTrace<T>,
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let perm = permutation_indices(config.l, config.m);
    let (kp, ks) = config.kernel_sides();
    let (sp, ss) = config.strides();
    // the adjoint of a gather by `inverse_index` is a gather by `forward_index`
    let g_secondary_out = interleave(grad_out, &perm)?;
    let (g_secondary_in, g_secondary) = group_conv2d_backward(
        &trace.secondary_input,
        &params.secondary,
        &g_secondary_out,
        config.m,
        ss,
        same_pad(ks),
    )?;
    let g_primary_out = deinterleave(&g_secondary_in, &perm)?;
    let (g_input, g_primary) = group_conv2d_backward(
        input,
        &params.primary,
        &g_primary_out,
        config.l,
        sp,
        same_pad(kp),
    )?;
    Ok((g_input, g_primary, g_secondary))
}

fn bn_of<'a, T>(
    config: &IgcConfig,
    bn: &'a Option<BatchNorm<T>>,
) -> Result<Option<&'a BatchNorm<T>>> {
    if !config.with_bn_relu {
        return Ok(None);
    }
    bn.as_ref()
        .map(Some)
        .ok_or_else(|| Error::config("with_bn_relu set but no batch norm state"))
}

/// `x' = P·Wᵈ·Pᵀ·Wᵖ·x` at every position, then (if enabled) batch norm with
/// running statistics and ReLU.
pub fn igc_block_forward<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
) -> Result<Tensor<T>> {
    let (out, _) = forward_traced(input, config, params)?;
    match bn_of(config, &params.bn)? {
        Some(bn) => Ok(relu(&batchnorm_forward(&out, bn, BnMode::Eval)?.0)),
        None => Ok(out),
    }
}

/// Gradients of [`igc_block_forward`]. The returned params hold gradients;
/// batch-norm gradients (when present) sit in `gamma`/`beta`.
pub fn igc_block_backward<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &IgcBlockParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, IgcBlockParams<T>)> {
    let (raw, trace) = forward_traced(input, config, params)?;
    grad_out.expect_shape(raw.shape(), "IGC block grad_out")?;
    let (grad_raw, grad_bn) = match bn_of(config, &params.bn)? {
        Some(bn) => {
            let (normed, cache) = batchnorm_forward(&raw, bn, BnMode::Eval)?;
            let g = relu_backward(&relu(&normed), grad_out)?;
            let (g_raw, g_gamma, g_beta) = batchnorm_backward(&cache, bn, &g)?;
            let mut gbn = BatchNorm::new(bn.channels());
            gbn.gamma = g_gamma;
            gbn.beta = g_beta;
            gbn.running_mean.fill(T::zero());
            gbn.running_var.fill(T::zero());
            (g_raw, Some(gbn))
        }
        None => (grad_out.clone(), None),
    };
    let (g_input, g_primary, g_secondary) =
        backward_traced(input, &trace, config, params, &grad_raw)?;
    Ok((
        g_input,
        IgcBlockParams {
            primary: g_primary,
            secondary: g_secondary,
            bn: grad_bn,
        },
    ))
}

/// Group convolution followed by a dense point-wise convolution over all
/// channels. Geometry comes from an [`IgcConfig`] with the default placement.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcParams<T> {
    /// `(L·M, M_in, k, k)`.
    pub primary: Tensor<T>,
    /// `(L·M, L·M, 1, 1)`.
    pub pointwise: Tensor<T>,
}

impl<T: Scalar> GpcParams<T> {
    pub fn zeros(config: &IgcConfig) -> Self {
        let g = config.width();
        Self {
            primary: Tensor::zeros(config.primary_shape()),
            pointwise: Tensor::zeros([g, g, 1, 1]),
        }
    }

    pub fn he_init(config: &IgcConfig, rng: &mut CounterRng) -> Self {
        let mut p = Self::zeros(config);
        he_fill(&mut p.primary, rng);
        he_fill(&mut p.pointwise, rng);
        p
    }

    pub fn kernel_param_count(&self) -> usize {
        self.primary.len() + self.pointwise.len()
    }

    fn check(&self, config: &IgcConfig) -> Result<()> {
        config.validate()?;
        let g = config.width();
        if config.placement != SpatialPlacement::Primary
            || self.primary.shape() != config.primary_shape()
            || self.pointwise.shape() != [g, g, 1, 1]
        {
            return Err(Error::config(format!(
                "GPC params {:?}/{:?} do not match config {config:?}",
                self.primary.shape(),
                self.pointwise.shape()
            )));
        }
        Ok(())
    }
}

/// `L·M·M_in·S + (L·M)²` kernel entries.
pub fn gpc_param_count(config: &IgcConfig) -> usize {
    config.primary_shape().iter().product::<usize>() + config.width().pow(2)
}

pub fn gpc_block_forward<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &GpcParams<T>,
) -> Result<Tensor<T>> {
    Ok(gpc_forward_traced(input, config, params)?.0)
}

/// Returns the output and the intermediate group-conv output.
pub fn gpc_forward_traced<T: Scalar>(
    input: &Tensor<T>,
    config: &IgcConfig,
    params: &GpcParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    params.check(config)?;
    check_input(input, config.in_channels(), "GPC block")?;
    let mid = group_conv2d_forward(
        input,
        &params.primary,
        config.l,
        config.stride,
        config.pad(),
    )?;
    let out = group_conv2d_forward(&mid, &params.pointwise, 1, 1, 0)?;
    Ok((out, mid))
}

/// `(grad_input, grad_primary, grad_pointwise)`.
pub fn gpc_backward_traced<T: Scalar>(
    input: &Tensor<T>,
    mid: &Tensor<T>,
    config: &IgcConfig,
    params: &GpcParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (g_mid, g_pointwise) = group_conv2d_backward(mid, &params.pointwise, grad_out, 1, 1, 0)?;
    let (g_input, g_primary) = group_conv2d_backward(
        input,
        &params.primary,
        &g_mid,
        config.l,
        config.stride,
        config.pad(),
    )?;
    Ok((g_input, g_primary, g_pointwise))
}
