use crate::block::{
    backward_traced, forward_traced, gpc_backward_traced, gpc_forward_traced, he_fill, GpcParams,
    IgcBlockParams, IgcConfig, IgcTrace,
};
use crate::conv::{group_conv2d_backward, group_conv2d_forward, same_pad};
use crate::error::{Error, Result};
use crate::layers::{
    argmax_rows, batchnorm_backward, batchnorm_forward, fully_connected, fully_connected_backward,
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, BatchNorm, BnCache, BnMode,
    Linear,
};
use crate::net::arch::{ArchSpec, BlockShape};
use crate::rng::CounterRng;
use crate::tensor::{Matrix, Scalar, Tensor};

const INIT_TAG: u64 = 0x494e_4954;

/// The main convolution of a layer.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockOp<T> {
    Conv {
        kernel: Tensor<T>,
        stride: usize,
    },
    /// `branches` convolutions stacked along output channels; their outputs
    /// are summed.
    SumFusion {
        kernel: Tensor<T>,
        branches: usize,
        stride: usize,
    },
    Igc {
        config: IgcConfig,
        params: IgcBlockParams<T>,
    },
    Gpc {
        config: IgcConfig,
        params: GpcParams<T>,
    },
}

#[derive(Debug, Clone)]
enum OpTrace<T> {
    Plain,
    Igc(IgcTrace<T>),
    Gpc(Tensor<T>),
}

fn sum_branches<T: Scalar>(y: &Tensor<T>, branches: usize) -> Result<Tensor<T>> {
    let c = y.c() / branches;
    let mut out = y.channel_slice(0, c)?;
    for b in 1..branches {
        out.add_assign(&y.channel_slice(b * c, c)?)?;
    }
    Ok(out)
}

impl<T: Scalar> BlockOp<T> {
    fn init(shape: &BlockShape, rng: &mut CounterRng) -> Self {
        match *shape {
            BlockShape::Conv {
                c_in,
                c_out,
                k,
                stride,
            } => {
                let mut kernel = Tensor::zeros([c_out, c_in, k, k]);
                he_fill(&mut kernel, rng);
                BlockOp::Conv { kernel, stride }
            }
            BlockShape::SumFusion {
                branches,
                c_in,
                c_out,
                k,
                stride,
            } => {
                let mut kernel = Tensor::zeros([branches * c_out, c_in, k, k]);
                he_fill(&mut kernel, rng);
                BlockOp::SumFusion {
                    kernel,
                    branches,
                    stride,
                }
            }
            BlockShape::Igc(config) => BlockOp::Igc {
                config,
                params: IgcBlockParams::he_init(&config, rng),
            },
            BlockShape::Gpc(config) => BlockOp::Gpc {
                config,
                params: GpcParams::he_init(&config, rng),
            },
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, OpTrace<T>)> {
        match self {
            BlockOp::Conv { kernel, stride } => Ok((
                group_conv2d_forward(x, kernel, 1, *stride, same_pad(kernel.h()))?,
                OpTrace::Plain,
            )),
            BlockOp::SumFusion {
                kernel,
                branches,
                stride,
            } => {
                let y = group_conv2d_forward(x, kernel, 1, *stride, same_pad(kernel.h()))?;
                Ok((sum_branches(&y, *branches)?, OpTrace::Plain))
            }
            BlockOp::Igc { config, params } => {
                let (y, trace) = forward_traced(x, config, params)?;
                Ok((y, OpTrace::Igc(trace)))
            }
            BlockOp::Gpc { config, params } => {
                let (y, mid) = gpc_forward_traced(x, config, params)?;
                Ok((y, OpTrace::Gpc(mid)))
            }
        }
    }

    /// Writes parameter gradients into `grad` and returns the input gradient.
    fn backward(
        &self,
        x: &Tensor<T>,
        trace: &OpTrace<T>,
        g: &Tensor<T>,
        grad: &mut Self,
    ) -> Result<Tensor<T>> {
        match (self, trace, grad) {
            (BlockOp::Conv { kernel, stride }, _, BlockOp::Conv { kernel: gk, .. }) => {
                let (gx, gw) =
                    group_conv2d_backward(x, kernel, g, 1, *stride, same_pad(kernel.h()))?;
                *gk = gw;
                Ok(gx)
            }
            (
                BlockOp::SumFusion {
                    kernel,
                    branches,
                    stride,
                },
                _,
                BlockOp::SumFusion { kernel: gk, .. },
            ) => {
                let gy = g.replicate_channels(*branches);
                let (gx, gw) =
                    group_conv2d_backward(x, kernel, &gy, 1, *stride, same_pad(kernel.h()))?;
                *gk = gw;
                Ok(gx)
            }
            (BlockOp::Igc { config, params }, OpTrace::Igc(t), BlockOp::Igc { params: gp, .. }) => {
                let (gx, gpr, gse) = backward_traced(x, t, config, params, g)?;
                gp.primary = gpr;
                gp.secondary = gse;
                Ok(gx)
            }
            (
                BlockOp::Gpc { config, params },
                OpTrace::Gpc(mid),
                BlockOp::Gpc { params: gp, .. },
            ) => {
                let (gx, gpr, gpw) = gpc_backward_traced(x, mid, config, params, g)?;
                gp.primary = gpr;
                gp.pointwise = gpw;
                Ok(gx)
            }
            _ => Err(Error::shape("layer, trace and gradient kinds disagree")),
        }
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        match self {
            BlockOp::Conv { kernel, .. } => {
                out.push(ParamRef::tensor(format!("{prefix}.conv"), kernel))
            }
            BlockOp::SumFusion { kernel, .. } => {
                out.push(ParamRef::tensor(format!("{prefix}.branches"), kernel))
            }
            BlockOp::Igc { params, .. } => {
                out.push(ParamRef::tensor(
                    format!("{prefix}.primary"),
                    &mut params.primary,
                ));
                out.push(ParamRef::tensor(
                    format!("{prefix}.secondary"),
                    &mut params.secondary,
                ));
            }
            BlockOp::Gpc { params, .. } => {
                out.push(ParamRef::tensor(
                    format!("{prefix}.primary"),
                    &mut params.primary,
                ));
                out.push(ParamRef::tensor(
                    format!("{prefix}.pointwise"),
                    &mut params.pointwise,
                ));
            }
        }
    }
}

/// What a stored tensor is, for weight decay and checkpointing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution and classifier weights; decayed.
    Weight,
    BnAffine,
    Bias,
    /// Running batch-norm statistics; stored but not trained.
    BnStat,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        self != ParamKind::BnStat
    }
}

/// A named, mutable view of one stored tensor.
#[derive(Debug)]
pub struct ParamRef<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: &'a mut [T],
}

impl<'a, T: Scalar> ParamRef<'a, T> {
    fn tensor(name: String, t: &'a mut Tensor<T>) -> Self {
        let shape = t.shape().to_vec();
        Self {
            name,
            kind: ParamKind::Weight,
            shape,
            data: t.data_mut(),
        }
    }

    fn vector(name: String, kind: ParamKind, v: &'a mut [T]) -> Self {
        Self {
            name,
            kind,
            shape: vec![v.len()],
            data: v,
        }
    }
}

fn visit_bn<'a, T: Scalar>(bn: &'a mut BatchNorm<T>, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
    out.push(ParamRef::vector(
        format!("{prefix}.gamma"),
        ParamKind::BnAffine,
        &mut bn.gamma,
    ));
    out.push(ParamRef::vector(
        format!("{prefix}.beta"),
        ParamKind::BnAffine,
        &mut bn.beta,
    ));
    out.push(ParamRef::vector(
        format!("{prefix}.running_mean"),
        ParamKind::BnStat,
        &mut bn.running_mean,
    ));
    out.push(ParamRef::vector(
        format!("{prefix}.running_var"),
        ParamKind::BnStat,
        &mut bn.running_var,
    ));
}

/// A convolution followed by batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<T> {
    pub op: BlockOp<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Debug, Clone)]
struct LayerTrace<T> {
    input: Tensor<T>,
    op: OpTrace<T>,
    bn: BnCache<T>,
    out: Tensor<T>,
}

impl<T: Scalar> ConvBn<T> {
    fn new(op: BlockOp<T>, channels: usize) -> Self {
        Self {
            op,
            bn: BatchNorm::new(channels),
        }
    }

    fn forward(
        &self,
        x: &Tensor<T>,
        mode: BnMode,
        with_relu: bool,
    ) -> Result<(Tensor<T>, LayerTrace<T>)> {
        let (y, op) = self.op.forward(x)?;
        let (z, bn) = batchnorm_forward(&y, &self.bn, mode)?;
        let out = if with_relu { relu(&z) } else { z };
        Ok((
            out.clone(),
            LayerTrace {
                input: x.clone(),
                op,
                bn,
                out,
            },
        ))
    }

    fn backward(
        &self,
        t: &LayerTrace<T>,
        g: &Tensor<T>,
        with_relu: bool,
        grad: &mut Self,
    ) -> Result<Tensor<T>> {
        let g = if with_relu {
            relu_backward(&t.out, g)?
        } else {
            g.clone()
        };
        let (gy, g_gamma, g_beta) = batchnorm_backward(&t.bn, &self.bn, &g)?;
        grad.bn.gamma = g_gamma;
        grad.bn.beta = g_beta;
        self.op.backward(&t.input, &t.op, &gy, &mut grad.op)
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        self.op.visit(prefix, out);
        visit_bn(&mut self.bn, &format!("{prefix}.bn"), out);
    }
}

/// One block, or two blocks wrapped by a skip connection.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Unit<T> {
    Plain(ConvBn<T>),
    Residual {
        first: ConvBn<T>,
        second: ConvBn<T>,
        /// 1×1 strided projection used where the shape changes.
        projection: Option<ConvBn<T>>,
    },
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum UnitTrace<T> {
    Plain(LayerTrace<T>),
    Residual {
        first: LayerTrace<T>,
        second: LayerTrace<T>,
        projection: Option<LayerTrace<T>>,
        out: Tensor<T>,
    },
}

impl<T: Scalar> Unit<T> {
    fn forward(&self, x: &Tensor<T>, mode: BnMode) -> Result<(Tensor<T>, UnitTrace<T>)> {
        match self {
            Unit::Plain(layer) => {
                let (y, t) = layer.forward(x, mode, true)?;
                Ok((y, UnitTrace::Plain(t)))
            }
            Unit::Residual {
                first,
                second,
                projection,
            } => {
                let (a, t1) = first.forward(x, mode, true)?;
                let (mut b, t2) = second.forward(&a, mode, false)?;
                let tp = match projection {
                    Some(p) => {
                        let (s, tp) = p.forward(x, mode, false)?;
                        b.add_assign(&s)?;
                        Some(tp)
                    }
                    None => {
                        b.add_assign(x)?;
                        None
                    }
                };
                let out = relu(&b);
                Ok((
                    out.clone(),
                    UnitTrace::Residual {
                        first: t1,
                        second: t2,
                        projection: tp,
                        out,
                    },
                ))
            }
        }
    }

    fn backward(&self, trace: &UnitTrace<T>, g: &Tensor<T>, grad: &mut Self) -> Result<Tensor<T>> {
        match (self, trace, grad) {
            (Unit::Plain(layer), UnitTrace::Plain(t), Unit::Plain(gl)) => {
                layer.backward(t, g, true, gl)
            }
            (
                Unit::Residual {
                    first,
                    second,
                    projection,
                },
                UnitTrace::Residual {
                    first: t1,
                    second: t2,
                    projection: tp,
                    out,
                },
                Unit::Residual {
                    first: g1,
                    second: g2,
                    projection: gp,
                },
            ) => {
                let g_sum = relu_backward(out, g)?;
                let g_skip = match (projection, tp, gp) {
                    (Some(p), Some(tp), Some(gp)) => p.backward(tp, &g_sum, false, gp)?,
                    (None, None, None) => g_sum.clone(),
                    _ => {
                        return Err(Error::shape(
                            "projection layer, trace and gradient disagree",
                        ))
                    }
                };
                let g_a = second.backward(t2, &g_sum, false, g2)?;
                let mut g_x = first.backward(t1, &g_a, true, g1)?;
                g_x.add_assign(&g_skip)?;
                Ok(g_x)
            }
            _ => Err(Error::shape("unit, trace and gradient kinds disagree")),
        }
    }

    fn update_running(&mut self, trace: &UnitTrace<T>) {
        match (self, trace) {
            (Unit::Plain(l), UnitTrace::Plain(t)) => l.bn.update_running(&t.bn),
            (
                Unit::Residual {
                    first,
                    second,
                    projection,
                },
                UnitTrace::Residual {
                    first: t1,
                    second: t2,
                    projection: tp,
                    ..
                },
            ) => {
                first.bn.update_running(&t1.bn);
                second.bn.update_running(&t2.bn);
                if let (Some(p), Some(tp)) = (projection, tp) {
                    p.bn.update_running(&tp.bn);
                }
            }
            _ => {}
        }
    }

    fn visit<'a>(&'a mut self, prefix: &str, out: &mut Vec<ParamRef<'a, T>>) {
        match self {
            Unit::Plain(l) => l.visit(prefix, out),
            Unit::Residual {
                first,
                second,
                projection,
            } => {
                first.visit(&format!("{prefix}.first"), out);
                second.visit(&format!("{prefix}.second"), out);
                if let Some(p) = projection {
                    p.visit(&format!("{prefix}.projection"), out);
                }
            }
        }
    }
}

/// Stem convolution, units, global average pooling, and a linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub arch: ArchSpec,
    pub stem: ConvBn<T>,
    pub units: Vec<Unit<T>>,
    pub fc: Linear<T>,
}

/// Intermediates of a forward pass, consumed by [`Network::backward`].
#[derive(Debug, Clone)]
pub struct NetTrace<T> {
    stem: LayerTrace<T>,
    units: Vec<UnitTrace<T>>,
    last_shape: [usize; 4],
    features: Tensor<T>,
}

/// He-initialized network for `arch`; every random draw derives from `seed`.
pub fn build_network<T: Scalar>(arch: &ArchSpec, seed: u64) -> Result<Network<T>> {
    arch.validate()?;
    let mut layer = 0u64;
    let mut next_rng = || {
        layer += 1;
        CounterRng::derive(seed, &[INIT_TAG, layer])
    };
    let stem_w = arch.stem_width();
    let stem = ConvBn::new(
        BlockOp::init(
            &BlockShape::Conv {
                c_in: arch.in_channels,
                c_out: stem_w,
                k: arch.kernel,
                stride: 1,
            },
            &mut next_rng(),
        ),
        stem_w,
    );
    let mut units = Vec::new();
    for (s, st) in arch.stages.iter().enumerate() {
        if arch.identity_mappings {
            for pair in 0..st.blocks / 2 {
                let first_shape = arch.block_shape(s, pair == 0);
                let second_shape = arch.block_shape(s, false);
                let c_out = first_shape.out_channels();
                let first = ConvBn::new(BlockOp::init(&first_shape, &mut next_rng()), c_out);
                let second = ConvBn::new(BlockOp::init(&second_shape, &mut next_rng()), c_out);
                let projection = (first_shape.in_channels() != c_out || first_shape.stride() != 1)
                    .then(|| {
                        let shape = BlockShape::Conv {
                            c_in: first_shape.in_channels(),
                            c_out,
                            k: 1,
                            stride: first_shape.stride(),
                        };
                        ConvBn::new(BlockOp::init(&shape, &mut next_rng()), c_out)
                    });
                units.push(Unit::Residual {
                    first,
                    second,
                    projection,
                });
            }
        } else {
            for b in 0..st.blocks {
                let shape = arch.block_shape(s, b == 0);
                units.push(Unit::Plain(ConvBn::new(
                    BlockOp::init(&shape, &mut next_rng()),
                    shape.out_channels(),
                )));
            }
        }
    }
    let features = arch.final_width();
    let mut rng = next_rng();
    let std = (1.0 / features as f64).sqrt();
    let fc = Linear {
        weight: Matrix::from_fn(arch.n_classes, features, |_, _| {
            T::of_f64(std * rng.normal())
        }),
        bias: vec![T::zero(); arch.n_classes],
    };
    Ok(Network {
        arch: arch.clone(),
        stem,
        units,
        fc,
    })
}

impl<T: Scalar> Network<T> {
    pub fn forward(&self, x: &Tensor<T>, mode: BnMode) -> Result<(Matrix<T>, NetTrace<T>)> {
        if x.c() != self.arch.in_channels {
            return Err(Error::shape(format!(
                "network expects {} input channels, got {}",
                self.arch.in_channels,
                x.c()
            )));
        }
        let (mut h, stem) = self.stem.forward(x, mode, true)?;
        let mut units = Vec::with_capacity(self.units.len());
        for unit in &self.units {
            let (next, t) = unit.forward(&h, mode)?;
            units.push(t);
            h = next;
        }
        let features = global_avg_pool(&h);
        let logits = fully_connected(&features, &self.fc)?;
        Ok((
            logits,
            NetTrace {
                stem,
                units,
                last_shape: h.shape(),
                features,
            },
        ))
    }

    /// Inference logits (running batch-norm statistics).
    pub fn logits(&self, x: &Tensor<T>) -> Result<Matrix<T>> {
        Ok(self.forward(x, BnMode::Eval)?.0)
    }

    pub fn predict(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.logits(x)?))
    }

    /// Gradients of every trainable tensor, returned in a network of the same
    /// shape. Running statistics of the result are zero.
    pub fn backward(&self, trace: &NetTrace<T>, grad_logits: &Matrix<T>) -> Result<Network<T>> {
        let mut grad = self.zeros_like();
        let (g_feat, gw, gb) = fully_connected_backward(&trace.features, &self.fc, grad_logits)?;
        grad.fc.weight = gw;
        grad.fc.bias = gb;
        let mut g = global_avg_pool_backward(trace.last_shape, &g_feat)?;
        for ((unit, t), gu) in self
            .units
            .iter()
            .zip(&trace.units)
            .zip(grad.units.iter_mut())
            .rev()
        {
            g = unit.backward(t, &g, gu)?;
        }
        self.stem.backward(&trace.stem, &g, true, &mut grad.stem)?;
        Ok(grad)
    }

    /// Folds the batch statistics of a train-mode pass into the running ones.
    pub fn update_running_stats(&mut self, trace: &NetTrace<T>) {
        self.stem.bn.update_running(&trace.stem.bn);
        for (unit, t) in self.units.iter_mut().zip(&trace.units) {
            unit.update_running(t);
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.tensors_mut() {
            p.data.fill(T::zero());
        }
        z
    }

    /// Every stored tensor in a fixed order: stem, units, classifier.
    pub fn tensors_mut(&mut self) -> Vec<ParamRef<'_, T>> {
        let mut out = Vec::new();
        self.stem.visit("stem", &mut out);
        for (i, unit) in self.units.iter_mut().enumerate() {
            unit.visit(&format!("units.{i}"), &mut out);
        }
        let shape = vec![self.fc.weight.rows(), self.fc.weight.cols()];
        out.push(ParamRef {
            name: "fc.weight".into(),
            kind: ParamKind::Weight,
            shape,
            data: self.fc.weight.data_mut(),
        });
        out.push(ParamRef::vector(
            "fc.bias".into(),
            ParamKind::Bias,
            &mut self.fc.bias,
        ));
        out
    }

    /// Trainable scalars (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.clone()
            .tensors_mut()
            .iter()
            .filter(|p| p.kind.trainable())
            .map(|p| p.data.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::network_budget;
    use crate::layers::softmax_cross_entropy;
    use crate::net::arch::{BlockType, StageSpec, WidenRule};

    fn single_stage(
        block_type: BlockType,
        l: usize,
        m: usize,
        blocks: usize,
        ident: bool,
    ) -> ArchSpec {
        ArchSpec {
            name: "tiny".into(),
            block_type,
            in_channels: 2,
            kernel: 3,
            stages: vec![StageSpec { blocks, l, m }],
            widen_rule: WidenRule::DoubleM,
            identity_mappings: ident,
            n_classes: 3,
        }
    }

    #[test]
    fn param_count_matches_budget() {
        for arch in [
            ArchSpec::igc(4, 8, 2),
            ArchSpec::igc(24, 2, 2).with_identity_mappings(true),
            ArchSpec::regconv(16, 1),
            ArchSpec::sumfusion(2),
            ArchSpec::gpc(2, 4, 1),
            ArchSpec::igc(4, 8, 0),
        ] {
            let net = build_network::<f32>(&arch, 1).unwrap();
            let budget = network_budget(&arch, 32, arch.n_classes).unwrap();
            assert_eq!(
                net.param_count() as u64,
                budget.total_params,
                "{}",
                arch.name
            );
        }
    }

    #[test]
    fn output_shapes_and_degenerate_depth() {
        let mut rng = CounterRng::new(3);
        for arch in [
            ArchSpec::igc(4, 8, 2),
            ArchSpec::regconv(8, 0),
            ArchSpec::sumfusion(1),
        ] {
            let net = build_network::<f64>(&arch, 2).unwrap();
            let x = Tensor::from_fn([2, 3, 8, 8], |_| rng.normal());
            let logits = net.logits(&x).unwrap();
            assert_eq!((logits.rows(), logits.cols()), (2, 10));
        }
    }

    #[test]
    fn zeroed_residual_branches_reduce_to_stem_and_head() {
        let arch = single_stage(BlockType::Igc, 2, 3, 4, true);
        let mut net = build_network::<f64>(&arch, 4).unwrap();
        for unit in &mut net.units {
            let Unit::Residual { first, second, .. } = unit else {
                panic!()
            };
            for layer in [first, second] {
                let BlockOp::Igc { params, .. } = &mut layer.op else {
                    panic!()
                };
                params.primary.data_mut().fill(0.0);
                params.secondary.data_mut().fill(0.0);
            }
        }
        let bare = Network {
            arch: single_stage(BlockType::Igc, 2, 3, 0, true),
            stem: net.stem.clone(),
            units: vec![],
            fc: net.fc.clone(),
        };
        let mut rng = CounterRng::new(5);
        let x = Tensor::from_fn([3, 2, 5, 5], |_| rng.normal());
        assert_eq!(net.logits(&x).unwrap(), bare.logits(&x).unwrap());
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let a = build_network::<f64>(&single_stage(BlockType::Igc, 2, 2, 2, false), 1).unwrap();
        let b = build_network::<f64>(&single_stage(BlockType::Igc, 2, 2, 2, true), 1).unwrap();
        let x = Tensor::from_fn([2, 2, 4, 4], |[i, c, y, z]| (i + c + y * z) as f64 * 0.1);
        let (logits, trace) = b.forward(&x, BnMode::Train).unwrap();
        let (_, g) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
        assert!(a.backward(&trace, &g).is_err());
    }

    #[test]
    fn tensor_names_are_unique() {
        let mut net =
            build_network::<f32>(&ArchSpec::igc(4, 8, 2).with_identity_mappings(true), 1).unwrap();
        let names: Vec<String> = net.tensors_mut().into_iter().map(|p| p.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert!(names.contains(&"units.1.projection.conv".to_string()));
    }
}
