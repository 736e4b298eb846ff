//! Central finite differences for checking hand-written backward passes.

use crate::block::{
    forward_traced, gpc_backward_traced, gpc_forward_traced, igc_block_backward, igc_block_forward,
    GpcParams, IgcBlockParams, IgcConfig, SpatialPlacement,
};
use crate::conv::{group_conv2d_backward, group_conv2d_forward};
use crate::error::Result;
use crate::layers::{
    batchnorm_backward, batchnorm_forward, fully_connected, fully_connected_backward,
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, softmax_cross_entropy,
    BatchNorm, BnMode, Linear,
};
use crate::net::Network;
use crate::rng::CounterRng;
use crate::tensor::{Matrix, Tensor};

/// Step of the checks in this module. Large enough that rounding in sums of
/// a few hundred terms stays below `1e-7` relative, small enough that the
/// `h²` truncation term of the smooth ops is negligible.
pub const STEP: f64 = 1e-4;
/// Smallest distance from zero of a ReLU input in the op checks.
const KINK_MARGIN: f64 = 1e-2;

/// Step of [`network_gradient_error`]. The loss is `O(1)`, so rounding is
/// small, while ReLU kinks inside the network call for a short step.
pub const NET_STEP: f64 = 1e-5;

/// Denominator floor of [`relative_error`]. Gradient components smaller than
/// this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// `(f(p + h·e_i) − f(p − h·e_i)) / 2h` for every coordinate `i`.
pub fn central_difference(point: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = point.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let plus = f(&p);
            p[i] = orig - h;
            let minus = f(&p);
            p[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Largest element-wise [`relative_error`]; panics on length mismatch.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}

/// Worst error of `analytic[i]` against central differences of `objective`
/// with respect to `args[i]`, over all arguments.
pub fn gradient_error(
    args: &[&[f64]],
    analytic: &[&[f64]],
    objective: impl Fn(&[Vec<f64>]) -> f64,
) -> f64 {
    assert_eq!(
        args.len(),
        analytic.len(),
        "one analytic gradient per argument"
    );
    let mut current: Vec<Vec<f64>> = args.iter().map(|a| a.to_vec()).collect();
    let mut worst = 0.0_f64;
    for i in 0..args.len() {
        let numeric = central_difference(args[i], STEP, |v| {
            current[i].copy_from_slice(v);
            let out = objective(&current);
            current[i].copy_from_slice(args[i]);
            out
        });
        worst = worst.max(max_relative_error(analytic[i], &numeric));
    }
    worst
}

fn random(shape: [usize; 4], rng: &mut CounterRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.normal())
}

fn with(t: &Tensor<f64>, v: &[f64]) -> Tensor<f64> {
    Tensor::new(t.shape(), v.to_vec()).expect("same length")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_bn(channels: usize, rng: &mut CounterRng) -> BatchNorm<f64> {
    let mut bn = BatchNorm::new(channels);
    for c in 0..channels {
        bn.gamma[c] = 1.0 + 0.3 * rng.normal();
        bn.beta[c] = 0.5 + 0.1 * rng.normal();
        bn.running_mean[c] = 0.1 * rng.normal();
        bn.running_var[c] = 1.0 + 0.2 * rng.uniform();
    }
    bn
}

/// Worst finite-difference error of every backward op on small random
/// instances, one `(op, error)` pair per check. Each op is probed through
/// the scalar `⟨r, op(·)⟩` with a random `r`.
pub fn op_gradient_errors(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    let mut rng = CounterRng::derive(seed, &[0x4752_4144]);

    for (groups, stride, pad, k) in [(1, 1, 1, 3), (1, 2, 1, 3), (2, 1, 1, 3), (3, 2, 0, 1)] {
        let x = random([2, 6, 5, 5], &mut rng);
        let w = random([6, 6 / groups, k, k], &mut rng);
        let r = random(
            group_conv2d_forward(&x, &w, groups, stride, pad)?.shape(),
            &mut rng,
        );
        let (gx, gw) = group_conv2d_backward(&x, &w, &r, groups, stride, pad)?;
        let err = gradient_error(&[x.data(), w.data()], &[gx.data(), gw.data()], |v| {
            let y = group_conv2d_forward(&with(&x, &v[0]), &with(&w, &v[1]), groups, stride, pad)
                .unwrap();
            dot(y.data(), r.data())
        });
        out.push((format!("conv k={k} groups={groups} stride={stride}"), err));
    }

    for mode in [BnMode::Train, BnMode::Eval] {
        let x = random([3, 4, 3, 3], &mut rng);
        let bn = random_bn(4, &mut rng);
        let r = random(x.shape(), &mut rng);
        let (_, cache) = batchnorm_forward(&x, &bn, mode)?;
        let (gx, gg, gb) = batchnorm_backward(&cache, &bn, &r)?;
        let err = gradient_error(
            &[x.data(), &bn.gamma, &bn.beta],
            &[gx.data(), &gg, &gb],
            |v| {
                let mut b = bn.clone();
                b.gamma = v[1].clone();
                b.beta = v[2].clone();
                dot(
                    batchnorm_forward(&with(&x, &v[0]), &b, mode)
                        .unwrap()
                        .0
                        .data(),
                    r.data(),
                )
            },
        );
        out.push((format!("batch norm {mode:?}"), err));
    }

    let x = random([2, 3, 4, 4], &mut rng).map(|v| {
        if v.abs() < KINK_MARGIN {
            v + 2.0 * KINK_MARGIN
        } else {
            v
        }
    });
    let r = random(x.shape(), &mut rng);
    let gx = relu_backward(&relu(&x), &r)?;
    let err = gradient_error(&[x.data()], &[gx.data()], |v| {
        dot(relu(&with(&x, &v[0])).data(), r.data())
    });
    out.push(("relu".into(), err));

    let x = random([2, 3, 4, 4], &mut rng);
    let r = random([2, 3, 1, 1], &mut rng);
    let gx = global_avg_pool_backward(x.shape(), &r)?;
    let err = gradient_error(&[x.data()], &[gx.data()], |v| {
        dot(global_avg_pool(&with(&x, &v[0])).data(), r.data())
    });
    out.push(("global average pool".into(), err));

    let x = random([3, 5, 1, 1], &mut rng);
    let fc = Linear {
        weight: Matrix::from_fn(4, 5, |_, _| rng.normal()),
        bias: (0..4).map(|_| rng.normal()).collect(),
    };
    let r = Matrix::from_fn(3, 4, |_, _| rng.normal());
    let (gx, gw, gb) = fully_connected_backward(&x, &fc, &r)?;
    let err = gradient_error(
        &[x.data(), fc.weight.data(), &fc.bias],
        &[gx.data(), gw.data(), &gb],
        |v| {
            let f = Linear {
                weight: Matrix::new(4, 5, v[1].clone()).unwrap(),
                bias: v[2].clone(),
            };
            dot(
                fully_connected(&with(&x, &v[0]), &f).unwrap().data(),
                r.data(),
            )
        },
    );
    out.push(("fully connected".into(), err));

    let logits = Matrix::from_fn(3, 5, |_, _| rng.normal());
    let labels = [0, 3, 4];
    let (_, g) = softmax_cross_entropy(&logits, &labels)?;
    let err = gradient_error(&[logits.data()], &[g.data()], |v| {
        softmax_cross_entropy(&Matrix::new(3, 5, v[0].clone()).unwrap(), &labels)
            .unwrap()
            .0
    });
    out.push(("softmax cross-entropy".into(), err));

    let configs = [
        IgcConfig::new(2, 3, 3),
        IgcConfig::new(3, 2, 3).with_stride(2),
        IgcConfig::new(2, 4, 3).with_m_in(2).with_stride(2),
        IgcConfig::new(2, 2, 3).with_bn_relu(true),
        IgcConfig::new(3, 2, 3).with_placement(SpatialPlacement::Secondary),
    ];
    for cfg in configs {
        // redraw until no ReLU input sits within reach of the step
        let (p, x) = loop {
            let mut p = IgcBlockParams::he_init(&cfg, &mut rng);
            if let Some(bn) = p.bn.as_mut() {
                *bn = random_bn(bn.channels(), &mut rng);
            }
            let x = random([2, cfg.in_channels(), 5, 5], &mut rng);
            let clear = match &p.bn {
                Some(bn) => {
                    let (raw, _) = forward_traced(&x, &cfg, &p)?;
                    let (pre, _) = batchnorm_forward(&raw, bn, BnMode::Eval)?;
                    pre.data().iter().all(|v| v.abs() > KINK_MARGIN)
                }
                None => true,
            };
            if clear {
                break (p, x);
            }
        };
        let r = random(igc_block_forward(&x, &cfg, &p)?.shape(), &mut rng);
        let (gx, gp) = igc_block_backward(&x, &cfg, &p, &r)?;
        let (bn0, gbn) = match (&p.bn, &gp.bn) {
            (Some(b), Some(g)) => (b.clone(), g.clone()),
            _ => (BatchNorm::new(0), BatchNorm::new(0)),
        };
        let err = gradient_error(
            &[
                x.data(),
                p.primary.data(),
                p.secondary.data(),
                &bn0.gamma,
                &bn0.beta,
            ],
            &[
                gx.data(),
                gp.primary.data(),
                gp.secondary.data(),
                &gbn.gamma,
                &gbn.beta,
            ],
            |v| {
                let mut q = p.clone();
                q.primary = with(&p.primary, &v[1]);
                q.secondary = with(&p.secondary, &v[2]);
                if let Some(bn) = q.bn.as_mut() {
                    bn.gamma = v[3].clone();
                    bn.beta = v[4].clone();
                }
                dot(
                    igc_block_forward(&with(&x, &v[0]), &cfg, &q)
                        .unwrap()
                        .data(),
                    r.data(),
                )
            },
        );
        out.push((
            format!(
                "IGC block L={} M={} stride={} bn={} placement={:?}",
                cfg.l, cfg.m, cfg.stride, cfg.with_bn_relu, cfg.placement
            ),
            err,
        ));
    }

    let cfg = IgcConfig::new(2, 3, 3);
    let p = GpcParams::he_init(&cfg, &mut rng);
    let x = random([2, 6, 4, 4], &mut rng);
    let (y, mid) = gpc_forward_traced(&x, &cfg, &p)?;
    let r = random(y.shape(), &mut rng);
    let (gx, gpr, gpw) = gpc_backward_traced(&x, &mid, &cfg, &p, &r)?;
    let err = gradient_error(
        &[x.data(), p.primary.data(), p.pointwise.data()],
        &[gx.data(), gpr.data(), gpw.data()],
        |v| {
            let q = GpcParams {
                primary: with(&p.primary, &v[1]),
                pointwise: with(&p.pointwise, &v[2]),
            };
            dot(
                gpc_forward_traced(&with(&x, &v[0]), &cfg, &q)
                    .unwrap()
                    .0
                    .data(),
                r.data(),
            )
        },
    );
    out.push(("GPC block L=2 M=3".into(), err));
    Ok(out)
}

/// Worst finite-difference error of [`Network::backward`] for the mean
/// cross-entropy on `(x, labels)` with batch statistics, over every
/// trainable scalar.
pub fn network_gradient_error(
    net: &Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
) -> Result<f64> {
    let loss = |n: &Network<f64>| -> f64 {
        let (logits, _) = n
            .forward(x, BnMode::Train)
            .expect("shapes checked by the analytic pass");
        softmax_cross_entropy(&logits, labels)
            .expect("labels checked by the analytic pass")
            .0
    };
    let (logits, trace) = net.forward(x, BnMode::Train)?;
    let (_, g_logits) = softmax_cross_entropy(&logits, labels)?;
    let mut grads = net.backward(&trace, &g_logits)?;
    let analytic: Vec<Vec<f64>> = grads
        .tensors_mut()
        .into_iter()
        .map(|p| {
            if p.kind.trainable() {
                p.data.to_vec()
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for (t, want) in analytic.iter().enumerate() {
        if want.is_empty() {
            continue;
        }
        let start = probe.tensors_mut()[t].data.to_vec();
        let numeric = central_difference(&start, NET_STEP, |v| {
            probe.tensors_mut()[t].data.copy_from_slice(v);
            let l = loss(&probe);
            probe.tensors_mut()[t].data.copy_from_slice(&start);
            l
        });
        worst = worst.max(max_relative_error(want, &numeric));
    }
    Ok(worst)
}
