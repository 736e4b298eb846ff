//! Spatial convolution lowered to matrix products.
//!
//! `im2col` rows are ordered `(c, dy, dx)` and columns `(n, y_out, x_out)`,
//! both lexicographic. Out-of-bounds taps read as zero. The kernel of a
//! convolution is a tensor `(C_out, C_in / groups, k, k)`; flattened per output
//! channel it is a row of the same `(c, dy, dx)` ordering, so a convolution is
//! `kernel_matrix × im2col(input)`.
//!
//! Output sizes use floor division: `(H + 2·pad − k) / stride + 1`. The kernel
//! must fit inside the padded input.

use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::par;
use crate::tensor::{Matrix, Scalar, Tensor};

pub fn output_size(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::Geometry(format!(
            "kernel {k} and stride {stride} must be positive"
        )));
    }
    if len + 2 * pad < k {
        return Err(Error::Geometry(format!(
            "kernel {k} does not fit input {len} with padding {pad}"
        )));
    }
    Ok((len + 2 * pad - k) / stride + 1)
}

/// Padding that keeps the map size at stride 1.
pub fn same_pad(k: usize) -> usize {
    k / 2
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Result<Self> {
        let ho = output_size(h, k, stride, pad)?;
        let wo = output_size(w, k, stride, pad)?;
        Ok(Self {
            c,
            h,
            w,
            k,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn positions(&self) -> usize {
        self.ho * self.wo
    }

    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }

    /// 1×1, stride 1, no padding: the input already is its own column matrix.
    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// One sample `(c, h, w)` into a `(c·k·k) × (ho·wo)` block.
fn im2col_sample<T: Scalar>(x: &[T], g: &Geometry, out: &mut [T]) {
    let p = g.positions();
    let mut row = 0;
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for dy in 0..g.k {
            for dx in 0..g.k {
                let dst = &mut out[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + dy) as isize - g.pad as isize;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + dx) as isize - g.pad as isize;
                        dst[oy * g.wo + ox] =
                            if iy >= 0 && (iy as usize) < g.h && ix >= 0 && (ix as usize) < g.w {
                                plane[iy as usize * g.w + ix as usize]
                            } else {
                                T::zero()
                            };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col_sample`]: scatters-adds columns back into `gx`.
fn col2im_sample<T: Scalar>(cols: &[T], g: &Geometry, gx: &mut [T]) {
    let p = g.positions();
    let mut row = 0;
    for ci in 0..g.c {
        let plane = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for dy in 0..g.k {
            for dx in 0..g.k {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + dy) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + dx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            plane[iy as usize * g.w + ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Lowers a batch to a `(C·k·k) × (N·H_out·W_out)` matrix.
pub fn im2col<T: Scalar>(
    input: &Tensor<T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<Matrix<T>> {
    let [n, c, h, w] = input.shape();
    let g = Geometry::new(c, h, w, k, stride, pad)?;
    let p = g.positions();
    let rows = g.patch();
    let mut out = Matrix::zeros(rows, n * p);
    let mut block = vec![T::zero(); rows * p];
    for i in 0..n {
        im2col_sample(input.sample(i), &g, &mut block);
        for r in 0..rows {
            let dst = r * n * p + i * p;
            out.data_mut()[dst..dst + p].copy_from_slice(&block[r * p..(r + 1) * p]);
        }
    }
    Ok(out)
}

struct GroupShape {
    groups: usize,
    cin_g: usize,
    cout_g: usize,
    geom: Geometry,
}

fn group_shape<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    groups: usize,
    stride: usize,
    pad: usize,
) -> Result<GroupShape> {
    let [_, c_in, h, w] = input.shape();
    let [c_out, kc, kh, kw] = kernel.shape();
    if kh != kw {
        return Err(Error::Shape(format!(
            "kernel must be square, got {kh}x{kw}"
        )));
    }
    if groups == 0 || c_in % groups != 0 || c_out % groups != 0 {
        return Err(Error::Config(format!(
            "{c_in} input / {c_out} output channels cannot be split into {groups} groups"
        )));
    }
    let cin_g = c_in / groups;
    if kc != cin_g {
        return Err(Error::Shape(format!(
            "kernel expects {kc} input channels per group, input provides {cin_g} (shape {:?}, kernel {:?}, groups {groups})",
            input.shape(),
            kernel.shape()
        )));
    }
    Ok(GroupShape {
        groups,
        cin_g,
        cout_g: c_out / groups,
        geom: Geometry::new(cin_g, h, w, kh, stride, pad)?,
    })
}

/// Grouped convolution: input channel group `g` feeds only output group `g`.
pub fn group_conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    groups: usize,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let gs = group_shape(input, kernel, groups, stride, pad)?;
    let n = input.n();
    let c_out = kernel.n();
    let p = gs.geom.positions();
    let patch = gs.geom.patch();
    let in_group_len = gs.cin_g * gs.geom.h * gs.geom.w;
    let mut out = Tensor::zeros([n, c_out, gs.geom.ho, gs.geom.wo]);
    par::for_each_chunk_mut(out.data_mut(), c_out * p, |i, dst| {
        let x = input.sample(i);
        let mut cols = if gs.geom.is_pointwise() {
            Vec::new()
        } else {
            vec![T::zero(); patch * p]
        };
        for g in 0..gs.groups {
            let xg = &x[g * in_group_len..(g + 1) * in_group_len];
            let kg = &kernel.data()[g * gs.cout_g * patch..(g + 1) * gs.cout_g * patch];
            let og = &mut dst[g * gs.cout_g * p..(g + 1) * gs.cout_g * p];
            let cols: &[T] = if gs.geom.is_pointwise() {
                xg
            } else {
                im2col_sample(xg, &gs.geom, &mut cols);
                &cols
            };
            gemm_nn(gs.cout_g, patch, p, kg, cols, og);
        }
    });
    Ok(out)
}

/// Gradients of a grouped convolution with respect to input and kernel.
pub fn group_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    groups: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let gs = group_shape(input, kernel, groups, stride, pad)?;
    let n = input.n();
    let c_out = kernel.n();
    grad_out.expect_shape([n, c_out, gs.geom.ho, gs.geom.wo], "conv backward grad_out")?;
    let p = gs.geom.positions();
    let patch = gs.geom.patch();
    let in_group_len = gs.cin_g * gs.geom.h * gs.geom.w;
    let k_group_len = gs.cout_g * patch;

    let per_sample = par::map_range(n, |i| {
        let x = input.sample(i);
        let go = grad_out.sample(i);
        let mut gx = vec![T::zero(); input.c() * gs.geom.h * gs.geom.w];
        let mut gk = vec![T::zero(); kernel.len()];
        let mut cols = vec![T::zero(); patch * p];
        let mut gcols = vec![T::zero(); patch * p];
        for g in 0..gs.groups {
            let xg = &x[g * in_group_len..(g + 1) * in_group_len];
            let kg = &kernel.data()[g * k_group_len..(g + 1) * k_group_len];
            let gog = &go[g * gs.cout_g * p..(g + 1) * gs.cout_g * p];
            let gxg = &mut gx[g * in_group_len..(g + 1) * in_group_len];
            let gkg = &mut gk[g * k_group_len..(g + 1) * k_group_len];
            if gs.geom.is_pointwise() {
                gemm_nt(gs.cout_g, p, patch, gog, xg, gkg);
                gemm_tn(patch, gs.cout_g, p, kg, gog, gxg);
            } else {
                im2col_sample(xg, &gs.geom, &mut cols);
                gemm_nt(gs.cout_g, p, patch, gog, &cols, gkg);
                gemm_tn(patch, gs.cout_g, p, kg, gog, &mut gcols);
                col2im_sample(&gcols, &gs.geom, gxg);
            }
        }
        (gx, gk)
    });

    let mut grad_kernel = Tensor::zeros(kernel.shape());
    let mut gx_data = Vec::with_capacity(input.len());
    for (gx, gk) in per_sample {
        gx_data.extend_from_slice(&gx);
        grad_kernel
            .data_mut()
            .iter_mut()
            .zip(&gk)
            .for_each(|(a, &b)| *a += b);
    }
    Ok((Tensor::new(input.shape(), gx_data)?, grad_kernel))
}

/// Dense (single-group) convolution, bias-free.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    group_conv2d_forward(input, kernel, 1, stride, pad)
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    group_conv2d_backward(input, kernel, grad_out, 1, stride, pad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error};
    use crate::rng::CounterRng;

    fn random(shape: [usize; 4], rng: &mut CounterRng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.normal())
    }

    /// Nested-loop grouped convolution used as the oracle.
    fn direct(
        x: &Tensor<f64>,
        k: &Tensor<f64>,
        groups: usize,
        stride: usize,
        pad: usize,
    ) -> Tensor<f64> {
        let [n, c, h, w] = x.shape();
        let [co, cig, ks, _] = k.shape();
        let cog = co / groups;
        let ho = (h + 2 * pad - ks) / stride + 1;
        let wo = (w + 2 * pad - ks) / stride + 1;
        assert_eq!(cig * groups, c);
        let mut out = Tensor::zeros([n, co, ho, wo]);
        for i in 0..n {
            for o in 0..co {
                let g = o / cog;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cig {
                            for dy in 0..ks {
                                for dx in 0..ks {
                                    let iy = (oy * stride + dy) as isize - pad as isize;
                                    let ix = (ox * stride + dx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                        continue;
                                    }
                                    acc += k.get([o, ci, dy, dx])
                                        * x.get([i, g * cig + ci, iy as usize, ix as usize]);
                                }
                            }
                        }
                        out.set([i, o, oy, ox], acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_single_value() {
        let x = Tensor::new([1, 1, 1, 1], vec![4.5]).unwrap();
        let m = im2col(&x, 1, 1, 0).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.data(), &[4.5]);
    }

    #[test]
    fn im2col_column_sums_count_in_bounds_taps() {
        let x = Tensor::<f64>::full([1, 1, 3, 3], 1.0);
        let m = im2col(&x, 3, 1, 1).unwrap();
        assert_eq!((m.rows(), m.cols()), (9, 9));
        let sums: Vec<f64> = (0..9).map(|c| (0..9).map(|r| m.get(r, c)).sum()).collect();
        assert_eq!(sums, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn im2col_matmul_reconstructs_strided_convolution() {
        let mut rng = CounterRng::new(21);
        let x = random([2, 3, 5, 5], &mut rng);
        let k = random([4, 3, 3, 3], &mut rng);
        let cols = im2col(&x, 3, 2, 1).unwrap();
        let kmat = Matrix::new(4, 27, k.data().to_vec()).unwrap();
        let prod = crate::linalg::matmul(&kmat, &cols).unwrap();
        let oracle = direct(&x, &k, 1, 2, 1);
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for o in 0..4 {
                for p in 0..9 {
                    let v = prod.get(o, i * 9 + p);
                    worst = worst.max((v - oracle.get([i, o, p / 3, p % 3])).abs());
                }
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn non_fitting_kernel_is_a_geometry_error() {
        let x = Tensor::<f64>::zeros([1, 1, 2, 2]);
        assert!(matches!(im2col(&x, 5, 1, 0), Err(Error::Geometry(_))));
        assert!(matches!(im2col(&x, 1, 0, 0), Err(Error::Geometry(_))));
    }

    #[test]
    fn scalar_convolution() {
        let x = Tensor::new([1, 1, 1, 1], vec![2.0]).unwrap();
        let k = Tensor::new([1, 1, 1, 1], vec![3.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &k, 1, 0).unwrap().data(), &[6.0]);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = CounterRng::new(22);
        let x = random([2, 1, 5, 4], &mut rng);
        let mut k = Tensor::zeros([1, 1, 3, 3]);
        k.set([0, 0, 1, 1], 1.0);
        assert_eq!(conv2d_forward(&x, &k, 1, 1).unwrap(), x);
    }

    #[test]
    fn matches_nested_loops_bit_for_bit() {
        let mut rng = CounterRng::new(23);
        for &(shape, co, ks, stride, pad, groups) in &[
            ([1, 4, 8, 8], 6, 3, 1, 1, 1),
            ([2, 3, 7, 6], 5, 3, 2, 1, 1),
            ([3, 6, 5, 5], 4, 1, 1, 0, 2),
            ([2, 6, 6, 6], 9, 3, 1, 1, 3),
            ([1, 4, 9, 9], 4, 5, 2, 2, 4),
            ([2, 2, 4, 4], 2, 1, 2, 0, 1),
        ] {
            let x = random(shape, &mut rng);
            let k = random([co, shape[1] / groups, ks, ks], &mut rng);
            let fast = group_conv2d_forward(&x, &k, groups, stride, pad).unwrap();
            let slow = direct(&x, &k, groups, stride, pad);
            assert_eq!(
                fast, slow,
                "geometry {shape:?} k{ks} s{stride} p{pad} g{groups}"
            );
        }
    }

    #[test]
    fn convolution_is_linear() {
        let mut rng = CounterRng::new(24);
        let x = random([2, 3, 6, 6], &mut rng);
        let y = random([2, 3, 6, 6], &mut rng);
        let k = random([4, 3, 3, 3], &mut rng);
        let (a, b) = (0.7, -1.3);
        let mix = x.scale(a).add(&y.scale(b)).unwrap();
        let lhs = conv2d_forward(&mix, &k, 1, 1).unwrap();
        let rhs = conv2d_forward(&x, &k, 1, 1)
            .unwrap()
            .scale(a)
            .add(&conv2d_forward(&y, &k, 1, 1).unwrap().scale(b))
            .unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let x = Tensor::<f64>::zeros([1, 3, 4, 4]);
        let k = Tensor::<f64>::zeros([2, 2, 3, 3]);
        assert!(matches!(conv2d_forward(&x, &k, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_grad_out_gives_zero_gradients() {
        let mut rng = CounterRng::new(25);
        let x = random([2, 3, 5, 5], &mut rng);
        let k = random([4, 3, 3, 3], &mut rng);
        let g = Tensor::zeros([2, 4, 5, 5]);
        let (gx, gk) = conv2d_backward(&x, &k, &g, 1, 1).unwrap();
        assert!(gx.data().iter().all(|v| *v == 0.0));
        assert!(gk.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_backward_is_chain_rule() {
        let x = Tensor::new([1, 1, 1, 1], vec![2.0]).unwrap();
        let k = Tensor::new([1, 1, 1, 1], vec![3.0]).unwrap();
        let g = Tensor::new([1, 1, 1, 1], vec![5.0]).unwrap();
        let (gx, gk) = conv2d_backward(&x, &k, &g, 1, 0).unwrap();
        assert_eq!(gk.data(), &[10.0]);
        assert_eq!(gx.data(), &[15.0]);
    }

    #[test]
    fn backward_shape_mismatch() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let k = Tensor::<f64>::zeros([3, 2, 3, 3]);
        let g = Tensor::<f64>::zeros([1, 3, 3, 3]);
        assert!(matches!(
            conv2d_backward(&x, &k, &g, 1, 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = CounterRng::new(26);
        for &(shape, co, ks, stride, pad, groups) in &[
            ([2, 3, 5, 5], 4, 3, 1, 1, 1),
            ([2, 4, 6, 6], 6, 3, 2, 1, 2),
            ([1, 6, 4, 4], 6, 1, 1, 0, 3),
        ] {
            let x = random(shape, &mut rng);
            let k = random([co, shape[1] / groups, ks, ks], &mut rng);
            let out_shape = group_conv2d_forward(&x, &k, groups, stride, pad)
                .unwrap()
                .shape();
            let weights = random(out_shape, &mut rng);
            let objective = |x: &Tensor<f64>, k: &Tensor<f64>| -> f64 {
                let y = group_conv2d_forward(x, k, groups, stride, pad).unwrap();
                y.data()
                    .iter()
                    .zip(weights.data())
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let (gx, gk) = group_conv2d_backward(&x, &k, &weights, groups, stride, pad).unwrap();
            let num_x = central_difference(x.data(), 1e-5, |v| {
                objective(&Tensor::new(x.shape(), v.to_vec()).unwrap(), &k)
            });
            let num_k = central_difference(k.data(), 1e-5, |v| {
                objective(&x, &Tensor::new(k.shape(), v.to_vec()).unwrap())
            });
            assert!(max_relative_error(gx.data(), &num_x) < 1e-6);
            assert!(max_relative_error(gk.data(), &num_k) < 1e-6);
        }
    }
}
