//! Forward kernels. Each records its vector-Jacobian product on the tape
//! (see `backward.rs`) whenever an input requires grad.

use crate::error::{Result, TensorError};
use crate::linalg::{gemm, Layout};
use crate::tape::{ConvDims, Op, Tape, Var};
use crate::tensor::{strides, Tensor};

/// Zero padding applied by [`Tape::conv1d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output length equals input length; the extra tap goes on the right
    /// for even kernels.
    Same,
    Valid,
}

/// Batch statistics selector for [`Tape::batch_norm`].
#[derive(Clone, Copy, Debug)]
pub enum BatchNormMode<'a> {
    Train,
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel statistics of a training-mode batch-norm call. `var` is
/// the unbiased estimate, suitable for running averages.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn check_finite(kernel: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { kernel })
    }
}

fn invalid(kernel: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument {
        kernel,
        reason: reason.into(),
    }
}

pub(crate) fn broadcast_shape(kernel: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let r = a.len().max(b.len());
    let mut out = vec![0; r];
    for i in 0..r {
        let da = if i + a.len() >= r { a[i + a.len() - r] } else { 1 };
        let db = if i + b.len() >= r { b[i + b.len() - r] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    kernel,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// For each flat index of `out`, the flat index of the broadcast input.
/// `None` when the shapes coincide and the map is the identity.
pub(crate) fn broadcast_map(out: &[usize], inp: &[usize]) -> Option<Vec<usize>> {
    if out == inp {
        return None;
    }
    let r = out.len();
    let in_strides = strides(inp);
    let mut eff = vec![0usize; r];
    for i in 0..inp.len() {
        let o = i + r - inp.len();
        if inp[i] != 1 {
            eff[o] = in_strides[i];
        }
    }
    let total: usize = out.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; r];
    let mut flat = 0usize;
    for _ in 0..total {
        map.push(flat);
        for d in (0..r).rev() {
            idx[d] += 1;
            flat += eff[d];
            if idx[d] < out[d] {
                break;
            }
            flat -= eff[d] * out[d];
            idx[d] = 0;
        }
    }
    Some(map)
}

/// For each flat index of the permuted output, the flat input index.
pub(crate) fn permute_map(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let eff: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total: usize = in_shape.iter().product();
    let r = perm.len();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; r];
    let mut flat = 0usize;
    for _ in 0..total {
        map.push(flat);
        for d in (0..r).rev() {
            idx[d] += 1;
            flat += eff[d];
            if idx[d] < out_shape[d] {
                break;
            }
            flat -= eff[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    map
}

/// Splits `shape` around `axis` into (outer, axis extent, inner).
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tape {
    fn binary(
        &self,
        kernel: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: fn(Var, Var) -> Op,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check_finite(kernel, &va)?;
        check_finite(kernel, &vb)?;
        let shape = broadcast_shape(kernel, va.shape(), vb.shape())?;
        let data = match (broadcast_map(&shape, va.shape()), broadcast_map(&shape, vb.shape())) {
            (None, None) => va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect(),
            (ma, mb) => {
                let n: usize = shape.iter().product();
                (0..n)
                    .map(|i| {
                        let ia = ma.as_ref().map_or(i, |m| m[i]);
                        let ib = mb.as_ref().map_or(i, |m| m[i]);
                        f(va.data()[ia], vb.data()[ib])
                    })
                    .collect()
            }
        };
        Ok(self.push(Tensor::new(shape, data)?, op(a, b)))
    }

    fn unary(&self, kernel: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let va = self.value(a);
        check_finite(kernel, &va)?;
        Ok(self.push(va.map(f), op))
    }

    /// Elementwise sum with trailing-axis broadcasting.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn neg(&self, a: Var) -> Result<Var> {
        self.unary("neg", a, |x| -x, Op::Neg(a))
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a))
    }

    pub fn mul_scalar(&self, a: Var, c: f64) -> Result<Var> {
        self.unary("mul_scalar", a, |x| x * c, Op::MulScalar(a, c))
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&self, a: Var) -> Result<Var> {
        self.unary("sqrt", a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    /// `[m,k]·[k,n] → [m,n]`, or batched `[b,m,k]·[b,k,n] → [b,m,n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        check_finite("matmul", &va)?;
        check_finite("matmul", &vb)?;
        let mismatch = || TensorError::ShapeMismatch {
            kernel: "matmul",
            lhs: va.shape().to_vec(),
            rhs: vb.shape().to_vec(),
        };
        let (batch, m, k, n) = match (va.shape(), vb.shape()) {
            ([m, k], [k2, n]) if k == k2 => (1, *m, *k, *n),
            ([b, m, k], [b2, k2, n]) if b == b2 && k == k2 => (*b, *m, *k, *n),
            _ => return Err(mismatch()),
        };
        let mut out = vec![0.0; batch * m * n];
        for bi in 0..batch {
            gemm(
                m,
                k,
                n,
                &va.data()[bi * m * k..],
                Layout::Normal,
                &vb.data()[bi * k * n..],
                Layout::Normal,
                &mut out[bi * m * n..],
                false,
            );
        }
        let shape = if va.ndim() == 2 { vec![m, n] } else { vec![batch, m, n] };
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Matmul {
                a,
                b,
                batch,
                m,
                k,
                n,
            },
        ))
    }

    /// Stride-1 1-D convolution (cross-correlation). `x` is `[b, c_in, L]`,
    /// `w` is `[c_out, c_in, k]`, `bias` is `[c_out]`.
    pub fn conv1d(&self, x: Var, w: Var, bias: Option<Var>, padding: Padding) -> Result<Var> {
        let (vx, vw) = (self.value(x), self.value(w));
        check_finite("conv1d", &vx)?;
        check_finite("conv1d", &vw)?;
        let mismatch = || TensorError::ShapeMismatch {
            kernel: "conv1d",
            lhs: vx.shape().to_vec(),
            rhs: vw.shape().to_vec(),
        };
        let (&[batch, c_in, len_in], &[c_out, c_in_w, kernel]) = (vx.shape(), vw.shape()) else {
            return Err(mismatch());
        };
        if c_in != c_in_w {
            return Err(mismatch());
        }
        let (pad_left, pad_right) = match padding {
            Padding::Same => ((kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2),
            Padding::Valid => (0, 0),
        };
        if len_in + pad_left + pad_right < kernel {
            return Err(invalid("conv1d", format!("kernel {kernel} longer than input {len_in}")));
        }
        let len_out = len_in + pad_left + pad_right - kernel + 1;
        let bias_val = match bias {
            Some(bv) => {
                let t = self.value(bv);
                check_finite("conv1d", &t)?;
                if t.shape() != [c_out] {
                    return Err(TensorError::ShapeMismatch {
                        kernel: "conv1d",
                        lhs: vec![c_out],
                        rhs: t.shape().to_vec(),
                    });
                }
                Some(t)
            }
            None => None,
        };

        let dims = ConvDims {
            batch,
            c_in,
            c_out,
            len_in,
            len_out,
            kernel,
            pad_left,
        };
        let cols = im2col(vx.data(), &dims);
        let bl = batch * len_out;
        let mut y2 = vec![0.0; c_out * bl];
        gemm(c_out, c_in * kernel, bl, vw.data(), Layout::Normal, &cols, Layout::Normal, &mut y2, false);
        let mut out = vec![0.0; batch * c_out * len_out];
        for co in 0..c_out {
            let b0 = bias_val.as_ref().map_or(0.0, |t| t.data()[co]);
            for bi in 0..batch {
                let src = &y2[co * bl + bi * len_out..co * bl + (bi + 1) * len_out];
                let dst = &mut out[(bi * c_out + co) * len_out..(bi * c_out + co + 1) * len_out];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d = s + b0);
            }
        }
        Ok(self.push(
            Tensor::new(vec![batch, c_out, len_out], out)?,
            Op::Conv1d {
                x,
                w,
                bias,
                cols,
                dims,
            },
        ))
    }

    pub fn sum(&self, a: Var) -> Result<Var> {
        let va = self.value(a);
        check_finite("sum", &va)?;
        Ok(self.push(Tensor::scalar(va.data().iter().sum()), Op::SumAll(a)))
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a)?;
        self.mul_scalar(s, 1.0 / n)
    }

    fn axis_reduce(
        &self,
        kernel: &'static str,
        a: Var,
        axis: usize,
    ) -> Result<(std::sync::Arc<Tensor>, Vec<usize>, (usize, usize, usize))> {
        let va = self.value(a);
        check_finite(kernel, &va)?;
        if axis >= va.ndim() {
            return Err(invalid(kernel, format!("axis {axis} out of range for {:?}", va.shape())));
        }
        let mut shape = va.shape().to_vec();
        shape.remove(axis);
        let parts = split_axis(va.shape(), axis);
        Ok((va, shape, parts))
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&self, a: Var, axis: usize) -> Result<Var> {
        let (va, shape, (outer, n, inner)) = self.axis_reduce("sum_axis", a, axis)?;
        let data = reduce_axis(va.data(), outer, n, inner, |s| s.iter().sum());
        Ok(self.push(Tensor::new(shape, data)?, Op::SumAxis { a, axis }))
    }

    pub fn mean_axis(&self, a: Var, axis: usize) -> Result<Var> {
        let (va, shape, (outer, n, inner)) = self.axis_reduce("mean_axis", a, axis)?;
        let data = reduce_axis(va.data(), outer, n, inner, |s| s.iter().sum::<f64>() / n as f64);
        Ok(self.push(Tensor::new(shape, data)?, Op::MeanAxis { a, axis }))
    }

    /// Maximum over `axis`; ties route the gradient to the first maximum.
    pub fn max_axis(&self, a: Var, axis: usize) -> Result<Var> {
        let (va, shape, (outer, n, inner)) = self.axis_reduce("max_axis", a, axis)?;
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                let mut best = base;
                for j in 1..n {
                    if va.data()[base + j * inner] > va.data()[best] {
                        best = base + j * inner;
                    }
                }
                data.push(va.data()[best]);
                argmax.push(best);
            }
        }
        Ok(self.push(Tensor::new(shape, data)?, Op::MaxAxis { a, argmax }))
    }

    /// Mean over the time axis of a `[b, c, L]` tensor.
    pub fn global_avg_pool(&self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        if shape.len() != 3 {
            return Err(invalid("global_avg_pool", format!("expected [b, c, L], got {shape:?}")));
        }
        self.mean_axis(a, 2)
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let va = self.value(a);
        check_finite("softmax", &va)?;
        let n = *va.shape().last().ok_or_else(|| invalid("softmax", "scalar input"))?;
        let mut out = va.data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        Ok(self.push(Tensor::new(va.shape().to_vec(), out)?, Op::Softmax(a)))
    }

    /// `log Σ exp` over the last axis, computed after subtracting the row max.
    pub fn logsumexp(&self, a: Var) -> Result<Var> {
        let va = self.value(a);
        check_finite("logsumexp", &va)?;
        let n = *va.shape().last().ok_or_else(|| invalid("logsumexp", "scalar input"))?;
        let data: Vec<f64> = va.data().chunks(n).map(logsumexp_slice).collect();
        let mut shape = va.shape().to_vec();
        shape.pop();
        Ok(self.push(Tensor::new(shape, data)?, Op::LogSumExp(a)))
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta` of that extent.
    pub fn layer_norm(&self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        for t in [&vx, &vg, &vb] {
            check_finite("layer_norm", t)?;
        }
        let n = *vx.shape().last().ok_or_else(|| invalid("layer_norm", "scalar input"))?;
        if vg.shape() != [n] || vb.shape() != [n] {
            return Err(TensorError::ShapeMismatch {
                kernel: "layer_norm",
                lhs: vx.shape().to_vec(),
                rhs: vg.shape().to_vec(),
            });
        }
        let rows = vx.numel() / n;
        let mut xhat = vec![0.0; vx.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; vx.numel()];
        for r in 0..rows {
            let row = &vx.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        Ok(self.push(
            Tensor::new(vx.shape().to_vec(), out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        ))
    }

    /// Per-channel normalization of `[b, c]` or `[b, c, L]` input over the
    /// batch and time axes. Training mode normalizes with batch statistics
    /// and returns them; evaluation mode uses the supplied running values.
    pub fn batch_norm(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BatchNormMode<'_>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        for t in [&vx, &vg, &vb] {
            check_finite("batch_norm", t)?;
        }
        let (batch, c, l) = match *vx.shape() {
            [b, c] => (b, c, 1),
            [b, c, l] => (b, c, l),
            _ => return Err(invalid("batch_norm", format!("expected [b, c(, L)], got {:?}", vx.shape()))),
        };
        if vg.shape() != [c] || vb.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                kernel: "batch_norm",
                lhs: vx.shape().to_vec(),
                rhs: vg.shape().to_vec(),
            });
        }
        let count = (batch * l) as f64;
        let (mean, var, stats) = match mode {
            BatchNormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for bi in 0..batch {
                        s += vx.data()[(bi * c + ch) * l..(bi * c + ch + 1) * l].iter().sum::<f64>();
                    }
                    mean[ch] = s / count;
                    let mut q = 0.0;
                    for bi in 0..batch {
                        q += vx.data()[(bi * c + ch) * l..(bi * c + ch + 1) * l]
                            .iter()
                            .map(|v| (v - mean[ch]) * (v - mean[ch]))
                            .sum::<f64>();
                    }
                    var[ch] = q / count;
                }
                let unbiased = if count > 1.0 {
                    var.iter().map(|v| v * count / (count - 1.0)).collect()
                } else {
                    var.clone()
                };
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(TensorError::ShapeMismatch {
                        kernel: "batch_norm",
                        lhs: vec![c],
                        rhs: vec![mean.len(), var.len()],
                    });
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; vx.numel()];
        let mut out = vec![0.0; vx.numel()];
        for bi in 0..batch {
            for ch in 0..c {
                for t in 0..l {
                    let i = (bi * c + ch) * l + t;
                    let h = (vx.data()[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = h * vg.data()[ch] + vb.data()[ch];
                }
            }
        }
        let v = self.push(
            Tensor::new(vx.shape().to_vec(), out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: matches!(mode, BatchNormMode::Train),
            },
        );
        Ok((v, stats))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or_else(|| invalid("concat", "no inputs"))?);
        if axis >= first.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for {first:?}")));
        }
        let mut total = 0;
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        for v in &values {
            check_finite("concat", v)?;
            let s = v.shape();
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    kernel: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let n = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * n..(o + 1) * n]);
            }
        }
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let va = self.value(a);
        check_finite("slice", &va)?;
        if axis >= va.ndim() || start >= end || end > va.shape()[axis] {
            return Err(invalid(
                "slice",
                format!("range {start}..{end} on axis {axis} of {:?}", va.shape()),
            ));
        }
        let (outer, n, inner) = split_axis(va.shape(), axis);
        let width = (end - start) * inner;
        let mut out = Vec::with_capacity(outer * width);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            out.extend_from_slice(&va.data()[base..base + width]);
        }
        let mut shape = va.shape().to_vec();
        shape[axis] = end - start;
        Ok(self.push(Tensor::new(shape, out)?, Op::Slice { a, axis, start }))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, a: Var, perm: &[usize]) -> Result<Var> {
        let va = self.value(a);
        check_finite("permute", &va)?;
        let mut seen = vec![false; va.ndim()];
        if perm.len() != va.ndim() || perm.iter().any(|&p| p >= va.ndim() || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("permute", format!("{perm:?} is not a permutation of {:?}", va.shape())));
        }
        let map = permute_map(va.shape(), perm);
        let data = map.iter().map(|&i| va.data()[i]).collect();
        let shape = perm.iter().map(|&p| va.shape()[p]).collect();
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Permute {
                a,
                perm: perm.to_vec(),
            },
        ))
    }

    /// Swaps two axes.
    pub fn transpose(&self, a: Var, d0: usize, d1: usize) -> Result<Var> {
        let nd = self.value(a).ndim();
        if d0 >= nd || d1 >= nd {
            return Err(invalid("transpose", format!("axes {d0},{d1} for rank {nd}")));
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(d0, d1);
        self.permute(a, &perm)
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let va = self.value(a);
        check_finite("reshape", &va)?;
        if shape.iter().product::<usize>() != va.numel() {
            return Err(TensorError::ShapeMismatch {
                kernel: "reshape",
                lhs: va.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(self.push(Tensor::new(shape.to_vec(), va.data().to_vec())?, Op::Reshape(a)))
    }

    /// `x·Wᵀ + b` for `x: [n, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let wt = self.transpose(w, 0, 1)?;
        let y = self.matmul(x, wt)?;
        match b {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }
}

fn im2col(x: &[f64], d: &ConvDims) -> Vec<f64> {
    let bl = d.batch * d.len_out;
    let mut cols = vec![0.0; d.c_in * d.kernel * bl];
    for ci in 0..d.c_in {
        for kk in 0..d.kernel {
            let row = &mut cols[(ci * d.kernel + kk) * bl..(ci * d.kernel + kk + 1) * bl];
            for bi in 0..d.batch {
                let src = &x[(bi * d.c_in + ci) * d.len_in..(bi * d.c_in + ci + 1) * d.len_in];
                for t in 0..d.len_out {
                    let pos = t + kk;
                    if pos >= d.pad_left && pos - d.pad_left < d.len_in {
                        row[bi * d.len_out + t] = src[pos - d.pad_left];
                    }
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im(dcols: &[f64], d: &ConvDims) -> Vec<f64> {
    let bl = d.batch * d.len_out;
    let mut dx = vec![0.0; d.batch * d.c_in * d.len_in];
    for ci in 0..d.c_in {
        for kk in 0..d.kernel {
            let row = &dcols[(ci * d.kernel + kk) * bl..(ci * d.kernel + kk + 1) * bl];
            for bi in 0..d.batch {
                let dst = &mut dx[(bi * d.c_in + ci) * d.len_in..(bi * d.c_in + ci + 1) * d.len_in];
                for t in 0..d.len_out {
                    let pos = t + kk;
                    if pos >= d.pad_left && pos - d.pad_left < d.len_in {
                        dst[pos - d.pad_left] += row[bi * d.len_out + t];
                    }
                }
            }
        }
    }
    dx
}

fn reduce_axis(data: &[f64], outer: usize, n: usize, inner: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(outer * inner);
    let mut scratch = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = data[o * n * inner + j * inner + i];
            }
            out.push(f(&scratch));
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable `log Σ exp` of a slice.
pub fn logsumexp_slice(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    row.iter_mut().for_each(|v| *v /= s);
}
