//! Vector-Jacobian products for every recorded primitive.

use crate::linalg::{gemm, Layout};
use crate::ops::{broadcast_map, col2im, permute_map, split_axis};
use crate::tape::{Node, Op, Var};

/// Reduces an output-shaped gradient onto a broadcast input.
fn unbroadcast(g: &[f64], map: Option<Vec<usize>>, len: usize) -> Vec<f64> {
    match map {
        None => g.to_vec(),
        Some(m) => {
            let mut out = vec![0.0; len];
            for (gi, &i) in g.iter().zip(&m) {
                out[i] += gi;
            }
            out
        }
    }
}

/// Gradient contributions of `node` to each of its inputs, given the
/// gradient `g` flowing into its output.
pub(crate) fn propagate(nodes: &[Node], node: &Node, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
    let val = |v: Var| &nodes[v.0].value;
    let needs = |v: Var| nodes[v.0].requires_grad;
    let y = node.value.data();
    let out_shape = node.value.shape();
    let unary = |a: Var, f: &dyn Fn(usize, f64) -> f64| {
        vec![(a, g.iter().enumerate().map(|(i, &gi)| f(i, gi)).collect())]
    };

    match &node.op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let ma = broadcast_map(out_shape, va.shape());
            let mb = broadcast_map(out_shape, vb.shape());
            let at = |i: usize| va.data()[ma.as_ref().map_or(i, |m| m[i])];
            let bt = |i: usize| vb.data()[mb.as_ref().map_or(i, |m| m[i])];
            let (ga, gb): (Vec<f64>, Vec<f64>) = match &node.op {
                Op::Add(..) => (g.to_vec(), g.to_vec()),
                Op::Sub(..) => (g.to_vec(), g.iter().map(|v| -v).collect()),
                Op::Mul(..) => (
                    g.iter().enumerate().map(|(i, gi)| gi * bt(i)).collect(),
                    g.iter().enumerate().map(|(i, gi)| gi * at(i)).collect(),
                ),
                _ => (
                    g.iter().enumerate().map(|(i, gi)| gi / bt(i)).collect(),
                    g.iter()
                        .enumerate()
                        .map(|(i, gi)| -gi * at(i) / (bt(i) * bt(i)))
                        .collect(),
                ),
            };
            let mut out = Vec::with_capacity(2);
            if needs(*a) {
                out.push((*a, unbroadcast(&ga, ma.clone(), va.numel())));
            }
            if needs(*b) {
                out.push((*b, unbroadcast(&gb, mb.clone(), vb.numel())));
            }
            out
        }
        Op::Neg(a) => unary(*a, &|_, gi| -gi),
        Op::AddScalar(a) => unary(*a, &|_, gi| gi),
        Op::MulScalar(a, c) => unary(*a, &|_, gi| gi * c),
        Op::Exp(a) => unary(*a, &|i, gi| gi * y[i]),
        Op::Log(a) => {
            let x = val(*a).data();
            unary(*a, &|i, gi| gi / x[i])
        }
        Op::Sqrt(a) => unary(*a, &|i, gi| gi / (2.0 * y[i])),
        Op::Relu(a) => {
            let x = val(*a).data();
            unary(*a, &|i, gi| if x[i] > 0.0 { gi } else { 0.0 })
        }
        Op::Sigmoid(a) => unary(*a, &|i, gi| gi * y[i] * (1.0 - y[i])),
        Op::Tanh(a) => unary(*a, &|i, gi| gi * (1.0 - y[i] * y[i])),
        Op::Matmul { a, b, batch, m, k, n } => {
            let (va, vb) = (val(*a).data(), val(*b).data());
            let (m, k, n) = (*m, *k, *n);
            let mut out = Vec::with_capacity(2);
            if needs(*a) {
                let mut ga = vec![0.0; batch * m * k];
                for bi in 0..*batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[bi * m * n..],
                        Layout::Normal,
                        &vb[bi * k * n..],
                        Layout::Transposed,
                        &mut ga[bi * m * k..],
                        false,
                    );
                }
                out.push((*a, ga));
            }
            if needs(*b) {
                let mut gb = vec![0.0; batch * k * n];
                for bi in 0..*batch {
                    gemm(
                        k,
                        m,
                        n,
                        &va[bi * m * k..],
                        Layout::Transposed,
                        &g[bi * m * n..],
                        Layout::Normal,
                        &mut gb[bi * k * n..],
                        false,
                    );
                }
                out.push((*b, gb));
            }
            out
        }
        Op::Conv1d {
            x,
            w,
            bias,
            cols,
            dims,
        } => {
            let d = *dims;
            let bl = d.batch * d.len_out;
            let ck = d.c_in * d.kernel;
            let mut dy2 = vec![0.0; d.c_out * bl];
            for bi in 0..d.batch {
                for co in 0..d.c_out {
                    let src = &g[(bi * d.c_out + co) * d.len_out..(bi * d.c_out + co + 1) * d.len_out];
                    dy2[co * bl + bi * d.len_out..co * bl + (bi + 1) * d.len_out].copy_from_slice(src);
                }
            }
            let mut out = Vec::with_capacity(3);
            if needs(*w) {
                let mut gw = vec![0.0; d.c_out * ck];
                gemm(d.c_out, bl, ck, &dy2, Layout::Normal, cols, Layout::Transposed, &mut gw, false);
                out.push((*w, gw));
            }
            if let Some(b) = bias {
                if needs(*b) {
                    let gb = dy2.chunks(bl).map(|r| r.iter().sum()).collect();
                    out.push((*b, gb));
                }
            }
            if needs(*x) {
                let mut dcols = vec![0.0; ck * bl];
                gemm(ck, d.c_out, bl, val(*w).data(), Layout::Transposed, &dy2, Layout::Normal, &mut dcols, false);
                out.push((*x, col2im(&dcols, &d)));
            }
            out
        }
        Op::SumAll(a) => vec![(*a, vec![g[0]; val(*a).numel()])],
        Op::SumAxis { a, axis } | Op::MeanAxis { a, axis } => {
            let (outer, n, inner) = split_axis(val(*a).shape(), *axis);
            let scale = if matches!(node.op, Op::MeanAxis { .. }) { 1.0 / n as f64 } else { 1.0 };
            let mut ga = vec![0.0; outer * n * inner];
            for o in 0..outer {
                for j in 0..n {
                    for i in 0..inner {
                        ga[o * n * inner + j * inner + i] = g[o * inner + i] * scale;
                    }
                }
            }
            vec![(*a, ga)]
        }
        Op::MaxAxis { a, argmax } => {
            let mut ga = vec![0.0; val(*a).numel()];
            for (gi, &i) in g.iter().zip(argmax) {
                ga[i] += gi;
            }
            vec![(*a, ga)]
        }
        Op::Softmax(a) => {
            let n = *out_shape.last().unwrap();
            let mut ga = vec![0.0; g.len()];
            for ((gr, yr), out) in g.chunks(n).zip(y.chunks(n)).zip(ga.chunks_mut(n)) {
                let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    out[j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![(*a, ga)]
        }
        Op::LogSumExp(a) => {
            let x = val(*a);
            let n = *x.shape().last().unwrap();
            let mut ga = vec![0.0; x.numel()];
            for (r, out) in ga.chunks_mut(n).enumerate() {
                for j in 0..n {
                    out[j] = g[r] * (x.data()[r * n + j] - y[r]).exp();
                }
            }
            vec![(*a, ga)]
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        } => {
            let gam = val(*gamma).data();
            let n = gam.len();
            let rows = g.len() / n;
            let mut gg = vec![0.0; n];
            let mut gbeta = vec![0.0; n];
            let mut gx = vec![0.0; g.len()];
            for r in 0..rows {
                let (gr, hr) = (&g[r * n..(r + 1) * n], &xhat[r * n..(r + 1) * n]);
                let mut sum_d = 0.0;
                let mut sum_dh = 0.0;
                for j in 0..n {
                    gg[j] += gr[j] * hr[j];
                    gbeta[j] += gr[j];
                    let dh = gr[j] * gam[j];
                    sum_d += dh;
                    sum_dh += dh * hr[j];
                }
                let nf = n as f64;
                for j in 0..n {
                    let dh = gr[j] * gam[j];
                    gx[r * n + j] = inv_std[r] / nf * (nf * dh - sum_d - hr[j] * sum_dh);
                }
            }
            vec![(*x, gx), (*gamma, gg), (*beta, gbeta)]
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            train,
        } => {
            let gam = val(*gamma).data();
            let c = gam.len();
            let shape = val(*x).shape();
            let batch = shape[0];
            let l = if shape.len() == 3 { shape[2] } else { 1 };
            let count = (batch * l) as f64;
            let mut gg = vec![0.0; c];
            let mut gbeta = vec![0.0; c];
            let mut sum_d = vec![0.0; c];
            let mut sum_dh = vec![0.0; c];
            for bi in 0..batch {
                for ch in 0..c {
                    for t in 0..l {
                        let i = (bi * c + ch) * l + t;
                        gg[ch] += g[i] * xhat[i];
                        gbeta[ch] += g[i];
                        let dh = g[i] * gam[ch];
                        sum_d[ch] += dh;
                        sum_dh[ch] += dh * xhat[i];
                    }
                }
            }
            let mut gx = vec![0.0; g.len()];
            for bi in 0..batch {
                for ch in 0..c {
                    for t in 0..l {
                        let i = (bi * c + ch) * l + t;
                        let dh = g[i] * gam[ch];
                        gx[i] = if *train {
                            inv_std[ch] / count * (count * dh - sum_d[ch] - xhat[i] * sum_dh[ch])
                        } else {
                            dh * inv_std[ch]
                        };
                    }
                }
            }
            vec![(*x, gx), (*gamma, gg), (*beta, gbeta)]
        }
        Op::Concat { parts, axis } => {
            let (outer, _, inner) = split_axis(out_shape, *axis);
            let total = out_shape[*axis] * inner;
            let mut offset = 0;
            let mut out = Vec::with_capacity(parts.len());
            for p in parts {
                let width = val(*p).shape()[*axis] * inner;
                let mut gp = Vec::with_capacity(outer * width);
                for o in 0..outer {
                    gp.extend_from_slice(&g[o * total + offset..o * total + offset + width]);
                }
                offset += width;
                out.push((*p, gp));
            }
            out
        }
        Op::Slice { a, axis, start } => {
            let va = val(*a);
            let (outer, n, inner) = split_axis(va.shape(), *axis);
            let width = out_shape[*axis] * inner;
            let mut ga = vec![0.0; va.numel()];
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                ga[base..base + width].copy_from_slice(&g[o * width..(o + 1) * width]);
            }
            vec![(*a, ga)]
        }
        Op::Permute { a, perm } => {
            let va = val(*a);
            let map = permute_map(va.shape(), perm);
            let mut ga = vec![0.0; va.numel()];
            for (gi, &i) in g.iter().zip(&map) {
                ga[i] = *gi;
            }
            vec![(*a, ga)]
        }
        Op::Reshape(a) => vec![(*a, g.to_vec())],
    }
}
