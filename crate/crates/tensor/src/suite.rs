//! Randomized finite-difference sweep over every differentiable kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::check::finite_difference_check;
use crate::error::Result;
use crate::ops::{BatchNormMode, Padding};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Worst relative gradient error seen for one kernel.
#[derive(Clone, Debug)]
pub struct KernelCheck {
    pub kernel: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
}

type Probe = Box<dyn Fn(&Tape, Var) -> Result<Var>>;
type Case = fn(&mut ChaCha8Rng) -> (Tensor, Probe);

const STEP: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=8)
}

/// Contracts `y` against a fixed non-uniform weighting so every output
/// element reaches the scalar with a distinct coefficient.
fn contract(t: &Tape, y: Var) -> Result<Var> {
    let shape = t.shape(y);
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect();
    let wv = t.constant(Tensor::new(shape, w)?);
    let p = t.mul(y, wv)?;
    t.sum(p)
}

fn unary(rng: &mut ChaCha8Rng, lo: f64, hi: f64, op: fn(&Tape, Var) -> Result<Var>) -> (Tensor, Probe) {
    let shape = [dim(rng), dim(rng)];
    let x = rand_tensor(rng, &shape, lo, hi);
    (x, Box::new(move |t, v| contract(t, op(t, v)?)))
}

/// Binary kernel with the probed operand on the left or right and the
/// other operand either full-shape or broadcast along the leading axis.
fn binary(rng: &mut ChaCha8Rng, op: fn(&Tape, Var, Var) -> Result<Var>, positive_rhs: bool) -> (Tensor, Probe) {
    let (m, n) = (dim(rng), dim(rng));
    let broadcast = rng.random_bool(0.5);
    let probe_left = rng.random_bool(0.5);
    let other_shape = if broadcast { vec![n] } else { vec![m, n] };
    let (lo, hi) = if positive_rhs { (0.5, 2.0) } else { (-1.0, 1.0) };
    if probe_left {
        let x = rand_tensor(rng, &[m, n], -1.0, 1.0);
        let other = rand_tensor(rng, &other_shape, lo, hi);
        (x, Box::new(move |t, v| {
            let o = t.constant(other.clone());
            contract(t, op(t, v, o)?)
        }))
    } else {
        let x = rand_tensor(rng, &other_shape, lo, hi);
        let other = rand_tensor(rng, &[m, n], -1.0, 1.0);
        (x, Box::new(move |t, v| {
            let o = t.constant(other.clone());
            contract(t, op(t, o, v)?)
        }))
    }
}

fn cases() -> Vec<(&'static str, Case)> {
    vec![
        ("add", |r| binary(r, |t, a, b| t.add(a, b), false)),
        ("sub", |r| binary(r, |t, a, b| t.sub(a, b), false)),
        ("mul", |r| binary(r, |t, a, b| t.mul(a, b), false)),
        ("div", |r| binary(r, |t, a, b| t.div(a, b), true)),
        ("neg", |r| unary(r, -1.0, 1.0, |t, v| t.neg(v))),
        ("add_scalar", |r| unary(r, -1.0, 1.0, |t, v| t.add_scalar(v, 0.3))),
        ("mul_scalar", |r| unary(r, -1.0, 1.0, |t, v| t.mul_scalar(v, -1.7))),
        ("exp", |r| unary(r, -2.0, 2.0, |t, v| t.exp(v))),
        ("log", |r| unary(r, 0.2, 3.0, |t, v| t.log(v))),
        ("sqrt", |r| unary(r, 0.2, 3.0, |t, v| t.sqrt(v))),
        ("relu", |r| unary(r, -1.0, 1.0, |t, v| t.relu(v))),
        ("sigmoid", |r| unary(r, -3.0, 3.0, |t, v| t.sigmoid(v))),
        ("tanh", |r| unary(r, -3.0, 3.0, |t, v| t.tanh(v))),
        ("matmul", |r| {
            let (m, k, n) = (dim(r), dim(r), dim(r));
            let batched = r.random_bool(0.5);
            let b = dim(r);
            let (sa, sb) = if batched {
                (vec![b, m, k], vec![b, k, n])
            } else {
                (vec![m, k], vec![k, n])
            };
            if r.random_bool(0.5) {
                let x = rand_tensor(r, &sa, -1.0, 1.0);
                let o = rand_tensor(r, &sb, -1.0, 1.0);
                (x, Box::new(move |t, v| {
                    let ov = t.constant(o.clone());
                    contract(t, t.matmul(v, ov)?)
                }))
            } else {
                let x = rand_tensor(r, &sb, -1.0, 1.0);
                let o = rand_tensor(r, &sa, -1.0, 1.0);
                (x, Box::new(move |t, v| {
                    let ov = t.constant(o.clone());
                    contract(t, t.matmul(ov, v)?)
                }))
            }
        }),
        ("conv1d", |r| {
            let (b, ci, co) = (r.random_range(1..=3), r.random_range(1..=4), r.random_range(1..=4));
            let k = r.random_range(1..=7);
            let l = r.random_range(k..=k + 8);
            let pad = if r.random_bool(0.5) { Padding::Same } else { Padding::Valid };
            let x = rand_tensor(r, &[b, ci, l], -1.0, 1.0);
            let w = rand_tensor(r, &[co, ci, k], -1.0, 1.0);
            let bias = rand_tensor(r, &[co], -1.0, 1.0);
            match r.random_range(0..3) {
                0 => (x, Box::new(move |t, v| {
                    let (wv, bv) = (t.constant(w.clone()), t.constant(bias.clone()));
                    contract(t, t.conv1d(v, wv, Some(bv), pad)?)
                })),
                1 => (w, Box::new(move |t, v| {
                    let (xv, bv) = (t.constant(x.clone()), t.constant(bias.clone()));
                    contract(t, t.conv1d(xv, v, Some(bv), pad)?)
                })),
                _ => (bias, Box::new(move |t, v| {
                    let (xv, wv) = (t.constant(x.clone()), t.constant(w.clone()));
                    contract(t, t.conv1d(xv, wv, Some(v), pad)?)
                })),
            }
        }),
        ("sum", |r| unary(r, -1.0, 1.0, |t, v| t.sum(v))),
        ("mean", |r| unary(r, -1.0, 1.0, |t, v| t.mean(v))),
        ("sum_axis", |r| {
            let shape = [dim(r), dim(r), dim(r)];
            let x = rand_tensor(r, &shape, -1.0, 1.0);
            let axis = r.random_range(0..3);
            (x, Box::new(move |t, v| contract(t, t.sum_axis(v, axis)?)))
        }),
        ("mean_axis", |r| {
            let shape = [dim(r), dim(r), dim(r)];
            let x = rand_tensor(r, &shape, -1.0, 1.0);
            let axis = r.random_range(0..3);
            (x, Box::new(move |t, v| contract(t, t.mean_axis(v, axis)?)))
        }),
        ("max_axis", |r| {
            let shape = [dim(r), dim(r), dim(r)];
            let x = rand_tensor(r, &shape, -1.0, 1.0);
            let axis = r.random_range(0..3);
            (x, Box::new(move |t, v| contract(t, t.max_axis(v, axis)?)))
        }),
        ("global_avg_pool", |r| {
            let shape = [dim(r), dim(r), dim(r)];
            let x = rand_tensor(r, &shape, -1.0, 1.0);
            (x, Box::new(|t, v| contract(t, t.global_avg_pool(v)?)))
        }),
        ("softmax", |r| unary(r, -2.0, 2.0, |t, v| t.softmax(v))),
        ("logsumexp", |r| unary(r, -2.0, 2.0, |t, v| t.logsumexp(v))),
        ("layer_norm", |r| {
            let (m, n) = (dim(r), r.random_range(2..=8));
            let x = rand_tensor(r, &[m, n], -1.0, 1.0);
            let g = rand_tensor(r, &[n], 0.5, 1.5);
            let b = rand_tensor(r, &[n], -0.5, 0.5);
            if r.random_bool(0.5) {
                (x, Box::new(move |t, v| {
                    let (gv, bv) = (t.constant(g.clone()), t.constant(b.clone()));
                    contract(t, t.layer_norm(v, gv, bv, 1e-5)?)
                }))
            } else {
                (g, Box::new(move |t, v| {
                    let (xv, bv) = (t.constant(x.clone()), t.constant(b.clone()));
                    contract(t, t.layer_norm(xv, v, bv, 1e-5)?)
                }))
            }
        }),
        ("batch_norm_train", |r| {
            let (b, c, l) = (r.random_range(2..=4), dim(r), dim(r));
            let x = rand_tensor(r, &[b, c, l], -1.0, 1.0);
            let g = rand_tensor(r, &[c], 0.5, 1.5);
            let be = rand_tensor(r, &[c], -0.5, 0.5);
            if r.random_bool(0.5) {
                (x, Box::new(move |t, v| {
                    let (gv, bv) = (t.constant(g.clone()), t.constant(be.clone()));
                    contract(t, t.batch_norm(v, gv, bv, BatchNormMode::Train, 1e-5)?.0)
                }))
            } else {
                (g, Box::new(move |t, v| {
                    let (xv, bv) = (t.constant(x.clone()), t.constant(be.clone()));
                    contract(t, t.batch_norm(xv, v, bv, BatchNormMode::Train, 1e-5)?.0)
                }))
            }
        }),
        ("batch_norm_eval", |r| {
            let (b, c, l) = (dim(r), dim(r), dim(r));
            let x = rand_tensor(r, &[b, c, l], -1.0, 1.0);
            let g = rand_tensor(r, &[c], 0.5, 1.5);
            let be = rand_tensor(r, &[c], -0.5, 0.5);
            let mean: Vec<f64> = (0..c).map(|_| r.random_range(-0.5..0.5)).collect();
            let var: Vec<f64> = (0..c).map(|_| r.random_range(0.5..2.0)).collect();
            (x, Box::new(move |t, v| {
                let (gv, bv) = (t.constant(g.clone()), t.constant(be.clone()));
                let mode = BatchNormMode::Eval { mean: &mean, var: &var };
                contract(t, t.batch_norm(v, gv, bv, mode, 1e-5)?.0)
            }))
        }),
        ("concat", |r| {
            let (m, n1, n2) = (dim(r), dim(r), dim(r));
            let x = rand_tensor(r, &[m, n1], -1.0, 1.0);
            let o = rand_tensor(r, &[m, n2], -1.0, 1.0);
            (x, Box::new(move |t, v| {
                let ov = t.constant(o.clone());
                let c = t.concat(&[ov, v, ov], 1)?;
                contract(t, c)
            }))
        }),
        ("slice", |r| {
            let shape = [dim(r) + 1, dim(r) + 1, dim(r) + 1];
            let x = rand_tensor(r, &shape, -1.0, 1.0);
            let axis = r.random_range(0..3);
            let start = r.random_range(0..shape[axis] - 1);
            let end = r.random_range(start + 1..=shape[axis]);
            (x, Box::new(move |t, v| contract(t, t.slice(v, axis, start, end)?)))
        }),
        ("permute", |r| {
            let shape = [dim(r), dim(r), dim(r)];
            let x = rand_tensor(r, &shape, -1.0, 1.0);
            let perms = [[0, 2, 1], [1, 0, 2], [2, 0, 1], [1, 2, 0], [2, 1, 0]];
            let p = perms[r.random_range(0..perms.len())];
            (x, Box::new(move |t, v| contract(t, t.permute(v, &p)?)))
        }),
        ("transpose", |r| unary(r, -1.0, 1.0, |t, v| t.transpose(v, 0, 1))),
        ("reshape", |r| {
            let (a, b) = (dim(r), dim(r));
            let x = rand_tensor(r, &[a, b], -1.0, 1.0);
            (x, Box::new(move |t, v| contract(t, t.reshape(v, &[b, a])?)))
        }),
        ("linear", |r| {
            let (n, i, o) = (dim(r), dim(r), dim(r));
            let x = rand_tensor(r, &[n, i], -1.0, 1.0);
            let w = rand_tensor(r, &[o, i], -1.0, 1.0);
            let b = rand_tensor(r, &[o], -1.0, 1.0);
            if r.random_bool(0.5) {
                (x, Box::new(move |t, v| {
                    let (wv, bv) = (t.constant(w.clone()), t.constant(b.clone()));
                    contract(t, t.linear(v, wv, Some(bv))?)
                }))
            } else {
                (w, Box::new(move |t, v| {
                    let (xv, bv) = (t.constant(x.clone()), t.constant(b.clone()));
                    contract(t, t.linear(xv, v, Some(bv))?)
                }))
            }
        }),
    ]
}

/// Runs `trials` random finite-difference checks (step 1e-5, random shapes
/// with extents ≤ 8) for each kernel.
pub fn kernel_gradient_suite(trials: usize, seed: u64) -> Result<Vec<KernelCheck>> {
    let mut out = Vec::new();
    for (i, (kernel, case)) in cases().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64 * 0x9E37_79B9));
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            let (x, f) = case(&mut rng);
            worst = worst.max(finite_difference_check(f, &x, STEP)?);
        }
        out.push(KernelCheck {
            kernel,
            trials,
            max_rel_error: worst,
        });
    }
    Ok(out)
}
