use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsood_tensor::{
    finite_difference_check, kernel_gradient_suite, Padding, Tape, Tensor, TensorError,
};

fn vec1(v: &[f64]) -> Tensor {
    Tensor::from_vec(v.to_vec())
}

#[test]
fn relu_clamps_negatives() {
    let t = Tape::new();
    let x = t.constant(vec1(&[-1.0, 0.0, 2.0]));
    let y = t.relu(x).unwrap();
    assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn logsumexp_of_two_zeros_is_ln2() {
    let t = Tape::new();
    let x = t.constant(vec1(&[0.0, 0.0]));
    let y = t.logsumexp(x).unwrap();
    assert!((t.value(y).item() - 2f64.ln()).abs() < 1e-12);
    assert!((t.value(y).item() - 0.693147).abs() < 1e-6);
}

#[test]
fn softmax_of_constant_row_is_uniform() {
    for c in [-50.0, 0.0, 3.5, 700.0] {
        let t = Tape::new();
        let x = t.constant(vec1(&[c, c, c]));
        let y = t.softmax(x).unwrap();
        for v in t.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn derivative_of_square_at_three() {
    let t = Tape::new();
    let x = t.param(Tensor::scalar(3.0));
    let y = t.mul(x, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 6.0);
}

#[test]
fn logsumexp_gradient_is_softmax() {
    let t = Tape::new();
    let x = t.param(vec1(&[0.0, 0.0]));
    let y = t.logsumexp(x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5]);
}

#[test]
fn disconnected_leaf_gets_zero_gradient() {
    let t = Tape::new();
    let x = t.param(vec1(&[1.0, 2.0]));
    let c = t.constant(vec1(&[3.0, 4.0]));
    let y = t.sum(c).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
}

#[test]
fn shared_subexpression_accumulates() {
    // y = x·x + x  ⇒ dy/dx = 2x + 1
    let t = Tape::new();
    let x = t.param(Tensor::scalar(1.5));
    let sq = t.mul(x, x).unwrap();
    let y = t.add(sq, x).unwrap();
    let g = t.backward(y).unwrap();
    assert_eq!(g.get(x).unwrap().item(), 4.0);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let t = Tape::new();
    let x = t.param(vec1(&[1.0, 2.0]));
    let y = t.exp(x).unwrap();
    assert!(matches!(t.backward(y), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn backward_twice_fails() {
    let t = Tape::new();
    let x = t.param(Tensor::scalar(1.0));
    let y = t.exp(x).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.backward(y).unwrap_err(), TensorError::TapeConsumed);
}

#[test]
fn shape_mismatch_names_kernel_and_shapes() {
    let t = Tape::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[4, 5]));
    let err = t.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    let err = t.add(a, b).unwrap_err();
    assert!(matches!(err, TensorError::ShapeMismatch { kernel: "add", .. }));
}

#[test]
fn non_finite_input_is_rejected() {
    let t = Tape::new();
    let x = t.constant(vec1(&[1.0, f64::NAN]));
    assert_eq!(t.exp(x).unwrap_err(), TensorError::NonFinite { kernel: "exp" });
    let y = t.constant(vec1(&[f64::INFINITY, 0.0]));
    assert!(matches!(t.softmax(y), Err(TensorError::NonFinite { .. })));
}

#[test]
fn fd_sum_of_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_vec((0..8).map(|_| rng.random_range(-1.0..1.0)).collect());
    let err = finite_difference_check(
        |t, v| {
            let sq = t.mul(v, v)?;
            t.sum(sq)
        },
        &x,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn fd_linear_is_exact() {
    let x = vec1(&[0.3, -0.2, 0.9]);
    let err = finite_difference_check(
        |t, v| {
            let s = t.mul_scalar(v, 2.5)?;
            t.sum(s)
        },
        &x,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn fd_logsumexp_of_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut rand44 = || Tensor::new(vec![4, 4], (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let (x, w) = (rand44(), rand44());
    let err = finite_difference_check(
        |t, v| {
            let wv = t.constant(w.clone());
            let m = t.matmul(v, wv)?;
            let l = t.logsumexp(m)?;
            t.sum(l)
        },
        &x,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn every_kernel_passes_random_gradient_checks() {
    for check in kernel_gradient_suite(100, 7).unwrap() {
        assert!(check.max_rel_error < 1e-3, "{}: {}", check.kernel, check.max_rel_error);
    }
}

/// Direct O(L·k) convolution with explicit zero padding.
fn conv_oracle(x: &Tensor, w: &Tensor, bias: &[f64], pad_left: usize, len_out: usize) -> Vec<f64> {
    let (b, ci, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let mut out = vec![0.0; b * co * len_out];
    for bi in 0..b {
        for o in 0..co {
            for t in 0..len_out {
                let mut acc = bias[o];
                for c in 0..ci {
                    for j in 0..k {
                        let pos = t as isize + j as isize - pad_left as isize;
                        if pos >= 0 && (pos as usize) < l {
                            acc += w.data()[(o * ci + c) * k + j] * x.data()[(bi * ci + c) * l + pos as usize];
                        }
                    }
                }
                out[(bi * co + o) * len_out + t] = acc;
            }
        }
    }
    out
}

#[test]
fn conv1d_matches_direct_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let k = rng.random_range(1..=7);
        let l = rng.random_range(k..=32);
        let (b, ci, co) = (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4));
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let x = Tensor::new(vec![b, ci, l], draw(b * ci * l)).unwrap();
        let w = Tensor::new(vec![co, ci, k], draw(co * ci * k)).unwrap();
        let bias = draw(co);
        for (pad, pad_left, len_out) in [(Padding::Same, (k - 1) / 2, l), (Padding::Valid, 0, l - k + 1)] {
            let t = Tape::new();
            let (xv, wv) = (t.constant(x.clone()), t.constant(w.clone()));
            let bv = t.constant(Tensor::from_vec(bias.clone()));
            let y = t.conv1d(xv, wv, Some(bv), pad).unwrap();
            let want = conv_oracle(&x, &w, &bias, pad_left, len_out);
            assert_eq!(t.shape(y), vec![b, co, len_out]);
            for (a, e) in t.value(y).data().iter().zip(&want) {
                assert!((a - e).abs() < 1e-6);
            }
        }
    }
}

proptest! {
    #[test]
    fn logsumexp_shift(xs in prop::collection::vec(-20.0f64..20.0, 1..16), c in -100.0f64..100.0) {
        let t = Tape::new();
        let a = t.constant(Tensor::from_vec(xs.clone()));
        let b = t.add_scalar(a, c).unwrap();
        let la = t.logsumexp(a).unwrap();
        let lb = t.logsumexp(b).unwrap();
        prop_assert!((t.value(lb).item() - t.value(la).item() - c).abs() < 1e-6);
    }

    #[test]
    fn softmax_is_a_distribution(xs in prop::collection::vec(-50.0f64..50.0, 1..16)) {
        let t = Tape::new();
        let a = t.constant(Tensor::from_vec(xs));
        let s = t.value(t.softmax(a).unwrap());
        let total: f64 = s.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        prop_assert!(s.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }
}
