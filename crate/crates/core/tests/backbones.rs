use std::sync::Arc;

use rand::Rng as _;
use tsood_core::model::{
    backbone_gradient_check, load_checkpoint, save_checkpoint, Arch, ModelArtifacts, ModelConfig, ModelError,
    MANIFEST_FILE, WEIGHTS_FILE,
};
use tsood_core::seed;
use tsood_tensor::Tensor;

fn random_input(b: usize, d: usize, l: usize, s: u64) -> Tensor {
    let mut rng = seed::rng(s);
    Tensor::new(vec![b, d, l], (0..b * d * l).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn jiggle(model: &mut ModelArtifacts, s: u64) {
    let mut rng = seed::rng(s);
    for t in model.weights.values_mut() {
        Arc::make_mut(t).data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    }
    // Keep running variances positive.
    for (name, t) in model.weights.iter_mut() {
        if name.ends_with("running_var") {
            Arc::make_mut(t).data_mut().iter_mut().for_each(|v| *v = v.abs() + 0.5);
        }
    }
}

#[test]
fn shape_contract() {
    for arch in Arch::ALL {
        let model = ModelArtifacts::build(&ModelConfig::new(arch, 3, 50, 5, 1)).unwrap();
        let out = model.forward(&random_input(2, 3, 50, 2)).unwrap();
        assert_eq!(out.logits.shape(), &[2, 5], "{arch}");
        assert_eq!(out.prelogit.shape(), &[2, 64], "{arch}");
        let bad = model.forward(&random_input(2, 4, 50, 2));
        assert!(matches!(bad, Err(ModelError::ShapeMismatch { .. })));
    }
}

#[test]
fn same_seed_same_weights() {
    for arch in Arch::ALL {
        let cfg = ModelConfig::new(arch, 2, 12, 3, 42);
        let a = ModelArtifacts::build(&cfg).unwrap();
        let b = ModelArtifacts::build(&cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        let c = ModelArtifacts::build(&ModelConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.weights, c.weights);
    }
}

fn expected_params(arch: Arch, d: usize, l: usize, w: usize, c: usize) -> usize {
    let head = c * w + c;
    match arch {
        Arch::ResNet1D => {
            let mut n = 0;
            let mut cin = d;
            for _ in 0..3 {
                n += w * cin * 7 + w * w * 5 + w * w * 3 + 3 * 2 * w;
                if cin != w {
                    n += w * cin + 2 * w;
                }
                cin = w;
            }
            n + head
        }
        Arch::Tst => {
            let layer = 4 * (w * w + w) + 2 * w + (2 * w * w + 2 * w) + (2 * w * w + w) + 2 * w;
            (w * d + w) + l * w + 3 * layer + head
        }
        Arch::Lstm => {
            let l0 = 4 * w * d + 4 * w * w + 4 * w;
            let l1 = 4 * w * w + 4 * w * w + 4 * w;
            l0 + l1 + (w * w + w) + head
        }
    }
}

#[test]
fn parameter_count_closed_form() {
    for arch in Arch::ALL {
        for (d, l, w, c) in [(3, 50, 64, 5), (1, 7, 8, 2), (8, 10, 8, 3)] {
            let model = ModelArtifacts::build(&ModelConfig::new(arch, d, l, c, 0).with_width(w)).unwrap();
            assert_eq!(model.parameter_count(), expected_params(arch, d, l, w, c), "{arch} d={d} w={w}");
        }
    }
}

#[test]
fn head_linearity_batch_independence_and_determinism() {
    for arch in Arch::ALL {
        let mut model = ModelArtifacts::build(&ModelConfig::new(arch, 2, 16, 3, 5).with_width(16)).unwrap();
        jiggle(&mut model, 9);
        let x = random_input(5, 2, 16, 3);
        let out = model.forward(&x).unwrap();
        let (w, b) = model.head();
        for i in 0..5 {
            for k in 0..3 {
                let z: f64 = w.row(k).iter().zip(out.prelogit.row(i)).map(|(a, h)| a * h).sum::<f64>() + b.data()[k];
                assert!((z - out.logits.row(i)[k]).abs() < 1e-5);
            }
        }
        assert_eq!(model.forward(&x).unwrap(), out);
        for i in 0..5 {
            let xi = Tensor::new(vec![1, 2, 16], x.data()[i * 32..(i + 1) * 32].to_vec()).unwrap();
            let single = model.forward(&xi).unwrap();
            for (a, e) in single.logits.data().iter().zip(out.logits.row(i)) {
                assert!((a - e).abs() < 1e-9, "{arch}");
            }
        }
    }
}

#[test]
fn attention_rows_are_distributions() {
    let mut model = ModelArtifacts::build(&ModelConfig::new(Arch::Tst, 2, 9, 3, 1).with_width(16)).unwrap();
    jiggle(&mut model, 4);
    let (_, taps) = model.forward_taps(&random_input(3, 2, 9, 8)).unwrap();
    let maps: Vec<_> = taps.iter().filter(|(n, _)| n.ends_with("attention")).collect();
    assert_eq!(maps.len(), 3);
    for (_, a) in maps {
        assert_eq!(a.shape(), &[3 * 4, 9, 9]);
        for row in a.data().chunks(9) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn tst_without_positions_is_permutation_invariant_after_pooling() {
    let mut model = ModelArtifacts::build(&ModelConfig::new(Arch::Tst, 2, 7, 3, 2).with_width(8)).unwrap();
    jiggle(&mut model, 5);
    let pos = Arc::make_mut(model.weights.get_mut("pos_embedding").unwrap());
    pos.data_mut().iter_mut().for_each(|v| *v = 0.0);
    let x = random_input(1, 2, 7, 6);
    let perm = [3, 0, 6, 1, 5, 2, 4];
    let mut px = vec![0.0; 14];
    for j in 0..2 {
        for (t, &src) in perm.iter().enumerate() {
            px[j * 7 + t] = x.data()[j * 7 + src];
        }
    }
    let a = model.forward(&x).unwrap();
    let b = model.forward(&Tensor::new(vec![1, 2, 7], px).unwrap()).unwrap();
    for (u, v) in a.prelogit.data().iter().zip(b.prelogit.data()) {
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn lstm_hidden_state_is_bounded() {
    let mut model = ModelArtifacts::build(&ModelConfig::new(Arch::Lstm, 3, 12, 2, 3).with_width(8)).unwrap();
    let (_, taps) = model.forward_taps(&Tensor::zeros(&[2, 3, 12])).unwrap();
    let h = &taps.iter().find(|(n, _)| n == "lstm.last_hidden").unwrap().1;
    assert!(h.data().iter().all(|v| v.abs() < 1.0));
    for t in model.weights.values_mut() {
        Arc::make_mut(t).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let (_, taps) = model.forward_taps(&Tensor::zeros(&[2, 3, 12])).unwrap();
    let h = &taps.iter().find(|(n, _)| n == "lstm.last_hidden").unwrap().1;
    assert!(h.data().iter().all(|v| v.abs() < 1.0));
    jiggle(&mut model, 1);
    let (_, taps) = model.forward_taps(&random_input(2, 3, 12, 2).map(|v| 50.0 * v)).unwrap();
    let h = &taps.iter().find(|(n, _)| n == "lstm.last_hidden").unwrap().1;
    assert!(h.data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn input_gradient_matches_finite_differences() {
    for arch in Arch::ALL {
        let mut model = ModelArtifacts::build(&ModelConfig::new(arch, 2, 6, 3, 7).with_width(8)).unwrap();
        jiggle(&mut model, 2);
        let x = random_input(1, 2, 6, 4);
        let objective = |t: &tsood_tensor::Tape, z| {
            let s = t.mul_scalar(z, 0.5)?;
            let lse = t.logsumexp(s)?;
            let top = t.max_axis(s, 1)?;
            t.sum(t.sub(lse, top)?)
        };
        let g = model.input_gradient(&x, objective).unwrap();
        assert_eq!(g.shape(), x.shape());
        let eval = |x: &Tensor| {
            let z = model.forward(x).unwrap().logits;
            let s: Vec<f64> = z.data().iter().map(|v| v * 0.5).collect();
            let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - m
        };
        let h = 1e-5;
        for i in 0..x.numel() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            let num = (eval(&p) - eval(&m)) / (2.0 * h);
            let a = g.data()[i];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-8) < 1e-3, "{arch} {i}: {a} vs {num}");
        }
        let zero = model.input_gradient(&x, |t, z| t.mul_scalar(t.sum(z)?, 0.0)).unwrap();
        assert!(zero.data().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn backbone_finite_difference_suite() {
    for arch in Arch::ALL {
        let r = backbone_gradient_check(arch, 20, 11).unwrap();
        assert!(r.max_rel_error < 1e-3, "{arch}: {}", r.max_rel_error);
        assert!(r.skipped * 50 <= r.probes + r.skipped, "{arch}: {} kinks skipped", r.skipped);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for arch in Arch::ALL {
        let mut model = ModelArtifacts::build(&ModelConfig::new(arch, 2, 10, 3, 8).with_width(8)).unwrap();
        jiggle(&mut model, 3);
        model.round_to_f32();
        let path = dir.path().join(arch.name());
        save_checkpoint(&model, &path, serde_json::json!({"note": "x"})).unwrap();
        let (back, manifest) = load_checkpoint(&path).unwrap();
        assert_eq!(back.weights, model.weights);
        assert_eq!(back.config, model.config);
        assert_eq!(manifest.weights.len(), model.weights.len());
        let x = random_input(2, 2, 10, 1);
        assert_eq!(back.forward(&x).unwrap(), model.forward(&x).unwrap());
        let again = dir.path().join(format!("{}-again", arch.name()));
        save_checkpoint(&back, &again, serde_json::json!({"note": "x"})).unwrap();
        for f in [WEIGHTS_FILE, MANIFEST_FILE] {
            assert_eq!(std::fs::read(path.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap());
        }
        let bytes = std::fs::read(path.join(WEIGHTS_FILE)).unwrap();
        let total: usize = model.weights.values().map(|t| t.numel()).sum();
        assert_eq!(bytes.len(), 4 * total);
        let first = model.weights.values().next().unwrap().data()[0];
        assert_eq!(f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64, first);
    }
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelArtifacts::build(&ModelConfig::new(Arch::Lstm, 2, 5, 2, 0).with_width(4)).unwrap();
    save_checkpoint(&model, dir.path(), serde_json::Value::Null).unwrap();
    let wpath = dir.path().join(WEIGHTS_FILE);
    let mut bytes = std::fs::read(&wpath).unwrap();
    bytes.truncate(bytes.len() - 4);
    std::fs::write(&wpath, bytes).unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
}
