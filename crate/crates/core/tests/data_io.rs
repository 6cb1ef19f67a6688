use proptest::prelude::*;
use tsood_core::data::{
    channel_normalize, generate_synthetic, make_eval_mixture, parse_ts, parse_ts_bytes, split_id_ood, DataError,
    NormStats, SplitTag, SyntheticConfig, TimeSeriesDataset,
};

fn synth(classes: usize, n: usize, dims: usize, length: usize, seed: u64, split: SplitTag) -> TimeSeriesDataset {
    generate_synthetic(
        &SyntheticConfig {
            classes,
            n_per_class: n,
            dims,
            length,
            seed,
        },
        split,
    )
}

/// Naive DFT magnitude of bin `k`.
fn dft_mag(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        let a = std::f64::consts::TAU * k as f64 * t as f64 / n;
        re += v * a.cos();
        im -= v * a.sin();
    }
    (re * re + im * im).sqrt()
}

fn dominant_bin(x: &[f64]) -> usize {
    (1..x.len() / 2)
        .max_by(|&a, &b| dft_mag(x, a).total_cmp(&dft_mag(x, b)))
        .unwrap()
}

#[test]
fn synthetic_classes_have_their_frequency_bin() {
    let ds = synth(4, 10, 2, 64, 11, SplitTag::Train);
    for i in 0..ds.len() {
        let c = ds.labels()[i];
        for ch in ds.instance(i).chunks(64) {
            assert_eq!(dominant_bin(ch), c + 1, "instance {i}");
        }
    }
}

#[test]
fn toy_header_and_row() {
    let text = "@dimensions 2\n@seriesLength 3\n@equalLength true\n@classLabel true a b\n@data\n1,2,3:4,5,6:a\n";
    let ds = parse_ts_bytes(text.as_bytes(), SplitTag::Test).unwrap();
    assert_eq!((ds.len(), ds.dims(), ds.length(), ds.labels()[0]), (1, 2, 3, 0));
    assert_eq!(ds.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn error_cases() {
    let head = "@dimensions 1\n@seriesLength 2\n@equalLength true\n@classLabel true a\n";
    assert!(matches!(parse_ts(head, SplitTag::Train), Err(DataError::MissingHeader)));
    let ragged = format!("{head}@data\n1,2:a\n1:a\n");
    assert!(matches!(parse_ts(&ragged, SplitTag::Train), Err(DataError::UnequalLength(_))));
    let unknown = format!("{head}@data\n1,2:z\n");
    assert!(matches!(parse_ts(&unknown, SplitTag::Train), Err(DataError::UnknownClass { .. })));
    let dims = format!("{head}@data\n1,2:3,4:a\n");
    assert!(matches!(parse_ts(&dims, SplitTag::Train), Err(DataError::DimensionMismatch { .. })));
    let num = format!("{head}@data\n1,x:a\n");
    assert!(matches!(parse_ts(&num, SplitTag::Train), Err(DataError::MalformedNumber { .. })));
    let unequal = "@dimensions 1\n@equalLength false\n@classLabel true a\n@data\n1,2:a\n";
    assert!(matches!(parse_ts(unequal, SplitTag::Train), Err(DataError::UnequalLength(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ts_round_trip(
        dims in 1usize..4,
        length in 1usize..12,
        labels in prop::collection::vec(0usize..3, 1..8),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = tsood_core::seed::rng(seed);
        let values: Vec<f64> = (0..labels.len() * dims * length)
            .map(|_| rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-8..3)))
            .collect();
        let names = vec!["x".to_string(), "y".to_string(), "z".to_string()];
        let ds = TimeSeriesDataset::new("rt", SplitTag::Train, names, dims, length, values, labels).unwrap();
        let back = parse_ts(&ds.to_ts_string(), SplitTag::Train).unwrap();
        prop_assert_eq!(back.values(), ds.values());
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(&back.class_names, &ds.class_names);
    }
}

#[test]
fn split_sizes_follow_ceiling_rule() {
    for (c, id) in [(2, 1), (4, 2), (15, 8), (25, 13)] {
        let train = synth(c, 2, 1, 8, 1, SplitTag::Train);
        let test = synth(c, 3, 1, 8, 2, SplitTag::Test);
        let s = split_id_ood(&train, &test, 0).unwrap();
        assert_eq!(s.spec.id_classes, (0..id).collect::<Vec<_>>());
        assert_eq!(s.spec.ood_classes, (id..c).collect::<Vec<_>>());
        assert_eq!(s.id_test.len() + s.ood_test.len(), test.len());
        assert!(s.id_train.labels().iter().all(|&l| l < id));
        assert!(s.ood_test.labels().iter().all(|&l| l >= id));
        assert_eq!(s.id_train.len(), 2 * id);
    }
}

fn labelled(n: usize, offset: f64) -> TimeSeriesDataset {
    let values = (0..n).map(|i| offset + i as f64).collect();
    TimeSeriesDataset::new("m", SplitTag::Test, vec!["a".into()], 1, 1, values, vec![0; n]).unwrap()
}

#[test]
fn mixture_balances_by_subsampling() {
    let id = labelled(80, 0.0);
    let ood = labelled(120, 1000.0);
    let m = make_eval_mixture(&id, &ood, 3).unwrap();
    assert_eq!(m.len(), 160);
    let labels = m.labels();
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 80);
    let mut ids: Vec<usize> = m.origins.iter().filter(|o| !o.is_ood).map(|o| o.index).collect();
    ids.sort_unstable();
    assert_eq!(ids, (0..80).collect::<Vec<_>>());
    let mut oods: Vec<usize> = m.origins.iter().filter(|o| o.is_ood).map(|o| o.index).collect();
    oods.sort_unstable();
    oods.dedup();
    assert_eq!(oods.len(), 80);
    for (i, o) in m.origins.iter().enumerate() {
        let want = if o.is_ood { 1000.0 } else { 0.0 } + o.index as f64;
        assert_eq!(m.instance(i), &[want]);
    }
    let again = make_eval_mixture(&id, &ood, 3).unwrap();
    assert_eq!(again.origins, m.origins);

    let balanced = make_eval_mixture(&labelled(50, 0.0), &labelled(50, 100.0), 9).unwrap();
    assert_eq!(balanced.len(), 100);
}

#[test]
fn mixture_never_contains_training_instances() {
    let train = synth(4, 10, 2, 16, 5, SplitTag::Train);
    let test = synth(4, 10, 2, 16, 6, SplitTag::Test);
    let s = split_id_ood(&train, &test, 0).unwrap();
    let m = make_eval_mixture(&s.id_test, &s.ood_test, 1).unwrap();
    for i in 0..m.len() {
        for j in 0..s.id_train.len() {
            assert_ne!(m.instance(i), s.id_train.instance(j));
        }
    }
}

#[test]
fn normalization_is_fitted_on_source_only() {
    let src = synth(2, 20, 3, 30, 7, SplitTag::Train);
    let other = synth(2, 5, 3, 30, 8, SplitTag::Test);
    let (norm, targets, stats) = channel_normalize(&src, &[&other]);
    let refit = NormStats::fit(&norm);
    for j in 0..3 {
        assert!(refit.mean[j].abs() < 1e-5);
        assert!((refit.std[j] - 1.0).abs() < 1e-3);
    }
    assert_eq!(targets[0], stats.apply(&other));
    let twice = stats.apply(&norm);
    assert!(twice.values().iter().zip(norm.values()).any(|(a, b)| (a - b).abs() > 1e-6));
}
