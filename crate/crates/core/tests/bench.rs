use rand::Rng as _;
use tsood_core::bench::{overhead_benchmark, BenchConfig};
use tsood_core::data::{SplitTag, TimeSeriesDataset};
use tsood_core::model::{Arch, ModelArtifacts, ModelConfig};
use tsood_core::scorers::{fit, Method, ScorerSpec};
use tsood_core::seed;

fn fixture() -> (ModelArtifacts, TimeSeriesDataset) {
    let model = ModelArtifacts::build(&ModelConfig::new(Arch::ResNet1D, 1, 12, 2, 1).with_width(8)).unwrap();
    let mut rng = seed::rng(2);
    let values = (0..24 * 12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..24).map(|i| i % 2).collect();
    let ds = TimeSeriesDataset::new("b", SplitTag::Train, vec!["a".into(), "b".into()], 1, 12, values, labels).unwrap();
    (model, ds)
}

#[test]
fn one_positive_row_per_method() {
    let (model, ds) = fixture();
    let scorers: Vec<_> = Method::ALL
        .iter()
        .map(|&m| {
            let mut spec = ScorerSpec::new(m);
            spec.params.if_trees = 10;
            fit(&spec, &model, &ds).unwrap()
        })
        .collect();
    for include_forward in [false, true] {
        let cfg = BenchConfig {
            warmup: 2,
            repeats: 5,
            include_forward,
        };
        let rows = overhead_benchmark(&scorers, &model, ds.values(), &cfg).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, Method::ALL.iter().map(|m| m.name()).collect::<Vec<_>>());
        for r in &rows {
            assert!(r.mean_ms > 0.0 && r.min_ms <= r.mean_ms && r.mean_ms <= r.max_ms, "{r:?}");
            assert_eq!(r.repeats, 5);
        }
    }
}

#[test]
fn repeat_counts_stay_in_the_same_order_of_magnitude() {
    let (model, ds) = fixture();
    let scorers = vec![fit(&ScorerSpec::new(Method::Mds), &model, &ds).unwrap()];
    let run = |repeats| {
        overhead_benchmark(&scorers, &model, ds.values(), &BenchConfig { warmup: 20, repeats, include_forward: false }).unwrap()[0].mean_ms
    };
    let (one, ten) = (run(1), run(10));
    assert!(one / ten < 10.0 && ten / one < 10.0, "{one} vs {ten}");
}

#[test]
fn zero_warmup_is_rejected() {
    let (model, ds) = fixture();
    let scorers = vec![fit(&ScorerSpec::new(Method::Msp), &model, &ds).unwrap()];
    let cfg = BenchConfig { warmup: 0, ..Default::default() };
    assert!(overhead_benchmark(&scorers, &model, ds.values(), &cfg).is_err());
    assert!(overhead_benchmark(&scorers, &model, &[1.0; 5], &BenchConfig::default()).is_err());
}
