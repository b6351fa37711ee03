mod common;

use cdri::forecast::trees::TreeNode;
use cdri::ingest::{dataset_to_json, generate_synthetic, SynthConfig};
use cdri::pipeline::{backtest, run_forecast, FittedModel, ModelKind, PredictionReport};
use cdri::{aggregate_experts, Dimension};
use proptest::prelude::*;

fn synth() -> impl Strategy<Value = SynthConfig> {
    (
        2usize..=6,
        prop::array::uniform5(1.0f64..=5.0),
        prop::array::uniform5(-0.6f64..=0.6),
        0.0f64..=1.0,
        any::<u64>(),
    )
        .prop_map(|(experts, base, slope, noise, seed)| SynthConfig {
            experts,
            base,
            slope,
            noise,
            seed,
            ..SynthConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reports_always_hold_thirty_bounded_values(config in synth(), seed in any::<u64>()) {
        let dataset = generate_synthetic(&config).unwrap();
        let report = run_forecast(&dataset, 2025, &common::fast_config(), seed).unwrap();
        let kinds: Vec<ModelKind> = report.models.iter().map(|m| m.kind).collect();
        prop_assert_eq!(kinds, ModelKind::ALL.to_vec());
        for m in &report.models {
            for d in 0..5 {
                let (v, raw) = (m.prediction[d], m.raw_prediction[d]);
                prop_assert!((1.0..=5.0).contains(&v));
                prop_assert_eq!(m.clamped[d], !(1.0..=5.0).contains(&raw));
                if !m.clamped[d] {
                    prop_assert_eq!(v, raw);
                }
            }
        }
        prop_assert_eq!(report.reclamped(), report.reclamped().reclamped());
        let text = report.to_json().unwrap();
        prop_assert_eq!(PredictionReport::from_json(&text).unwrap().to_json().unwrap(), text);
    }
}

#[test]
fn tree_models_are_disclosed_and_bounded() {
    let dataset = common::fixture_panel();
    let config = common::fast_config();
    let report = run_forecast(&dataset, 2025, &config, 5).unwrap();
    let max_nodes = |depth: usize| (1usize << (depth + 1)) - 1;
    let check = |nodes: &[TreeNode], depth: usize| {
        assert!(!nodes.is_empty() && nodes.len() <= max_nodes(depth));
    };
    for m in &report.models {
        match m.model.as_ref().unwrap() {
            FittedModel::DecisionTree(trees) => {
                assert_eq!(trees.len(), 5);
                trees.iter().for_each(|t| check(&t.nodes, config.tree.max_depth.unwrap()));
            }
            FittedModel::RandomForest(forests) => {
                assert_eq!(forests.len(), 5);
                for f in forests {
                    assert_eq!(f.trees.len(), config.forest.n_trees);
                    f.trees.iter().for_each(|t| check(&t.nodes, config.forest.tree.max_depth.unwrap()));
                }
            }
            FittedModel::GradientBoosting(models) => {
                for b in models {
                    assert_eq!(b.stages.len(), config.boost.n_stages);
                    b.stages.iter().for_each(|s| check(&s.tree.nodes, config.boost.tree.max_depth.unwrap()));
                }
            }
            FittedModel::LinearRegression(lines) => assert_eq!(lines.len(), 5),
            FittedModel::Var(var) => assert_eq!(var.ridge, config.var_ridge),
            FittedModel::Lstm(w) => assert_eq!(w.hidden, config.lstm.hidden),
        }
    }
    let json = report.to_json().unwrap();
    assert!(json.contains("\"nodes\""));
    assert!(json.contains("\"tree_seeds\""));
}

#[test]
fn seeds_and_fingerprints_are_recorded() {
    let dataset = common::fixture_panel();
    let a = run_forecast(&dataset, 2025, &common::fast_config(), 1).unwrap();
    let b = run_forecast(&dataset, 2025, &common::fast_config(), 2).unwrap();
    assert_eq!(a.seed, 1);
    assert_eq!(a.dataset_fingerprint, b.dataset_fingerprint);
    assert_eq!(a.dataset_fingerprint.len(), 64);
    // only the seeded models may differ between seeds
    for (x, y) in a.models.iter().zip(&b.models) {
        match x.kind {
            ModelKind::RandomForest | ModelKind::Lstm => {}
            _ => assert_eq!(x.prediction, y.prediction, "{}", x.kind),
        }
    }
    assert_ne!(a.get(ModelKind::RandomForest).unwrap().prediction, b.get(ModelKind::RandomForest).unwrap().prediction);

    let other = generate_synthetic(&SynthConfig { seed: 99, noise: 0.5, ..SynthConfig::default() }).unwrap();
    let c = run_forecast(&other, 2025, &common::fast_config(), 1).unwrap();
    assert_ne!(a.dataset_fingerprint, c.dataset_fingerprint);
    assert!(dataset_to_json(&dataset).unwrap().len() > 1000);
}

#[test]
fn backtest_scores_clamped_forecasts_against_the_held_out_year() {
    let dataset = common::fixture_panel();
    let config = common::fast_config();
    let bt = backtest(&dataset, &config, 11).unwrap();
    assert_eq!(bt.held_out_year, 2022);
    let training = dataset.filtered(|r| r.year != 2022).unwrap();
    let forecast = run_forecast(&training, 2022, &config, 11).unwrap();
    let actual = aggregate_experts(&dataset, 2022).unwrap();
    assert_eq!(bt.actual, actual.values);
    for (entry, m) in bt.models.iter().zip(&forecast.models) {
        assert_eq!(entry.prediction, m.prediction);
        let expected: Vec<f64> = Dimension::ALL.iter().map(|&d| (m.prediction[d.index()] - actual.get(d)).abs()).collect();
        assert_eq!(entry.abs_error.to_vec(), expected);
        let mae = expected.iter().sum::<f64>() / 5.0;
        assert!((entry.mean_abs_error - mae).abs() < 1e-15);
    }
}
