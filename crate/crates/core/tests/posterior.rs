use rayon::prelude::*;

use postrate::bounds::{epsilon_n, VariantRegistry};
use postrate::model::{simulate_data, PriorSpec, TrueModel, WithinModelPrior};
use postrate::posterior::{empirical_divergence_quantiles, model_posterior};
use postrate::rng::{purpose, StreamKey};
use postrate::study::{complexity_inputs, run_rate_study, ExperimentConfig};

fn truth() -> TrueModel {
    TrueModel::sparse(vec![0.2, 0.8, 0.2], 0.1).unwrap()
}

#[test]
fn posterior_mode_recovers_true_model() {
    let n = 10_000;
    let spec = PriorSpec::with_defaults(WithinModelPrior::UniformBox, n).unwrap();
    let hits = (0..100u64)
        .into_par_iter()
        .filter(|&rep| {
            let data = simulate_data(&truth(), n as usize, StreamKey::new(41, &[purpose::DATA, n, rep])).unwrap();
            model_posterior(&data, &spec).unwrap().mode() == 3
        })
        .count();
    assert!(hits >= 90, "mode = 3 in {hits}/100 replicates");
}

#[test]
fn posterior_concentrates_at_large_n() {
    let n = 100_000;
    let spec = PriorSpec::with_defaults(WithinModelPrior::UniformBox, n).unwrap();
    let data = simulate_data(&truth(), n as usize, StreamKey::new(42, &[purpose::DATA, n])).unwrap();
    let state = model_posterior(&data, &spec).unwrap();
    let key = StreamKey::new(42, &[purpose::POSTERIOR, n]);
    let summary = empirical_divergence_quantiles(&truth(), &state, 0.5, 50, &key, None).unwrap();
    assert!(summary.median < 1e-2, "median {}", summary.median);
    assert!(summary.models.iter().all(|&m| m == 3));
}

#[test]
fn study_epsilon_is_rederivable() {
    let cfg = ExperimentConfig::from_toml(
        r#"
[truth]
kind = "sparse"
margin = 0.1
levels = [0.2, 0.8, 0.2]

[run]
n_grid = [300, 600, 1200]
draws = 20
replicates = 2
seed = 5
"#,
    )
    .unwrap();
    let study = run_rate_study(&cfg).unwrap();
    let registry = VariantRegistry::default();
    for (b, summary) in study.bounds.iter().zip(&study.per_n) {
        let (inputs, _) = complexity_inputs(&cfg, b.n).unwrap();
        for (br, reported) in b.breakdowns.iter().zip(&summary.epsilon_n) {
            let variant = registry.get(br.variant).unwrap();
            let again = inputs
                .iter()
                .find_map(|i| epsilon_n(variant.as_ref(), cfg.run.u, cfg.run.t, b.n, br.penalized_div, i).ok())
                .unwrap();
            assert_eq!(again.epsilon_n.to_bits(), reported.to_bits(), "{} at n = {}", br.variant, b.n);
            assert_eq!(br.penalized_div.to_bits(), b.penalized.value.to_bits());
        }
    }
    for row in &study.rows {
        for cell in &row.variants {
            let s = study.per_n.iter().find(|s| s.n == row.n).unwrap();
            let i = study.variants.iter().position(|v| *v == cell.variant).unwrap();
            assert_eq!(cell.epsilon_n, s.epsilon_n[i]);
            assert!((0.0..=1.0).contains(&cell.exceedance));
        }
    }
}
