use certband_core::crossing::noncrossing_probability;
use certband_core::{DistSpec, LossSamples, OrderStats};
use certband_optim::{
    enforce_constraint, split_optimize_apply, stage1_model, train_bound, Objective, OptimizerConfig, QbrmObjective,
    TrainedBound,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> OptimizerConfig {
    OptimizerConfig {
        hidden_width: 16,
        hidden_layers: 2,
        stage1_epochs: 2000,
        stage2_max_epochs: 100,
        ..Default::default()
    }
}

fn draw(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DistSpec::Beta { a: 2.0, b: 5.0 }.sample(n, &mut rng)
}

#[test]
fn trained_vector_is_feasible_and_serializes() {
    let cfg = small_config();
    let data = vec![OrderStats::from_values(&draw(30, 1)).unwrap()];
    let obj = QbrmObjective::expected_loss(1.0);
    let (trained, _) = train_bound(&cfg, &obj, &data, 0.05, None).unwrap();
    let p = noncrossing_probability(trained.l_hat.values()).unwrap();
    assert!(p >= 0.95, "{p}");
    assert!(!trained.training_log.is_empty());
    let text = serde_json::to_string(&trained).unwrap();
    assert!(text.contains("\"L_hat\""));
    let back: TrainedBound = serde_json::from_str(&text).unwrap();
    assert_eq!(back.l_hat, trained.l_hat);
    let certified = obj.value(&data, trained.l_hat.values()).unwrap();
    let best = trained
        .training_log
        .iter()
        .map(|e| e.certified_bound)
        .fold(f64::INFINITY, f64::min);
    assert!((certified - best).abs() < 1e-9, "{certified} vs {best}");
}

#[test]
fn warm_start_reproduces_cold_start() {
    let cfg = small_config();
    let data = vec![OrderStats::from_values(&draw(20, 2)).unwrap()];
    let obj = QbrmObjective::expected_loss(1.0);
    let (cold, _) = train_bound(&cfg, &obj, &data, 0.1, None).unwrap();
    let (warm_model, _) = stage1_model(&cfg, 20, 0.1).unwrap();
    let (warm, _) = train_bound(&cfg, &obj, &data, 0.1, Some(&warm_model)).unwrap();
    assert_eq!(cold.l_hat, warm.l_hat);
}

#[test]
fn split_protocol_certifies_holdout() {
    let cfg = small_config();
    let samples = LossSamples::build(draw(40, 3), None, Some(1.0), true).unwrap();
    let out = split_optimize_apply(&[samples], &QbrmObjective::expected_loss(1.0), 0.1, &cfg, None).unwrap();
    assert_eq!(out.holdout_vector.len(), 20);
    assert!(noncrossing_probability(out.holdout_vector.values()).unwrap() >= 0.95);
    assert!(out.final_bound.is_finite() && out.final_bound <= 1.0);
}

#[test]
fn enforce_constraint_lands_on_grid() {
    let l: Vec<f64> = (1..=10).map(|i| i as f64 / 11.0).collect();
    let (gamma, shifted) = enforce_constraint(&l, 0.1, 1000).unwrap();
    assert!(gamma > 0.0);
    assert!((gamma * 1000.0 - (gamma * 1000.0).round()).abs() < 1e-9);
    assert!(noncrossing_probability(&shifted).unwrap() >= 0.9);
}

#[test]
fn config_rejects_unknown_fields_and_bad_values() {
    assert!(serde_json::from_str::<OptimizerConfig>(r#"{"lr": 0.1}"#).is_err());
    let cfg: OptimizerConfig = serde_json::from_str(r#"{"learning_rate": 0.001}"#).unwrap();
    assert_eq!(cfg.learning_rate, 0.001);
    let bad = OptimizerConfig {
        hidden_width: 0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}
