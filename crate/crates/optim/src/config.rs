use serde::{Deserialize, Serialize};

use certband_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub learning_rate: f64,
    /// Weight of the hinge penalty on the noncrossing constraint.
    pub constraint_weight: f64,
    pub stage1_epochs: usize,
    /// Stage 1 stops early once the mean-squared error reaches this value.
    pub stage1_target_mse: f64,
    pub stage2_max_epochs: usize,
    pub validate_every: usize,
    pub rng_seed: u64,
    /// Shifts are rounded up to multiples of `1 / post_process_grid_denominator`.
    pub post_process_grid_denominator: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed_dim: 32,
            hidden_layers: 3,
            hidden_width: 64,
            learning_rate: 5e-5,
            constraint_weight: 5e-5,
            stage1_epochs: 100_000,
            stage1_target_mse: 1e-10,
            stage2_max_epochs: 10_000,
            validate_every: 25,
            rng_seed: 0,
            post_process_grid_denominator: 1_000_000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("seed_dim", self.seed_dim),
            ("hidden_layers", self.hidden_layers),
            ("hidden_width", self.hidden_width),
            ("validate_every", self.validate_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        let reals = [
            ("learning_rate", self.learning_rate),
            ("constraint_weight", self.constraint_weight),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
        }
        if !(self.stage1_target_mse >= 0.0) {
            return Err(Error::InvalidInput("stage1_target_mse must be nonnegative".into()));
        }
        if self.post_process_grid_denominator == 0 {
            return Err(Error::InvalidInput(
                "post_process_grid_denominator must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = OptimizerConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<OptimizerConfig>(&text).unwrap(), cfg);
        let partial: OptimizerConfig = serde_json::from_str(r#"{"rng_seed": 7}"#).unwrap();
        assert_eq!(partial.rng_seed, 7);
        assert_eq!(partial.stage1_epochs, 100_000);
        assert!(serde_json::from_str::<OptimizerConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rejects_zero_sizes() {
        let cfg = OptimizerConfig {
            hidden_width: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
