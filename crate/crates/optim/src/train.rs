//! Seed-parameterized bound vectors, the two training stages, the shift that
//! restores the noncrossing constraint, and the split-sample protocol.
//!
//! Levels: `delta` passed to [`split_optimize_apply`] is the joint two-sided
//! level of the final band; the one-sided constraint trained against is
//! `P(∀i U_(i) ≥ L_i) ≥ 1 - delta/2`, matching the Berk-Jones calibration.
//!
//! The split shuffles each group with a seeded generator and takes the first
//! `m = ⌊n/2⌋` values for training. When the held-out part is longer than `m`,
//! the vector is padded with copies of `L_m` and shifted again, since padding
//! alone lowers the noncrossing probability.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use certband_core::crossing::{calibrate_berk_jones, noncrossing_probability, noncrossing_with_gradient, DEFAULT_TOL};
use certband_core::{BoundMethod, BoundVector, Error, LossSamples, OrderStats, Result};

use crate::config::OptimizerConfig;
use crate::network::{Adam, Mlp};
use crate::objective::Objective;

/// `L_i = Σ_{j≤i} e^{φ_j} / (1 + Σ_j e^{φ_j})`, evaluated with a shift so
/// large outputs do not overflow.
pub fn parameterize(phi: &[f64]) -> Vec<f64> {
    parameterize_with_weights(phi).0
}

// Returns L, e_j / Z.
fn parameterize_with_weights(phi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let shift = phi.iter().cloned().fold(0.0, f64::max);
    let e: Vec<f64> = phi.iter().map(|p| (p - shift).exp()).collect();
    let z = (-shift).exp() + e.iter().sum::<f64>();
    let mut acc = 0.0;
    let l = e
        .iter()
        .map(|w| {
            acc += w;
            (acc / z).min(1.0)
        })
        .collect();
    (l, e.iter().map(|w| w / z).collect())
}

/// Pulls `dJ/dL` back to `dJ/dφ_j = (e_j/Z)(Σ_{i≥j} g_i - Σ_i g_i L_i)`.
fn chain_to_phi(l: &[f64], weights: &[f64], g: &[f64]) -> Vec<f64> {
    let dot: f64 = g.iter().zip(l).map(|(a, b)| a * b).sum();
    let mut suffix = 0.0;
    let mut out = vec![0.0; l.len()];
    for j in (0..l.len()).rev() {
        suffix += g[j];
        out[j] = weights[j] * (suffix - dot);
    }
    out
}

/// Network plus the fixed Gaussian seeds it maps to vector entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    net: Mlp,
    seeds: Vec<Vec<f64>>,
}

impl Model {
    /// Seeds and initial weights drawn from `config.rng_seed`.
    pub fn new(config: &OptimizerConfig, n: usize) -> Result<Self> {
        config.validate()?;
        if n == 0 {
            return Err(Error::InvalidInput("bound vector length must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let seeds = (0..n)
            .map(|_| (0..config.seed_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let net = Mlp::new(config.seed_dim, &config.hidden(), &mut rng);
        Ok(Self { net, seeds })
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn bound_vector(&self) -> Vec<f64> {
        let (phi, _) = self.net.forward(&self.seeds);
        parameterize(&phi)
    }

    /// `f(L)` and its gradient in the network parameters, given
    /// `f_and_grad(L) -> (f, df/dL)`.
    pub fn value_and_param_grad(
        &self,
        f_and_grad: impl FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (phi, tape) = self.net.forward(&self.seeds);
        let (l, weights) = parameterize_with_weights(&phi);
        let (value, g) = f_and_grad(&l)?;
        let upstream = chain_to_phi(&l, &weights, &g);
        Ok((value, self.net.backward(&tape, &upstream), l))
    }
}

/// Penalized stage-2 objective `J(L) = f(L) + λ max(0, (1-δ) - P(L))` and
/// its gradient in `L`, plus `f` and `P` for logging.
pub fn penalized(
    objective: &dyn Objective,
    data: &[OrderStats],
    l: &[f64],
    delta: f64,
    weight: f64,
) -> Result<(f64, Vec<f64>, f64, f64)> {
    let f = objective.value(data, l)?;
    let mut grad = objective.gradient(data, l)?;
    let (p, dp) = noncrossing_with_gradient(l)?;
    let gap = (1.0 - delta) - p;
    let mut j = f;
    if gap > 0.0 {
        j += weight * gap;
        for (g, d) in grad.iter_mut().zip(&dp) {
            *g -= weight * d;
        }
    }
    Ok((j, grad, f, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub epochs: usize,
    pub mse: f64,
}

/// Fits the model's vector to `target` by mean-squared error.
pub fn stage1_fit(config: &OptimizerConfig, model: &mut Model, target: &[f64]) -> Result<Stage1Report> {
    config.validate()?;
    if target.len() != model.len() {
        return Err(Error::SizeMismatch {
            bound: target.len(),
            samples: model.len(),
        });
    }
    let n = target.len() as f64;
    let mut adam = Adam::new(config.learning_rate, model.net.num_params());
    let mse_and_grad = |l: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mse = l.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        Ok((mse, l.iter().zip(target).map(|(a, b)| 2.0 * (a - b) / n).collect()))
    };
    let mut epochs = 0;
    let mut mse = f64::INFINITY;
    while epochs < config.stage1_epochs {
        let (value, grad, _) = model.value_and_param_grad(mse_and_grad)?;
        mse = value;
        if mse <= config.stage1_target_mse {
            break;
        }
        adam.step(model.net.params_mut(), &grad);
        epochs += 1;
    }
    if epochs == config.stage1_epochs {
        mse = mse_and_grad(&model.bound_vector())?.0;
    }
    Ok(Stage1Report { epochs, mse })
}

/// Smallest `γ ≥ 0` (bisection to 1e-9, rounded up to the grid
/// `1/grid_denominator`) with `P(max(L - γ, 0)) ≥ 1 - delta`, and the shifted
/// vector.
pub fn enforce_constraint(l: &[f64], delta: f64, grid_denominator: u64) -> Result<(f64, Vec<f64>)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} outside (0, 1)")));
    }
    let target = 1.0 - delta;
    let shifted = |g: f64| -> Vec<f64> { l.iter().map(|v| (v - g).max(0.0)).collect() };
    let feasible = |g: f64| -> Result<bool> { Ok(noncrossing_probability(&shifted(g))? >= target) };
    if feasible(0.0)? {
        return Ok((0.0, l.to_vec()));
    }
    let (mut lo, mut hi) = (0.0, l[l.len() - 1]);
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let step = 1.0 / grid_denominator as f64;
    let mut gamma = (hi / step).ceil() * step;
    while !feasible(gamma)? {
        gamma += step;
    }
    Ok((gamma, shifted(gamma)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub epoch: usize,
    pub objective: f64,
    pub probability: f64,
    pub gamma_star: f64,
    pub certified_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBound {
    #[serde(rename = "L_hat")]
    pub l_hat: BoundVector,
    pub gamma_star: f64,
    pub objective: String,
    pub stage1: Option<Stage1Report>,
    pub training_log: Vec<LogEntry>,
}

/// Gradient steps on the penalized objective, validating every
/// `validate_every` epochs (and at the start) and keeping the model whose
/// shifted vector has the smallest certified value on `data`.
pub fn stage2_optimize(
    config: &OptimizerConfig,
    model: &mut Model,
    objective: &dyn Objective,
    data: &[OrderStats],
    delta: f64,
) -> Result<TrainedBound> {
    config.validate()?;
    let mut adam = Adam::new(config.learning_rate, model.net.num_params());
    let mut log = Vec::new();
    let mut best: Option<(f64, Mlp, f64, Vec<f64>)> = None;
    for epoch in 0..=config.stage2_max_epochs {
        let mut record = None;
        let (_, grad, l) = model.value_and_param_grad(|l| {
            let (j, g, f, p) = penalized(objective, data, l, delta, config.constraint_weight)?;
            record = Some((f, p));
            Ok((j, g))
        })?;
        if epoch % config.validate_every == 0 || epoch == config.stage2_max_epochs {
            let (f, p) = record.expect("set by the closure");
            let (gamma, shifted) = enforce_constraint(&l, delta, config.post_process_grid_denominator)?;
            let certified = objective.value(data, &shifted)?;
            log.push(LogEntry {
                epoch,
                objective: f,
                probability: p,
                gamma_star: gamma,
                certified_bound: certified,
            });
            if best.as_ref().is_none_or(|(c, ..)| certified < *c) {
                best = Some((certified, model.net.clone(), gamma, shifted));
            }
        }
        if epoch < config.stage2_max_epochs {
            adam.step(model.net.params_mut(), &grad);
        }
    }
    let (_, net, gamma, shifted) = best.expect("validated at epoch 0");
    model.net = net;
    let l_hat = BoundVector::new(shifted, delta, BoundMethod::Optimized)?;
    verify(&l_hat)?;
    Ok(TrainedBound {
        l_hat,
        gamma_star: gamma,
        objective: objective.describe(),
        stage1: None,
        training_log: log,
    })
}

fn verify(l: &BoundVector) -> Result<()> {
    let p = noncrossing_probability(l.values())?;
    if p < 1.0 - l.delta() {
        return Err(Error::NoConvergence(format!(
            "post-processed vector has noncrossing probability {p} < {}",
            1.0 - l.delta()
        )));
    }
    Ok(())
}

/// Stage 1 towards the Berk-Jones vector at one-sided level `delta`, then
/// stage 2 on `data`. A model already fitted by stage 1 can be passed to
/// skip that stage.
pub fn train_bound(
    config: &OptimizerConfig,
    objective: &dyn Objective,
    data: &[OrderStats],
    delta: f64,
    warm_start: Option<&Model>,
) -> Result<(TrainedBound, Model)> {
    let m = data.first().ok_or(Error::NoSamples)?.len();
    let (mut model, stage1) = match warm_start {
        Some(model) if model.len() == m => (model.clone(), None),
        Some(model) => {
            return Err(Error::SizeMismatch {
                bound: model.len(),
                samples: m,
            })
        }
        None => {
            let mut model = Model::new(config, m)?;
            let target = calibrate_berk_jones(m, delta, DEFAULT_TOL)?;
            let report = stage1_fit(config, &mut model, target.values())?;
            (model, Some(report))
        }
    };
    let mut trained = stage2_optimize(config, &mut model, objective, data, delta)?;
    trained.stage1 = stage1;
    Ok((trained, model))
}

/// Stage-1 model for training vectors of length `m` at one-sided `delta`,
/// reusable across runs with the same configuration.
pub fn stage1_model(config: &OptimizerConfig, m: usize, delta: f64) -> Result<(Model, Stage1Report)> {
    let mut model = Model::new(config, m)?;
    let target = calibrate_berk_jones(m, delta, DEFAULT_TOL)?;
    let report = stage1_fit(config, &mut model, target.values())?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub trained: TrainedBound,
    /// Vector applied to the held-out part (padded and shifted if needed).
    pub holdout_vector: BoundVector,
    pub holdout_gamma: f64,
    pub final_bound: f64,
}

/// Trains on half of each group and evaluates the objective on the other
/// half. All groups must have the same size `n ≥ 2`.
pub fn split_optimize_apply(
    groups: &[LossSamples],
    objective: &dyn Objective,
    delta: f64,
    config: &OptimizerConfig,
    warm_start: Option<&Model>,
) -> Result<SplitOutcome> {
    config.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} outside (0, 1)")));
    }
    let n = groups.first().ok_or(Error::NoSamples)?.len();
    if n < 2 {
        return Err(Error::InvalidInput("split protocol needs at least 2 samples".into()));
    }
    if groups.iter().any(|g| g.len() != n) {
        return Err(Error::InvalidInput(
            "groups must have equal sizes to share a bound vector".into(),
        ));
    }
    let m = n / 2;
    let one_sided = delta / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(1);
    let mut train = Vec::with_capacity(groups.len());
    let mut holdout = Vec::with_capacity(groups.len());
    for g in groups {
        let mut values = g.values().to_vec();
        values.shuffle(&mut rng);
        train.push(OrderStats::from_values(&values[..m])?);
        holdout.push(OrderStats::from_values(&values[m..])?);
    }
    let (trained, _) = train_bound(config, objective, &train, one_sided, warm_start)?;
    let (holdout_gamma, holdout_l) = if n - m > m {
        let mut padded = trained.l_hat.values().to_vec();
        padded.resize(n - m, padded[m - 1]);
        enforce_constraint(&padded, one_sided, config.post_process_grid_denominator)?
    } else {
        (0.0, trained.l_hat.values().to_vec())
    };
    let holdout_vector = BoundVector::new(holdout_l, one_sided, BoundMethod::Optimized)?;
    verify(&holdout_vector)?;
    let final_bound = objective.value(&holdout, holdout_vector.values())?;
    Ok(SplitOutcome {
        trained,
        holdout_vector,
        holdout_gamma,
        final_bound,
    })
}
