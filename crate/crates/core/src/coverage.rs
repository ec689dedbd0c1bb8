//! Reference distributions and Monte Carlo coverage checks for bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{build_band, BandMethod};
use crate::crossing::BoundVector;
use crate::error::{Error, Result};
use crate::samples::LossSamples;
use crate::special::{beta_inc, beta_inc_inv};

/// Points on which coverage of a continuous CDF is checked.
pub const COVERAGE_GRID: usize = 1001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Uniform,
    Beta {
        a: f64,
        b: f64,
    },
    /// Exponential with rate `lambda`, conditioned on `[0, truncate_at]`.
    Exponential {
        lambda: f64,
        truncate_at: f64,
    },
    /// Equal-weight atoms (repeats allowed).
    Discrete {
        atoms: Vec<f64>,
    },
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DistSpec::Uniform => true,
            DistSpec::Beta { a, b } => *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite(),
            DistSpec::Exponential { lambda, truncate_at } => {
                *lambda > 0.0 && lambda.is_finite() && *truncate_at > 0.0 && truncate_at.is_finite()
            }
            DistSpec::Discrete { atoms } => !atoms.is_empty() && atoms.iter().all(|a| a.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid distribution {self:?}")))
        }
    }

    /// Upper end of the support.
    pub fn support_max(&self) -> f64 {
        match self {
            DistSpec::Uniform | DistSpec::Beta { .. } => 1.0,
            DistSpec::Exponential { truncate_at, .. } => *truncate_at,
            DistSpec::Discrete { atoms } => atoms.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn support_min(&self) -> f64 {
        match self {
            DistSpec::Discrete { atoms } => atoms.iter().cloned().fold(f64::INFINITY, f64::min),
            _ => 0.0,
        }
    }

    pub fn nonneg(&self) -> bool {
        self.support_min() >= 0.0
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DistSpec::Uniform => x.clamp(0.0, 1.0),
            DistSpec::Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_inc(*a, *b, x).unwrap_or(f64::NAN)
                }
            }
            DistSpec::Exponential { lambda, truncate_at } => {
                if x <= 0.0 {
                    0.0
                } else if x >= *truncate_at {
                    1.0
                } else {
                    (-lambda * x).exp_m1() / (-lambda * truncate_at).exp_m1()
                }
            }
            DistSpec::Discrete { atoms } => atoms.iter().filter(|&&a| a <= x).count() as f64 / atoms.len() as f64,
        }
    }

    /// Generalized inverse `inf{x : F(x) >= p}` for `p` in `(0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            DistSpec::Uniform => p,
            DistSpec::Beta { a, b } => beta_inc_inv(*a, *b, p).unwrap_or(f64::NAN),
            DistSpec::Exponential { lambda, truncate_at } => {
                if p >= 1.0 {
                    *truncate_at
                } else {
                    -(p * (-lambda * truncate_at).exp_m1()).ln_1p() / lambda
                }
            }
            DistSpec::Discrete { atoms } => {
                let mut sorted = atoms.clone();
                sorted.sort_by(f64::total_cmp);
                let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
                sorted[k - 1]
            }
        }
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            DistSpec::Uniform => (0..n).map(|_| rng.random::<f64>()).collect(),
            DistSpec::Beta { a, b } => {
                let d = Beta::new(*a, *b).expect("validated shape");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            DistSpec::Exponential { .. } => (0..n).map(|_| self.quantile(rng.random::<f64>())).collect(),
            DistSpec::Discrete { atoms } => (0..n).map(|_| atoms[rng.random_range(0..atoms.len())]).collect(),
        }
    }

    /// Grid on which enclosure is checked: evenly spaced over the support
    /// plus every atom (and the point just below it) for discrete laws.
    pub fn check_points(&self) -> Vec<f64> {
        let lo = self.support_min();
        let hi = self.support_max();
        let mut pts: Vec<f64> = (0..COVERAGE_GRID)
            .map(|k| lo + (hi - lo) * k as f64 / (COVERAGE_GRID - 1) as f64)
            .collect();
        if let DistSpec::Discrete { atoms } = self {
            for &a in atoms {
                pts.push(a);
                pts.push(a - 1e-9 * (1.0 + a.abs()));
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup();
        }
        pts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: String,
    pub delta: f64,
    pub n: usize,
    pub trials: usize,
    pub covered: usize,
    pub coverage: f64,
    pub std_error: f64,
}

/// Fraction of simulated samples whose band encloses the true CDF on the
/// check grid. The bound vector is calibrated once and reused.
pub fn simulate_coverage(
    dist: &DistSpec,
    method: &BandMethod,
    delta: f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport> {
    dist.validate()?;
    if trials == 0 || n == 0 {
        return Err(Error::InvalidInput("trials and n must be at least 1".into()));
    }
    let fixed = match method {
        BandMethod::ExactPlugin { .. } => {
            return Err(Error::InvalidInput(
                "exact_plugin bands carry no coverage guarantee".into(),
            ))
        }
        other => BandMethod::Optimized {
            l: other.bound_vector(n, delta)?,
        },
    };
    let points = dist.check_points();
    let truth: Vec<f64> = points.iter().map(|&x| dist.cdf(x)).collect();
    let support_max = Some(dist.support_max());
    let nonneg = dist.nonneg();
    let covered = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<bool> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let values = dist.sample(n, &mut rng);
            let samples = LossSamples::build(values, None, support_max, nonneg)?;
            let band = build_band(&samples, &fixed, delta)?;
            Ok(points
                .iter()
                .zip(&truth)
                .all(|(&x, &f)| band.lower().eval(x) <= f + 1e-12 && f <= band.upper().eval(x) + 1e-12))
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&c| c)
        .count();
    let coverage = covered as f64 / trials as f64;
    Ok(CoverageReport {
        method: method.tag().to_string(),
        delta,
        n,
        trials,
        covered,
        coverage,
        std_error: (coverage * (1.0 - coverage) / trials as f64).sqrt(),
    })
}

/// Vector used by `build_band` for a calibrated method, exposed so repeated
/// simulations can share one calibration.
pub fn calibrated_vector(method: &BandMethod, n: usize, delta: f64) -> Result<BoundVector> {
    method.bound_vector(n, delta)
}

/// Monte Carlo estimate of `E[max - min]` over `k` draws, with standard error.
pub fn mean_range_mc(dist: &DistSpec, k: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    dist.validate()?;
    if k == 0 || trials == 0 {
        return Err(Error::InvalidInput("k and trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..trials {
        let draws = dist.sample(k, &mut rng);
        let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min);
        sum += hi - lo;
        sq += (hi - lo) * (hi - lo);
    }
    let mean = sum / trials as f64;
    let var = (sq / trials as f64 - mean * mean).max(0.0);
    Ok((mean, (var / trials as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_inverts_cdf() {
        let dists = [
            DistSpec::Uniform,
            DistSpec::Beta { a: 2.0, b: 5.0 },
            DistSpec::Exponential {
                lambda: 1.0,
                truncate_at: 20.0,
            },
        ];
        for d in &dists {
            for &p in &[0.01, 0.3, 0.5, 0.99] {
                assert_relative_eq!(d.cdf(d.quantile(p)), p, epsilon = 1e-10);
            }
        }
        let d = DistSpec::Discrete {
            atoms: vec![2.0, 1.0, 1.0, 3.0],
        };
        assert_eq!(d.quantile(0.5), 1.0);
        assert_eq!(d.quantile(0.51), 2.0);
        assert_eq!(d.cdf(1.0), 0.5);
    }

    #[test]
    fn point_mass_is_always_covered() {
        let d = DistSpec::Discrete { atoms: vec![0.4] };
        let r = simulate_coverage(&d, &BandMethod::Dkw, 0.1, 20, 50, 3).unwrap();
        assert_eq!(r.coverage, 1.0);
    }

    #[test]
    fn single_trial_is_binary() {
        let r = simulate_coverage(&DistSpec::Uniform, &BandMethod::Dkw, 0.1, 10, 1, 0).unwrap();
        assert!(r.coverage == 0.0 || r.coverage == 1.0);
    }

    #[test]
    fn uniform_range_pairs() {
        let (m, se) = mean_range_mc(&DistSpec::Uniform, 2, 200_000, 5).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 4.0 * se);
    }
}
