//! Pointwise bands on a joint CDF of `k` coordinates, combining a
//! multivariate DKW radius around the empirical CDF with Fréchet–Hoeffding
//! limits built from per-coordinate bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{build_band, BandMethod, CdfBand};
use crate::error::{Error, Result};
use crate::functional::ValueInterval;
use crate::samples::LossSamples;

/// How the failure budget `δ` is spent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetSplit {
    /// Radius at `δ` and marginals at `δ/k`: the interval holds with
    /// probability at least `1 - 2δ`.
    #[default]
    TwoDelta,
    /// Radius at `δ/2` and marginals at `δ/(2k)`: overall `1 - δ`.
    PreSplit,
}

impl BudgetSplit {
    fn radius_delta(self, delta: f64) -> f64 {
        match self {
            BudgetSplit::TwoDelta => delta,
            BudgetSplit::PreSplit => delta / 2.0,
        }
    }

    /// Level at which each of the `k` marginal bands must be built.
    pub fn marginal_delta(self, delta: f64, k: usize) -> f64 {
        self.radius_delta(delta) / k as f64
    }

    /// Guaranteed failure probability of the combined interval.
    pub fn overall_delta(self, delta: f64) -> f64 {
        match self {
            BudgetSplit::TwoDelta => 2.0 * delta,
            BudgetSplit::PreSplit => delta,
        }
    }
}

fn dimension(points: &[Vec<f64>]) -> Result<usize> {
    let k = points.first().ok_or(Error::NoSamples)?.len();
    if k == 0 {
        return Err(Error::InvalidInput("points must have at least one coordinate".into()));
    }
    if let Some(i) = points.iter().position(|p| p.len() != k) {
        return Err(Error::InvalidInput(format!(
            "point {i} has dimension {} instead of {k}",
            points[i].len()
        )));
    }
    if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
    }
    Ok(k)
}

/// Fraction of points coordinatewise at or below `query`.
pub fn multidim_ecdf(points: &[Vec<f64>], query: &[f64]) -> Result<f64> {
    let k = dimension(points)?;
    if query.len() != k {
        return Err(Error::InvalidInput(format!(
            "query has dimension {} instead of {k}",
            query.len()
        )));
    }
    Ok(ecdf_unchecked(points, query))
}

fn ecdf_unchecked(points: &[Vec<f64>], query: &[f64]) -> f64 {
    let hits = points
        .iter()
        .filter(|p| p.iter().zip(query).all(|(a, b)| a <= b))
        .count();
    hits as f64 / points.len() as f64
}

/// `sqrt(ln(k(n+1)/δ) / (2n))`.
pub fn multidim_dkw_radius(n: usize, k: usize, delta: f64) -> Result<f64> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidInput("n and k must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} outside (0, 1)")));
    }
    Ok(((k as f64 * (n as f64 + 1.0) / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Per-coordinate bands at the level `split` requires.
pub fn build_marginal_bands(
    points: &[Vec<f64>],
    method: &BandMethod,
    delta: f64,
    split: BudgetSplit,
) -> Result<Vec<CdfBand>> {
    let k = dimension(points)?;
    let level = split.marginal_delta(delta, k);
    (0..k)
        .map(|j| {
            let values: Vec<f64> = points.iter().map(|p| p[j]).collect();
            let nonneg = values.iter().all(|v| *v >= 0.0);
            let samples = LossSamples::build(values, None, None, nonneg)?;
            build_band(&samples, method, level)
        })
        .collect()
}

/// Band on the joint CDF at `query`, intersecting the Fréchet–Hoeffding
/// limits of the marginal bands with the DKW ball around the empirical CDF.
pub fn multidim_band_query(
    points: &[Vec<f64>],
    marginals: &[CdfBand],
    delta: f64,
    split: BudgetSplit,
    query: &[f64],
) -> Result<ValueInterval> {
    Ok(multidim_band_grid(points, marginals, delta, split, &[query.to_vec()])?[0])
}

/// [`multidim_band_query`] over many queries.
pub fn multidim_band_grid(
    points: &[Vec<f64>],
    marginals: &[CdfBand],
    delta: f64,
    split: BudgetSplit,
    queries: &[Vec<f64>],
) -> Result<Vec<ValueInterval>> {
    let k = dimension(points)?;
    if marginals.len() != k {
        return Err(Error::InvalidInput(format!(
            "{} marginal bands for {k} coordinates",
            marginals.len()
        )));
    }
    let expected = split.marginal_delta(delta, k);
    if let Some(b) = marginals.iter().find(|b| b.delta() > expected * (1.0 + 1e-9)) {
        return Err(Error::InvalidInput(format!(
            "marginal band at delta {} exceeds the per-coordinate budget {expected}",
            b.delta()
        )));
    }
    if let Some(q) = queries.iter().find(|q| q.len() != k) {
        return Err(Error::InvalidInput(format!(
            "query has dimension {} instead of {k}",
            q.len()
        )));
    }
    let r = multidim_dkw_radius(points.len(), k, split.radius_delta(delta))?;
    Ok(queries
        .par_iter()
        .map(|q| {
            let ecdf = ecdf_unchecked(points, q);
            let lower_sum: f64 = marginals.iter().zip(q).map(|(b, &x)| b.lower().eval(x)).sum();
            let upper_min = marginals
                .iter()
                .zip(q)
                .map(|(b, &x)| b.upper().eval(x))
                .fold(1.0, f64::min);
            let lo = (1.0 - k as f64 + lower_sum).max(ecdf - r).max(0.0);
            let hi = upper_min.min(ecdf + r).min(1.0);
            // Both sides hold on the same event, so lo <= hi there; outside it
            // the intersection can be empty and is widened to a point.
            ValueInterval { lo: lo.min(hi), hi }
        })
        .collect())
}
