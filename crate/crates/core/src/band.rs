//! Two-sided CDF bands from a bound vector and the sample's order statistics.
//!
//! The lower side is the conservative completion of `F(X_(i)) >= L_i`. The
//! upper side applies the same vector to the reflected sample:
//! `R = 1 - L_n` below `X_(1)`, `1 - L_{n-i}` on `[X_(i), X_(i+1))` and `1`
//! from `X_(n)` on. (Some statements of this reduction write `1 - L_{n-i+1}`
//! on `[X_(i), X_(i+1))`; that index is off by one and is not used.)
//!
//! Each side fails with probability at most the one-sided level of the
//! vector, so a joint level `δ` needs a vector calibrated at `δ/2`. The DKW
//! radius `sqrt(ln(2/δ)/(2n))` already has that split built in.

use serde::{Deserialize, Serialize};

use crate::coverage::DistSpec;
use crate::crossing::{
    calibrate_berk_jones, calibrate_dkw, calibrate_truncated_bj, BoundMethod, BoundVector, DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::samples::{order_statistics, LossSamples, OrderStats};
use crate::step::{QuantilePiece, StepCdf, Tail, LEVEL_TOL};

/// Default number of points in an exact plug-in discretization.
pub const DEFAULT_PLUGIN_POINTS: usize = 10_000;

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_points() -> usize {
    DEFAULT_PLUGIN_POINTS
}

/// How the bound vector of a band is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BandMethod {
    Dkw,
    BerkJones {
        #[serde(default = "default_tol")]
        tol: f64,
    },
    TruncatedBj {
        beta_min: f64,
        beta_max: f64,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// A precomputed vector, e.g. from the optimizer; its own one-sided level
    /// must already account for both sides.
    Optimized {
        #[serde(rename = "L")]
        l: BoundVector,
    },
    /// Oracle fixture: the band is the discretized true CDF itself.
    ExactPlugin {
        dist: DistSpec,
        #[serde(default = "default_points")]
        points: usize,
    },
}

impl BandMethod {
    pub fn berk_jones() -> Self {
        BandMethod::BerkJones { tol: DEFAULT_TOL }
    }

    pub fn truncated_bj(beta_min: f64, beta_max: f64) -> Self {
        BandMethod::TruncatedBj {
            beta_min,
            beta_max,
            tol: DEFAULT_TOL,
        }
    }

    pub fn tag(&self) -> BoundMethod {
        match self {
            BandMethod::Dkw => BoundMethod::Dkw,
            BandMethod::BerkJones { .. } => BoundMethod::BerkJones,
            BandMethod::TruncatedBj { .. } => BoundMethod::TruncatedBj,
            BandMethod::Optimized { .. } => BoundMethod::Optimized,
            BandMethod::ExactPlugin { .. } => BoundMethod::ExactPlugin,
        }
    }

    /// The vector behind a two-sided band at joint level `delta`.
    pub fn bound_vector(&self, n: usize, delta: f64) -> Result<BoundVector> {
        match self {
            BandMethod::Dkw => calibrate_dkw(n, delta),
            BandMethod::BerkJones { tol } => calibrate_berk_jones(n, delta / 2.0, *tol),
            BandMethod::TruncatedBj {
                beta_min,
                beta_max,
                tol,
            } => calibrate_truncated_bj(n, delta / 2.0, *beta_min, *beta_max, *tol),
            BandMethod::Optimized { l } => {
                if l.len() != n {
                    return Err(Error::SizeMismatch {
                        bound: l.len(),
                        samples: n,
                    });
                }
                Ok(l.clone())
            }
            BandMethod::ExactPlugin { .. } => Err(Error::InvalidInput(
                "exact_plugin bands are not built from a calibrated vector".into(),
            )),
        }
    }
}

/// Lower and upper step CDF bounds on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "BandRecord", try_from = "BandRecord")]
pub struct CdfBand {
    delta: f64,
    method: BoundMethod,
    l: Option<BoundVector>,
    order_stats: OrderStats,
    lower: StepCdf,
    upper: StepCdf,
    support_max: Option<f64>,
    nonneg: bool,
}

/// Serialized form; field order is fixed so certificates are byte-stable.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BandRecord {
    delta: f64,
    method: BoundMethod,
    n: usize,
    #[serde(rename = "L")]
    l: Option<Vec<f64>>,
    #[serde(rename = "L_delta")]
    l_delta: Option<f64>,
    order_stats: Vec<f64>,
    breakpoints: Vec<f64>,
    lower_levels: Vec<f64>,
    upper_levels: Vec<f64>,
    lower_before: f64,
    upper_before: f64,
    support_max: Option<f64>,
    nonneg: bool,
}

impl From<CdfBand> for BandRecord {
    fn from(band: CdfBand) -> Self {
        BandRecord {
            delta: band.delta,
            method: band.method,
            n: band.order_stats.len(),
            l: band.l.as_ref().map(|v| v.values().to_vec()),
            l_delta: band.l.as_ref().map(|v| v.delta()),
            breakpoints: band.lower.breakpoints().to_vec(),
            lower_levels: band.lower.levels().to_vec(),
            upper_levels: band.upper.levels().to_vec(),
            lower_before: band.lower.level_before(),
            upper_before: band.upper.level_before(),
            order_stats: band.order_stats.into(),
            support_max: band.support_max,
            nonneg: band.nonneg,
        }
    }
}

impl TryFrom<BandRecord> for CdfBand {
    type Error = Error;

    fn try_from(rec: BandRecord) -> Result<Self> {
        let order_stats = OrderStats::try_from(rec.order_stats)?;
        if order_stats.len() != rec.n {
            return Err(Error::InvalidInput(format!(
                "band declares n={} but lists {} order statistics",
                rec.n,
                order_stats.len()
            )));
        }
        let l = match (rec.l, rec.l_delta) {
            (Some(l), Some(d)) => Some(BoundVector::new(l, d, rec.method)?),
            (Some(l), None) => Some(BoundVector::new(l, rec.delta, rec.method)?),
            (None, _) => None,
        };
        let lower_closed = rec.lower_levels.last().is_some_and(|&v| (v - 1.0).abs() <= LEVEL_TOL);
        let lower_tail = if lower_closed {
            Tail::Closed
        } else {
            Tail::Open { jump_at: f64::INFINITY }
        };
        let lower = StepCdf::new(rec.breakpoints.clone(), rec.lower_levels, rec.lower_before, lower_tail)?;
        let upper = StepCdf::new(rec.breakpoints, rec.upper_levels, rec.upper_before, Tail::Closed)?;
        CdfBand::assemble(
            rec.delta,
            rec.method,
            l,
            order_stats,
            lower,
            upper,
            rec.support_max,
            rec.nonneg,
        )
    }
}

// Distinct sample values with the largest 1-based index carrying each value.
fn distinct_with_last_index(stats: &OrderStats) -> Vec<(f64, usize)> {
    let x = stats.as_slice();
    (0..x.len())
        .filter(|&i| i + 1 == x.len() || x[i + 1] > x[i])
        .map(|i| (x[i], i + 1))
        .collect()
}

fn check_sizes(stats: &OrderStats, l: &[f64]) -> Result<()> {
    if stats.len() != l.len() {
        return Err(Error::SizeMismatch {
            bound: l.len(),
            samples: stats.len(),
        });
    }
    Ok(())
}

/// Conservative completion: 0 below `X_(1)`, `L_i` on `[X_(i), X_(i+1))`,
/// `L_n` up to the support maximum and 1 from there (open above if unknown).
pub fn lower_band(stats: &OrderStats, l: &[f64], support_max: Option<f64>) -> Result<StepCdf> {
    check_sizes(stats, l)?;
    let mut breakpoints = Vec::new();
    let mut levels = Vec::new();
    for (x, i) in distinct_with_last_index(stats) {
        breakpoints.push(x);
        levels.push(l[i - 1]);
    }
    let top = stats.max();
    let tail = match support_max.filter(|b| b.is_finite()) {
        Some(b) if b < top => {
            return Err(Error::InvalidInput(format!(
                "support_max {b} is below the largest sample {top}"
            )))
        }
        Some(b) if b == top => {
            *levels.last_mut().expect("nonempty sample") = 1.0;
            Tail::Closed
        }
        Some(b) => {
            breakpoints.push(b);
            levels.push(1.0);
            Tail::Closed
        }
        None if l[l.len() - 1] >= 1.0 => Tail::Closed,
        None => Tail::Open { jump_at: f64::INFINITY },
    };
    StepCdf::new(breakpoints, levels, 0.0, tail)
}

/// Reflected bound: `1 - L_n` below `X_(1)`, `1 - L_{n-i}` on
/// `[X_(i), X_(i+1))`, 1 from `X_(n)` on.
pub fn upper_band(stats: &OrderStats, l: &[f64]) -> Result<StepCdf> {
    check_sizes(stats, l)?;
    let n = l.len();
    let (breakpoints, levels) = distinct_with_last_index(stats)
        .into_iter()
        .map(|(x, i)| (x, if i == n { 1.0 } else { 1.0 - l[n - i - 1] }))
        .unzip();
    StepCdf::new(breakpoints, levels, 1.0 - l[n - 1], Tail::Closed)
}

fn merged_grid(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut grid: Vec<f64> = a.iter().chain(b).copied().collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

impl CdfBand {
    /// Band from an explicit vector at joint level `delta`.
    pub fn from_vector(samples: &LossSamples, l: BoundVector, delta: f64) -> Result<Self> {
        let stats = order_statistics(samples)?;
        let lower = lower_band(&stats, l.values(), samples.support_max())?;
        let upper = upper_band(&stats, l.values())?;
        CdfBand::assemble(
            delta,
            l.method(),
            Some(l),
            stats,
            lower,
            upper,
            samples.support_max(),
            samples.nonneg(),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        delta: f64,
        method: BoundMethod,
        l: Option<BoundVector>,
        order_stats: OrderStats,
        lower: StepCdf,
        upper: StepCdf,
        support_max: Option<f64>,
        nonneg: bool,
    ) -> Result<Self> {
        let grid = merged_grid(lower.breakpoints(), upper.breakpoints());
        let lower = lower.on_grid(&grid)?;
        let upper = upper.on_grid(&grid)?;
        if lower.level_before() > upper.level_before() + LEVEL_TOL {
            return Err(Error::InvalidInput("lower band exceeds upper band".into()));
        }
        for (j, &x) in grid.iter().enumerate() {
            let mut probes = vec![x];
            if let Some(&next) = grid.get(j + 1) {
                probes.push(0.5 * (x + next));
            }
            for p in probes {
                if lower.eval(p) > upper.eval(p) + LEVEL_TOL {
                    return Err(Error::InvalidInput(format!("lower band exceeds upper band at {p}")));
                }
            }
        }
        Ok(Self {
            delta,
            method,
            l,
            order_stats,
            lower,
            upper,
            support_max,
            nonneg,
        })
    }

    /// A band with transformed sides but the same sample and level (used for
    /// derived distributions such as the maximum of `k` draws).
    pub fn derived(&self, lower: StepCdf, upper: StepCdf) -> Result<Self> {
        CdfBand::assemble(
            self.delta,
            self.method,
            None,
            self.order_stats.clone(),
            lower,
            upper,
            self.support_max,
            self.nonneg,
        )
    }

    pub fn lower(&self) -> &StepCdf {
        &self.lower
    }

    pub fn upper(&self) -> &StepCdf {
        &self.upper
    }

    /// Joint two-sided miscoverage (0 for exact plug-in bands).
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn method(&self) -> BoundMethod {
        self.method
    }

    pub fn bound_vector(&self) -> Option<&BoundVector> {
        self.l.as_ref()
    }

    pub fn order_stats(&self) -> &OrderStats {
        &self.order_stats
    }

    pub fn n(&self) -> usize {
        self.order_stats.len()
    }

    pub fn support_max(&self) -> Option<f64> {
        self.support_max
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    /// Value used for inverse queries that fall below the first breakpoint.
    pub fn floor(&self) -> Option<f64> {
        self.nonneg.then_some(0.0)
    }

    /// Pieces of `F_L^-`, the larger (pessimistic) quantile function.
    pub fn lower_pieces(&self) -> Vec<QuantilePiece> {
        self.lower.quantile_pieces(self.floor())
    }

    /// Pieces of `F_U^-`, the smaller (optimistic) quantile function.
    pub fn upper_pieces(&self) -> Vec<QuantilePiece> {
        self.upper.quantile_pieces(self.floor())
    }

    fn clamp(&self, x: f64) -> f64 {
        match self.floor() {
            Some(f) if x < f => f,
            _ => x,
        }
    }

    /// `F_L^-(p)`, an upper bound on the true quantile.
    pub fn lower_inverse(&self, p: f64) -> Result<f64> {
        Ok(self.clamp(self.lower.inverse(p)?))
    }

    /// `F_U^-(p)`, a lower bound on the true quantile.
    pub fn upper_inverse(&self, p: f64) -> Result<f64> {
        Ok(self.clamp(self.upper.inverse(p)?))
    }
}

/// Builds a band at joint level `delta` from the samples.
pub fn build_band(samples: &LossSamples, method: &BandMethod, delta: f64) -> Result<CdfBand> {
    if let BandMethod::ExactPlugin { dist, points } = method {
        return exact_plugin_band(dist, *points);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} outside (0, 1)")));
    }
    let l = method.bound_vector(samples.len(), delta)?;
    CdfBand::from_vector(samples, l, delta)
}

/// Oracle band: lower = upper = the true CDF sampled at `j/m` quantiles.
pub fn exact_plugin_band(dist: &DistSpec, points: usize) -> Result<CdfBand> {
    dist.validate()?;
    if points == 0 {
        return Err(Error::InvalidInput("exact_plugin needs at least one point".into()));
    }
    let m = points as f64;
    let xs: Vec<f64> = (1..=points).map(|j| dist.quantile(j as f64 / m)).collect();
    let l: Vec<f64> = (1..=points).map(|j| j as f64 / m).collect();
    let samples = LossSamples::build(xs, None, Some(dist.support_max()), dist.nonneg())?;
    let l = BoundVector::new(l, 0.0, BoundMethod::ExactPlugin)?;
    CdfBand::from_vector(&samples, l, 0.0)
}

/// `(lo, hi)` bounds on `VaR_β = F^-(β)`.
pub fn var_bounds(band: &CdfBand, beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("VaR level {beta} outside (0, 1)")));
    }
    let hi = band.lower_inverse(beta)?;
    let lo = band.upper_inverse(beta)?;
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stats(v: &[f64]) -> OrderStats {
        OrderStats::from_values(v).unwrap()
    }

    #[test]
    fn lower_band_example() {
        let f = lower_band(&stats(&[1.0, 2.0]), &[0.25, 0.5], Some(3.0)).unwrap();
        assert_eq!(f.breakpoints(), &[1.0, 2.0, 3.0]);
        assert_eq!(f.levels(), &[0.25, 0.5, 1.0]);
        assert_eq!(f.level_before(), 0.0);
        assert_eq!(f.tail(), Tail::Closed);
    }

    #[test]
    fn lower_band_edge_cases() {
        let f = lower_band(&stats(&[1.0, 2.0]), &[0.0, 0.0], Some(3.0)).unwrap();
        assert_eq!(f.eval(2.9), 0.0);
        assert_eq!(f.eval(3.0), 1.0);
        let f = lower_band(&stats(&[1.0, 2.0]), &[0.5, 1.0], None).unwrap();
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.tail(), Tail::Closed);
        let f = lower_band(&stats(&[1.0, 2.0]), &[0.5, 0.7], None).unwrap();
        assert_eq!(f.tail(), Tail::Open { jump_at: f64::INFINITY });
        assert!(matches!(
            lower_band(&stats(&[1.0]), &[0.5, 0.7], None),
            Err(Error::SizeMismatch { bound: 2, samples: 1 })
        ));
    }

    #[test]
    fn ties_take_largest_level() {
        let f = lower_band(&stats(&[1.0, 1.0, 2.0]), &[0.1, 0.3, 0.6], Some(2.0)).unwrap();
        assert_eq!(f.eval(1.0), 0.3);
        let u = upper_band(&stats(&[1.0, 1.0, 2.0]), &[0.1, 0.3, 0.6]).unwrap();
        // index 2 carries the value: 1 - L_1
        assert_eq!(u.eval(1.0), 0.9);
    }

    #[test]
    fn upper_band_example() {
        let r = upper_band(&stats(&[1.0, 2.0, 3.0]), &[0.1, 0.4, 0.7]).unwrap();
        assert_relative_eq!(r.level_before(), 0.3, epsilon = 1e-15);
        assert_relative_eq!(r.eval(1.5), 0.6, epsilon = 1e-15);
        assert_relative_eq!(r.eval(2.5), 0.9, epsilon = 1e-15);
        assert_eq!(r.eval(3.0), 1.0);
        let r = upper_band(&stats(&[1.0, 2.0]), &[0.0, 0.0]).unwrap();
        assert!([0.0, 1.0, 1.5, 2.0].iter().all(|&x| r.eval(x) == 1.0));
        let r = upper_band(&stats(&[1.0, 2.0]), &[0.3, 1.0]).unwrap();
        assert_eq!(r.eval(0.5), 0.0);
    }

    #[test]
    fn dkw_band_levels() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let samples = LossSamples::build(values, None, Some(1.0), true).unwrap();
        let band = build_band(&samples, &BandMethod::Dkw, 0.05).unwrap();
        let dkw = calibrate_dkw(100, 0.05).unwrap();
        assert_eq!(band.bound_vector().unwrap(), &dkw);
        assert_eq!(band.lower().eval(0.495), dkw.values()[49]);
    }

    #[test]
    fn berk_jones_band_is_ordered() {
        let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64 / 50.0).collect();
        let samples = LossSamples::build(values, None, Some(1.0), true).unwrap();
        let band = build_band(&samples, &BandMethod::berk_jones(), 0.1).unwrap();
        for &x in band.lower().breakpoints() {
            assert!(band.lower().eval(x) <= band.upper().eval(x));
        }
        // calibrated at half the joint level
        assert_eq!(band.bound_vector().unwrap().delta(), 0.05);
    }

    #[test]
    fn exact_plugin_sides_coincide() {
        let band = exact_plugin_band(&DistSpec::Uniform, 10_000).unwrap();
        let (lo, up) = (band.lower(), band.upper());
        assert_eq!(lo.breakpoints(), up.breakpoints());
        let gap = lo
            .levels()
            .iter()
            .zip(up.levels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-12);
        let (lo, hi) = var_bounds(&band, 0.5).unwrap();
        assert!((lo - 0.5).abs() < 1e-3 && (hi - 0.5).abs() < 1e-3);
    }

    #[test]
    fn var_bounds_vacuous_band() {
        let samples = LossSamples::build(vec![1.0, 2.0], None, Some(3.0), true).unwrap();
        let l = BoundVector::new(vec![0.0, 0.0], 0.05, BoundMethod::Optimized).unwrap();
        let band = CdfBand::from_vector(&samples, l, 0.05).unwrap();
        assert_eq!(var_bounds(&band, 0.5).unwrap(), (0.0, 3.0));
    }

    #[test]
    fn var_bounds_floor_below_first_level() {
        let samples = LossSamples::build(vec![1.0, 2.0], None, Some(3.0), true).unwrap();
        let l = BoundVector::new(vec![0.2, 0.4], 0.05, BoundMethod::Optimized).unwrap();
        let band = CdfBand::from_vector(&samples, l, 0.05).unwrap();
        // 1 - L_n = 0.6
        assert_eq!(var_bounds(&band, 0.5).unwrap().0, 0.0);
    }

    #[test]
    fn json_round_trip() {
        let samples = LossSamples::build(vec![0.3, 0.1, 0.7, 0.7], None, Some(1.0), true).unwrap();
        let band = build_band(&samples, &BandMethod::Dkw, 0.1).unwrap();
        let text = serde_json::to_string(&band).unwrap();
        assert!(text.starts_with(r#"{"delta":0.1,"method":"dkw","n":4,"L":"#));
        let back: CdfBand = serde_json::from_str(&text).unwrap();
        assert_eq!(back, band);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);

        let open = LossSamples::new(vec![0.3, 0.1]).unwrap();
        let band = build_band(&open, &BandMethod::Dkw, 0.1).unwrap();
        let back: CdfBand = serde_json::from_str(&serde_json::to_string(&band).unwrap()).unwrap();
        assert_eq!(back, band);
    }

    proptest! {
        #[test]
        fn upper_band_mirrors_lower_band(mut x in proptest::collection::vec(-5.0..5.0f64, 1..12), raw in proptest::collection::vec(0.0..1.0f64, 12)) {
            x.iter_mut().for_each(|v| *v = (*v * 4.0).round() / 4.0); // force ties
            let n = x.len();
            let mut l: Vec<f64> = raw[..n].to_vec();
            l.sort_by(f64::total_cmp);
            let r = upper_band(&stats(&x), &l).unwrap();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let mirror = lower_band(&stats(&neg), &l, None).unwrap();
            let mut probes: Vec<f64> = x.clone();
            probes.extend(x.iter().map(|v| v + 0.1));
            probes.extend([-10.0, 10.0]);
            for p in probes {
                prop_assert!((r.eval(p) - (1.0 - mirror.eval_left(-p))).abs() < 1e-15);
            }
        }

        #[test]
        fn inverse_ordering(values in proptest::collection::vec(0.0..10.0f64, 1..30), raw in proptest::collection::vec(0.0..0.5f64, 30)) {
            let n = values.len();
            let mut l: Vec<f64> = raw[..n].to_vec();
            l.sort_by(f64::total_cmp);
            let samples = LossSamples::build(values, None, Some(10.0), true).unwrap();
            let band = CdfBand::from_vector(&samples, BoundVector::new(l, 0.1, BoundMethod::Optimized).unwrap(), 0.1).unwrap();
            for k in 1..=1001 {
                let p = k as f64 / 1001.0;
                prop_assert!(band.lower_inverse(p).unwrap() >= band.upper_inverse(p).unwrap());
            }
            for &x in band.lower().breakpoints() {
                let level = band.lower().eval(x);
                if level > 0.0 {
                    prop_assert!(band.lower().inverse(level).unwrap() <= x);
                }
            }
        }
    }
}
