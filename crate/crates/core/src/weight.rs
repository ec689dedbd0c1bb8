//! Weight functions `ψ` on `[0, 1]` with exact segment integrals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default spread of the smoothed median.
pub const DEFAULT_SMOOTHING: f64 = 0.01;

const ROOT_GRID: usize = 256;

/// One polynomial piece `Σ c_k p^k` supported on `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySegment {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl PolySegment {
    pub fn eval(&self, p: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * p + c)
    }

    fn antiderivative(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * p + c / (k as f64 + 1.0);
        }
        acc * p
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let lo = a.max(self.lo);
        let hi = b.min(self.hi);
        if hi <= lo {
            return 0.0;
        }
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightFunction {
    ConstantOne,
    Cvar {
        beta: f64,
    },
    IntervalUniform {
        beta_min: f64,
        beta_max: f64,
    },
    /// `ψ(p) = p`.
    Linear,
    /// Gaussian bump `exp(-((p-β)/a)²) / (a√π)` restricted to `[0, 1]`
    /// without renormalization; the mass lost outside `[0, 1]` is below
    /// `1e-10` for `a <= 0.1` and `β` in `[0.2, 0.8]`.
    SmoothedMedian {
        beta: f64,
        #[serde(default = "default_smoothing")]
        a: f64,
    },
    /// General-sign piecewise polynomial; zero outside its segments.
    PiecewisePoly {
        segments: Vec<PolySegment>,
    },
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

impl WeightFunction {
    pub fn cvar(beta: f64) -> Result<Self> {
        let w = WeightFunction::Cvar { beta };
        w.validate()?;
        Ok(w)
    }

    pub fn interval_uniform(beta_min: f64, beta_max: f64) -> Result<Self> {
        let w = WeightFunction::IntervalUniform { beta_min, beta_max };
        w.validate()?;
        Ok(w)
    }

    pub fn smoothed_median(beta: f64, a: f64) -> Result<Self> {
        let w = WeightFunction::SmoothedMedian { beta, a };
        w.validate()?;
        Ok(w)
    }

    pub fn piecewise_poly(segments: Vec<PolySegment>) -> Result<Self> {
        let w = WeightFunction::PiecewisePoly { segments };
        w.validate()?;
        Ok(w)
    }

    /// Single polynomial on all of `[0, 1]`.
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        Self::piecewise_poly(vec![PolySegment {
            lo: 0.0,
            hi: 1.0,
            coeffs,
        }])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        match *self {
            WeightFunction::ConstantOne | WeightFunction::Linear => Ok(()),
            WeightFunction::Cvar { beta } => {
                if !(0.0..1.0).contains(&beta) {
                    return bad(format!("cvar level {beta} outside [0, 1)"));
                }
                Ok(())
            }
            WeightFunction::IntervalUniform { beta_min, beta_max } => {
                if !(0.0 <= beta_min && beta_min < beta_max && beta_max <= 1.0) {
                    return bad(format!(
                        "interval [{beta_min}, {beta_max}] is not a subinterval of [0, 1]"
                    ));
                }
                Ok(())
            }
            WeightFunction::SmoothedMedian { beta, a } => {
                if !(0.0..=1.0).contains(&beta) || !(a > 0.0 && a.is_finite()) {
                    return bad(format!(
                        "smoothed median needs beta in [0, 1] and a > 0, got ({beta}, {a})"
                    ));
                }
                Ok(())
            }
            WeightFunction::PiecewisePoly { ref segments } => {
                let mut prev_hi = 0.0;
                for s in segments {
                    if !(s.lo >= prev_hi && s.lo < s.hi && s.hi <= 1.0) {
                        return bad("polynomial segments must be ordered, disjoint and inside [0, 1]".into());
                    }
                    if s.coeffs.iter().any(|c| !c.is_finite()) {
                        return bad("polynomial coefficients must be finite".into());
                    }
                    prev_hi = s.hi;
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        match *self {
            WeightFunction::ConstantOne => 1.0,
            WeightFunction::Linear => p,
            WeightFunction::Cvar { beta } => {
                if p >= beta {
                    1.0 / (1.0 - beta)
                } else {
                    0.0
                }
            }
            WeightFunction::IntervalUniform { beta_min, beta_max } => {
                if (beta_min..=beta_max).contains(&p) {
                    1.0 / (beta_max - beta_min)
                } else {
                    0.0
                }
            }
            WeightFunction::SmoothedMedian { beta, a } => {
                let z = (p - beta) / a;
                (-z * z).exp() / (a * std::f64::consts::PI.sqrt())
            }
            WeightFunction::PiecewisePoly { ref segments } => segments
                .iter()
                .find(|s| p >= s.lo && p < s.hi)
                .map_or(0.0, |s| s.eval(p)),
        }
    }

    /// Exact `∫_a^b ψ(p) dp`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidInput(format!(
                "integration limits [{a}, {b}] outside [0, 1]"
            )));
        }
        if a > b {
            return Err(Error::InvalidInput(format!("integration limits reversed: {a} > {b}")));
        }
        Ok(self.integral_unchecked(a, b))
    }

    /// `∫_a^b ψ` for limits already known to satisfy `0 <= a <= b <= 1`.
    pub fn integral_unchecked(&self, a: f64, b: f64) -> f64 {
        match *self {
            WeightFunction::ConstantOne => b - a,
            WeightFunction::Linear => 0.5 * (b - a) * (b + a),
            WeightFunction::Cvar { beta } => {
                let lo = a.max(beta);
                if b <= lo {
                    0.0
                } else {
                    (b - lo) / (1.0 - beta)
                }
            }
            WeightFunction::IntervalUniform { beta_min, beta_max } => {
                let lo = a.max(beta_min);
                let hi = b.min(beta_max);
                if hi <= lo {
                    0.0
                } else {
                    (hi - lo) / (beta_max - beta_min)
                }
            }
            WeightFunction::SmoothedMedian { beta, a: spread } => {
                let za = (a - beta) / spread;
                let zb = (b - beta) / spread;
                // erfc keeps precision deep in either tail
                if za >= 0.0 {
                    0.5 * (libm::erfc(za) - libm::erfc(zb))
                } else if zb <= 0.0 {
                    0.5 * (libm::erfc(-zb) - libm::erfc(-za))
                } else {
                    0.5 * (libm::erf(zb) - libm::erf(za))
                }
            }
            WeightFunction::PiecewisePoly { ref segments } => segments.iter().map(|s| s.integral(a, b)).sum(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.integral_unchecked(0.0, 1.0)
    }

    /// Splits `ψ = ψ⁺ − ψ⁻` into nonnegative parts. Every kind except
    /// `piecewise_poly` is already nonnegative.
    pub fn split_signs(&self) -> (WeightFunction, WeightFunction) {
        let segments = match self {
            WeightFunction::PiecewisePoly { segments } => segments,
            other => return (other.clone(), WeightFunction::PiecewisePoly { segments: vec![] }),
        };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for seg in segments {
            let mut cuts = vec![seg.lo];
            cuts.extend(sign_changes(seg));
            cuts.push(seg.hi);
            for w in cuts.windows(2) {
                if w[1] <= w[0] {
                    continue;
                }
                let mid = seg.eval(0.5 * (w[0] + w[1]));
                let piece = PolySegment {
                    lo: w[0],
                    hi: w[1],
                    coeffs: seg.coeffs.clone(),
                };
                if mid > 0.0 {
                    pos.push(piece);
                } else if mid < 0.0 {
                    neg.push(PolySegment {
                        coeffs: piece.coeffs.iter().map(|c| -c).collect(),
                        ..piece
                    });
                }
            }
        }
        (
            WeightFunction::PiecewisePoly { segments: pos },
            WeightFunction::PiecewisePoly { segments: neg },
        )
    }
}

// Roots of a polynomial segment located on a uniform grid and refined by bisection.
fn sign_changes(seg: &PolySegment) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = (seg.hi - seg.lo) / ROOT_GRID as f64;
    let mut x0 = seg.lo;
    let mut f0 = seg.eval(x0);
    for k in 1..=ROOT_GRID {
        let x1 = if k == ROOT_GRID {
            seg.hi
        } else {
            seg.lo + k as f64 * step
        };
        let f1 = seg.eval(x1);
        if f0 == 0.0 && k > 1 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, flo) = (x0, x1, f0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = seg.eval(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn closed_form_examples() {
        let cvar = WeightFunction::cvar(0.75).unwrap();
        assert_relative_eq!(cvar.integral(0.8, 0.9).unwrap(), 0.4, epsilon = 1e-14);
        assert_relative_eq!(
            WeightFunction::Linear.integral(0.2, 0.6).unwrap(),
            0.16,
            epsilon = 1e-15
        );
        assert_eq!(WeightFunction::ConstantOne.integral(0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_reversed_or_out_of_range_limits() {
        assert!(WeightFunction::Linear.integral(0.6, 0.2).is_err());
        assert!(WeightFunction::Linear.integral(-0.1, 0.2).is_err());
        assert!(WeightFunction::cvar(1.0).is_err());
        assert!(WeightFunction::interval_uniform(0.9, 0.5).is_err());
    }

    #[test]
    fn unknown_kind_fails_to_parse() {
        let err = serde_json::from_str::<WeightFunction>(r#"{"kind":"triangle"}"#);
        assert!(err.is_err());
        let ok: WeightFunction = serde_json::from_str(r#"{"kind":"smoothed_median","beta":0.5}"#).unwrap();
        assert_eq!(ok, WeightFunction::SmoothedMedian { beta: 0.5, a: 0.01 });
    }

    #[test]
    fn smoothed_median_mass() {
        let w = WeightFunction::smoothed_median(0.5, 0.01).unwrap();
        assert!((w.total_mass() - 1.0).abs() < 1e-10);
        // tail integrals stay positive and tiny rather than cancelling to zero
        let tail = w.integral(0.7, 1.0).unwrap();
        assert!((0.0..1e-100).contains(&tail));
        let w = WeightFunction::smoothed_median(0.2, 0.1).unwrap();
        assert!((w.total_mass() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn normalized_kinds_have_unit_mass() {
        for w in [
            WeightFunction::ConstantOne,
            WeightFunction::cvar(0.3).unwrap(),
            WeightFunction::interval_uniform(0.5, 0.9).unwrap(),
        ] {
            assert_relative_eq!(w.total_mass(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn split_of_gini_weight() {
        // 2p - 1 changes sign at 1/2
        let w = WeightFunction::polynomial(vec![-1.0, 2.0]).unwrap();
        let (pos, neg) = w.split_signs();
        assert_relative_eq!(pos.total_mass(), 0.25, epsilon = 1e-12);
        assert_relative_eq!(neg.total_mass(), 0.25, epsilon = 1e-12);
        for &p in &[0.1, 0.4, 0.6, 0.95] {
            assert_relative_eq!(pos.eval(p) - neg.eval(p), w.eval(p), epsilon = 1e-12);
            assert!(pos.eval(p) >= 0.0 && neg.eval(p) >= 0.0);
        }
    }

    fn any_weight() -> impl Strategy<Value = WeightFunction> {
        prop_oneof![
            Just(WeightFunction::ConstantOne),
            Just(WeightFunction::Linear),
            (0.0..0.99f64).prop_map(|beta| WeightFunction::Cvar { beta }),
            (0.0..0.5f64, 0.5..1.0f64)
                .prop_map(|(beta_min, beta_max)| WeightFunction::IntervalUniform { beta_min, beta_max }),
            (0.2..0.8f64, 0.005..0.1f64).prop_map(|(beta, a)| WeightFunction::SmoothedMedian { beta, a }),
            proptest::collection::vec(-3.0..3.0f64, 1..6)
                .prop_map(|coeffs| WeightFunction::polynomial(coeffs).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn integral_is_additive(w in any_weight(), mut cuts in proptest::collection::vec(0.0..=1.0f64, 3)) {
            cuts.sort_by(f64::total_cmp);
            let (a, b, c) = (cuts[0], cuts[1], cuts[2]);
            let lhs = w.integral(a, b).unwrap() + w.integral(b, c).unwrap();
            let rhs = w.integral(a, c).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn split_reassembles(coeffs in proptest::collection::vec(-3.0..3.0f64, 1..6), a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let w = WeightFunction::polynomial(coeffs).unwrap();
            let (pos, neg) = w.split_signs();
            let whole = w.integral(a, b).unwrap();
            let parts = pos.integral(a, b).unwrap() - neg.integral(a, b).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-10);
            prop_assert!(pos.integral(a, b).unwrap() >= -1e-12);
            prop_assert!(neg.integral(a, b).unwrap() >= -1e-12);
        }
    }
}
