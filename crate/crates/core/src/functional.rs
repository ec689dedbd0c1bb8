//! Bounds on functionals of `F^-` obtained from a band.
//!
//! With `F_L^- >= F^- >= F_U^-` on the band event, any functional that is
//! monotone in the quantile function is bounded by substituting the matching
//! side. Step bands make every integral a finite sum over quantile pieces.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::band::CdfBand;
use crate::error::{Error, Result};
use crate::step::QuantilePiece;
use crate::weight::WeightFunction;

pub const UPPER_DIVERGES: &str = "upper bound diverges: supply support_max";
pub const LOWER_DIVERGES: &str = "lower bound diverges: losses are not declared nonnegative";

const SIGN_GRID: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ValueInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInput(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(c: f64) -> Self {
        Self { lo: c, hi: c }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn weighted_sum(
    pieces: &[QuantilePiece],
    psi: &WeightFunction,
    xi: &dyn Fn(f64) -> f64,
    divergence: &str,
) -> Result<f64> {
    let mut total = 0.0;
    for piece in pieces {
        let mass = psi.integral_unchecked(piece.p_lo, piece.p_hi);
        if mass == 0.0 {
            continue;
        }
        let v = xi(piece.x);
        if !v.is_finite() {
            return Err(Error::Divergent(divergence.to_string()));
        }
        total += mass * v;
    }
    Ok(total)
}

/// `Σ ξ(X_(i)) ∫_{L_{i-1}}^{L_i} ψ` with `X_(n+1) = B`: an upper bound on
/// `∫ ψ ξ(F^-)` for nonnegative `ψ` and nondecreasing `ξ`.
pub fn qbrm_upper(band: &CdfBand, psi: &WeightFunction, xi: &dyn Fn(f64) -> f64) -> Result<f64> {
    weighted_sum(&band.lower_pieces(), psi, xi, UPPER_DIVERGES)
}

/// `∫ ψ ξ(R^-)`, i.e. `ξ(0) ∫_0^{1-L_n} ψ + Σ ξ(X_(i)) ∫_{1-L_{n-i+1}}^{1-L_{n-i}} ψ`
/// for nonnegative losses.
pub fn qbrm_lower(band: &CdfBand, psi: &WeightFunction, xi: &dyn Fn(f64) -> f64) -> Result<f64> {
    weighted_sum(&band.upper_pieces(), psi, xi, LOWER_DIVERGES)
}

pub fn qbrm_interval(band: &CdfBand, psi: &WeightFunction, xi: &dyn Fn(f64) -> f64) -> Result<ValueInterval> {
    let lo = qbrm_lower(band, psi, xi)?;
    let hi = qbrm_upper(band, psi, xi)?;
    Ok(ValueInterval { lo, hi: hi.max(lo) })
}

/// Range of `|s|` for `s` in the interval.
pub fn transform_abs(s: ValueInterval) -> ValueInterval {
    let lo = if s.lo >= 0.0 {
        s.lo
    } else if s.hi <= 0.0 {
        -s.hi
    } else {
        0.0
    };
    ValueInterval {
        lo,
        hi: s.lo.abs().max(s.hi.abs()),
    }
}

/// Envelope of `Σ α_k s^k` over the interval, bounding each term separately:
/// odd powers are monotone, even powers go through the `|s|` envelope.
pub fn transform_polynomial(s: ValueInterval, coeffs: &[(u32, f64)]) -> ValueInterval {
    let abs = transform_abs(s);
    let (mut lo, mut hi) = (0.0, 0.0);
    for &(k, alpha) in coeffs {
        let (small, large) = if k % 2 == 1 {
            (s.lo.powi(k as i32), s.hi.powi(k as i32))
        } else {
            (abs.lo.powi(k as i32), abs.hi.powi(k as i32))
        };
        if alpha >= 0.0 {
            lo += alpha * small;
            hi += alpha * large;
        } else {
            lo += alpha * large;
            hi += alpha * small;
        }
    }
    ValueInterval { lo, hi }
}

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `ξ = f1 - f2` with both parts nondecreasing.
#[derive(Clone)]
pub struct BvDecomposition {
    f1: Scalar,
    f2: Scalar,
}

// Total variation of ξ on [0, B]: between consecutive sign changes of ξ'
// the variation telescopes to |ξ(b) - ξ(a)|.
struct VariationTable {
    xi: Scalar,
    breaks: Vec<f64>,
    signs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl VariationTable {
    fn at(&self, x: f64) -> f64 {
        let x = x.clamp(self.breaks[0], *self.breaks.last().unwrap());
        let k = self
            .breaks
            .partition_point(|&b| b <= x)
            .saturating_sub(1)
            .min(self.signs.len() - 1);
        self.cumulative[k] + self.signs[k] * ((self.xi)(x) - (self.xi)(self.breaks[k]))
    }
}

impl BvDecomposition {
    pub fn from_pair(
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f1: Arc::new(f1),
            f2: Arc::new(f2),
        }
    }

    /// Monotone parts of `ξ` on `[0, domain_max]` from its derivative:
    /// `f1 = V_0^x(ξ) = ∫_0^x |ξ'|` and `f2 = f1 - ξ`. The derivative is only
    /// used to locate sign changes (grid scan plus bisection). Values outside
    /// the domain are clamped to it.
    pub fn from_derivative(
        xi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dxi: impl Fn(f64) -> f64,
        domain_max: f64,
    ) -> Result<Self> {
        if !(domain_max > 0.0 && domain_max.is_finite()) {
            return Err(Error::InvalidInput(
                "bounded-variation decomposition needs a finite positive domain".into(),
            ));
        }
        let xi: Scalar = Arc::new(xi);
        let mut breaks = vec![0.0];
        breaks.extend(sign_changes(&dxi, 0.0, domain_max));
        breaks.push(domain_max);
        breaks.dedup();
        let mut signs = Vec::with_capacity(breaks.len() - 1);
        let mut cumulative = vec![0.0];
        for w in breaks.windows(2) {
            let sign = if dxi(0.5 * (w[0] + w[1])) < 0.0 { -1.0 } else { 1.0 };
            let prev = *cumulative.last().unwrap();
            cumulative.push(prev + sign * (xi(w[1]) - xi(w[0])));
            signs.push(sign);
        }
        let table = Arc::new(VariationTable {
            xi: xi.clone(),
            breaks,
            signs,
            cumulative,
        });
        let t1 = table.clone();
        let f1: Scalar = Arc::new(move |x| t1.at(x));
        let f2: Scalar = Arc::new(move |x| {
            let x = x.clamp(0.0, domain_max);
            table.at(x) - xi(x)
        });
        Ok(Self { f1, f2 })
    }

    pub fn f1(&self, x: f64) -> f64 {
        (self.f1)(x)
    }

    pub fn f2(&self, x: f64) -> f64 {
        (self.f2)(x)
    }

    pub fn xi(&self, x: f64) -> f64 {
        self.f1(x) - self.f2(x)
    }
}

fn sign_changes(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / SIGN_GRID as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for k in 1..=SIGN_GRID {
        let x1 = if k == SIGN_GRID { hi } else { lo + k as f64 * step };
        let f1 = f(x1);
        if f0 * f1 < 0.0 {
            let (mut a, mut b) = (x0, x1);
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if (f(m) < 0.0) == (f0 < 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Pointwise envelope `p ↦ f1(F_L^-(p)) - f2(F_U^-(p)) >= ξ(F^-(p))`.
pub fn transform_bv<'a>(band: &'a CdfBand, decomposition: &'a BvDecomposition) -> impl Fn(f64) -> Result<f64> + 'a {
    move |p| {
        let hi = band.lower_inverse(p)?;
        let lo = band.upper_inverse(p)?;
        if !lo.is_finite() {
            return Err(Error::Divergent(LOWER_DIVERGES.into()));
        }
        Ok(decomposition.f1(hi) - decomposition.f2(lo))
    }
}

/// Upper bound on `∫ ψ ξ(F^-)` for nonnegative `ψ` and bounded-variation `ξ`.
pub fn bv_qbrm_upper(band: &CdfBand, psi: &WeightFunction, decomposition: &BvDecomposition) -> Result<f64> {
    let f1 = |x: f64| decomposition.f1(x);
    let f2 = |x: f64| decomposition.f2(x);
    Ok(qbrm_upper(band, psi, &f1)? - qbrm_lower(band, psi, &f2)?)
}

/// Interval for `∫ ψ ξ(F^-)` with a general-sign `ψ = ψ⁺ - ψ⁻`.
pub fn signed_weight_bounds(band: &CdfBand, psi: &WeightFunction, xi: &dyn Fn(f64) -> f64) -> Result<ValueInterval> {
    let (pos, neg) = psi.split_signs();
    let (pos_lo, pos_hi) = if pos.total_mass() > 0.0 {
        (qbrm_lower(band, &pos, xi)?, qbrm_upper(band, &pos, xi)?)
    } else {
        (0.0, 0.0)
    };
    let (neg_lo, neg_hi) = if neg.total_mass() > 0.0 {
        (qbrm_lower(band, &neg, xi)?, qbrm_upper(band, &neg, xi)?)
    } else {
        (0.0, 0.0)
    };
    ValueInterval::new(pos_lo - neg_hi, pos_hi - neg_lo)
}
