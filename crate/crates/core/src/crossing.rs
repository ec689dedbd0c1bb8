//! Exact noncrossing probabilities `P(∀i: U_(i) >= L_i)` for uniform order
//! statistics, their gradients, and the calibrated bound vectors built on them.
//!
//! The probability is computed by a forward recursion over
//! `N_i = #{U_j < L_i}`. Given `N_{i-1} = j`, the increment `N_i - j` is
//! Binomial(`n - j`, `r_i`) with `r_i = (L_i - L_{i-1}) / (1 - L_{i-1})`, and
//! the constraint at step `i` is `N_i <= i - 1`. Every term is a product of
//! probabilities, so nothing cancels; the cost is about `n³/6` multiply-adds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::beta_inc_inv;

/// Default probability tolerance for the calibrations.
pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_BISECTIONS: usize = 200;
const MC_BLOCK: usize = 8192;
// below this a multiplicative binomial row loses precision to subnormals
const UNDERFLOW_GUARD: f64 = 1e-250;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Dkw,
    BerkJones,
    TruncatedBj,
    Optimized,
    ExactPlugin,
}

impl BoundMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundMethod::Dkw => "dkw",
            BoundMethod::BerkJones => "berk_jones",
            BoundMethod::TruncatedBj => "truncated_bj",
            BoundMethod::Optimized => "optimized",
            BoundMethod::ExactPlugin => "exact_plugin",
        }
    }
}

impl std::fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nondecreasing lower bounds `L_1..L_n` on `F(X_(i))`, with the one-sided
/// miscoverage they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBoundVector")]
pub struct BoundVector {
    #[serde(rename = "L")]
    l: Vec<f64>,
    delta: f64,
    method: BoundMethod,
}

#[derive(Deserialize)]
struct RawBoundVector {
    #[serde(rename = "L")]
    l: Vec<f64>,
    delta: f64,
    method: BoundMethod,
}

impl TryFrom<RawBoundVector> for BoundVector {
    type Error = Error;

    fn try_from(raw: RawBoundVector) -> Result<Self> {
        BoundVector::new(raw.l, raw.delta, raw.method)
    }
}

impl BoundVector {
    /// `delta` may be 0 only for exact plug-in vectors used as oracles.
    pub fn new(l: Vec<f64>, delta: f64, method: BoundMethod) -> Result<Self> {
        validate_levels(&l)?;
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidInput(format!("delta {delta} outside [0, 1)")));
        }
        Ok(Self { l, delta, method })
    }

    pub fn values(&self) -> &[f64] {
        &self.l
    }

    pub fn len(&self) -> usize {
        self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn method(&self) -> BoundMethod {
        self.method
    }

    pub fn into_values(self) -> Vec<f64> {
        self.l
    }
}

/// Checks `0 <= L_1 <= ... <= L_n <= 1`.
pub fn validate_levels(l: &[f64]) -> Result<()> {
    if l.is_empty() {
        return Err(Error::InvalidInput("bound vector is empty".into()));
    }
    if let Some(i) = l.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput(format!("L_{} = {} outside [0, 1]", i + 1, l[i])));
    }
    if let Some(i) = l.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(format!(
            "bound vector decreases at L_{} = {} > L_{} = {}",
            i + 1,
            l[i],
            i + 2,
            l[i + 1]
        )));
    }
    Ok(())
}

struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn new(n: usize) -> Self {
        let mut t = Vec::with_capacity(n + 1);
        t.push(0.0);
        for k in 1..=n {
            t.push(t[k - 1] + (k as f64).ln());
        }
        Self(t)
    }
}

/// Writes `P(Bin(big_n, r) = m)` for `m = 0..out.len()` into `out`.
/// `q` is `1 - r`, passed separately to keep its relative precision.
fn binomial_row(big_n: usize, r: f64, q: f64, lnf: &LnFactorials, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    if r <= 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    if q <= 0.0 {
        out.fill(0.0);
        if big_n < out.len() {
            out[big_n] = 1.0;
        }
        return;
    }
    let ln_q = q.ln();
    let start = (big_n as f64 * ln_q).exp();
    if start > UNDERFLOW_GUARD {
        let ratio = r / q;
        out[0] = start;
        for m in 1..out.len() {
            out[m] = if m <= big_n {
                out[m - 1] * ((big_n - m + 1) as f64 / m as f64) * ratio
            } else {
                0.0
            };
        }
    } else {
        let ln_r = r.ln();
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = if m <= big_n {
                (lnf.0[big_n] - lnf.0[m] - lnf.0[big_n - m] + m as f64 * ln_r + (big_n - m) as f64 * ln_q).exp()
            } else {
                0.0
            };
        }
    }
}

/// Step `i` (1-based) transition parameters `(r_i, 1 - r_i)`.
fn step_params(l: &[f64], i: usize) -> (f64, f64) {
    let prev = if i == 1 { 0.0 } else { l[i - 2] };
    let cur = l[i - 1];
    let denom = 1.0 - prev;
    ((cur - prev) / denom, (1.0 - cur) / denom)
}

/// Forward pass. Row `i` holds `P(constraints 1..i hold, N_i = k)` for
/// `k = 0..i`. Requires `L_n < 1`.
fn forward(l: &[f64], lnf: &LnFactorials, keep_all: bool) -> Vec<Vec<f64>> {
    let n = l.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(if keep_all { n + 1 } else { 1 });
    let mut prev = vec![1.0];
    let mut pmf = vec![0.0; n + 1];
    if keep_all {
        rows.push(prev.clone());
    }
    for i in 1..=n {
        let (r, q) = step_params(l, i);
        let mut cur = vec![0.0; i];
        for (j, &mass) in prev.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let len = i - j;
            binomial_row(n - j, r, q, lnf, &mut pmf[..len]);
            for (d, &b) in pmf[..len].iter().enumerate() {
                cur[j + d] += mass * b;
            }
        }
        if keep_all {
            rows.push(cur.clone());
        }
        prev = cur;
    }
    if !keep_all {
        rows.push(prev);
    }
    rows
}

/// Exact `P(∀i: U_(i) >= L_i)` for `n = L.len()` uniform order statistics.
pub fn noncrossing_probability(l: &[f64]) -> Result<f64> {
    validate_levels(l)?;
    Ok(probability_unchecked(l))
}

pub(crate) fn probability_unchecked(l: &[f64]) -> f64 {
    let n = l.len();
    if l[n - 1] >= 1.0 {
        return 0.0;
    }
    if l[n - 1] <= 0.0 {
        return 1.0;
    }
    let lnf = LnFactorials::new(n);
    let rows = forward(l, &lnf, false);
    rows[0].iter().sum::<f64>().clamp(0.0, 1.0)
}

/// Probability and gradient `∂P/∂L_i` in one pass.
///
/// `∂P/∂L_i = -(n-i+1)/(1-L_i) · P(constraints 1..i, N_i = i-1)
///           · P(constraints i+1..n | N_i = i)`: the `i`-th order statistic
/// sits exactly at `L_i` with every other constraint intact.
pub fn noncrossing_with_gradient(l: &[f64]) -> Result<(f64, Vec<f64>)> {
    validate_levels(l)?;
    Ok(gradient_unchecked(l))
}

pub fn noncrossing_gradient(l: &[f64]) -> Result<Vec<f64>> {
    Ok(noncrossing_with_gradient(l)?.1)
}

fn gradient_unchecked(l: &[f64]) -> (f64, Vec<f64>) {
    let n = l.len();
    let mut grad = vec![0.0; n];
    if l[n - 1] >= 1.0 {
        // P vanishes; only lowering L_n off 1 can make it positive, and only
        // if it is the sole entry at 1. Then P ≈ n(1 - L_n)·P_{n-1}(L_1..L_{n-1}).
        let ones = l.iter().filter(|&&v| v >= 1.0).count();
        if ones == 1 {
            grad[n - 1] = if n == 1 {
                -1.0
            } else {
                -(n as f64) * probability_unchecked(&l[..n - 1])
            };
        }
        return (0.0, grad);
    }
    let lnf = LnFactorials::new(n);
    let fwd = forward(l, &lnf, true);
    let prob = fwd[n].iter().sum::<f64>().clamp(0.0, 1.0);

    // Backward pass: g[k] = P(constraints i+1..n hold | N_i = k), k = 0..=i.
    let mut g = vec![1.0; n + 1];
    let mut pmf = vec![0.0; n + 1];
    for i in (1..=n).rev() {
        let at_boundary = g[i];
        grad[i - 1] = -((n - i + 1) as f64) / (1.0 - l[i - 1]) * fwd[i][i - 1] * at_boundary;
        // g_{i-1}(j) = Σ_{k=j}^{i-1} Bin(k-j; n-j, r_i) g_i(k)
        let (r, q) = step_params(l, i);
        let mut next = vec![0.0; i];
        for (j, slot) in next.iter_mut().enumerate() {
            let len = i - j;
            binomial_row(n - j, r, q, &lnf, &mut pmf[..len]);
            *slot = pmf[..len].iter().zip(&g[j..i]).map(|(b, gk)| b * gk).sum();
        }
        g = next;
    }
    (prob, grad)
}

/// `L_i = max(0, i/n - sqrt(ln(2/δ) / (2n)))`.
pub fn calibrate_dkw(n: usize, delta: f64) -> Result<BoundVector> {
    check_calibration_args(n, delta)?;
    let radius = dkw_radius(n, delta);
    let l = (1..=n).map(|i| (i as f64 / n as f64 - radius).max(0.0)).collect();
    BoundVector::new(l, delta, BoundMethod::Dkw)
}

pub fn dkw_radius(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

fn check_calibration_args(n: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::NoSamples);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} outside (0, 1)")));
    }
    Ok(())
}

/// Berk-Jones vector: `L_i(s)` is the `s`-quantile of Beta(i, n-i+1), the law
/// of `U_(i)`, with `s` tuned so the noncrossing probability lands in
/// `[1-δ, 1-δ+tol]`.
pub fn calibrate_berk_jones(n: usize, delta: f64, tol: f64) -> Result<BoundVector> {
    check_calibration_args(n, delta)?;
    calibrate_window(n, delta, tol, 1, n, BoundMethod::BerkJones)
}

/// Berk-Jones constraints only on indices with `i/n` in `[beta_min, beta_max]`;
/// zero below the window and flat above it.
pub fn calibrate_truncated_bj(n: usize, delta: f64, beta_min: f64, beta_max: f64, tol: f64) -> Result<BoundVector> {
    check_calibration_args(n, delta)?;
    if !(0.0 <= beta_min && beta_min < beta_max && beta_max <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "truncation window [{beta_min}, {beta_max}] is not a subinterval of [0, 1]"
        )));
    }
    let inside = |i: usize| {
        let t = i as f64 / n as f64;
        t >= beta_min && t <= beta_max
    };
    let lo = (1..=n).find(|&i| inside(i)).ok_or(Error::EmptyWindow)?;
    let hi = (1..=n).rev().find(|&i| inside(i)).ok_or(Error::EmptyWindow)?;
    calibrate_window(n, delta, tol, lo, hi, BoundMethod::TruncatedBj)
}

fn window_vector(n: usize, lo: usize, hi: usize, s: f64) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n];
    for i in lo..=hi {
        l[i - 1] = beta_inc_inv(i as f64, (n - i + 1) as f64, s)?;
    }
    // inverse-beta rounding can break monotonicity by an ulp
    for i in lo..=hi {
        if i > lo && l[i - 1] < l[i - 2] {
            l[i - 1] = l[i - 2];
        }
    }
    let top = l[hi - 1];
    for v in &mut l[hi..] {
        *v = top;
    }
    Ok(l)
}

fn calibrate_window(n: usize, delta: f64, tol: f64, lo: usize, hi: usize, method: BoundMethod) -> Result<BoundVector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    let target = 1.0 - delta;
    let eval = |s: f64| -> Result<(Vec<f64>, f64)> {
        let l = window_vector(n, lo, hi, s)?;
        let p = probability_unchecked(&l);
        Ok((l, p))
    };
    // P(U_(i) >= L_i(s)) = 1 - s for each single constraint, so s = δ is
    // never strictly feasible and s -> 0 always is.
    let (l_hi, p_hi) = eval(delta)?;
    if p_hi >= target {
        return BoundVector::new(l_hi, delta, method);
    }
    let (mut s_lo, mut s_hi) = (0.0_f64, delta);
    for _ in 0..MAX_BISECTIONS {
        let s = 0.5 * (s_lo + s_hi);
        if s <= s_lo || s >= s_hi {
            break;
        }
        let (l, p) = eval(s)?;
        if p >= target {
            if p <= target + tol {
                return BoundVector::new(l, delta, method);
            }
            s_lo = s;
        } else {
            s_hi = s;
        }
    }
    Err(Error::NoConvergence(format!(
        "no level with noncrossing probability in [{target}, {}] for n={n}",
        target + tol
    )))
}

/// Monte Carlo estimate of the noncrossing probability with its binomial
/// standard error. Deterministic for a given seed regardless of thread count.
pub fn mc_noncrossing_oracle(l: &[f64], trials: usize, seed: u64) -> Result<(f64, f64)> {
    validate_levels(l)?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let blocks = trials.div_ceil(MC_BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let count = MC_BLOCK.min(trials - b * MC_BLOCK);
            let mut spacings = vec![0.0; l.len() + 1];
            (0..count)
                .filter(|_| sample_noncrossing(l, &mut rng, &mut spacings))
                .count()
        })
        .sum();
    let p = hits as f64 / trials as f64;
    Ok((p, (p * (1.0 - p) / trials as f64).sqrt()))
}

// U_(i) = S_i / S_{n+1} for cumulative sums of n+1 standard exponentials.
fn sample_noncrossing(l: &[f64], rng: &mut impl Rng, buf: &mut [f64]) -> bool {
    let mut acc = 0.0;
    for slot in buf.iter_mut() {
        let e: f64 = rng.sample(Exp1);
        acc += e;
        *slot = acc;
    }
    let total = acc;
    l.iter().zip(buf.iter()).all(|(&li, &s)| s >= li * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_point(l1: f64, l2: f64) -> f64 {
        1.0 - 2.0 * l1 - l2 * l2 + 2.0 * l1 * l2
    }

    #[test]
    fn closed_forms() {
        assert_relative_eq!(noncrossing_probability(&[0.3]).unwrap(), 0.7, epsilon = 1e-15);
        assert_relative_eq!(noncrossing_probability(&[0.2, 0.5]).unwrap(), 0.55, epsilon = 1e-15);
        assert_eq!(noncrossing_probability(&[0.0; 17]).unwrap(), 1.0);
        assert_eq!(noncrossing_probability(&[0.1, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn rejects_invalid_vectors() {
        assert!(noncrossing_probability(&[0.5, 0.2]).is_err());
        assert!(noncrossing_probability(&[1.2]).is_err());
        assert!(noncrossing_probability(&[]).is_err());
    }

    #[test]
    fn gradient_closed_form() {
        let g = noncrossing_gradient(&[0.2, 0.5]).unwrap();
        assert_relative_eq!(g[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(g[1], -0.6, epsilon = 1e-14);
        assert_relative_eq!(noncrossing_gradient(&[0.0]).unwrap()[0], -1.0);
    }

    #[test]
    fn gradient_at_unit_top() {
        // P(L1, L2) near L2 = 1 behaves like 2(1 - L2)(1 - L1)
        let g = noncrossing_gradient(&[0.3, 1.0]).unwrap();
        assert_eq!(g[0], 0.0);
        assert_relative_eq!(g[1], -2.0 * 0.7, epsilon = 1e-14);
        assert_eq!(noncrossing_gradient(&[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn equal_entries_are_fine() {
        let p = noncrossing_probability(&[0.3, 0.3]).unwrap();
        assert_relative_eq!(p, two_point(0.3, 0.3), epsilon = 1e-15);
    }

    #[test]
    fn large_n_stays_in_range() {
        let n = 1000;
        let l: Vec<f64> = (1..=n).map(|i| (i as f64 / n as f64 - 0.05).max(0.0)).collect();
        let p = noncrossing_probability(&l).unwrap();
        assert!(p > 0.9 && p <= 1.0, "{p}");
    }

    #[test]
    fn dkw_values() {
        let v = calibrate_dkw(100, 0.05).unwrap();
        assert_relative_eq!(dkw_radius(100, 0.05), 0.135811, epsilon = 1e-6);
        assert_relative_eq!(v.values()[49], 0.364189, epsilon = 1e-6);
        assert_eq!(v.values()[9], 0.0);
        assert!(calibrate_dkw(10, 1.0).is_err());
    }

    #[test]
    fn berk_jones_single_point() {
        let v = calibrate_berk_jones(1, 0.05, DEFAULT_TOL).unwrap();
        assert_relative_eq!(v.values()[0], 0.05, epsilon = 1e-8);
    }

    #[test]
    fn berk_jones_hits_target() {
        let v = calibrate_berk_jones(100, 0.05, DEFAULT_TOL).unwrap();
        let p = noncrossing_probability(v.values()).unwrap();
        assert!((0.95..=0.95 + DEFAULT_TOL).contains(&p), "{p}");
    }

    #[test]
    fn truncated_structure() {
        let v = calibrate_truncated_bj(100, 0.05, 0.5, 0.9, DEFAULT_TOL).unwrap();
        let l = v.values();
        assert!(l[..49].iter().all(|&x| x == 0.0));
        assert!(l[90..].iter().all(|&x| x == l[89]));
        assert!(l[49] > 0.0);
        assert_eq!(
            calibrate_truncated_bj(10, 0.05, 0.51, 0.59, DEFAULT_TOL),
            Err(Error::EmptyWindow)
        );
    }

    #[test]
    fn oracle_trivial_cases() {
        assert_eq!(mc_noncrossing_oracle(&[0.0; 4], 1000, 1).unwrap(), (1.0, 0.0));
        let a = mc_noncrossing_oracle(&[0.2, 0.5], 20_000, 9).unwrap();
        let b = mc_noncrossing_oracle(&[0.2, 0.5], 20_000, 9).unwrap();
        assert_eq!(a, b);
        assert!((a.0 - 0.55).abs() < 4.0 * a.1);
    }

    proptest! {
        #[test]
        fn matches_two_point_closed_form(a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let (l1, l2) = if a <= b { (a, b) } else { (b, a) };
            let p = noncrossing_probability(&[l1, l2]).unwrap();
            prop_assert!((p - two_point(l1, l2)).abs() <= 1e-12);
        }

        #[test]
        fn monotone_in_each_coordinate(mut l in proptest::collection::vec(0.0..0.9f64, 1..12), k in 0usize..12, bump in 0.0..0.1f64) {
            l.sort_by(f64::total_cmp);
            let k = k % l.len();
            let base = noncrossing_probability(&l).unwrap();
            let mut up = l.clone();
            up[k] += bump;
            for i in k + 1..up.len() {
                up[i] = up[i].max(up[k]);
            }
            let raised = noncrossing_probability(&up).unwrap();
            prop_assert!(raised <= base + 1e-14);
            prop_assert!((0.0..=1.0).contains(&base));
        }

        #[test]
        fn gradient_matches_finite_differences(mut l in proptest::collection::vec(0.01..0.8f64, 1..16)) {
            l.sort_by(f64::total_cmp);
            // keep entries apart so the ±h perturbation preserves order
            for i in 1..l.len() {
                if l[i] < l[i - 1] + 1e-3 {
                    l[i] = l[i - 1] + 1e-3;
                }
            }
            let (p, g) = noncrossing_with_gradient(&l).unwrap();
            prop_assert!((p - noncrossing_probability(&l).unwrap()).abs() < 1e-14);
            let h = 1e-6;
            for i in 0..l.len() {
                prop_assert!(g[i] <= 0.0);
                let mut a = l.clone();
                let mut b = l.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (noncrossing_probability(&a).unwrap() - noncrossing_probability(&b).unwrap()) / (2.0 * h);
                // central differences carry ~eps/h of round-off
                prop_assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs() + 1e-9, "i={} fd={} g={}", i, fd, g[i]);
            }
        }
    }
}
