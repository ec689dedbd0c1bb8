//! Bound values as functions of a bound vector, with gradients in `L`.

use serde::{Deserialize, Serialize};

use certband_core::functional::{LOWER_DIVERGES, UPPER_DIVERGES};
use certband_core::{Error, OrderStats, Result, WeightFunction};

/// An upper-bound value computed from order statistics (one set per group)
/// and a shared bound vector.
pub trait Objective: Send + Sync {
    fn describe(&self) -> String;

    fn value(&self, data: &[OrderStats], l: &[f64]) -> Result<f64>;

    /// Central differences unless overridden.
    fn gradient(&self, data: &[OrderStats], l: &[f64]) -> Result<Vec<f64>> {
        finite_difference(self, data, l)
    }
}

/// Central differences with steps kept inside `[0, 1]`.
pub fn finite_difference<O: Objective + ?Sized>(obj: &O, data: &[OrderStats], l: &[f64]) -> Result<Vec<f64>> {
    let h = 1e-7;
    let mut probe = l.to_vec();
    let mut grad = Vec::with_capacity(l.len());
    for i in 0..l.len() {
        let up = (l[i] + h).min(1.0);
        let down = (l[i] - h).max(0.0);
        probe[i] = up;
        let f_up = obj.value(data, &probe)?;
        probe[i] = down;
        let f_down = obj.value(data, &probe)?;
        probe[i] = l[i];
        grad.push((f_up - f_down) / (up - down));
    }
    Ok(grad)
}

fn check_shapes(data: &[OrderStats], l: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NoSamples);
    }
    if let Some(d) = data.iter().find(|d| d.len() != l.len()) {
        return Err(Error::SizeMismatch {
            bound: l.len(),
            samples: d.len(),
        });
    }
    Ok(())
}

/// Fixed value, independent of `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantObjective(pub f64);

impl Objective for ConstantObjective {
    fn describe(&self) -> String {
        format!("constant({})", self.0)
    }

    fn value(&self, _: &[OrderStats], _: &[f64]) -> Result<f64> {
        Ok(self.0)
    }

    fn gradient(&self, _: &[OrderStats], l: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0; l.len()])
    }
}

/// Objective given by a closure; gradients by finite differences.
pub struct FnObjective<F> {
    name: String,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&[OrderStats], &[f64]) -> Result<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&[OrderStats], &[f64]) -> Result<f64> + Send + Sync,
{
    fn describe(&self) -> String {
        self.name.clone()
    }

    fn value(&self, data: &[OrderStats], l: &[f64]) -> Result<f64> {
        (self.f)(data, l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Equal-weight average of the per-group upper bounds.
    Expectation,
    /// Largest pairwise difference between per-group intervals.
    MaxPairwiseDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QbrmTerm {
    pub psi: WeightFunction,
    pub scope: Scope,
    pub coefficient: f64,
}

/// Weighted sum of quantile-weighted loss bounds, `ξ` the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QbrmObjective {
    pub terms: Vec<QbrmTerm>,
    /// Known upper end of the losses; needed unless `L_n = 1`.
    #[serde(default)]
    pub support_max: Option<f64>,
    /// Known lower end of the losses (0 for nonnegative losses).
    #[serde(default = "zero_floor")]
    pub floor: Option<f64>,
}

fn zero_floor() -> Option<f64> {
    Some(0.0)
}

struct SideValue {
    value: f64,
    grad: Vec<f64>,
}

impl QbrmObjective {
    /// Expected loss of one population.
    pub fn expected_loss(support_max: f64) -> Self {
        Self {
            terms: vec![QbrmTerm {
                psi: WeightFunction::ConstantOne,
                scope: Scope::Expectation,
                coefficient: 1.0,
            }],
            support_max: Some(support_max),
            floor: Some(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidInput("objective has no terms".into()));
        }
        for t in &self.terms {
            t.psi.validate()?;
            if !(t.coefficient >= 0.0 && t.coefficient.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "coefficient {} must be finite and nonnegative",
                    t.coefficient
                )));
            }
        }
        Ok(())
    }

    // ∑ Ψ(L_{i-1}, L_i) X_(i) + Ψ(L_n, 1) B
    fn upper(&self, psi: &WeightFunction, x: &[f64], l: &[f64]) -> Result<SideValue> {
        let n = l.len();
        let mut value = 0.0;
        let mut prev = 0.0;
        for i in 0..n {
            value += psi.integral_unchecked(prev, l[i]) * x[i];
            prev = l[i];
        }
        let tail = psi.integral_unchecked(l[n - 1], 1.0);
        let top = if tail > 0.0 {
            let b = self
                .support_max
                .ok_or_else(|| Error::Divergent(UPPER_DIVERGES.into()))?;
            value += tail * b;
            b
        } else {
            self.support_max.unwrap_or(x[n - 1])
        };
        let grad = (0..n)
            .map(|i| {
                let next = if i + 1 < n { x[i + 1] } else { top };
                psi.eval(l[i]) * (x[i] - next)
            })
            .collect();
        Ok(SideValue { value, grad })
    }

    // Ψ(0, 1-L_n) floor + ∑ Ψ(1-L_{n-i+1}, 1-L_{n-i}) X_(i)
    fn lower(&self, psi: &WeightFunction, x: &[f64], l: &[f64]) -> Result<SideValue> {
        let n = l.len();
        let head = psi.integral_unchecked(0.0, 1.0 - l[n - 1]);
        let mut value = 0.0;
        let bottom = if head > 0.0 {
            let f = self.floor.ok_or_else(|| Error::Divergent(LOWER_DIVERGES.into()))?;
            value += head * f;
            f
        } else {
            self.floor.unwrap_or(x[0])
        };
        for i in 1..=n {
            let a = 1.0 - l[n - i];
            let b = if i == n { 1.0 } else { 1.0 - l[n - i - 1] };
            value += psi.integral_unchecked(a, b) * x[i - 1];
        }
        // d/dL_k = ψ(1-L_k)(X_(n-k+1) - X_(n-k)), X_(0) = floor
        let grad = (1..=n)
            .map(|k| {
                let above = x[n - k];
                let below = if k == n { bottom } else { x[n - k - 1] };
                psi.eval(1.0 - l[k - 1]) * (above - below)
            })
            .collect();
        Ok(SideValue { value, grad })
    }

    fn evaluate(&self, data: &[OrderStats], l: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_shapes(data, l)?;
        let n = l.len();
        let groups = data.len() as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; n];
        for term in &self.terms {
            match term.scope {
                Scope::Expectation => {
                    for d in data {
                        let up = self.upper(&term.psi, d.as_slice(), l)?;
                        total += term.coefficient * up.value / groups;
                        for (g, u) in grad.iter_mut().zip(&up.grad) {
                            *g += term.coefficient * u / groups;
                        }
                    }
                }
                Scope::MaxPairwiseDiff => {
                    if data.len() < 2 {
                        return Err(Error::InvalidInput(
                            "pairwise differences need at least 2 groups".into(),
                        ));
                    }
                    let sides: Vec<(SideValue, SideValue)> = data
                        .iter()
                        .map(|d| {
                            Ok((
                                self.lower(&term.psi, d.as_slice(), l)?,
                                self.upper(&term.psi, d.as_slice(), l)?,
                            ))
                        })
                        .collect::<Result<_>>()?;
                    // (value, group a upper, group b lower, sign)
                    let mut best: Option<(f64, usize, usize, f64)> = None;
                    for a in 0..sides.len() {
                        for b in 0..sides.len() {
                            if a == b {
                                continue;
                            }
                            let d = sides[a].1.value - sides[b].0.value;
                            if best.is_none_or(|(v, ..)| d.abs() > v) {
                                best = Some((d.abs(), a, b, if d >= 0.0 { 1.0 } else { -1.0 }));
                            }
                        }
                    }
                    let (value, a, b, sign) = best.expect("at least two groups");
                    total += term.coefficient * value;
                    for (i, g) in grad.iter_mut().enumerate().take(n) {
                        *g += term.coefficient * sign * (sides[a].1.grad[i] - sides[b].0.grad[i]);
                    }
                }
            }
        }
        Ok((total, grad))
    }
}

impl Objective for QbrmObjective {
    fn describe(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| "qbrm".into())
    }

    fn value(&self, data: &[OrderStats], l: &[f64]) -> Result<f64> {
        Ok(self.evaluate(data, l)?.0)
    }

    fn gradient(&self, data: &[OrderStats], l: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(data, l)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use certband_core::crossing::{BoundMethod, BoundVector};
    use certband_core::functional::{qbrm_lower, qbrm_upper};
    use certband_core::{CdfBand, LossSamples};

    fn stats(v: &[f64]) -> OrderStats {
        OrderStats::from_values(v).unwrap()
    }

    #[test]
    fn matches_band_functionals() {
        let values = vec![0.3, 0.1, 0.7, 0.5, 0.2, 0.9];
        let l = vec![0.02, 0.1, 0.2, 0.3, 0.38, 0.45];
        let samples = LossSamples::build(values.clone(), None, Some(1.0), true).unwrap();
        let band = CdfBand::from_vector(
            &samples,
            BoundVector::new(l.clone(), 0.1, BoundMethod::Optimized).unwrap(),
            0.1,
        )
        .unwrap();
        let id = |x: f64| x;
        for psi in [
            WeightFunction::ConstantOne,
            WeightFunction::cvar(0.6).unwrap(),
            WeightFunction::smoothed_median(0.5, 0.01).unwrap(),
        ] {
            let obj = QbrmObjective {
                terms: vec![QbrmTerm {
                    psi: psi.clone(),
                    scope: Scope::Expectation,
                    coefficient: 1.0,
                }],
                support_max: Some(1.0),
                floor: Some(0.0),
            };
            let d = [stats(&values)];
            let up = obj.upper(&psi, d[0].as_slice(), &l).unwrap().value;
            let lo = obj.lower(&psi, d[0].as_slice(), &l).unwrap().value;
            assert!((up - qbrm_upper(&band, &psi, &id).unwrap()).abs() < 1e-12);
            assert!((lo - qbrm_lower(&band, &psi, &id).unwrap()).abs() < 1e-12);
            assert!((obj.value(&d, &l).unwrap() - up).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let groups = [
            stats(&[0.1, 0.35, 0.4, 0.8, 0.95]),
            stats(&[0.05, 0.2, 0.22, 0.6, 0.7]),
            stats(&[0.3, 0.31, 0.5, 0.55, 0.9]),
        ];
        let l = vec![0.05, 0.17, 0.26, 0.41, 0.48];
        let obj = QbrmObjective {
            terms: vec![
                QbrmTerm {
                    psi: WeightFunction::ConstantOne,
                    scope: Scope::Expectation,
                    coefficient: 1.0,
                },
                QbrmTerm {
                    psi: WeightFunction::smoothed_median(0.5, 0.05).unwrap(),
                    scope: Scope::MaxPairwiseDiff,
                    coefficient: 1.0,
                },
            ],
            support_max: Some(1.0),
            floor: Some(0.0),
        };
        let exact = obj.gradient(&groups, &l).unwrap();
        let fd = finite_difference(&obj, &groups, &l).unwrap();
        for (e, f) in exact.iter().zip(&fd) {
            assert!((e - f).abs() <= 1e-5 * (1.0 + f.abs()), "{e} vs {f}");
        }
    }

    #[test]
    fn missing_support_max_diverges() {
        let obj = QbrmObjective {
            support_max: None,
            ..QbrmObjective::expected_loss(1.0)
        };
        let err = obj.value(&[stats(&[0.1, 0.2])], &[0.1, 0.5]).unwrap_err();
        assert!(err.is_divergence());
        assert_eq!(
            obj.value(&[stats(&[0.1, 0.2])], &[0.5, 1.0]).unwrap(),
            0.5 * 0.1 + 0.5 * 0.2
        );
    }
}
