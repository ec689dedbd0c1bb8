//! Picks the hypothesis with the smallest certified objective bound across a
//! table of per-example losses, with a Bonferroni correction over every band
//! the run builds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::band::{build_band, var_bounds, BandMethod, CdfBand};
use crate::crossing::{BoundMethod, BoundVector};
use crate::error::{Error, Result};
use crate::functional::{qbrm_interval, ValueInterval};
use crate::measures::{
    atkinson_lower, atkinson_upper, gini_lower, gini_upper, max_pairwise_diff_upper, DiffKind, GroupBounds,
};
use crate::samples::LossSamples;
use crate::weight::{WeightFunction, DEFAULT_SMOOTHING};

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    Mean,
    Qbrm {
        psi: WeightFunction,
    },
    Gini,
    Atkinson {
        eps: f64,
    },
    Cvar {
        beta: f64,
    },
    Var {
        beta: f64,
    },
    SmoothedMedian {
        beta: f64,
        #[serde(default = "default_smoothing")]
        a: f64,
    },
}

impl MeasureSpec {
    pub fn name(&self) -> String {
        match self {
            MeasureSpec::Mean => "mean".into(),
            MeasureSpec::Qbrm { .. } => "qbrm".into(),
            MeasureSpec::Gini => "gini".into(),
            MeasureSpec::Atkinson { eps } => format!("atkinson({eps})"),
            MeasureSpec::Cvar { beta } => format!("cvar({beta})"),
            MeasureSpec::Var { beta } => format!("var({beta})"),
            MeasureSpec::SmoothedMedian { beta, a } => format!("smoothed_median({beta},{a})"),
        }
    }

    /// Two-sided interval for the measure from one band.
    pub fn interval(&self, band: &CdfBand) -> Result<ValueInterval> {
        let id = |x: f64| x;
        let qbrm = |psi: WeightFunction| qbrm_interval(band, &psi, &id);
        match self {
            MeasureSpec::Mean => qbrm(WeightFunction::ConstantOne),
            MeasureSpec::Qbrm { psi } => qbrm(psi.clone()),
            MeasureSpec::Cvar { beta } => qbrm(WeightFunction::cvar(*beta)?),
            MeasureSpec::SmoothedMedian { beta, a } => qbrm(WeightFunction::smoothed_median(*beta, *a)?),
            MeasureSpec::Var { beta } => {
                let (lo, hi) = var_bounds(band, *beta)?;
                Ok(ValueInterval { lo, hi })
            }
            MeasureSpec::Gini => Ok(ValueInterval {
                lo: gini_lower(band)?.value,
                hi: gini_upper(band)?.value,
            }),
            MeasureSpec::Atkinson { eps } => Ok(ValueInterval {
                lo: atkinson_lower(band, *eps, None)?.value,
                hi: atkinson_upper(band, *eps, None)?.value,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermScope {
    /// One band over all examples.
    Population,
    /// Group-weighted average of per-group upper bounds.
    Expectation,
    /// Largest pairwise difference between per-group intervals.
    MaxPairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub measure: MeasureSpec,
    pub scope: TermScope,
    #[serde(default = "one")]
    pub coefficient: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub terms: Vec<TermSpec>,
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidInput("objective has no terms".into()));
        }
        if let Some(t) = self
            .terms
            .iter()
            .find(|t| !(t.coefficient >= 0.0 && t.coefficient.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "coefficient {} of {} must be finite and nonnegative",
                t.coefficient,
                t.measure.name()
            )));
        }
        Ok(())
    }

    pub fn needs_population(&self) -> bool {
        self.terms.iter().any(|t| t.scope == TermScope::Population)
    }

    pub fn needs_groups(&self) -> bool {
        self.terms.iter().any(|t| t.scope != TermScope::Population)
    }
}

fn name_term(err: Error, term: &str) -> Error {
    match err {
        Error::Divergent(m) => Error::Divergent(format!("{term}: {m}")),
        Error::InvalidInput(m) => Error::InvalidInput(format!("{term}: {m}")),
        Error::Unsupported(m) => Error::Unsupported(format!("{term}: {m}")),
        other => other,
    }
}

/// Total upper bound `Σ coefficient · term` and the per-term values.
pub fn evaluate_objective(
    spec: &ObjectiveSpec,
    population: Option<&CdfBand>,
    groups: &[(String, CdfBand)],
    group_weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    if groups.len() != group_weights.len() {
        return Err(Error::InvalidInput("one weight per group required".into()));
    }
    let mut per_term = Vec::with_capacity(spec.terms.len());
    for term in &spec.terms {
        let name = term.measure.name();
        let value = match term.scope {
            TermScope::Population => {
                let band = population.ok_or_else(|| Error::InvalidInput(format!("{name}: no population band")))?;
                term.measure.interval(band).map_err(|e| name_term(e, &name))?.hi
            }
            TermScope::Expectation | TermScope::MaxPairwise => {
                if groups.is_empty() {
                    return Err(Error::InvalidInput(format!("{name}: no group bands")));
                }
                let intervals = groups
                    .iter()
                    .map(|(_, b)| term.measure.interval(b))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| name_term(e, &name))?;
                if term.scope == TermScope::Expectation {
                    intervals.iter().zip(group_weights).map(|(iv, w)| w * iv.hi).sum()
                } else {
                    let labels = groups.iter().map(|(g, _)| g.clone()).collect();
                    let bounds = GroupBounds::new(labels, intervals, group_weights.to_vec())?;
                    max_pairwise_diff_upper(&bounds, DiffKind::Abs).map_err(|e| name_term(e, &name))?
                }
            }
        };
        per_term.push(value);
    }
    let total = spec.terms.iter().zip(&per_term).map(|(t, v)| t.coefficient * v).sum();
    Ok((total, per_term))
}

/// `delta / (num_hypotheses · num_groups)`.
pub fn corrected_delta(delta: f64, num_hypotheses: usize, num_groups: usize) -> Result<f64> {
    if num_hypotheses == 0 || num_groups == 0 {
        return Err(Error::InvalidInput(
            "hypothesis and group counts must be at least 1".into(),
        ));
    }
    Ok(delta / (num_hypotheses as f64 * num_groups as f64))
}

/// Plug-in band `L_i = i/n`: both sides equal the empirical CDF.
pub fn empirical_band(samples: &LossSamples) -> Result<CdfBand> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::NoSamples);
    }
    let l = (1..=n).map(|i| i as f64 / n as f64).collect();
    CdfBand::from_vector(samples, BoundVector::new(l, 0.0, BoundMethod::ExactPlugin)?, 0.0)
}

/// Plug-in value of a measure on the empirical CDF.
pub fn empirical_measure(samples: &LossSamples, measure: &MeasureSpec) -> Result<f64> {
    Ok(measure.interval(&empirical_band(samples)?)?.hi)
}

/// Per-example losses of several hypotheses on shared examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisLossTable {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
    groups: Option<Vec<String>>,
    support_max: Option<f64>,
    nonneg: bool,
}

impl HypothesisLossTable {
    pub fn new(
        labels: Vec<String>,
        columns: Vec<Vec<f64>>,
        groups: Option<Vec<String>>,
        support_max: Option<f64>,
        nonneg: bool,
    ) -> Result<Self> {
        if labels.is_empty() || labels.len() != columns.len() {
            return Err(Error::InvalidInput("one label per hypothesis column required".into()));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::NoSamples);
        }
        if let Some(i) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::InvalidInput(format!(
                "hypothesis {} has {} examples, expected {n}",
                labels[i],
                columns[i].len()
            )));
        }
        if groups.as_ref().is_some_and(|g| g.len() != n) {
            return Err(Error::InvalidInput(
                "group column length differs from the examples".into(),
            ));
        }
        // validates values, support bound and sign for each column
        for c in &columns {
            LossSamples::build(c.clone(), groups.clone(), support_max, nonneg)?;
        }
        Ok(Self {
            labels,
            columns,
            groups,
            support_max,
            nonneg,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_examples(&self) -> usize {
        self.columns[0].len()
    }

    pub fn samples(&self, h: usize) -> Result<LossSamples> {
        LossSamples::build(
            self.columns[h].clone(),
            self.groups.clone(),
            self.support_max,
            self.nonneg,
        )
    }

    pub fn group_labels(&self) -> Vec<String> {
        let mut g = self.groups.clone().unwrap_or_default();
        g.sort();
        g.dedup();
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub label: String,
    pub total_upper: Option<f64>,
    pub per_term: Vec<f64>,
    pub empirical: Vec<f64>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub hypotheses: Vec<HypothesisReport>,
    pub selected: Option<String>,
    pub delta: f64,
    pub delta_corrected: f64,
    pub method: String,
}

struct Bands {
    population: Option<CdfBand>,
    groups: Vec<(String, CdfBand)>,
    weights: Vec<f64>,
}

fn bands_for(
    samples: &LossSamples,
    spec: &ObjectiveSpec,
    labels: &[String],
    make: &dyn Fn(&LossSamples) -> Result<CdfBand>,
) -> Result<Bands> {
    let population = if spec.needs_population() {
        Some(make(samples)?)
    } else {
        None
    };
    let mut groups = Vec::new();
    let mut weights = Vec::new();
    if spec.needs_groups() {
        for g in labels {
            let sub = samples.group(g)?;
            weights.push(sub.len() as f64 / samples.len() as f64);
            groups.push((g.clone(), make(&sub)?));
        }
    }
    Ok(Bands {
        population,
        groups,
        weights,
    })
}

/// Bands are built once per hypothesis and group at the corrected level and
/// shared by every term. A failure marks only that hypothesis infeasible.
pub fn select_hypothesis(
    table: &HypothesisLossTable,
    spec: &ObjectiveSpec,
    delta: f64,
    method: &BandMethod,
) -> Result<SelectionReport> {
    spec.validate()?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} outside (0, 1)")));
    }
    let labels = table.group_labels();
    if spec.needs_groups() && labels.is_empty() {
        return Err(Error::InvalidInput(
            "objective has group terms but the table has no group column".into(),
        ));
    }
    let bands_per_hypothesis =
        usize::from(spec.needs_population()) + if spec.needs_groups() { labels.len() } else { 0 };
    let delta_corrected = corrected_delta(delta, table.labels().len(), bands_per_hypothesis)?;
    if let BandMethod::Optimized { l } = method {
        if l.delta() > delta_corrected / 2.0 * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "optimized vector at one-sided level {} exceeds the corrected budget {}",
                l.delta(),
                delta_corrected / 2.0
            )));
        }
    }
    let hypotheses: Vec<HypothesisReport> = (0..table.labels().len())
        .into_par_iter()
        .map(|h| {
            let label = table.labels()[h].clone();
            let run = || -> Result<(f64, Vec<f64>, Vec<f64>)> {
                let samples = table.samples(h)?;
                let certified = bands_for(&samples, spec, &labels, &|s| build_band(s, method, delta_corrected))?;
                let (total, per_term) = evaluate_objective(
                    spec,
                    certified.population.as_ref(),
                    &certified.groups,
                    &certified.weights,
                )?;
                let plug = bands_for(&samples, spec, &labels, &|s| empirical_band(s))?;
                let (_, empirical) = evaluate_objective(spec, plug.population.as_ref(), &plug.groups, &plug.weights)?;
                Ok((total, per_term, empirical))
            };
            match run() {
                Ok((total, per_term, empirical)) => HypothesisReport {
                    label,
                    total_upper: Some(total),
                    per_term,
                    empirical,
                    feasible: true,
                    error: None,
                },
                Err(e) => HypothesisReport {
                    label,
                    total_upper: None,
                    per_term: vec![],
                    empirical: vec![],
                    feasible: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut selected: Option<(usize, f64)> = None;
    for (i, h) in hypotheses.iter().enumerate() {
        if let Some(t) = h.total_upper {
            if selected.is_none_or(|(_, best)| t < best) {
                selected = Some((i, t));
            }
        }
    }
    Ok(SelectionReport {
        selected: selected.map(|(i, _)| hypotheses[i].label.clone()),
        hypotheses,
        delta,
        delta_corrected,
        method: method.tag().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::band::exact_plugin_band;
    use crate::coverage::DistSpec;

    fn mean_spec(scope: TermScope) -> ObjectiveSpec {
        ObjectiveSpec {
            terms: vec![TermSpec {
                measure: MeasureSpec::Mean,
                scope,
                coefficient: 1.0,
            }],
        }
    }

    #[test]
    fn bonferroni() {
        assert!((corrected_delta(0.05, 50, 4).unwrap() - 0.00025).abs() < 1e-18);
        assert_eq!(corrected_delta(0.05, 1, 1).unwrap(), 0.05);
        assert!(corrected_delta(0.05, 0, 1).is_err());
    }

    #[test]
    fn empirical_values() {
        let s = LossSamples::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!((empirical_measure(&s, &MeasureSpec::Mean).unwrap() - 2.0).abs() < 1e-12);
        let c = LossSamples::new(vec![0.4; 5]).unwrap();
        assert!(empirical_measure(&c, &MeasureSpec::Gini).unwrap().abs() < 1e-12);
        let two = LossSamples::new(vec![0.0, 1.0]).unwrap();
        assert!((empirical_measure(&two, &MeasureSpec::Gini).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn objective_on_exact_bands() {
        let u = exact_plugin_band(&DistSpec::Uniform, 10_000).unwrap();
        let (total, _) = evaluate_objective(&mean_spec(TermScope::Population), Some(&u), &[], &[]).unwrap();
        assert!((total - 0.5).abs() < 1e-3);

        let spec = ObjectiveSpec {
            terms: vec![
                TermSpec {
                    measure: MeasureSpec::Mean,
                    scope: TermScope::Population,
                    coefficient: 1.0,
                },
                TermSpec {
                    measure: MeasureSpec::Gini,
                    scope: TermScope::Population,
                    coefficient: 0.2,
                },
            ],
        };
        let (total, per) = evaluate_objective(&spec, Some(&u), &[], &[]).unwrap();
        assert_eq!(per.len(), 2);
        assert!((total - (per[0] + 0.2 * per[1])).abs() < 1e-15);
    }

    #[test]
    fn identical_groups_give_interval_width() {
        let values: Vec<f64> = (0..40).map(|i| (i as f64 + 0.5) / 40.0).collect();
        let s = LossSamples::build(values, None, Some(1.0), true).unwrap();
        let band = build_band(&s, &BandMethod::Dkw, 0.1).unwrap();
        let spec = ObjectiveSpec {
            terms: vec![
                TermSpec {
                    measure: MeasureSpec::Mean,
                    scope: TermScope::Expectation,
                    coefficient: 1.0,
                },
                TermSpec {
                    measure: MeasureSpec::SmoothedMedian { beta: 0.5, a: 0.01 },
                    scope: TermScope::MaxPairwise,
                    coefficient: 1.0,
                },
            ],
        };
        let groups = vec![("a".to_string(), band.clone()), ("b".to_string(), band.clone())];
        let (_, per) = evaluate_objective(&spec, None, &groups, &[0.5, 0.5]).unwrap();
        let width = MeasureSpec::SmoothedMedian { beta: 0.5, a: 0.01 }
            .interval(&band)
            .unwrap()
            .width();
        assert!((per[1] - width).abs() < 1e-12);
    }

    #[test]
    fn dominated_column_selected() {
        let base: Vec<f64> = (0..60).map(|i| ((i * 17) % 60) as f64 / 120.0).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 1.0).collect();
        let table = HypothesisLossTable::new(
            vec!["h1".into(), "h2".into()],
            vec![shifted.clone(), base.clone()],
            None,
            Some(2.0),
            true,
        )
        .unwrap();
        let r = select_hypothesis(
            &table,
            &mean_spec(TermScope::Population),
            0.1,
            &BandMethod::berk_jones(),
        )
        .unwrap();
        assert_eq!(r.selected.as_deref(), Some("h2"));
        assert!((r.delta_corrected - 0.05).abs() < 1e-15);

        let single = HypothesisLossTable::new(vec!["only".into()], vec![base], None, Some(2.0), true).unwrap();
        let r = select_hypothesis(&single, &mean_spec(TermScope::Population), 0.1, &BandMethod::Dkw).unwrap();
        assert_eq!(r.selected.as_deref(), Some("only"));
    }

    #[test]
    fn failure_marks_only_that_hypothesis() {
        let a: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let table =
            HypothesisLossTable::new(vec!["a".into(), "b".into()], vec![a.clone(), a], None, None, true).unwrap();
        // no support bound: the mean upper bound diverges for every hypothesis
        let r = select_hypothesis(&table, &mean_spec(TermScope::Population), 0.1, &BandMethod::Dkw).unwrap();
        assert!(r
            .hypotheses
            .iter()
            .all(|h| !h.feasible && h.error.as_deref().unwrap().contains("mean")));
        assert_eq!(r.selected, None);
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let a: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let table =
            HypothesisLossTable::new(vec!["x".into(), "y".into()], vec![a.clone(), a], None, Some(1.0), true).unwrap();
        let r = select_hypothesis(&table, &mean_spec(TermScope::Population), 0.1, &BandMethod::Dkw).unwrap();
        assert_eq!(r.selected.as_deref(), Some("x"));
    }
}
