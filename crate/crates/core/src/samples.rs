use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite multiset of i.i.d. losses with optional group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSamples {
    values: Vec<f64>,
    groups: Option<Vec<String>>,
    support_max: Option<f64>,
    nonneg: bool,
}

impl LossSamples {
    /// Nonnegative, ungrouped losses without a declared support maximum.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::build(values, None, None, true)
    }

    pub fn build(
        values: Vec<f64>,
        groups: Option<Vec<String>>,
        support_max: Option<f64>,
        nonneg: bool,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoSamples);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "loss #{} is not finite ({})",
                i + 1,
                values[i]
            )));
        }
        if nonneg {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidInput(format!(
                    "loss #{} is negative ({}) but samples are declared nonnegative",
                    i + 1,
                    values[i]
                )));
            }
        }
        if let Some(g) = &groups {
            if g.len() != values.len() {
                return Err(Error::InvalidInput(format!(
                    "{} group labels for {} losses",
                    g.len(),
                    values.len()
                )));
            }
        }
        if let Some(b) = support_max {
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if b.is_nan() || b < max {
                return Err(Error::InvalidInput(format!(
                    "support_max {b} is below the largest loss {max}"
                )));
            }
        }
        Ok(Self {
            values,
            groups,
            support_max,
            nonneg,
        })
    }

    pub fn with_support_max(self, support_max: f64) -> Result<Self> {
        Self::build(self.values, self.groups, Some(support_max), self.nonneg)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn groups(&self) -> Option<&[String]> {
        self.groups.as_deref()
    }

    pub fn support_max(&self) -> Option<f64> {
        self.support_max
    }

    /// Support maximum as a real, `+∞` when undeclared.
    pub fn support_bound(&self) -> f64 {
        self.support_max.unwrap_or(f64::INFINITY)
    }

    pub fn nonneg(&self) -> bool {
        self.nonneg
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distinct group labels in first-appearance order.
    pub fn group_labels(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        if let Some(groups) = &self.groups {
            for g in groups {
                if !seen.contains(g) {
                    seen.push(g.clone());
                }
            }
        }
        seen
    }

    /// The sub-sample for one group, keeping support and sign metadata.
    pub fn group(&self, label: &str) -> Result<LossSamples> {
        let groups = self
            .groups
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("samples carry no group labels".into()))?;
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(groups)
            .filter(|(_, g)| g.as_str() == label)
            .map(|(v, _)| *v)
            .collect();
        if values.is_empty() {
            return Err(Error::InvalidInput(format!("no samples in group {label:?}")));
        }
        LossSamples::build(values, None, self.support_max, self.nonneg)
    }
}

/// Sorted sample `X_(1) <= ... <= X_(n)`; ties are kept as repeated entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OrderStats {
    sorted: Vec<f64>,
}

impl OrderStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoSamples);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("NaN in order statistics".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for OrderStats {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        if values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidInput("order statistics are not sorted".into()));
        }
        OrderStats::from_values(&values)
    }
}

impl From<OrderStats> for Vec<f64> {
    fn from(stats: OrderStats) -> Self {
        stats.sorted
    }
}

pub fn order_statistics(samples: &LossSamples) -> Result<OrderStats> {
    OrderStats::from_values(samples.values())
}
