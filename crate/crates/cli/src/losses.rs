//! Per-example losses from prediction files.
//!
//! - brier: columns `confidence,outcome`, loss `(f - o)²`, `o ∈ {0, 1}`.
//! - balanced accuracy: columns `label,prediction_set` with `;`-separated
//!   class indices in `0..k`; loss `1 - (sensitivity + specificity)/2`.
//! - precision/recall: columns `recommended,relevant` with `;`-separated item
//!   ids; loss `α(1 - recall)² + (1 - α)(1 - precision)²`.
//!
//! An optional `group` column is carried through.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::ingest::{prediction_rows, report, LossColumn};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metric {
    Brier,
    BalancedAccuracy { classes: usize },
    PrecRecall { alpha: f64 },
}

pub fn brier(confidence: f64, outcome: f64) -> f64 {
    (confidence - outcome).powi(2)
}

/// `label` against a predicted set over `classes` classes.
pub fn balanced_accuracy_loss(label: usize, predicted: &BTreeSet<usize>, classes: usize) -> f64 {
    let sensitivity = if predicted.contains(&label) { 1.0 } else { 0.0 };
    let false_pos = predicted.iter().filter(|&&c| c != label).count();
    let specificity = (classes - 1 - false_pos) as f64 / (classes - 1) as f64;
    1.0 - (sensitivity + specificity) / 2.0
}

pub fn prec_recall_loss(recommended: &BTreeSet<String>, relevant: &BTreeSet<String>, alpha: f64) -> f64 {
    let hits = recommended.intersection(relevant).count() as f64;
    let recall_loss = 1.0 - hits / relevant.len() as f64;
    let precision_loss = 1.0 - hits / recommended.len() as f64;
    alpha * recall_loss.powi(2) + (1.0 - alpha) * precision_loss.powi(2)
}

fn split_set(raw: &str) -> Vec<&str> {
    raw.split(';').map(str::trim).filter(|s| !s.is_empty()).collect()
}

pub fn compute_losses(text: &str, metric: Metric) -> CliResult<LossColumn> {
    let needed: &[&str] = match metric {
        Metric::Brier => &["confidence", "outcome"],
        Metric::BalancedAccuracy { .. } => &["label", "prediction_set"],
        Metric::PrecRecall { .. } => &["recommended", "relevant"],
    };
    match metric {
        Metric::BalancedAccuracy { classes } if classes < 2 => {
            return Err(CliError::Schema("balanced accuracy needs at least 2 classes".into()))
        }
        Metric::PrecRecall { alpha } if !(0.0..=1.0).contains(&alpha) => {
            return Err(CliError::Schema(format!("alpha {alpha} outside [0, 1]")))
        }
        _ => {}
    }
    let rows = prediction_rows(text, needed)?;
    let mut problems = Vec::new();
    let mut values = Vec::with_capacity(rows.len());
    let mut groups = Vec::new();
    for (line, f, group) in &rows {
        let loss = match metric {
            Metric::Brier => {
                let conf = f[0].parse::<f64>().ok().filter(|c| (0.0..=1.0).contains(c));
                let outcome = match f[1].as_str() {
                    "0" | "0.0" => Some(0.0),
                    "1" | "1.0" => Some(1.0),
                    _ => None,
                };
                match (conf, outcome) {
                    (Some(c), Some(o)) => Ok(brier(c, o)),
                    (None, _) => Err(format!("confidence {:?} not in [0, 1]", f[0])),
                    (_, None) => Err(format!("outcome {:?} not 0 or 1", f[1])),
                }
            }
            Metric::BalancedAccuracy { classes } => {
                let label = f[0].parse::<usize>().ok().filter(|l| *l < classes);
                let set: Result<BTreeSet<usize>, _> = split_set(&f[1])
                    .into_iter()
                    .map(|s| s.parse::<usize>().ok().filter(|c| *c < classes).ok_or(s))
                    .collect();
                match (label, set) {
                    (Some(l), Ok(s)) => Ok(balanced_accuracy_loss(l, &s, classes)),
                    (None, _) => Err(format!("label {:?} not a class in 0..{classes}", f[0])),
                    (_, Err(s)) => Err(format!("predicted class {s:?} not in 0..{classes}")),
                }
            }
            Metric::PrecRecall { alpha } => {
                let rec: BTreeSet<String> = split_set(&f[0]).into_iter().map(String::from).collect();
                let rel: BTreeSet<String> = split_set(&f[1]).into_iter().map(String::from).collect();
                if rec.is_empty() || rel.is_empty() {
                    Err("recommended and relevant sets must be nonempty".to_string())
                } else {
                    Ok(prec_recall_loss(&rec, &rel, alpha))
                }
            }
        };
        match loss {
            Ok(v) => values.push(v),
            Err(m) => problems.push(format!("line {line}: {m}")),
        }
        if let Some(g) = group {
            groups.push(g.clone());
        }
    }
    report(problems)?;
    let grouped = rows.first().is_some_and(|r| r.2.is_some());
    Ok(LossColumn {
        values,
        groups: grouped.then_some(groups),
    })
}
