//! Readers and writers for loss files, hypothesis tables and prediction files.
//!
//! CSV losses: header `loss[,group]`. JSONL losses: one `{"loss": x, "group": g}`
//! object per line, `group` optional. Hypothesis tables: header
//! `example_id[,group],h_<label>...`, one loss column per hypothesis.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl` and `.ndjson` are JSON lines; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Format::Jsonl,
            _ => Format::Csv,
        }
    }
}

/// Losses with optional group labels, as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct LossColumn {
    pub values: Vec<f64>,
    pub groups: Option<Vec<String>>,
}

fn schema(problems: Vec<String>) -> CliResult<()> {
    if problems.is_empty() {
        return Ok(());
    }
    let shown: Vec<_> = problems.iter().take(20).cloned().collect();
    let more = if problems.len() > 20 {
        format!(" (and {} more)", problems.len() - 20)
    } else {
        String::new()
    };
    Err(CliError::Schema(format!("{}{more}", shown.join("; "))))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn parse_loss(raw: &str, line: u64, problems: &mut Vec<String>) -> f64 {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => v,
        Ok(v) => {
            problems.push(format!("line {line}: loss is {v}"));
            f64::NAN
        }
        Err(_) => {
            problems.push(format!("line {line}: cannot parse loss {raw:?}"));
            f64::NAN
        }
    }
}

pub fn parse_losses_csv(text: &str) -> CliResult<LossColumn> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Schema(format!("header: {e}")))?
        .clone();
    let loss_at = column(&headers, "loss").ok_or_else(|| CliError::Schema("missing column \"loss\"".into()))?;
    let group_at = column(&headers, "group");
    let mut values = Vec::new();
    let mut groups = Vec::new();
    let mut problems = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Schema(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        values.push(parse_loss(record.get(loss_at).unwrap_or(""), line, &mut problems));
        if let Some(g) = group_at {
            groups.push(record.get(g).unwrap_or("").to_string());
        }
    }
    schema(problems)?;
    if values.is_empty() {
        return Err(CliError::Schema("no loss rows".into()));
    }
    Ok(LossColumn {
        values,
        groups: group_at.map(|_| groups),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonLoss {
    loss: f64,
    #[serde(default)]
    group: Option<String>,
}

pub fn parse_losses_jsonl(text: &str) -> CliResult<LossColumn> {
    let mut values = Vec::new();
    let mut groups = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<JsonLoss>(line) {
            Ok(rec) => {
                values.push(rec.loss);
                groups.push(rec.group);
            }
            Err(e) => problems.push(format!("line {}: {e}", i + 1)),
        }
    }
    schema(problems)?;
    if values.is_empty() {
        return Err(CliError::Schema("no loss rows".into()));
    }
    let grouped = groups.iter().filter(|g| g.is_some()).count();
    let groups = match grouped {
        0 => None,
        n if n == groups.len() => Some(groups.into_iter().map(Option::unwrap_or_default).collect()),
        _ => {
            return Err(CliError::Schema(
                "either every line or no line must carry a group".into(),
            ))
        }
    };
    Ok(LossColumn { values, groups })
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn read_losses(path: &Path, format: Option<Format>) -> CliResult<LossColumn> {
    let text = read_text(path)?;
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Csv => parse_losses_csv(&text),
        Format::Jsonl => parse_losses_jsonl(&text),
    }
}

/// Shortest text that reads back to the same `f64` (exponent form for very
/// large or small magnitudes); writing what was read is byte-stable.
pub fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

pub fn write_losses_csv(col: &LossColumn) -> String {
    let mut out = String::from(if col.groups.is_some() { "loss,group\n" } else { "loss\n" });
    for (i, v) in col.values.iter().enumerate() {
        out.push_str(&fmt_f64(*v));
        if let Some(g) = &col.groups {
            out.push(',');
            out.push_str(&csv_field(&g[i]));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) || s.trim() != s {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Hypothesis columns sharing examples.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisColumns {
    pub labels: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub groups: Option<Vec<String>>,
}

pub fn parse_hypothesis_table(text: &str) -> CliResult<HypothesisColumns> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Schema(format!("header: {e}")))?
        .clone();
    let group_at = column(&headers, "group");
    let hyp: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("h_").map(|l| (i, l.to_string())))
        .collect();
    if hyp.is_empty() {
        return Err(CliError::Schema("no hypothesis columns (expected h_<label>)".into()));
    }
    if let Some(bad) = headers
        .iter()
        .find(|h| *h != "example_id" && *h != "group" && !h.starts_with("h_"))
    {
        return Err(CliError::Schema(format!("unexpected column {bad:?}")));
    }
    let mut columns = vec![Vec::new(); hyp.len()];
    let mut groups = Vec::new();
    let mut problems = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Schema(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (k, (i, _)) in hyp.iter().enumerate() {
            columns[k].push(parse_loss(record.get(*i).unwrap_or(""), line, &mut problems));
        }
        if let Some(g) = group_at {
            groups.push(record.get(g).unwrap_or("").to_string());
        }
    }
    schema(problems)?;
    if columns[0].is_empty() {
        return Err(CliError::Schema("no example rows".into()));
    }
    Ok(HypothesisColumns {
        labels: hyp.into_iter().map(|(_, l)| l).collect(),
        columns,
        groups: group_at.map(|_| groups),
    })
}

/// Line number, requested fields, optional group.
pub(crate) type PredictionRow = (u64, Vec<String>, Option<String>);

/// Raw prediction rows: named string columns per line.
pub(crate) fn prediction_rows(text: &str, needed: &[&str]) -> CliResult<Vec<PredictionRow>> {
    let mut rdr = reader(text);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Schema(format!("header: {e}")))?
        .clone();
    let idx = needed
        .iter()
        .map(|n| column(&headers, n).ok_or_else(|| CliError::Schema(format!("missing column {n:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    let group_at = column(&headers, "group");
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::Schema(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let fields = idx.iter().map(|&i| record.get(i).unwrap_or("").to_string()).collect();
        rows.push((line, fields, group_at.map(|g| record.get(g).unwrap_or("").to_string())));
    }
    if rows.is_empty() {
        return Err(CliError::Schema("no prediction rows".into()));
    }
    Ok(rows)
}

pub(crate) fn report(problems: Vec<String>) -> CliResult<()> {
    schema(problems)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_losses() {
        let c = parse_losses_csv("loss\n0.1\n0.2\n").unwrap();
        assert_eq!(c.values, vec![0.1, 0.2]);
        assert_eq!(c.groups, None);
        let g = parse_losses_csv("loss,group\n0.1,a\n0.2,b\n").unwrap();
        assert_eq!(g.groups, Some(vec!["a".into(), "b".into()]));
        let err = parse_losses_csv("loss\n0.1\nNaN\n0.3\ninf\n").unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("line 5"), "{err}");
        assert!(parse_losses_csv("value\n1\n").is_err());
        assert!(parse_losses_csv("loss\n").is_err());
    }

    #[test]
    fn jsonl_losses() {
        let c = parse_losses_jsonl("{\"loss\": 0.5, \"group\": \"a\"}\n\n{\"loss\": 1, \"group\": \"b\"}\n").unwrap();
        assert_eq!(c.values, vec![0.5, 1.0]);
        assert_eq!(c.groups.unwrap(), vec!["a", "b"]);
        assert!(parse_losses_jsonl("{\"loss\": 0.5}\n{\"loss\": 1, \"group\": \"b\"}\n").is_err());
        let err = parse_losses_jsonl("{\"loss\": 0.5}\n{\"loss\": NaN}\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"));
    }

    #[test]
    fn csv_round_trip_is_byte_stable() {
        let text = "loss,group\n0.1,a\n0.30000000000000004,\"x,y\"\n1e-300,b\n";
        let col = parse_losses_csv(text).unwrap();
        assert_eq!(write_losses_csv(&col), text);
        let plain = "loss\n0.0\n2.5\n";
        assert_eq!(write_losses_csv(&parse_losses_csv(plain).unwrap()), plain);
    }

    #[test]
    fn hypothesis_table() {
        let t = parse_hypothesis_table("example_id,group,h_a,h_b\n1,x,0.1,0.2\n2,y,0.3,0.4\n").unwrap();
        assert_eq!(t.labels, vec!["a", "b"]);
        assert_eq!(t.columns[1], vec![0.2, 0.4]);
        assert_eq!(t.groups.unwrap(), vec!["x", "y"]);
        assert!(parse_hypothesis_table("example_id,other\n1,2\n").is_err());
        assert!(parse_hypothesis_table("example_id,h_a\n1,oops\n").is_err());
    }
}
