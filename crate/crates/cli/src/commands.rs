//! JSON configs and the command implementations behind the binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use certband_core::coverage::simulate_coverage;
use certband_core::functional::qbrm_interval;
use certband_core::measures::{
    atkinson_lower, atkinson_upper, extended_gini_upper, generalized_entropy_upper, gini_lower, gini_upper,
    hoover_upper, lorenz_band, mean_range_certified_upper, mean_range_upper, Certified, Flag, MeasureBoundReport,
};
use certband_core::selection::{empirical_band, select_hypothesis, HypothesisLossTable, ObjectiveSpec};
use certband_core::{
    build_band, exact_plugin_band, var_bounds, BandMethod, CdfBand, DistSpec, LossSamples, WeightFunction,
};
use certband_optim::{split_optimize_apply, OptimizerConfig, QbrmObjective};

use crate::error::{CliError, CliResult};
use crate::ingest::{fmt_f64, parse_hypothesis_table, read_losses, read_text, Format};

fn yes() -> bool {
    true
}

pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    parse_config(&text).map_err(|message| CliError::Config {
        path: path.display().to_string(),
        message,
    })
}

pub fn parse_config<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

/// Writes `text` to `path` through a temporary file in the same directory,
/// or to stdout when no path is given.
pub fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e));
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let shown = path.display().to_string();
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(&shown, e))?;
    tmp.write_all(text.as_bytes()).map_err(|e| CliError::io(&shown, e))?;
    tmp.persist(path).map_err(|e| CliError::io(&shown, e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(certband_core::Error::from)?;
    s.push('\n');
    Ok(s)
}

/// Where losses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSource {
    pub input: PathBuf,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub support_max: Option<f64>,
    #[serde(default = "yes")]
    pub nonneg: bool,
    /// Restrict to one group label.
    #[serde(default)]
    pub group: Option<String>,
}

impl SampleSource {
    pub fn load(&self) -> CliResult<LossSamples> {
        let col = read_losses(&self.input, self.format)?;
        let samples = LossSamples::build(col.values, col.groups, self.support_max, self.nonneg)?;
        Ok(match &self.group {
            Some(g) => samples.group(g)?,
            None => samples,
        })
    }
}

/// A band read from a file, or built from samples (or a distribution for
/// `exact_plugin`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    #[serde(default)]
    pub band_file: Option<PathBuf>,
    #[serde(default)]
    pub samples: Option<SampleSource>,
    #[serde(default)]
    pub method: Option<BandMethod>,
    #[serde(default)]
    pub delta: Option<f64>,
}

impl BandSpec {
    pub fn resolve(&self) -> CliResult<CdfBand> {
        if let Some(path) = &self.band_file {
            let text = read_text(path)?;
            return parse_band(&text);
        }
        match (&self.method, &self.samples) {
            (Some(BandMethod::ExactPlugin { dist, points }), _) => Ok(exact_plugin_band(dist, *points)?),
            (Some(method), Some(source)) => {
                let delta = self
                    .delta
                    .ok_or_else(|| CliError::Schema("band: delta is required".into()))?;
                Ok(build_band(&source.load()?, method, delta)?)
            }
            (None, _) => Err(CliError::Schema("band: give band_file or method".into())),
            (Some(_), None) => Err(CliError::Schema("band: samples are required for this method".into())),
        }
    }
}

pub fn parse_band(text: &str) -> CliResult<CdfBand> {
    serde_json::from_str(text).map_err(|e| CliError::Core(e.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandConfig {
    pub band: BandSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn run_band(cfg: &BandConfig) -> CliResult<String> {
    to_json(&cfg.band.resolve()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureRequest {
    Mean,
    Qbrm {
        psi: WeightFunction,
    },
    Cvar {
        beta: f64,
    },
    Var {
        beta: f64,
    },
    SmoothedMedian {
        beta: f64,
        #[serde(default = "smoothing")]
        a: f64,
    },
    Gini,
    ExtendedGini {
        nu: f64,
    },
    Atkinson {
        eps: f64,
        #[serde(default)]
        x_min: Option<f64>,
    },
    Hoover,
    GeneralizedEntropy {
        alpha: f64,
        #[serde(default)]
        x_min: Option<f64>,
    },
    MeanRange {
        k: u32,
    },
    /// Closed-form mean-range identity; flagged, not certified.
    MeanRangeIdentity {
        k: u32,
    },
}

fn smoothing() -> f64 {
    certband_core::weight::DEFAULT_SMOOTHING
}

impl MeasureRequest {
    fn name(&self) -> &'static str {
        match self {
            MeasureRequest::Mean => "mean",
            MeasureRequest::Qbrm { .. } => "qbrm",
            MeasureRequest::Cvar { .. } => "cvar",
            MeasureRequest::Var { .. } => "var",
            MeasureRequest::SmoothedMedian { .. } => "smoothed_median",
            MeasureRequest::Gini => "gini",
            MeasureRequest::ExtendedGini { .. } => "extended_gini",
            MeasureRequest::Atkinson { .. } => "atkinson",
            MeasureRequest::Hoover => "hoover",
            MeasureRequest::GeneralizedEntropy { .. } => "generalized_entropy",
            MeasureRequest::MeanRange { .. } => "mean_range",
            MeasureRequest::MeanRangeIdentity { .. } => "mean_range_identity",
        }
    }

    /// `(lower, upper, flags)` on one band.
    fn evaluate(&self, band: &CdfBand) -> certband_core::Result<(Option<f64>, f64, Vec<Flag>)> {
        let id = |x: f64| x;
        let interval = |psi: WeightFunction| -> certband_core::Result<(Option<f64>, f64, Vec<Flag>)> {
            let iv = qbrm_interval(band, &psi, &id)?;
            Ok((Some(iv.lo), iv.hi, vec![]))
        };
        let both = |lo: Certified, hi: Certified| {
            let mut flags = hi.flags;
            flags.extend(lo.flags.into_iter().filter(|f| !flags.contains(f)).collect::<Vec<_>>());
            (Some(lo.value), hi.value, flags)
        };
        let upper = |c: Certified| (None, c.value, c.flags);
        Ok(match self {
            MeasureRequest::Mean => interval(WeightFunction::ConstantOne)?,
            MeasureRequest::Qbrm { psi } => interval(psi.clone())?,
            MeasureRequest::Cvar { beta } => interval(WeightFunction::cvar(*beta)?)?,
            MeasureRequest::SmoothedMedian { beta, a } => interval(WeightFunction::smoothed_median(*beta, *a)?)?,
            MeasureRequest::Var { beta } => {
                let (lo, hi) = var_bounds(band, *beta)?;
                (Some(lo), hi, vec![])
            }
            MeasureRequest::Gini => both(gini_lower(band)?, gini_upper(band)?),
            MeasureRequest::ExtendedGini { nu } => upper(extended_gini_upper(band, *nu)?),
            MeasureRequest::Atkinson { eps, x_min } => {
                both(atkinson_lower(band, *eps, *x_min)?, atkinson_upper(band, *eps, *x_min)?)
            }
            MeasureRequest::Hoover => upper(hoover_upper(band)?),
            MeasureRequest::GeneralizedEntropy { alpha, x_min } => {
                upper(generalized_entropy_upper(band, *alpha, *x_min)?)
            }
            MeasureRequest::MeanRange { k } => upper(mean_range_certified_upper(band, *k)?),
            MeasureRequest::MeanRangeIdentity { k } => upper(mean_range_upper(band, *k)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub band: BandSpec,
    pub measures: Vec<MeasureRequest>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub method: String,
    pub delta: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureOutput {
    pub band: BandSummary,
    pub reports: Vec<MeasureBoundReport>,
}

/// One band, every requested measure on it.
pub fn run_measure(cfg: &MeasureConfig) -> CliResult<MeasureOutput> {
    if cfg.measures.is_empty() {
        return Err(CliError::Schema("measure: no measures requested".into()));
    }
    let band = cfg.band.resolve()?;
    let reports = cfg
        .measures
        .iter()
        .map(|m| {
            let (lo, hi, flags) = m.evaluate(&band)?;
            let mut params = serde_json::to_value(m).map_err(certband_core::Error::from)?;
            if let Some(obj) = params.as_object_mut() {
                obj.remove("kind");
            }
            Ok(MeasureBoundReport {
                measure: m.name().to_string(),
                params,
                bound_lo: lo,
                bound_hi: hi,
                delta_effective: band.delta(),
                method: band.method().to_string(),
                n: band.n(),
                flags,
                reference: None,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(MeasureOutput {
        band: BandSummary {
            method: band.method().to_string(),
            delta: band.delta(),
            n: band.n(),
        },
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzConfig {
    pub band: BandSpec,
    /// Evenly spaced points on `[0, 1]`, used when `t` is absent.
    #[serde(default = "lorenz_points")]
    pub points: usize,
    #[serde(default)]
    pub t: Option<Vec<f64>>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn lorenz_points() -> usize {
    21
}

/// CSV with columns `t,lower,upper,empirical`; the empirical curve uses the
/// band's order statistics.
pub fn run_lorenz(cfg: &LorenzConfig) -> CliResult<String> {
    let band = cfg.band.resolve()?;
    let grid = match &cfg.t {
        Some(t) => t.clone(),
        None if cfg.points >= 2 => (0..cfg.points).map(|k| k as f64 / (cfg.points - 1) as f64).collect(),
        None => return Err(CliError::Schema("lorenz: points must be at least 2".into())),
    };
    let curve = lorenz_band(&band, &grid)?;
    let stats = LossSamples::new(band.order_stats().as_slice().to_vec())?;
    let empirical = lorenz_band(&empirical_band(&stats)?, &grid)?;
    let mut out = String::from("t,lower,upper,empirical\n");
    for ((t, iv), e) in grid.iter().zip(&curve).zip(&empirical) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(*t),
            fmt_f64(iv.lo),
            fmt_f64(iv.hi),
            fmt_f64(e.lo)
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub samples: SampleSource,
    pub delta: f64,
    pub objective: QbrmObjective,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// JSON-lines training log.
    #[serde(default)]
    pub log: Option<PathBuf>,
}

/// Split-sample training; groups (if any) share the vector.
pub fn run_optimize(cfg: &OptimizeConfig) -> CliResult<(String, String)> {
    let samples = cfg.samples.load()?;
    let groups = match samples.groups() {
        Some(_) => samples
            .group_labels()
            .iter()
            .map(|g| samples.group(g))
            .collect::<certband_core::Result<Vec<_>>>()?,
        None => vec![samples.clone()],
    };
    let mut objective = cfg.objective.clone();
    objective.validate()?;
    if objective.support_max.is_none() {
        objective.support_max = samples.support_max();
    }
    if !samples.nonneg() && objective.floor == Some(0.0) {
        objective.floor = None;
    }
    let outcome = split_optimize_apply(&groups, &objective, cfg.delta, &cfg.optimizer, None)?;
    let mut log = String::new();
    for entry in &outcome.trained.training_log {
        log.push_str(&serde_json::to_string(entry).map_err(certband_core::Error::from)?);
        log.push('\n');
    }
    Ok((to_json(&outcome)?, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub input: PathBuf,
    pub objective: ObjectiveSpec,
    pub delta: f64,
    pub method: BandMethod,
    #[serde(default)]
    pub support_max: Option<f64>,
    #[serde(default = "yes")]
    pub nonneg: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn run_select(cfg: &SelectConfig) -> CliResult<String> {
    let cols = parse_hypothesis_table(&read_text(&cfg.input)?)?;
    let table = HypothesisLossTable::new(cols.labels, cols.columns, cols.groups, cfg.support_max, cfg.nonneg)?;
    to_json(&select_hypothesis(&table, &cfg.objective, cfg.delta, &cfg.method)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub dist: DistSpec,
    pub method: BandMethod,
    pub delta: f64,
    pub n: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub fn run_coverage(cfg: &CoverageConfig) -> CliResult<String> {
    to_json(&simulate_coverage(
        &cfg.dist,
        &cfg.method,
        cfg.delta,
        cfg.n,
        cfg.trials,
        cfg.seed,
    )?)
}
