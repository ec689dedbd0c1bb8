use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use certband_cli::commands::{
    load_config, run_band, run_coverage, run_lorenz, run_measure, run_optimize, run_select, to_json, write_output,
    BandConfig, CoverageConfig, LorenzConfig, MeasureConfig, OptimizeConfig, SelectConfig,
};
use certband_cli::ingest::{read_text, write_losses_csv};
use certband_cli::losses::{compute_losses, Metric};
use certband_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "certband",
    version,
    about = "Distribution-free bounds on loss distributions and their dispersion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a CDF band and write it as JSON.
    Band(ConfigArgs),
    /// Certified bounds for one or more measures from one band.
    Measure(ConfigArgs),
    /// Train a bound vector on half the data and bound the other half.
    Optimize {
        #[command(flatten)]
        args: ConfigArgs,
        /// JSON-lines training log (overrides the config).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Select the hypothesis with the smallest certified objective.
    Select(ConfigArgs),
    /// Monte Carlo coverage of a band method on a known distribution.
    Coverage(ConfigArgs),
    /// Lorenz curve band as CSV (t, lower, upper, empirical).
    Lorenz(ConfigArgs),
    /// Per-example losses from a prediction file.
    Losses {
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long)]
        input: PathBuf,
        /// Number of classes (balanced accuracy).
        #[arg(long)]
        classes: Option<usize>,
        /// Recall weight (precision/recall).
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output path (overrides the config; stdout if neither is set).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Brier,
    BalancedAccuracy,
    PrecRecall,
}

fn out<'a>(args: &'a ConfigArgs, from_config: &'a Option<PathBuf>) -> Option<&'a Path> {
    args.output.as_deref().or(from_config.as_deref())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Band(args) => {
            let cfg: BandConfig = load_config(&args.config)?;
            write_output(out(&args, &cfg.output), &run_band(&cfg)?)
        }
        Command::Measure(args) => {
            let cfg: MeasureConfig = load_config(&args.config)?;
            write_output(out(&args, &cfg.output), &to_json(&run_measure(&cfg)?)?)
        }
        Command::Optimize { args, log } => {
            let cfg: OptimizeConfig = load_config(&args.config)?;
            let (report, lines) = run_optimize(&cfg)?;
            if let Some(path) = log.as_deref().or(cfg.log.as_deref()) {
                write_output(Some(path), &lines)?;
            }
            write_output(out(&args, &cfg.output), &report)
        }
        Command::Select(args) => {
            let cfg: SelectConfig = load_config(&args.config)?;
            write_output(out(&args, &cfg.output), &run_select(&cfg)?)
        }
        Command::Coverage(args) => {
            let cfg: CoverageConfig = load_config(&args.config)?;
            write_output(out(&args, &cfg.output), &run_coverage(&cfg)?)
        }
        Command::Lorenz(args) => {
            let cfg: LorenzConfig = load_config(&args.config)?;
            write_output(out(&args, &cfg.output), &run_lorenz(&cfg)?)
        }
        Command::Losses {
            metric,
            input,
            classes,
            alpha,
            output,
        } => {
            let metric = match metric {
                MetricArg::Brier => Metric::Brier,
                MetricArg::BalancedAccuracy => Metric::BalancedAccuracy {
                    classes: classes.ok_or_else(|| certband_cli::CliError::Schema("--classes is required".into()))?,
                },
                MetricArg::PrecRecall => Metric::PrecRecall {
                    alpha: alpha.ok_or_else(|| certband_cli::CliError::Schema("--alpha is required".into()))?,
                },
            };
            let col = compute_losses(&read_text(&input)?, metric)?;
            write_output(output.as_deref(), &write_losses_csv(&col))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
