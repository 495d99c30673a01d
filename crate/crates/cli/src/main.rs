use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use wpifc_cli::experiment::with_sigmoid;
use wpifc_cli::{run_experiment, CliError, Experiment, ExperimentKind};
use wpifc_core::{load_config, ChannelSet, CsiMode, EhModel, NetworkConfig, ProblemKind};

/// Environment variable that sets the worker thread count.
const THREADS_VAR: &str = "WPIFC_THREADS";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Problem {
    Sum,
    Maxmin,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Eh {
    Linear,
    Nonlinear,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Csi {
    Perfect,
    Imperfect,
}

/// Run energy-waveform, power and time-split designs for a wireless powered
/// interference channel and write the results as CSV.
///
/// Writes runs.csv, summary.csv and trace_<seed>.csv into the output
/// directory. The worker thread count is read from WPIFC_THREADS.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// JSON network config; the five-pair reference network when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExperimentKind::SingleRun)]
    experiment: ExperimentKind,
    /// Ensemble size; seeds are first-seed .. first-seed + n.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Problem::Sum)]
    problem: Problem,
    /// Harvester model; the config's when omitted.
    #[arg(long, value_enum)]
    eh: Option<Eh>,
    /// Channel knowledge of the design.
    #[arg(long, value_enum, default_value_t = Csi::Perfect)]
    csi: Csi,
    /// Optimize per-ET powers only.
    #[arg(long)]
    baseline: bool,
    /// Comma-separated sweep points replacing the defaults.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<f64>>,
    /// Random points per surrogate for the dominance audit; 0 disables it.
    #[arg(long, default_value_t = 0)]
    audit_points: usize,
    /// Also write channels_<seed>.csv (single run only).
    #[arg(long)]
    dump_channels: bool,
    /// Design on channels read from this file (single run only).
    #[arg(long)]
    replay_channels: Option<PathBuf>,
}

fn build(args: &Args) -> Result<Experiment, CliError> {
    let mut config = match &args.config {
        Some(path) => load_config(&std::fs::read_to_string(path)?)?,
        None => NetworkConfig::reference(5),
    };
    match args.eh {
        Some(Eh::Linear) => config.eh_model = EhModel::Linear,
        Some(Eh::Nonlinear) => config = with_sigmoid(&config),
        None => {}
    }
    let seeds = (args.first_seed..args.first_seed + args.seeds).collect();
    let mut exp = Experiment::new(args.experiment, config, seeds);
    exp.out = Some(args.out.clone());
    exp.problem = match args.problem {
        Problem::Sum => ProblemKind::SumThroughput,
        Problem::Maxmin => ProblemKind::MaxMin,
    };
    exp.csi = match args.csi {
        Csi::Perfect => CsiMode::PerfectCsi,
        Csi::Imperfect => CsiMode::ImperfectCsi,
    };
    exp.baseline = args.baseline;
    exp.points = args.sweep.clone();
    exp.dump_channels = args.dump_channels;
    exp.outer.audit_points = args.audit_points;
    if let Some(path) = &args.replay_channels {
        exp.replay_channels = Some(ChannelSet::from_csv(&std::fs::read_to_string(path)?)?);
    }
    Ok(exp)
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    if let Ok(v) = std::env::var(THREADS_VAR) {
        match v.parse::<usize>() {
            Ok(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("thread pool: {e}");
                }
            }
            Err(_) => {
                eprintln!("error: {THREADS_VAR} must be a thread count, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let result = build(&args).and_then(|exp| run_experiment(&exp));
    match result {
        Ok(report) => {
            let failed = report.rows.iter().filter(|r| !r.ok()).count();
            log::info!("{} runs, {} failed", report.rows.len(), failed);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
