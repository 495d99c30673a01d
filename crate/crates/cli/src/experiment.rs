//! Experiment definitions and the sweep runner.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use wpifc_core::model::Layout;
use wpifc_core::{
    apply_csi_error, dbm_to_watts, generate_channels, run, ChannelSet, CsiMode, DesignVariables, EhModel,
    GeometryConfig, NetworkConfig, NonlinearEhParams, OuterOptions, ProblemKind, RunTrace, SolverOptions, TauInit,
};

use crate::evaluate::{evaluate_expected, evaluate_on_truth, Evaluation};
use crate::output::{RunRow, SummaryRow};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentKind {
    /// One design per seed on the given config.
    SingleRun,
    /// ET power budget in dBm.
    PmaxSweep,
    /// Number of pairs on a 100 m line, full design against power-only.
    PairCountSweep,
    /// Estimation quality ρ, robust against non-robust design. The loss is
    /// computed on the rates averaged over the estimation error given the
    /// estimates; `loss_truth` uses the realized channels.
    RhoSweep,
    /// Two pairs with IT 1 moved by Δx meters along the diagonal.
    AsymmetricSweep,
    /// Linear against sigmoid harvester, per ET power budget in dBm.
    EhModelCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SingleRun => "single_run",
            ExperimentKind::PmaxSweep => "pmax_sweep",
            ExperimentKind::PairCountSweep => "pair_count_sweep",
            ExperimentKind::RhoSweep => "rho_sweep",
            ExperimentKind::AsymmetricSweep => "asymmetric_sweep",
            ExperimentKind::EhModelCompare => "eh_model_compare",
        }
    }

    /// Name of the swept parameter, empty for a single run.
    pub fn parameter(self) -> &'static str {
        match self {
            ExperimentKind::SingleRun => "",
            ExperimentKind::PmaxSweep | ExperimentKind::EhModelCompare => "p_max_dbm",
            ExperimentKind::PairCountSweep => "num_pairs",
            ExperimentKind::RhoSweep => "rho",
            ExperimentKind::AsymmetricSweep => "delta_x_m",
        }
    }

    /// Default sweep points; `config` supplies the single point of a plain
    /// run and of the harvester comparison.
    pub fn default_points(self, config: &NetworkConfig) -> Vec<f64> {
        match self {
            ExperimentKind::SingleRun => vec![0.0],
            ExperimentKind::PmaxSweep => vec![20.0, 25.0, 30.0, 35.0, 40.0, 45.0],
            ExperimentKind::PairCountSweep => vec![2.0, 3.0, 4.0, 5.0, 6.0],
            ExperimentKind::RhoSweep => vec![0.5, 0.7, 0.9, 1.0],
            ExperimentKind::AsymmetricSweep => vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            ExperimentKind::EhModelCompare => vec![wpifc_core::model::watts_to_dbm(config.p_max[0])],
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which optimizer produced a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum DesignKind {
    /// Waveform, powers and time split.
    Full,
    /// Per-ET powers only.
    PowerOnly,
    /// Designed with the error statistics of the estimates.
    Robust,
    /// Designed on the estimates as if they were exact.
    NonRobust,
    LinearEh,
    NonlinearEh,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Full => "full",
            DesignKind::PowerOnly => "power_only",
            DesignKind::Robust => "robust",
            DesignKind::NonRobust => "non_robust",
            DesignKind::LinearEh => "linear_eh",
            DesignKind::NonlinearEh => "nonlinear_eh",
        }
    }
}

pub fn problem_name(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::SumThroughput => "sum",
        ProblemKind::MaxMin => "maxmin",
    }
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub kind: ExperimentKind,
    pub config: NetworkConfig,
    pub seeds: Vec<u64>,
    /// Output directory; `None` skips writing files.
    pub out: Option<PathBuf>,
    pub problem: ProblemKind,
    /// Design with the error statistics of imperfect estimates. Only used by
    /// the single run and the pair-count, power and asymmetric sweeps.
    pub csi: CsiMode,
    /// Use the power-only design in place of the full one.
    pub baseline: bool,
    /// Sweep points; `None` uses [`ExperimentKind::default_points`].
    pub points: Option<Vec<f64>>,
    /// Write `channels_<seed>.csv` for every seed of a single run.
    pub dump_channels: bool,
    /// Run a single design on these channels instead of drawing them.
    pub replay_channels: Option<ChannelSet>,
    pub outer: OuterOptions,
    pub solver: SolverOptions,
}

impl Experiment {
    pub fn new(kind: ExperimentKind, config: NetworkConfig, seeds: Vec<u64>) -> Self {
        Self {
            kind,
            config,
            seeds,
            out: None,
            problem: ProblemKind::SumThroughput,
            csi: CsiMode::PerfectCsi,
            baseline: false,
            points: None,
            dump_channels: false,
            replay_channels: None,
            outer: OuterOptions::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        self.points.clone().unwrap_or_else(|| self.kind.default_points(&self.config))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::Invalid("at least one seed is required".into()));
        }
        let points = self.points();
        if points.is_empty() {
            return Err(CliError::Invalid("sweep has no points".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(CliError::Invalid("sweep points must be strictly increasing".into()));
        }
        let check = |ok: bool, what: &str| if ok { Ok(()) } else { Err(CliError::Invalid(what.into())) };
        match self.kind {
            ExperimentKind::PairCountSweep => check(
                points.iter().all(|&k| k >= 1.0 && k.fract() == 0.0),
                "pair counts must be positive integers",
            )?,
            ExperimentKind::RhoSweep => check(points.iter().all(|r| (0.0..=1.0).contains(r)), "rho must lie in [0, 1]")?,
            ExperimentKind::AsymmetricSweep => check(points.iter().all(|d| d.is_finite()), "delta_x must be finite")?,
            _ => check(points.iter().all(|v| v.is_finite()), "sweep points must be finite")?,
        }
        if let Some(ch) = &self.replay_channels {
            check(self.kind == ExperimentKind::SingleRun, "replayed channels need a single run")?;
            check(ch.num_pairs() == self.config.num_pairs, "replayed channels do not match the config")?;
        }
        self.config.validate()?;
        self.outer.validate()?;
        Ok(())
    }
}

/// Everything one experiment produced.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    /// `(seed, sweep value, design, trace)` of every successful run.
    pub traces: Vec<(u64, f64, String, RunTrace)>,
    pub channels: Vec<(u64, ChannelSet)>,
}

/// One optimizer run at one sweep point.
struct Job<'a> {
    exp: &'a Experiment,
    value: f64,
    seed: u64,
}

struct Outcome {
    rows: Vec<RunRow>,
    traces: Vec<(u64, f64, String, RunTrace)>,
    channels: Option<(u64, ChannelSet)>,
}

/// Run every sweep point for every seed, in parallel, and write
/// `runs.csv`, `summary.csv` and the traces when an output directory is set.
pub fn run_experiment(exp: &Experiment) -> Result<Report, CliError> {
    exp.validate()?;
    let jobs: Vec<Job> = exp
        .points()
        .into_iter()
        .flat_map(|value| exp.seeds.iter().map(move |&seed| Job { exp, value, seed }))
        .collect();
    let outcomes: Vec<Outcome> = jobs.par_iter().map(Job::run).collect();
    let mut report = Report::default();
    for o in outcomes {
        report.rows.extend(o.rows);
        report.traces.extend(o.traces);
        report.channels.extend(o.channels);
    }
    report.summary = crate::output::summarize(&report.rows);
    if let Some(dir) = &exp.out {
        crate::output::write_report(dir, exp, &report)?;
    }
    Ok(report)
}

/// Per-pair scalars of pair 0 repeated `k` times on `layout`.
pub fn resized(config: &NetworkConfig, k: usize, layout: Layout) -> NetworkConfig {
    let rep = |v: &Vec<f64>| vec![v[0]; k];
    NetworkConfig {
        num_pairs: k,
        p_max: rep(&config.p_max),
        p_circuit: rep(&config.p_circuit),
        amp_eff: rep(&config.amp_eff),
        mu: rep(&config.mu),
        noise_var: rep(&config.noise_var),
        e_initial: rep(&config.e_initial),
        e_max: rep(&config.e_max),
        eh_model: match &config.eh_model {
            EhModel::Linear => EhModel::Linear,
            EhModel::NonLinear(nl) => EhModel::NonLinear(NonlinearEhParams {
                n_sat: rep(&nl.n_sat),
                a_tilde: rep(&nl.a_tilde),
                b_tilde: rep(&nl.b_tilde),
            }),
        },
        csi: config.csi.clone(),
        geometry: GeometryConfig {
            layout,
            ..config.geometry.clone()
        },
    }
}

/// `config` with the sigmoid harvester, keeping its parameters when present.
pub fn with_sigmoid(config: &NetworkConfig) -> NetworkConfig {
    let mut cfg = config.clone();
    if !matches!(cfg.eh_model, EhModel::NonLinear(_)) {
        cfg.eh_model = EhModel::NonLinear(NonlinearEhParams::reference(cfg.num_pairs));
    }
    cfg
}

/// Line length of the pair-count sweep, meters.
pub const PAIR_SWEEP_LINE_M: f64 = 100.0;

impl Job<'_> {
    fn run(&self) -> Outcome {
        let exp = self.exp;
        let mut out = Outcome {
            rows: Vec::new(),
            traces: Vec::new(),
            channels: None,
        };
        let main = if exp.baseline { DesignKind::PowerOnly } else { DesignKind::Full };
        match exp.kind {
            ExperimentKind::SingleRun => {
                let channels = match &exp.replay_channels {
                    Some(ch) => ch.clone(),
                    None => self.channels(&exp.config),
                };
                if exp.dump_channels {
                    out.channels = Some((self.seed, channels.clone()));
                }
                self.design(&mut out, &exp.config, &channels, main, exp.csi);
            }
            ExperimentKind::PmaxSweep => {
                let mut cfg = exp.config.clone();
                cfg.p_max = vec![dbm_to_watts(self.value); cfg.num_pairs];
                let channels = self.channels(&cfg);
                self.design(&mut out, &cfg, &channels, main, exp.csi);
            }
            ExperimentKind::PairCountSweep => {
                let k = self.value as usize;
                let pair_distance = exp.config.geometry.layout.distance(0, 0);
                let cfg = resized(&exp.config, k, Layout::symmetric_line(k, PAIR_SWEEP_LINE_M, pair_distance));
                let channels = self.channels(&cfg);
                self.design(&mut out, &cfg, &channels, DesignKind::Full, exp.csi);
                self.design(&mut out, &cfg, &channels, DesignKind::PowerOnly, exp.csi);
            }
            ExperimentKind::RhoSweep => {
                let mut cfg = exp.config.clone();
                cfg.csi.rho_h = self.value;
                cfg.csi.rho_g = self.value;
                let channels = apply_csi_error(&generate_channels(&cfg, self.seed), &cfg.csi, self.seed);
                let robust = self.design(&mut out, &cfg, &channels, DesignKind::Robust, CsiMode::ImperfectCsi);
                let naive = self.design(&mut out, &cfg, &channels, DesignKind::NonRobust, CsiMode::PerfectCsi);
                if let (Some((r_vars, r_truth)), Some((n_vars, n_truth))) = (robust, naive) {
                    let objective = |e: &Evaluation| match exp.problem {
                        ProblemKind::SumThroughput => e.sum(),
                        ProblemKind::MaxMin => e.min(),
                    };
                    let expected = evaluate_expected(&cfg, &channels, &r_vars)
                        .and_then(|r| Ok((r, evaluate_expected(&cfg, &channels, &n_vars)?)));
                    if let Some(row) = out.rows.last_mut() {
                        row.loss_truth = Some(loss(objective(&n_truth), objective(&r_truth)));
                        match expected {
                            Ok((r, n)) => row.loss = Some(loss(objective(&n), objective(&r))),
                            Err(e) => row.error = Some(e.to_string()),
                        }
                    }
                }
            }
            ExperimentKind::AsymmetricSweep => {
                let cfg = resized(&exp.config, 2, Layout::asymmetric(self.value));
                let channels = self.channels(&cfg);
                self.design(&mut out, &cfg, &channels, main, exp.csi);
            }
            ExperimentKind::EhModelCompare => {
                let mut cfg = exp.config.clone();
                cfg.p_max = vec![dbm_to_watts(self.value); cfg.num_pairs];
                let mut linear = cfg.clone();
                linear.eh_model = EhModel::Linear;
                let sigmoid = with_sigmoid(&cfg);
                let channels = self.channels(&cfg);
                self.design(&mut out, &linear, &channels, DesignKind::LinearEh, exp.csi);
                self.design(&mut out, &sigmoid, &channels, DesignKind::NonlinearEh, exp.csi);
            }
        }
        out
    }

    /// True channels for `cfg`, with estimates attached when the design works
    /// on imperfect CSI.
    fn channels(&self, cfg: &NetworkConfig) -> ChannelSet {
        let truth = generate_channels(cfg, self.seed);
        match self.exp.csi {
            CsiMode::PerfectCsi => truth,
            CsiMode::ImperfectCsi => apply_csi_error(&truth, &cfg.csi, self.seed),
        }
    }

    /// Run one design, evaluate it on the true channels and record the row.
    fn design(
        &self,
        out: &mut Outcome,
        cfg: &NetworkConfig,
        channels: &ChannelSet,
        design: DesignKind,
        csi: CsiMode,
    ) -> Option<(DesignVariables, Evaluation)> {
        let exp = self.exp;
        let outer = OuterOptions {
            tau_init: TauInit::Random { seed: self.seed },
            baseline: design == DesignKind::PowerOnly,
            csi,
            ..exp.outer.clone()
        };
        let view = if design == DesignKind::NonRobust {
            channels.estimates_as_truth()
        } else {
            channels.clone()
        };
        let mut row = RunRow::new(exp, self.value, self.seed, design);
        let result = run(cfg, &view, exp.problem, &outer, &exp.solver)
            .and_then(|(vars, trace)| evaluate_on_truth(cfg, channels, &vars).map(|e| (vars, trace, e)));
        match result {
            Ok((vars, trace, eval)) => {
                row.fill(exp.problem, &vars, &trace, &eval);
                out.rows.push(row);
                out.traces.push((self.seed, self.value, design.name().into(), trace));
                Some((vars, eval))
            }
            Err(e) => {
                log::warn!("{} seed {} value {}: {e}", design.name(), self.seed, self.value);
                row.status = "failed".into();
                row.error = Some(e.to_string());
                out.rows.push(row);
                None
            }
        }
    }
}

/// `1 - R_nr / R_r`, zero when the robust design has no throughput.
pub fn loss(non_robust: f64, robust: f64) -> f64 {
    if robust > 0.0 {
        1.0 - non_robust / robust
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        assert_eq!(loss(1.0, 1.0), 0.0);
        assert_eq!(loss(0.5, 2.0), 0.75);
        assert_eq!(loss(0.3, 0.0), 0.0);
    }

    #[test]
    fn resized_config_is_valid() {
        let base = NetworkConfig::reference(5);
        for k in 1..=6 {
            let cfg = resized(&base, k, Layout::symmetric_line(k, PAIR_SWEEP_LINE_M, 10.0));
            cfg.validate().unwrap();
            assert_eq!(cfg.p_max.len(), k);
        }
        let asym = resized(&base, 2, Layout::asymmetric(8.0));
        asym.validate().unwrap();
        assert!(asym.geometry.layout.distance(0, 0) > 10.0);
    }

    #[test]
    fn validation_rejects_bad_sweeps() {
        let cfg = NetworkConfig::reference(2);
        let mut exp = Experiment::new(ExperimentKind::RhoSweep, cfg.clone(), vec![0]);
        exp.points = Some(vec![0.9, 0.5]);
        assert!(exp.validate().is_err());
        exp.points = Some(vec![0.5, 1.2]);
        assert!(exp.validate().is_err());
        exp.points = Some(vec![]);
        assert!(exp.validate().is_err());
        let mut exp = Experiment::new(ExperimentKind::PairCountSweep, cfg.clone(), vec![0]);
        exp.points = Some(vec![2.5]);
        assert!(exp.validate().is_err());
        let exp = Experiment::new(ExperimentKind::SingleRun, cfg, vec![]);
        assert!(exp.validate().is_err());
    }
}
