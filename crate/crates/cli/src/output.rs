//! CSV rows and writers.
//!
//! `runs.csv` has one row per optimizer run with the columns of [`RUN_COLUMNS`];
//! `summary.csv` has one row per (sweep value, design) with the columns of
//! [`SUMMARY_COLUMNS`]. Every experiment kind uses the same column set.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use wpifc_core::{DesignVariables, ProblemKind, RunTrace};

use crate::evaluate::Evaluation;
use crate::experiment::{problem_name, DesignKind, Experiment};
use crate::experiment::Report;
use crate::CliError;

pub const RUN_COLUMNS: [&str; 23] = [
    "experiment",
    "sweep_param",
    "sweep_value",
    "seed",
    "problem",
    "design",
    "status",
    "objective",
    "sum_rate",
    "min_rate",
    "tau",
    "outer_iters",
    "termination",
    "max_violation",
    "scale",
    "outage",
    "loss",
    "loss_truth",
    "input_power_w",
    "output_power_w",
    "rates",
    "powers",
    "error",
];

pub const SUMMARY_COLUMNS: [&str; 17] = [
    "experiment",
    "sweep_param",
    "sweep_value",
    "problem",
    "design",
    "runs",
    "failures",
    "mean_objective",
    "mean_sum_rate",
    "mean_min_rate",
    "mean_tau",
    "mean_scale",
    "mean_loss",
    "max_loss",
    "mean_loss_truth",
    "mean_input_power_w",
    "mean_output_power_w",
];

/// One optimizer run. Rates, powers and harvest figures are those of the
/// design evaluated on the true channels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub experiment: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub seed: u64,
    pub problem: String,
    pub design: String,
    /// `ok` or `failed`.
    pub status: String,
    /// Sum or minimum of `rates`, by problem.
    pub objective: Option<f64>,
    pub sum_rate: Option<f64>,
    pub min_rate: Option<f64>,
    pub tau: Option<f64>,
    pub outer_iters: Option<usize>,
    pub termination: Option<String>,
    /// Largest constraint violation of the design on the channels it was
    /// designed for.
    pub max_violation: Option<f64>,
    /// Uniform power scale applied on the true channels.
    pub scale: Option<f64>,
    /// Pairs silenced on the true channels, `;`-separated.
    pub outage: String,
    /// `1 - R_nr / R_r` with both rates averaged over the estimation error
    /// given the estimates; set on non-robust rows.
    pub loss: Option<f64>,
    /// `1 - R_nr / R_r` on the realized channels; set on non-robust rows.
    pub loss_truth: Option<f64>,
    /// Mean received RF power over pairs during energy transfer.
    pub input_power_w: Option<f64>,
    /// Mean harvester output over pairs during energy transfer.
    pub output_power_w: Option<f64>,
    /// Per-pair rates, `;`-separated.
    pub rates: String,
    /// Per-pair transmit powers, `;`-separated.
    pub powers: String,
    pub error: Option<String>,
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl RunRow {
    pub fn new(exp: &Experiment, value: f64, seed: u64, design: DesignKind) -> Self {
        Self {
            experiment: exp.kind.name().into(),
            sweep_param: exp.kind.parameter().into(),
            sweep_value: value,
            seed,
            problem: problem_name(exp.problem).into(),
            design: design.name().into(),
            status: "ok".into(),
            objective: None,
            sum_rate: None,
            min_rate: None,
            tau: None,
            outer_iters: None,
            termination: None,
            max_violation: None,
            scale: None,
            outage: String::new(),
            loss: None,
            loss_truth: None,
            input_power_w: None,
            output_power_w: None,
            rates: String::new(),
            powers: String::new(),
            error: None,
        }
    }

    pub fn fill(&mut self, problem: ProblemKind, vars: &DesignVariables, trace: &RunTrace, eval: &Evaluation) {
        let (sum, min) = (eval.sum(), eval.min());
        self.objective = Some(match problem {
            ProblemKind::SumThroughput => sum,
            ProblemKind::MaxMin => min,
        });
        self.sum_rate = Some(sum);
        self.min_rate = Some(min);
        self.tau = Some(vars.tau);
        self.outer_iters = Some(trace.outer.len());
        self.termination = Some(format!("{:?}", trace.termination));
        self.max_violation = trace.outer.last().map(|r| r.max_violation);
        self.scale = Some(eval.scale);
        self.outage = join(&eval.outage);
        self.input_power_w = Some(mean(&eval.input_power));
        self.output_power_w = Some(mean(&eval.output_power));
        self.rates = join(&eval.rates);
        self.powers = join(eval.p.iter());
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Ensemble means for one (sweep value, design).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub problem: String,
    pub design: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_objective: Option<f64>,
    pub mean_sum_rate: Option<f64>,
    pub mean_min_rate: Option<f64>,
    pub mean_tau: Option<f64>,
    pub mean_scale: Option<f64>,
    pub mean_loss: Option<f64>,
    pub max_loss: Option<f64>,
    pub mean_loss_truth: Option<f64>,
    pub mean_input_power_w: Option<f64>,
    pub mean_output_power_w: Option<f64>,
}

/// Group `rows` by (sweep value, design) in order of first appearance of the
/// sweep value, then design name. Failed runs only count towards `failures`.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut order: Vec<f64> = Vec::new();
    let mut groups: BTreeMap<(usize, String), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        let idx = match order.iter().position(|&v| v == r.sweep_value) {
            Some(i) => i,
            None => {
                order.push(r.sweep_value);
                order.len() - 1
            }
        };
        groups.entry((idx, r.design.clone())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let first = g[0];
            let ok: Vec<&RunRow> = g.iter().copied().filter(|r| r.ok()).collect();
            let avg = |f: &dyn Fn(&RunRow) -> Option<f64>| {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                (!v.is_empty()).then(|| mean(&v))
            };
            let losses: Vec<f64> = ok.iter().filter_map(|r| r.loss).collect();
            SummaryRow {
                experiment: first.experiment.clone(),
                sweep_param: first.sweep_param.clone(),
                sweep_value: first.sweep_value,
                problem: first.problem.clone(),
                design: first.design.clone(),
                runs: g.len(),
                failures: g.len() - ok.len(),
                mean_objective: avg(&|r| r.objective),
                mean_sum_rate: avg(&|r| r.sum_rate),
                mean_min_rate: avg(&|r| r.min_rate),
                mean_tau: avg(&|r| r.tau),
                mean_scale: avg(&|r| r.scale),
                mean_loss: (!losses.is_empty()).then(|| mean(&losses)),
                max_loss: losses.iter().copied().reduce(f64::max),
                mean_loss_truth: avg(&|r| r.loss_truth),
                mean_input_power_w: avg(&|r| r.input_power_w),
                mean_output_power_w: avg(&|r| r.output_power_w),
            }
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Write `runs.csv`, `summary.csv`, one `trace_<seed>.csv` per seed and the
/// requested channel dumps into `dir`.
pub fn write_report(dir: &Path, exp: &Experiment, report: &Report) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_rows(&dir.join("runs.csv"), &RUN_COLUMNS, &report.rows)?;
    write_rows(&dir.join("summary.csv"), &SUMMARY_COLUMNS, &report.summary)?;
    for &seed in &exp.seeds {
        let text = trace_file(
            report
                .traces
                .iter()
                .filter(|t| t.0 == seed)
                .map(|(_, value, design, trace)| (*value, design.as_str(), trace)),
        );
        fs::write(dir.join(format!("trace_{seed}.csv")), text)?;
    }
    for (seed, channels) in &report.channels {
        fs::write(dir.join(format!("channels_{seed}.csv")), channels.to_csv())?;
    }
    Ok(())
}

/// Inner-iteration traces of one seed, each line prefixed by its sweep value
/// and design.
pub fn trace_file<'a>(traces: impl Iterator<Item = (f64, &'a str, &'a RunTrace)>) -> String {
    let mut out = String::from("sweep_value,design,");
    let mut header_done = false;
    for (value, design, trace) in traces {
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if !header_done {
            out.push_str(header);
            out.push('\n');
            header_done = true;
        }
        for line in lines {
            out.push_str(&format!("{value},{design},{line}\n"));
        }
    }
    if !header_done {
        out.push_str(TRACE_HEADER);
        out.push('\n');
    }
    out
}

/// Header of [`RunTrace::to_csv`].
pub const TRACE_HEADER: &str = RunTrace::CSV_HEADER;
