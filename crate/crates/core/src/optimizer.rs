//! Alternating optimization: an inner minorize-maximize loop over the
//! waveform and the transmit powers at fixed `τ`, then a time-split update.

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelSet;
use crate::energy::{HarvestView, Response};
use crate::error::{ConfigError, Error, Result};
use crate::model::{
    AuditSummary, DesignVariables, InnerRecord, NetworkConfig, OuterRecord, RunTrace, Termination,
};
use crate::rate::{maxmin_powers, CsiMode};
use crate::solver::{solve, Problem, SmoothFunction, SolverOptions, SolverStatus, Term};
use crate::joint::build_joint_subproblem;
use crate::surrogate::{build_maxmin_subproblem, build_sum_subproblem, DesignModel, ProblemKind};

/// Violation accepted on candidate points, normalized units.
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TauInit {
    /// Uniform draw on `[0, 1]` from the seed, then projected into the
    /// feasible interval of the initial waveform.
    Random { seed: u64 },
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TauRule {
    /// Smallest `τ` that keeps every harvest constraint, powers unchanged.
    ClosedForm,
    /// The closed form, then a one-dimensional search over `τ` that rescales
    /// the powers with the harvested budget.
    ClosedFormWithLineSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterOptions {
    /// Stop once the objective moves by at most this much per outer round.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative change of the surrogate optimum that ends the inner loop.
    pub inner_tolerance: f64,
    pub tau_init: TauInit,
    pub tau_rule: TauRule,
    /// Optimize per-ET powers only, with phase-incoherent harvesting.
    pub baseline: bool,
    /// Channel knowledge the design works with.
    pub csi: CsiMode,
    /// Random points per surrogate for dominance checks; 0 disables the audit.
    pub audit_points: usize,
    pub audit_seed: u64,
    /// Start from these variables instead of the default initialization.
    pub warm_start: Option<DesignVariables>,
    /// Fail on a subproblem the solver cannot handle instead of keeping the
    /// last iterate.
    pub strict_solver: bool,
    /// After each time-split update, run minorize-maximize steps over
    /// `(x, p, τ)` together. Only used when every harvester is linear.
    pub joint_refinement: bool,
}

impl Default for OuterOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_outer: 100,
            max_inner: 50,
            inner_tolerance: 1e-6,
            tau_init: TauInit::Random { seed: 0 },
            tau_rule: TauRule::ClosedFormWithLineSearch,
            baseline: false,
            csi: CsiMode::PerfectCsi,
            audit_points: 0,
            audit_seed: 0,
            warm_start: None,
            strict_solver: false,
            joint_refinement: true,
        }
    }
}

impl OuterOptions {
    pub fn validate(&self) -> Result<()> {
        let range = |field: &str, bound| {
            Err(Error::Config(ConfigError::OutOfRange {
                field: field.into(),
                bound,
            }))
        };
        if !(self.tolerance > 0.0) {
            return range("tolerance", "(0, inf)");
        }
        if !(self.inner_tolerance > 0.0) {
            return range("inner_tolerance", "(0, inf)");
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return range("max_outer/max_inner", "[1, inf)");
        }
        if let TauInit::Fixed(t) = self.tau_init {
            if !(0.0..=1.0).contains(&t) {
                return range("tau_init", "[0, 1]");
            }
        }
        Ok(())
    }

    fn view(&self) -> HarvestView {
        match (self.baseline, self.csi) {
            (false, CsiMode::PerfectCsi) => HarvestView::Perfect,
            (false, CsiMode::ImperfectCsi) => HarvestView::Imperfect,
            (true, CsiMode::PerfectCsi) => HarvestView::PowerOnly,
            (true, CsiMode::ImperfectCsi) => HarvestView::PowerOnlyImperfect,
        }
    }
}

/// `ζ₁,k` and `ζ₂,k`: the harvest constraint of pair `k` holds for
/// `τ ≥ ζ₁,k`, the storage constraint for `τ ≤ ζ₂,k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TauBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TauBounds {
    /// Bounds for harvest rates `f_k(x)` and powers `p`.
    pub fn new(config: &NetworkConfig, rates: &[f64], p: &DVector<f64>) -> Self {
        let c = config;
        let lower = (0..c.num_pairs)
            .map(|k| {
                let spend = c.amp_eff[k] * p[k];
                let need = c.p_circuit[k] + spend - c.e_initial[k];
                let denom = spend + rates[k];
                if denom > 0.0 {
                    need / denom
                } else if need <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let upper = (0..c.num_pairs)
            .map(|k| {
                if rates[k] > 0.0 {
                    (c.e_max[k] - c.e_initial[k]) / rates[k]
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Self { lower, upper }
    }

    /// `max(0, max_k ζ₁,k)` and the pair attaining it.
    pub fn lowest(&self) -> (f64, Option<usize>) {
        self.lower
            .iter()
            .enumerate()
            .fold((0.0, None), |(m, a), (k, &v)| if v > m { (v, Some(k)) } else { (m, a) })
    }

    /// `min(1, min_k ζ₂,k)` and the pair attaining it.
    pub fn highest(&self) -> (f64, Option<usize>) {
        self.upper
            .iter()
            .enumerate()
            .fold((1.0, None), |(m, a), (k, &v)| if v < m { (v, Some(k)) } else { (m, a) })
    }

    pub fn feasible(&self) -> bool {
        self.lowest().0 <= self.highest().0
    }
}

/// Closed-form time split for the harvesters in `model`.
pub fn optimal_tau_for(model: &DesignModel, x: &DVector<Complex64>, p: &DVector<f64>) -> Result<f64> {
    let bounds = TauBounds::new(&model.config, &model.harvest_rates(x), p);
    let (lower, low_pair) = bounds.lowest();
    let (upper, high_pair) = bounds.highest();
    // Both ends coincide when a harvest and a storage constraint are tight
    // together; allow for their rounding.
    if lower > upper + 1e-12 * upper.abs().max(1.0) {
        return Err(Error::TauInfeasible {
            pair: low_pair.or(high_pair).unwrap_or(0),
            lower,
            upper,
        });
    }
    Ok(lower)
}

/// Closed-form time split on the true channels: the smallest `τ` that meets
/// every harvest constraint.
pub fn optimal_tau(x: &DVector<Complex64>, p: &DVector<f64>, config: &NetworkConfig, channels: &ChannelSet) -> Result<f64> {
    let model = DesignModel::new(config, channels, HarvestView::Perfect, CsiMode::PerfectCsi)?;
    optimal_tau_for(&model, x, p)
}

pub fn run_sum_throughput(
    config: &NetworkConfig,
    channels: &ChannelSet,
    outer: &OuterOptions,
    solver: &SolverOptions,
) -> Result<(DesignVariables, RunTrace)> {
    run(config, channels, ProblemKind::SumThroughput, outer, solver)
}

pub fn run_maxmin(
    config: &NetworkConfig,
    channels: &ChannelSet,
    outer: &OuterOptions,
    solver: &SolverOptions,
) -> Result<(DesignVariables, RunTrace)> {
    run(config, channels, ProblemKind::MaxMin, outer, solver)
}

/// Sum-throughput design without waveform phases: each ET only picks its
/// power and harvesters see the phase-averaged energy.
pub fn run_baseline_power_only(
    config: &NetworkConfig,
    channels: &ChannelSet,
    outer: &OuterOptions,
    solver: &SolverOptions,
) -> Result<(DesignVariables, RunTrace)> {
    let opts = OuterOptions {
        baseline: true,
        ..outer.clone()
    };
    run(config, channels, ProblemKind::SumThroughput, &opts, solver)
}

/// Either problem, with the harvest model picked by `outer.baseline` and
/// `outer.csi`.
pub fn run(
    config: &NetworkConfig,
    channels: &ChannelSet,
    kind: ProblemKind,
    outer: &OuterOptions,
    solver: &SolverOptions,
) -> Result<(DesignVariables, RunTrace)> {
    outer.validate()?;
    solver.validate().map_err(|e| Error::Config(ConfigError::Invalid(e)))?;
    let model = DesignModel::new(config, channels, outer.view(), outer.csi)?;
    Design {
        model: &model,
        kind,
        outer,
        solver,
    }
    .run()
}

struct Design<'a> {
    model: &'a DesignModel,
    kind: ProblemKind,
    outer: &'a OuterOptions,
    solver: &'a SolverOptions,
}

impl Design<'_> {
    fn objective(&self, vars: &DesignVariables) -> f64 {
        self.model.objective(self.kind, vars)
    }

    fn run(&self) -> Result<(DesignVariables, RunTrace)> {
        let mut vars = self.initial_point()?;
        let mut g = self.objective(&vars);
        let mut trace = RunTrace {
            outer: vec![OuterRecord {
                outer: 0,
                objective: g,
                tau: vars.tau,
                max_violation: self.model.max_violation(&vars),
                inner_iterations: 0,
            }],
            inner: Vec::new(),
            termination: Termination::MaxOuterIterations,
            audit: None,
        };
        let mut audit = AuditSummary::default();
        let mut rng = ChaCha8Rng::seed_from_u64(self.outer.audit_seed);

        for round in 1..=self.outer.max_outer {
            let before = g;
            let inner_iterations = self.inner_loop(round, &mut vars, &mut g, &mut trace, &mut audit, &mut rng)?;
            self.tau_step(&mut vars, &mut g)?;
            if self.outer.joint_refinement {
                self.joint_loop(round, inner_iterations, &mut vars, &mut g, &mut trace, &mut audit, &mut rng)?;
            }
            trace.outer.push(OuterRecord {
                outer: round,
                objective: g,
                tau: vars.tau,
                max_violation: self.model.max_violation(&vars),
                inner_iterations,
            });
            if (g - before).abs() <= self.outer.tolerance {
                trace.termination = Termination::Converged;
                break;
            }
        }

        let violation = self.model.max_violation(&vars);
        if violation > 1e-7 {
            return Err(Error::InfeasibleExpansion { violation });
        }
        if self.outer.audit_points > 0 {
            trace.audit = Some(audit);
        }
        Ok((vars, trace))
    }

    /// Minorize-maximize over `(x, p)` at the current `τ`. Candidates that
    /// lower the true objective are rejected and end the loop.
    fn inner_loop(
        &self,
        round: usize,
        vars: &mut DesignVariables,
        g: &mut f64,
        trace: &mut RunTrace,
        audit: &mut AuditSummary,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        let tau = vars.tau;
        let mut last = *g;
        let mut done = 0;
        for inner in 1..=self.outer.max_inner {
            let sub = match self.kind {
                ProblemKind::SumThroughput => build_sum_subproblem(self.model, vars, tau)?,
                ProblemKind::MaxMin => build_maxmin_subproblem(self.model, vars, tau)?,
            };
            if self.outer.audit_points > 0 {
                audit.merge(&sub.audit(self.model, self.outer.audit_points, rng));
            }
            let res = sub.solve(self.solver);
            if res.status != SolverStatus::Optimal && self.outer.strict_solver {
                return Err(Error::Solver {
                    status: res.status,
                    outer: round,
                    inner,
                });
            }
            if res.status == SolverStatus::Infeasible {
                debug!("subproblem infeasible at outer {round}, inner {inner}");
                break;
            }
            let cand = sub.vars(&res.z);
            let g_cand = self.objective(&cand);
            let violation = self.model.max_violation(&cand);
            if violation > FEASIBILITY_TOL || !(g_cand >= *g) {
                debug!("rejected inner step {inner}: objective {g_cand} vs {g}, violation {violation:e}");
                break;
            }
            trace.inner.push(InnerRecord {
                outer: round,
                inner,
                objective_true: g_cand,
                objective_surrogate: res.objective,
                tau,
                max_violation: violation,
            });
            *vars = cand;
            *g = g_cand;
            done = inner;
            if (res.objective - last).abs() <= self.outer.inner_tolerance * res.objective.abs().max(1.0) {
                break;
            }
            last = res.objective;
        }
        Ok(done)
    }

    /// Minorize-maximize over `(x, p, τ)` together; same acceptance rule as
    /// the inner loop. Skipped for nonlinear harvesters. Trace records
    /// continue the round's inner numbering after `offset`.
    fn joint_loop(
        &self,
        round: usize,
        offset: usize,
        vars: &mut DesignVariables,
        g: &mut f64,
        trace: &mut RunTrace,
        audit: &mut AuditSummary,
        rng: &mut ChaCha8Rng,
    ) -> Result<()> {
        if !self.model.harvesters.iter().all(|h| matches!(h.response, Response::Linear { .. })) {
            return Ok(());
        }
        let mut last = *g;
        for inner in 1..=self.outer.max_inner {
            let Ok(sub) = build_joint_subproblem(self.model, self.kind, vars) else {
                break;
            };
            if self.outer.audit_points > 0 {
                audit.merge(&sub.audit(self.model, self.outer.audit_points, rng));
            }
            let res = sub.solve(self.solver);
            if res.status != SolverStatus::Optimal && self.outer.strict_solver {
                return Err(Error::Solver {
                    status: res.status,
                    outer: round,
                    inner,
                });
            }
            if res.status == SolverStatus::Infeasible {
                break;
            }
            let cand = sub.vars(&res.z);
            let g_cand = self.objective(&cand);
            let violation = self.model.max_violation(&cand);
            if violation > FEASIBILITY_TOL || !(g_cand >= *g) {
                debug!("rejected joint step {inner}: objective {g_cand} vs {g}, violation {violation:e}");
                break;
            }
            trace.inner.push(InnerRecord {
                outer: round,
                inner: offset + inner,
                objective_true: g_cand,
                objective_surrogate: res.objective,
                tau: cand.tau,
                max_violation: violation,
            });
            *vars = cand;
            *g = g_cand;
            if (res.objective - last).abs() <= self.outer.inner_tolerance * res.objective.abs().max(1.0) {
                break;
            }
            last = res.objective;
        }
        Ok(())
    }

    fn tau_step(&self, vars: &mut DesignVariables, g: &mut f64) -> Result<()> {
        let tau_cf = optimal_tau_for(self.model, &vars.x, &vars.p)?;
        let closed = DesignVariables {
            tau: tau_cf,
            ..vars.clone()
        };
        self.accept(vars, g, closed);
        if self.outer.tau_rule == TauRule::ClosedFormWithLineSearch {
            if let Some(cand) = self.tau_line_search(vars) {
                self.accept(vars, g, cand);
            }
        }
        Ok(())
    }

    fn accept(&self, vars: &mut DesignVariables, g: &mut f64, cand: DesignVariables) {
        let g_cand = self.objective(&cand);
        if g_cand > *g && self.model.max_violation(&cand) <= FEASIBILITY_TOL {
            *vars = cand;
            *g = g_cand;
        }
    }

    /// Best `τ` with `x` fixed. `P_k(τ)` is the largest power the harvest
    /// constraint allows. For the sum objective the powers follow
    /// `p_k = r_k P_k(τ)` with `r_k` the current fraction of the cap; for
    /// max-min they are the max-min optimal powers under the caps, since any
    /// fixed rescaling moves off the equal-rate point.
    fn tau_line_search(&self, vars: &DesignVariables) -> Option<DesignVariables> {
        let c = &self.model.config;
        let k = c.num_pairs;
        let rates = self.model.harvest_rates(&vars.x);
        let budget = |i: usize, tau: f64| (tau * rates[i] + c.e_initial[i] - c.p_circuit[i]) / (c.amp_eff[i] * (1.0 - tau));
        let ratio: Vec<f64> = (0..k)
            .map(|i| {
                let top = budget(i, vars.tau);
                if top > 0.0 {
                    (vars.p[i] / top).clamp(0.0, 1.0)
                } else {
                    1.0
                }
            })
            .collect();
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 1.0 - 1e-9;
        for i in 0..k {
            let need = c.p_circuit[i] - c.e_initial[i];
            if need > 0.0 {
                if rates[i] <= 0.0 {
                    return None;
                }
                lo = lo.max(need / rates[i]);
            }
            if rates[i] > 0.0 {
                hi = hi.min((c.e_max[i] - c.e_initial[i]) / rates[i]);
            }
        }
        if !(lo < hi) {
            return None;
        }
        let point = |tau: f64| {
            let caps = DVector::from_fn(k, |i, _| budget(i, tau).max(0.0));
            let p = match self.kind {
                ProblemKind::SumThroughput => caps.zip_map(&DVector::from_column_slice(&ratio), |cap, r| cap * r),
                ProblemKind::MaxMin => maxmin_powers(&self.model.coeffs, &caps).1,
            };
            DesignVariables {
                x: vars.x.clone(),
                p,
                tau,
            }
        };
        let value = |tau: f64| self.objective(&point(tau));

        const GRID: usize = 64;
        let step = (hi - lo) / GRID as f64;
        let grid: Vec<f64> = (0..=GRID).map(|i| lo + step * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&t| value(t)).collect();
        let best = (0..=GRID).max_by(|&a, &b| values[a].total_cmp(&values[b]))?;
        let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID)]);
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let (mut f1, mut f2) = (value(x1), value(x2));
        while b - a > 1e-12 * (1.0 + b.abs()) {
            if f1 < f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = value(x2);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = value(x1);
            }
        }
        let refined = if f1 >= f2 { x1 } else { x2 };
        let tau = if value(refined) >= values[best] { refined } else { grid[best] };
        Some(point(tau))
    }

    /// Waveform whose received powers lie inside the band every pair needs at
    /// `τ = 1`: at least the circuit energy, at most the storage headroom.
    /// Maximizes the smallest relative excess over the lower edge by
    /// minorize-maximize, starting from a scaled copy of `start`.
    fn feasibility_search(&self, start: &DVector<Complex64>) -> Option<DVector<Complex64>> {
        let c = &self.model.config;
        let k = c.num_pairs;
        let hv = &self.model.harvesters;
        let forms = &self.model.forms;
        let lo: Vec<f64> = (0..k).map(|i| hv[i].phi_inverse(c.p_circuit[i] - c.e_initial[i])).collect();
        let up: Vec<f64> = (0..k)
            .map(|i| {
                let room = c.e_max[i] - c.e_initial[i];
                if room > 0.0 {
                    hv[i].phi_inverse(room)
                } else {
                    0.0
                }
            })
            .collect();
        if lo.iter().any(|v| !v.is_finite()) || (0..k).any(|i| lo[i] >= up[i] && lo[i] > 0.0) {
            return None;
        }
        let n = 2 * k + 1;
        let received = |z: &DVector<f64>, i: usize| {
            let zx = z.rows(0, 2 * k);
            zx.dot(&(&forms[i] * zx))
        };
        let margin = |z: &DVector<f64>| {
            (0..k)
                .filter(|&i| lo[i] > 0.0)
                .map(|i| (received(z, i) - lo[i]) / lo[i])
                .fold(f64::INFINITY, f64::min)
        };

        let mut z = DVector::zeros(n);
        for j in 0..k {
            z[j] = start[j].re / c.p_max[j].sqrt();
            z[k + j] = start[j].im / c.p_max[j].sqrt();
        }
        let shrink = (0..k)
            .filter(|&i| up[i].is_finite() && received(&z, i) > 0.0)
            .map(|i| (0.9 * up[i] / received(&z, i)).sqrt())
            .fold(1.0, f64::min);
        z *= shrink;
        let mut best = margin(&z);
        if best == f64::INFINITY {
            best = 1.0;
        }
        for _ in 0..50 {
            if best > 0.5 {
                break;
            }
            let mut constraints = Vec::new();
            let mut t_coef = DVector::zeros(n);
            t_coef[2 * k] = 1.0;
            for j in 0..k {
                let mut quad = DMatrix::zeros(n, n);
                quad[(j, j)] = 1.0;
                quad[(k + j, k + j)] = 1.0;
                constraints.push(SmoothFunction::new(vec![Term::Quadratic {
                    quad,
                    coef: DVector::zeros(n),
                    offset: -1.0,
                }]));
            }
            for i in 0..k {
                if up[i].is_finite() {
                    let mut quad = DMatrix::zeros(n, n);
                    quad.view_mut((0, 0), (2 * k, 2 * k)).copy_from(&(&forms[i] / up[i]));
                    constraints.push(SmoothFunction::new(vec![Term::Quadratic {
                        quad,
                        coef: DVector::zeros(n),
                        offset: -1.0,
                    }]));
                }
                if lo[i] > 0.0 {
                    let zx = z.rows(0, 2 * k).into_owned();
                    let grad = &forms[i] * &zx;
                    let s0 = zx.dot(&grad);
                    let mut coef = t_coef.clone();
                    coef.rows_mut(0, 2 * k).axpy(-2.0 / lo[i], &grad, 1.0);
                    constraints.push(SmoothFunction::affine(coef, (s0 + lo[i]) / lo[i]));
                }
            }
            constraints.push(SmoothFunction::affine(t_coef.clone(), -1.0));
            let problem = Problem {
                dim: n,
                objective: SmoothFunction::affine(t_coef, 0.0),
                constraints,
            };
            let mut start = z.clone();
            start[2 * k] = best - 1.0;
            let res = solve(&problem, &start, self.solver);
            if res.status == SolverStatus::Infeasible {
                break;
            }
            let next = margin(&res.z);
            if !(next > best + 1e-9) {
                break;
            }
            z = res.z;
            best = next;
        }
        (best > 0.0).then(|| DVector::from_fn(k, |j, _| Complex64::new(z[j], z[k + j]) * c.p_max[j].sqrt()))
    }

    /// Full-power waveform steered at the weakest harvester, `τ` from the
    /// options projected into the feasible interval, and equal powers at the
    /// largest level every harvest constraint allows.
    fn initial_point(&self) -> Result<DesignVariables> {
        if let Some(start) = &self.outer.warm_start {
            if start.num_pairs() != self.model.num_pairs() {
                return Err(Error::Dimension("warm start has the wrong number of pairs".into()));
            }
            let violation = self.model.max_violation(start);
            if violation <= FEASIBILITY_TOL {
                return Ok(start.clone());
            }
            debug!("warm start violates constraints by {violation:e}; using the default start");
        }
        let c = &self.model.config;
        let k = c.num_pairs;
        let x = self.initial_waveform()?;
        let rates = self.model.harvest_rates(&x);
        let bounds = TauBounds::new(c, &rates, &DVector::zeros(k));
        let (lo, _) = bounds.lowest();
        let (hi, _) = bounds.highest();
        let hi = hi.min(1.0 - 1e-6);
        let drawn = match self.outer.tau_init {
            TauInit::Random { seed } => ChaCha8Rng::seed_from_u64(seed).random::<f64>(),
            TauInit::Fixed(t) => t,
        };
        // Stay off the lower end, where some pair could not transmit at all.
        let tau = drawn.clamp(lo + 1e-3 * (hi - lo), hi);
        let p = (0..k)
            .map(|i| (tau * rates[i] + c.e_initial[i] - c.p_circuit[i]) / (c.amp_eff[i] * (1.0 - tau)))
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        Ok(DesignVariables {
            x,
            p: DVector::from_element(k, p),
            tau,
        })
    }

    /// Maximum ratio transmission at full power towards the pair with the
    /// weakest channel. When no `τ` suits every pair under that waveform,
    /// try the other pairs, then search for one.
    fn initial_waveform(&self) -> Result<DVector<Complex64>> {
        let c = &self.model.config;
        let k = c.num_pairs;
        let hv = &self.model.harvesters;
        let steer = |target: usize| {
            DVector::from_fn(k, |j, _| {
                let h = hv[target].h[j];
                let phase = if h.norm_sqr() > 0.0 { h.arg() } else { 0.0 };
                Complex64::from_polar(c.p_max[j].sqrt(), phase)
            })
        };
        let strength = |i: usize| hv[i].h.norm_squared() + hv[i].diag.sum();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| strength(a).total_cmp(&strength(b)));
        let workable = |x: &DVector<Complex64>| {
            let rates = self.model.harvest_rates(x);
            let bounds = TauBounds::new(c, &rates, &DVector::zeros(k));
            let (lo, _) = bounds.lowest();
            let (hi, _) = bounds.highest();
            lo < hi.min(1.0 - 1e-6)
        };
        for &target in &order {
            let x = steer(target);
            if workable(&x) {
                return Ok(x);
            }
        }
        let x = self
            .feasibility_search(&steer(order[0]))
            .map(|w| {
                // Harvest is monotone in the common amplitude, so scaling
                // towards full power only moves the feasible τ interval.
                let room = (0..k)
                    .filter(|&j| w[j].norm_sqr() > 0.0)
                    .map(|j| c.p_max[j].sqrt() / w[j].norm())
                    .fold(f64::INFINITY, f64::min);
                let full = &w * Complex64::new(room, 0.0);
                if room.is_finite() && workable(&full) {
                    full
                } else {
                    w
                }
            })
            .filter(|x| workable(x));
        if let Some(x) = x {
            return Ok(x);
        }
        Err(Error::InfeasibleStart(
            "no waveform found that lets every pair meet its circuit energy within the storage limit".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::model::{EhModel, NonlinearEhParams};
    use proptest::prelude::*;

    fn channels(cfg: &NetworkConfig, seed: u64) -> ChannelSet {
        generate_channels(cfg, seed)
    }

    #[test]
    fn tau_examples() {
        let mut cfg = NetworkConfig::reference(2);
        cfg.p_circuit = vec![0.0; 2];
        let rates = [2e-5, 3e-5];
        let p = DVector::from_vec(vec![2e-5, 3e-5]);
        let b = TauBounds::new(&cfg, &rates, &p);
        assert_eq!(b.lowest().0, 0.5);

        let mut cfg = NetworkConfig::reference(2);
        cfg.e_initial = vec![40e-6; 2];
        let p = DVector::from_vec(vec![1e-5, 2e-5]);
        let b = TauBounds::new(&cfg, &rates, &p);
        assert_eq!(b.lowest().0, 0.0);
    }

    #[test]
    fn tau_infeasible_reports_pair() {
        let cfg = NetworkConfig::reference(2);
        let ch = channels(&cfg, 1);
        let x = DVector::from_element(2, Complex64::new(1e-6, 0.0));
        let err = optimal_tau(&x, &DVector::from_element(2, 1.0), &cfg, &ch).unwrap_err();
        assert!(matches!(err, Error::TauInfeasible { lower, upper, .. } if lower > upper));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn closed_form_tau_matches_grid(seed in 0u64..10_000, amp in proptest::collection::vec(0.05f64..1.0, 3),
                                        phase in proptest::collection::vec(0.0f64..6.28, 3),
                                        frac in proptest::collection::vec(0.0f64..1.0, 3)) {
            let cfg = NetworkConfig::reference(3);
            let ch = channels(&cfg, seed);
            let x = DVector::from_fn(3, |j, _| Complex64::from_polar(amp[j] * cfg.p_max[j].sqrt(), phase[j]));
            let p = DVector::from_fn(3, |j, _| frac[j] * 1e-4);
            let model = DesignModel::new(&cfg, &ch, HarvestView::Perfect, CsiMode::PerfectCsi).unwrap();
            // Grid argmax of (1 - τ) over C1, C3, C4 at step 1e-5.
            let feasible = |tau: f64| {
                model.residuals(&DesignVariables { x: x.clone(), p: p.clone(), tau }).max() <= 1e-12
            };
            let grid = (0..=100_000).map(|i| i as f64 * 1e-5).find(|&t| feasible(t));
            match (optimal_tau(&x, &p, &cfg, &ch), grid) {
                (Ok(t), Some(g)) => prop_assert!(t <= g + 1e-12 && g - t < 1e-5, "{t} vs {g}"),
                (Err(_), None) => {}
                (Ok(t), None) => prop_assert!(false, "closed form {t}, grid empty"),
                (Err(e), Some(g)) => prop_assert!(false, "{e} but grid found {g}"),
            }
        }
    }

    fn first_run(cfg: &NetworkConfig, kind: ProblemKind, seed: u64, opts: &OuterOptions) -> (ChannelSet, DesignVariables, RunTrace) {
        for s in seed..seed + 50 {
            let ch = channels(cfg, s);
            if let Ok((v, t)) = run(cfg, &ch, kind, opts, &SolverOptions::default()) {
                return (ch, v, t);
            }
        }
        panic!("no feasible instance");
    }

    #[test]
    fn single_pair_matches_tau_grid() {
        let cfg = NetworkConfig::reference(1);
        let (ch, v, _) = first_run(&cfg, ProblemKind::SumThroughput, 1, &OuterOptions::default());
        let model = DesignModel::new(&cfg, &ch, HarvestView::Perfect, CsiMode::PerfectCsi).unwrap();
        // Full power, tight harvest constraint, scan τ.
        let x = DVector::from_element(1, Complex64::new(cfg.p_max[0].sqrt(), 0.0));
        let f = model.harvest_rates(&x)[0];
        let mut best: f64 = 0.0;
        for i in 1..100_000 {
            let tau = i as f64 * 1e-5;
            if tau * f > cfg.e_max[0] {
                break;
            }
            let p = ((tau * f - cfg.p_circuit[0]) / (1.0 - tau)).max(0.0);
            best = best.max(model.objective(ProblemKind::SumThroughput, &DesignVariables { x: x.clone(), p: DVector::from_element(1, p), tau }));
        }
        let got = model.objective(ProblemKind::SumThroughput, &v);
        assert!((got / best - 1.0).abs() < 0.01, "{got} vs {best}");
        assert!(got <= best + 1e-6);
        let (_, vm, _) = first_run(&cfg, ProblemKind::MaxMin, 1, &OuterOptions::default());
        assert!((model.objective(ProblemKind::MaxMin, &vm) - got).abs() < 1e-6);
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let cfg = NetworkConfig::reference(4);
        for kind in [ProblemKind::SumThroughput, ProblemKind::MaxMin] {
            let (ch, v, trace) = first_run(&cfg, kind, 3, &OuterOptions::default());
            let obj = trace.objectives();
            assert!(obj.windows(2).all(|w| w[1] >= w[0] - 1e-7), "{obj:?}");
            let model = DesignModel::new(&cfg, &ch, HarvestView::Perfect, CsiMode::PerfectCsi).unwrap();
            assert!(model.max_violation(&v) <= 1e-7);
            assert!((obj[obj.len() - 1] - model.objective(kind, &v)).abs() < 1e-12);
        }
    }

    #[test]
    fn baseline_single_pair_equals_full_design() {
        let cfg = NetworkConfig::reference(1);
        let ch = channels(&cfg, 2);
        let opts = OuterOptions::default();
        let (full, _) = run_sum_throughput(&cfg, &ch, &opts, &SolverOptions::default()).unwrap();
        let (base, _) = run_baseline_power_only(&cfg, &ch, &opts, &SolverOptions::default()).unwrap();
        let model = DesignModel::new(&cfg, &ch, HarvestView::Perfect, CsiMode::PerfectCsi).unwrap();
        let a = model.objective(ProblemKind::SumThroughput, &full);
        let b = model.objective(ProblemKind::SumThroughput, &base);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn nonlinear_run_is_feasible() {
        let mut cfg = NetworkConfig::reference(3);
        cfg.eh_model = EhModel::NonLinear(NonlinearEhParams::reference(3));
        let (ch, v, trace) = first_run(&cfg, ProblemKind::SumThroughput, 0, &OuterOptions::default());
        let model = DesignModel::new(&cfg, &ch, HarvestView::Perfect, CsiMode::PerfectCsi).unwrap();
        assert!(model.max_violation(&v) <= 1e-7);
        assert!(trace.objectives().windows(2).all(|w| w[1] >= w[0] - 1e-7));
    }

    #[test]
    fn options_validation() {
        let bad = OuterOptions {
            tolerance: 0.0,
            ..OuterOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = OuterOptions {
            tau_init: TauInit::Fixed(1.5),
            ..OuterOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}
