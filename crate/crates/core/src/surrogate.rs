//! Minorizers and the convex subproblem of one inner iteration.
//!
//! Subproblems live in normalized real coordinates
//! `z = [Re x̃; Im x̃; p̃; (α)]` with `x_j = √p_max,j · x̃_j` and
//! `p = p_ref · p̃`, so that every constraint row is of order one. Energy
//! constraints are divided by `e_k = max(E_max,k, p_c,k)`.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelSet;
use crate::energy::{real_form, HarvestView, Harvester, Response};
use crate::error::{Error, Result};
use crate::model::{AuditSummary, DesignVariables, NetworkConfig};
use crate::rate::{build_coefficients, throughput, CsiMode, RateCoefficients, Throughput};
use crate::solver::{solve, Problem, SmoothFunction, SolverOptions, SolverResult, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    SumThroughput,
    MaxMin,
}

/// Affine lower bound `constant + b̂ᵀp` of `-log₂(bᵀp + σ²)`, tight at
/// `p_prev`.
pub fn log_minorizer(b: &DVector<f64>, p_prev: &DVector<f64>, sigma2: f64) -> (DVector<f64>, f64) {
    let at = b.dot(p_prev) + sigma2;
    let slope = -b / (at * LN_2);
    let constant = -at.log2() + b.dot(p_prev) / (at * LN_2);
    (slope, constant)
}

/// `L(x) = constant + Re{u x}`, an affine lower bound of `xᴴ Q x`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticMinorizer {
    pub u: DVector<Complex64>,
    pub constant: f64,
}

impl QuadraticMinorizer {
    pub fn eval(&self, x: &DVector<Complex64>) -> f64 {
        self.constant + self.u.iter().zip(x.iter()).map(|(u, x)| (u * x).re).sum::<f64>()
    }
}

/// Tangent of `xᴴ h hᴴ x` at `x_prev`:
/// `x_prevᴴQx_prev + 2Re{x_prevᴴQ(x - x_prev)}`.
pub fn quadratic_minorizer(h_k: &DVector<Complex64>, x_prev: &DVector<Complex64>) -> QuadraticMinorizer {
    let inner = h_k.dotc(x_prev);
    // x_prevᴴ h hᴴ = conj(hᴴ x_prev) hᴴ.
    let u = h_k.map(|h| inner.conj() * h.conj() * 2.0);
    QuadraticMinorizer {
        u,
        constant: -inner.norm_sqr(),
    }
}

/// Where each block of `z` lives.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableLayout {
    pub num_pairs: usize,
    /// `√p_max,j`.
    pub x_scale: DVector<f64>,
    pub p_ref: f64,
    pub alpha: bool,
}

impl VariableLayout {
    pub fn dim(&self) -> usize {
        3 * self.num_pairs + usize::from(self.alpha)
    }

    pub fn p_index(&self, k: usize) -> usize {
        2 * self.num_pairs + k
    }

    pub fn alpha_index(&self) -> usize {
        3 * self.num_pairs
    }

    pub fn pack(&self, vars: &DesignVariables, alpha: Option<f64>) -> DVector<f64> {
        let k = self.num_pairs;
        let mut z = DVector::zeros(self.dim());
        for j in 0..k {
            z[j] = vars.x[j].re / self.x_scale[j];
            z[k + j] = vars.x[j].im / self.x_scale[j];
            z[2 * k + j] = vars.p[j] / self.p_ref;
        }
        if self.alpha {
            z[3 * k] = alpha.unwrap_or(0.0);
        }
        z
    }

    pub fn unpack(&self, z: &DVector<f64>, tau: f64) -> DesignVariables {
        let k = self.num_pairs;
        DesignVariables {
            x: DVector::from_fn(k, |j, _| Complex64::new(z[j], z[k + j]) * self.x_scale[j]),
            p: DVector::from_fn(k, |j, _| (z[2 * k + j] * self.p_ref).max(0.0)),
            tau,
        }
    }

    fn embed_x(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), self.dim());
        out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
        out
    }

    fn embed_x_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, v.len()).copy_from(v);
        out
    }

    fn p_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(2 * self.num_pairs, self.num_pairs).copy_from(v);
        out
    }

    fn x_block_scale2(&self) -> DVector<f64> {
        let k = self.num_pairs;
        DVector::from_fn(2 * k, |i, _| self.x_scale[i % k].powi(2))
    }
}

/// Per-pair constraint residuals in normalized units; feasible means `≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Residuals {
    pub tau: f64,
    pub power_cap: Vec<f64>,
    pub nonnegative: Vec<f64>,
    pub harvest: Vec<f64>,
    pub storage: Vec<f64>,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.power_cap
            .iter()
            .chain(&self.nonnegative)
            .chain(&self.harvest)
            .chain(&self.storage)
            .copied()
            .fold(self.tau, f64::max)
    }
}

/// Everything the design loops need about one instance under one channel
/// view: harvesters, rate coefficients and the normalization.
#[derive(Clone, Debug)]
pub struct DesignModel {
    pub config: NetworkConfig,
    pub harvesters: Vec<Harvester>,
    pub coeffs: RateCoefficients,
    pub energy_scale: Vec<f64>,
    layout: VariableLayout,
    /// `D Q_r D` per pair on the `[Re x̃; Im x̃]` block.
    pub(crate) forms: Vec<DMatrix<f64>>,
}

impl DesignModel {
    pub fn new(config: &NetworkConfig, channels: &ChannelSet, view: HarvestView, csi: CsiMode) -> Result<Self> {
        let coeffs = build_coefficients(channels, config, csi)?;
        let harvesters = Harvester::all(config, channels, view);
        Self::from_parts(config, harvesters, coeffs)
    }

    pub fn from_parts(config: &NetworkConfig, harvesters: Vec<Harvester>, coeffs: RateCoefficients) -> Result<Self> {
        config.validate()?;
        let k = config.num_pairs;
        if harvesters.len() != k || coeffs.num_pairs() != k {
            return Err(Error::Dimension("harvesters or coefficients do not match the config".into()));
        }
        if let Some(j) = config.p_max.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::InfeasibleStart(format!("ET {j} has no power budget")));
        }
        let x_scale = DVector::from_iterator(k, config.p_max.iter().map(|p| p.sqrt()));
        let p_ref = (0..k)
            .map(|i| config.e_max[i].max(config.p_circuit[i]) / config.amp_eff[i])
            .fold(0.0, f64::max);
        let p_ref = if p_ref > 0.0 { p_ref } else { 1e-6 };
        let layout = VariableLayout {
            num_pairs: k,
            x_scale: x_scale.clone(),
            p_ref,
            alpha: false,
        };
        let scale2 = DVector::from_fn(2 * k, |i, _| x_scale[i % k]);
        let forms = harvesters
            .iter()
            .map(|h| {
                let qr = real_form(&h.q_matrix());
                DMatrix::from_fn(2 * k, 2 * k, |i, j| scale2[i] * qr[(i, j)] * scale2[j])
            })
            .collect();
        let energy_scale = (0..k)
            .map(|i| config.e_max[i].max(config.p_circuit[i]).max(1e-12))
            .collect();
        Ok(Self {
            config: config.clone(),
            harvesters,
            coeffs,
            energy_scale,
            layout,
            forms,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.config.num_pairs
    }

    pub fn layout(&self, kind: ProblemKind) -> VariableLayout {
        VariableLayout {
            alpha: kind == ProblemKind::MaxMin,
            ..self.layout.clone()
        }
    }

    /// `f_k(x)`: harvest per unit WET time.
    pub fn harvest_rates(&self, x: &DVector<Complex64>) -> Vec<f64> {
        self.harvesters.iter().map(|h| h.rate(x)).collect()
    }

    pub fn throughput(&self, vars: &DesignVariables) -> Throughput {
        throughput(&vars.p, vars.tau, &self.coeffs)
    }

    pub fn objective(&self, kind: ProblemKind, vars: &DesignVariables) -> f64 {
        let r = self.throughput(vars);
        match kind {
            ProblemKind::SumThroughput => r.sum(),
            ProblemKind::MaxMin => r.min(),
        }
    }

    pub fn residuals(&self, vars: &DesignVariables) -> Residuals {
        let c = &self.config;
        let k = self.num_pairs();
        let tau = vars.tau;
        let rates = self.harvest_rates(&vars.x);
        Residuals {
            tau: (-tau).max(tau - 1.0),
            power_cap: (0..k).map(|j| vars.x[j].norm_sqr() / c.p_max[j] - 1.0).collect(),
            nonnegative: (0..k).map(|j| -vars.p[j] / self.layout.p_ref).collect(),
            harvest: (0..k)
                .map(|i| {
                    (c.p_circuit[i] + c.amp_eff[i] * (1.0 - tau) * vars.p[i] - tau * rates[i] - c.e_initial[i])
                        / self.energy_scale[i]
                })
                .collect(),
            storage: (0..k)
                .map(|i| (tau * rates[i] + c.e_initial[i] - c.e_max[i]) / self.energy_scale[i])
                .collect(),
        }
    }

    /// Largest normalized constraint violation, zero when feasible.
    pub fn max_violation(&self, vars: &DesignVariables) -> f64 {
        self.residuals(vars).max().max(0.0)
    }

    fn true_constraint(&self, kind: ConstraintKind, z: &DVector<f64>, layout: &VariableLayout, tau: f64) -> f64 {
        let vars = layout.unpack(z, tau);
        match kind {
            ConstraintKind::PowerCap(j) => z[j] * z[j] + z[layout.num_pairs + j] * z[layout.num_pairs + j] - 1.0,
            ConstraintKind::NonNegativePower(j) => -z[layout.p_index(j)],
            ConstraintKind::LinearizedHarvest(i) => {
                let c = &self.config;
                let p = z[layout.p_index(i)] * layout.p_ref;
                (c.p_circuit[i] + c.amp_eff[i] * (1.0 - tau) * p - tau * self.harvesters[i].rate(&vars.x)
                    - c.e_initial[i])
                    / self.energy_scale[i]
            }
            ConstraintKind::StorageCap(i) => {
                let c = &self.config;
                (tau * self.harvesters[i].rate(&vars.x) + c.e_initial[i] - c.e_max[i]) / self.energy_scale[i]
            }
            ConstraintKind::RateFloor(i) => {
                let p = DVector::from_fn(layout.num_pairs, |j, _| z[layout.p_index(j)] * layout.p_ref);
                z[layout.alpha_index()] - throughput(&p, tau, &self.coeffs).per_pair[i]
            }
            ConstraintKind::WetFraction => (-tau).max(tau - 1.0),
        }
    }

    fn true_objective_z(&self, kind: ObjectiveKind, z: &DVector<f64>, layout: &VariableLayout, tau: f64) -> f64 {
        match kind {
            ObjectiveKind::SumRate => {
                let p = DVector::from_fn(layout.num_pairs, |j, _| z[layout.p_index(j)] * layout.p_ref);
                throughput(&p, tau, &self.coeffs).sum()
            }
            ObjectiveKind::Epigraph => z[layout.alpha_index()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Sum of log-plus-affine rate minorizers.
    SumRate,
    /// Maximize the auxiliary `α`.
    Epigraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    PowerCap(usize),
    NonNegativePower(usize),
    LinearizedHarvest(usize),
    StorageCap(usize),
    RateFloor(usize),
    /// `0 ≤ τ ≤ 1`, only present when `τ` is a variable.
    WetFraction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvexSubproblem {
    pub objective: ObjectiveKind,
    pub problem: Problem,
    pub constraints: Vec<ConstraintKind>,
    pub expansion: DVector<f64>,
    pub layout: VariableLayout,
    pub tau: f64,
    /// Convexifying weight per pair; zero for the linear harvester.
    pub beta: Vec<f64>,
}

impl ConvexSubproblem {
    pub fn solve(&self, options: &SolverOptions) -> SolverResult {
        solve(&self.problem, &self.expansion, options)
    }

    /// Surrogate objective, in bps/Hz, including every constant.
    pub fn surrogate_value(&self, z: &DVector<f64>) -> Option<f64> {
        self.problem.objective.value(z)
    }

    pub fn vars(&self, z: &DVector<f64>) -> DesignVariables {
        self.layout.unpack(z, self.tau)
    }

    /// Self-contained text description of the subproblem.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "objective: {:?}", self.objective);
        let _ = writeln!(out, "tau: {:?}", self.tau);
        let _ = writeln!(out, "layout: {:?}", self.layout);
        let _ = writeln!(out, "beta: {:?}", self.beta);
        let _ = writeln!(out, "expansion: {:?}", self.expansion.as_slice());
        let _ = writeln!(out, "maximize:");
        dump_function(&mut out, &self.problem.objective);
        for (kind, f) in self.constraints.iter().zip(&self.problem.constraints) {
            let _ = writeln!(out, "subject to {kind:?} <= 0:");
            dump_function(&mut out, f);
        }
        out
    }

    /// Check minorizer dominance at `points` random points of the box
    /// `C1`-`C2`, `p ≥ 0`, and touching at the expansion point.
    pub fn audit<R: Rng>(&self, model: &DesignModel, points: usize, rng: &mut R) -> AuditSummary {
        let layout = &self.layout;
        let k = layout.num_pairs;
        let tau = self.tau;
        let slack_at = |z: &DVector<f64>| -> f64 {
            let mut worst = f64::INFINITY;
            if self.objective == ObjectiveKind::SumRate {
                let surrogate = self.surrogate_value(z).unwrap_or(f64::NEG_INFINITY);
                worst = worst.min(model.true_objective_z(self.objective, z, layout, tau) - surrogate);
            }
            for (kind, f) in self.constraints.iter().zip(&self.problem.constraints) {
                let surrogate = f.value(z).unwrap_or(f64::INFINITY);
                worst = worst.min(surrogate - model.true_constraint(*kind, z, layout, tau));
            }
            worst
        };
        let touch = |z: &DVector<f64>| -> f64 {
            let mut err: f64 = 0.0;
            if self.objective == ObjectiveKind::SumRate {
                let surrogate = self.surrogate_value(z).unwrap_or(f64::NAN);
                err = err.max((model.true_objective_z(self.objective, z, layout, tau) - surrogate).abs());
            }
            for (kind, f) in self.constraints.iter().zip(&self.problem.constraints) {
                let surrogate = f.value(z).unwrap_or(f64::NAN);
                err = err.max((surrogate - model.true_constraint(*kind, z, layout, tau)).abs());
            }
            if err.is_nan() {
                f64::INFINITY
            } else {
                err
            }
        };

        let p_top = (0..k)
            .map(|j| self.expansion[layout.p_index(j)])
            .fold(1.0, f64::max)
            * 2.0;
        let mut min_slack = f64::INFINITY;
        for _ in 0..points {
            let mut z = self.expansion.clone();
            for j in 0..k {
                let r = rng.random::<f64>().sqrt();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                z[j] = r * theta.cos();
                z[k + j] = r * theta.sin();
                z[layout.p_index(j)] = rng.random_range(0.0..p_top);
            }
            min_slack = min_slack.min(slack_at(&z));
        }
        AuditSummary {
            surrogates: 1,
            points,
            min_slack,
            max_touch_error: touch(&self.expansion),
        }
    }
}

fn dump_function(out: &mut String, f: &SmoothFunction) {
    for term in &f.terms {
        let _ = match term {
            Term::Affine { coef, offset } => writeln!(out, "  affine coef={:?} offset={offset:?}", coef.as_slice()),
            Term::Quadratic { quad, coef, offset } => writeln!(
                out,
                "  quadratic quad={:?} coef={:?} offset={offset:?}",
                quad.as_slice(),
                coef.as_slice()
            ),
            Term::Log { weight, coef, offset } => {
                writeln!(out, "  log weight={weight:?} coef={:?} offset={offset:?}", coef.as_slice())
            }
            Term::SigmoidOfQuadratic { scale, form, params } => writeln!(
                out,
                "  sigmoid scale={scale:?} form={:?} params={params:?}",
                form.as_slice()
            ),
            Term::PerspectiveLog { weight, num, den } => writeln!(
                out,
                "  perspective weight={weight:?} num={:?} den={:?}",
                num.as_slice(),
                den.as_slice()
            ),
        };
    }
}

/// `(1-τ)(log₂(q_kᵀp + σ²) + b̂_kᵀp + c_k)` in `z` coordinates.
fn rate_surrogate_terms(model: &DesignModel, layout: &VariableLayout, p_prev: &DVector<f64>, tau: f64, k: usize) -> (Term, Term) {
    let co = &model.coeffs;
    let sigma2 = co.noise[k];
    let b = co.b.row(k).transpose();
    let q = co.q.row(k).transpose();
    let (b_hat, constant) = log_minorizer(&b, p_prev, sigma2);
    let w = 1.0 - tau;
    let log = Term::Log {
        weight: w / LN_2,
        coef: layout.p_vec(&(q * (layout.p_ref / sigma2))),
        offset: 1.0,
    };
    let affine = Term::Affine {
        coef: layout.p_vec(&(b_hat * (w * layout.p_ref))),
        offset: w * (sigma2.log2() + constant),
    };
    (log, affine)
}

pub(crate) fn negate(term: Term) -> Term {
    match term {
        Term::Affine { coef, offset } => Term::Affine { coef: -coef, offset: -offset },
        Term::Log { weight, coef, offset } => Term::Log {
            weight: -weight,
            coef,
            offset,
        },
        Term::Quadratic { quad, coef, offset } => Term::Quadratic {
            quad: -quad,
            coef: -coef,
            offset: -offset,
        },
        Term::SigmoidOfQuadratic { scale, form, params } => Term::SigmoidOfQuadratic {
            scale: -scale,
            form,
            params,
        },
        Term::PerspectiveLog { weight, num, den } => Term::PerspectiveLog {
            weight: -weight,
            num,
            den,
        },
    }
}

/// Surrogate harvest (`Ĉ3`) and storage (`C4`) constraints of pair `k`.
///
/// The harvest side `τ φ(s) + ½β‖x‖²` is replaced by its tangent at the
/// expansion point and `½β‖x‖²` is subtracted exactly; the storage side keeps
/// `τ φ(s) + ½β‖x‖²` and replaces `-½β‖x‖²` by its tangent. With the linear
/// harvester `β = 0` and the storage constraint is the exact quadratic.
fn energy_constraints(
    model: &DesignModel,
    layout: &VariableLayout,
    z0: &DVector<f64>,
    k: usize,
    tau: f64,
    beta: f64,
) -> (SmoothFunction, SmoothFunction) {
    let c = &model.config;
    let n = layout.num_pairs;
    let e = model.energy_scale[k];
    let form = &model.forms[k];
    let zx = z0.rows(0, 2 * n).into_owned();
    let s0 = zx.dot(&(form * &zx));
    let hv = &model.harvesters[k];
    let d2 = layout.x_block_scale2();
    let d2z0 = zx.component_mul(&d2);
    let norm0 = zx.dot(&d2z0);
    let grad = form * &zx * (2.0 * tau * hv.phi_slope(s0)) + &d2z0 * beta;

    let mut p_coef = DVector::zeros(n);
    p_coef[k] = c.amp_eff[k] * (1.0 - tau) * layout.p_ref;
    let mut harvest = SmoothFunction::new(vec![Term::Affine {
        coef: (layout.p_vec(&p_coef) - layout.embed_x_vec(&grad)) / e,
        offset: (c.p_circuit[k] - c.e_initial[k] - tau * hv.phi(s0) - 0.5 * beta * norm0 + grad.dot(&zx)) / e,
    }]);
    if beta > 0.0 {
        harvest.push(Term::Quadratic {
            quad: layout.embed_x(&DMatrix::from_diagonal(&(&d2 * (0.5 * beta / e)))),
            coef: DVector::zeros(layout.dim()),
            offset: 0.0,
        });
    }

    let storage = match hv.response {
        Response::Linear { mu } => SmoothFunction::new(vec![Term::Quadratic {
            quad: layout.embed_x(&(form * (tau * mu / e))),
            coef: DVector::zeros(layout.dim()),
            offset: (c.e_initial[k] - c.e_max[k]) / e,
        }]),
        Response::Sigmoid(params) => SmoothFunction::new(vec![
            Term::SigmoidOfQuadratic {
                scale: tau / e,
                form: layout.embed_x(form),
                params,
            },
            Term::Quadratic {
                quad: layout.embed_x(&DMatrix::from_diagonal(&(&d2 * (0.5 * beta / e)))),
                coef: layout.embed_x_vec(&(-&d2z0 * (beta / e))),
                offset: (0.5 * beta * norm0 + c.e_initial[k] - c.e_max[k]) / e,
            },
        ]),
    };
    (harvest, storage)
}

/// Surrogate `C3`/`C4` rows of pair `k` for the sigmoid harvester, in the
/// variables of `layout`.
pub fn build_nonlinear_constraints(
    model: &DesignModel,
    layout: &VariableLayout,
    k: usize,
    x_prev: &DVector<Complex64>,
    tau: f64,
    beta: f64,
) -> Result<(SmoothFunction, SmoothFunction)> {
    let hv = &model.harvesters[k];
    let Response::Sigmoid(params) = hv.response else {
        return Err(Error::Dimension(format!("pair {k} uses the linear harvester")));
    };
    let bound = crate::energy::beta_lower_bound_lambda(&params, hv.lambda_max(), tau, model.config.total_power_budget());
    if beta < bound {
        return Err(Error::BetaBelowBound { pair: k, beta, bound });
    }
    let vars = DesignVariables {
        x: x_prev.clone(),
        p: DVector::zeros(layout.num_pairs),
        tau,
    };
    let z0 = layout.pack(&vars, None);
    Ok(energy_constraints(model, layout, &z0, k, tau, beta))
}

fn check_expansion(model: &DesignModel, vars_prev: &DesignVariables, tau: f64) -> Result<()> {
    let at = DesignVariables {
        tau,
        ..vars_prev.clone()
    };
    let violation = model.max_violation(&at);
    if violation > 1e-9 {
        return Err(Error::InfeasibleExpansion { violation });
    }
    Ok(())
}

fn shared_constraints(
    model: &DesignModel,
    layout: &VariableLayout,
    z0: &DVector<f64>,
    tau: f64,
) -> (Vec<SmoothFunction>, Vec<ConstraintKind>, Vec<f64>) {
    let n = layout.num_pairs;
    let budget = model.config.total_power_budget();
    let mut fns = Vec::new();
    let mut kinds = Vec::new();
    let mut betas = Vec::new();
    for j in 0..n {
        let mut quad = DMatrix::zeros(layout.dim(), layout.dim());
        quad[(j, j)] = 1.0;
        quad[(n + j, n + j)] = 1.0;
        fns.push(SmoothFunction::new(vec![Term::Quadratic {
            quad,
            coef: DVector::zeros(layout.dim()),
            offset: -1.0,
        }]));
        kinds.push(ConstraintKind::PowerCap(j));
        let mut coef = DVector::zeros(layout.dim());
        coef[layout.p_index(j)] = -1.0;
        fns.push(SmoothFunction::affine(coef, 0.0));
        kinds.push(ConstraintKind::NonNegativePower(j));
    }
    for k in 0..n {
        let beta = model.harvesters[k].beta(tau, budget);
        let (harvest, storage) = energy_constraints(model, layout, z0, k, tau, beta);
        fns.push(harvest);
        kinds.push(ConstraintKind::LinearizedHarvest(k));
        fns.push(storage);
        kinds.push(ConstraintKind::StorageCap(k));
        betas.push(beta);
    }
    (fns, kinds, betas)
}

/// Sum-throughput subproblem around `vars_prev` at WET fraction `tau`.
pub fn build_sum_subproblem(model: &DesignModel, vars_prev: &DesignVariables, tau: f64) -> Result<ConvexSubproblem> {
    check_expansion(model, vars_prev, tau)?;
    let layout = model.layout(ProblemKind::SumThroughput);
    let z0 = layout.pack(vars_prev, None);
    let mut objective = SmoothFunction::default();
    for k in 0..layout.num_pairs {
        let (log, affine) = rate_surrogate_terms(model, &layout, &vars_prev.p, tau, k);
        objective.push(log);
        objective.push(affine);
    }
    let (constraints, kinds, beta) = shared_constraints(model, &layout, &z0, tau);
    Ok(ConvexSubproblem {
        objective: ObjectiveKind::SumRate,
        problem: Problem {
            dim: layout.dim(),
            objective,
            constraints,
        },
        constraints: kinds,
        expansion: z0,
        layout,
        tau,
        beta,
    })
}

/// Max-min subproblem in epigraph form. The expansion point carries
/// `α = min_k R_k - 1`, strictly inside every rate floor.
pub fn build_maxmin_subproblem(model: &DesignModel, vars_prev: &DesignVariables, tau: f64) -> Result<ConvexSubproblem> {
    check_expansion(model, vars_prev, tau)?;
    let layout = model.layout(ProblemKind::MaxMin);
    let at = DesignVariables {
        tau,
        ..vars_prev.clone()
    };
    let alpha0 = model.objective(ProblemKind::MaxMin, &at) - 1.0;
    let z0 = layout.pack(vars_prev, Some(alpha0));
    let mut alpha = DVector::zeros(layout.dim());
    alpha[layout.alpha_index()] = 1.0;
    let objective = SmoothFunction::affine(alpha.clone(), 0.0);
    let (mut constraints, mut kinds, beta) = shared_constraints(model, &layout, &z0, tau);
    for k in 0..layout.num_pairs {
        let (log, affine) = rate_surrogate_terms(model, &layout, &vars_prev.p, tau, k);
        constraints.push(SmoothFunction::new(vec![
            Term::Affine {
                coef: alpha.clone(),
                offset: 0.0,
            },
            negate(log),
            negate(affine),
        ]));
        kinds.push(ConstraintKind::RateFloor(k));
    }
    Ok(ConvexSubproblem {
        objective: ObjectiveKind::Epigraph,
        problem: Problem {
            dim: layout.dim(),
            objective,
            constraints,
        },
        constraints: kinds,
        expansion: z0,
        layout,
        tau,
        beta,
    })
}
