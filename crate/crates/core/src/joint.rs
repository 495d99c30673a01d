//! Joint minorize-maximize step over waveform, powers and time split for
//! linear harvesters.
//!
//! With `w = √τ x`, `e = (1-τ) p` and `t = 1-τ` the harvested energy
//! `τ μ xᴴQx = μ wᴴQw` no longer couples `τ` and `x`, and each rate
//! `(1-τ) log₂(1 + SINR)` is a difference of two concave perspectives of
//! `log₂(σ² + ·)`. Linearizing the subtracted perspective and the harvested
//! energy in `C3` gives a convex subproblem in every variable at once, which
//! moves along directions the alternating updates cannot take.
//!
//! Coordinates are `z = [Re w̃; Im w̃; ẽ; t; (α)]` with `w_j = √p_max,j · w̃_j`
//! and `e = p_ref · ẽ`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::energy::Response;
use crate::error::{Error, Result};
use crate::model::{AuditSummary, DesignVariables};
use crate::solver::{solve, Problem, SmoothFunction, SolverOptions, SolverResult, Term};
use crate::surrogate::{negate, ConstraintKind, DesignModel, ObjectiveKind, ProblemKind};

#[derive(Clone, Debug, PartialEq)]
pub struct JointSubproblem {
    pub objective: ObjectiveKind,
    pub problem: Problem,
    pub constraints: Vec<ConstraintKind>,
    pub expansion: DVector<f64>,
    num_pairs: usize,
    x_scale: DVector<f64>,
    p_ref: f64,
}

impl JointSubproblem {
    pub fn solve(&self, options: &SolverOptions) -> SolverResult {
        solve(&self.problem, &self.expansion, options)
    }

    pub fn surrogate_value(&self, z: &DVector<f64>) -> Option<f64> {
        self.problem.objective.value(z)
    }

    fn t_index(&self) -> usize {
        3 * self.num_pairs
    }

    fn alpha_index(&self) -> usize {
        3 * self.num_pairs + 1
    }

    /// Back to `(x, p, τ)`. Powers are clamped at zero.
    pub fn vars(&self, z: &DVector<f64>) -> DesignVariables {
        let n = self.num_pairs;
        let t = z[self.t_index()].clamp(0.0, 1.0);
        let tau = 1.0 - t;
        let root = tau.sqrt();
        DesignVariables {
            x: DVector::from_fn(n, |j, _| {
                if root > 0.0 {
                    Complex64::new(z[j], z[n + j]) * (self.x_scale[j] / root)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
            p: DVector::from_fn(n, |j, _| if t > 0.0 { (z[2 * n + j] * self.p_ref / t).max(0.0) } else { 0.0 }),
            tau,
        }
    }

    fn true_row(&self, model: &DesignModel, kind: ConstraintKind, z: &DVector<f64>) -> Option<f64> {
        let vars = self.vars(z);
        match kind {
            ConstraintKind::LinearizedHarvest(k) => Some(model.residuals(&vars).harvest[k]),
            ConstraintKind::RateFloor(k) => Some(z[self.alpha_index()] - model.throughput(&vars).per_pair[k]),
            _ => None,
        }
    }

    /// Dominance of the linearized rows and the objective at random points
    /// with `|w̃_j|² ≤ τ`, `t ∈ (0, 1)` and `ẽ ≥ 0`, plus touching at the
    /// expansion point.
    pub fn audit<R: Rng>(&self, model: &DesignModel, points: usize, rng: &mut R) -> AuditSummary {
        let n = self.num_pairs;
        let kind = match self.objective {
            ObjectiveKind::SumRate => ProblemKind::SumThroughput,
            ObjectiveKind::Epigraph => ProblemKind::MaxMin,
        };
        let gaps = |z: &DVector<f64>| -> Vec<f64> {
            let mut out = Vec::new();
            if self.objective == ObjectiveKind::SumRate {
                let surrogate = self.surrogate_value(z).unwrap_or(f64::NEG_INFINITY);
                out.push(model.objective(kind, &self.vars(z)) - surrogate);
            }
            for (kind, f) in self.constraints.iter().zip(&self.problem.constraints) {
                if let Some(truth) = self.true_row(model, *kind, z) {
                    out.push(f.value(z).unwrap_or(f64::INFINITY) - truth);
                }
            }
            out
        };
        let e_top = (0..n).map(|j| self.expansion[2 * n + j]).fold(1.0, f64::max) * 2.0;
        let mut min_slack = f64::INFINITY;
        for _ in 0..points {
            let mut z = self.expansion.clone();
            let t = rng.random_range(1e-3..1.0);
            z[self.t_index()] = t;
            for j in 0..n {
                let r = (rng.random::<f64>() * (1.0 - t)).sqrt();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                z[j] = r * theta.cos();
                z[n + j] = r * theta.sin();
                z[2 * n + j] = rng.random_range(0.0..e_top);
            }
            min_slack = gaps(&z).into_iter().fold(min_slack, f64::min);
        }
        let touch = gaps(&self.expansion).into_iter().fold(0.0, |m: f64, g| m.max(g.abs()));
        AuditSummary {
            surrogates: 1,
            points,
            min_slack,
            max_touch_error: if touch.is_nan() { f64::INFINITY } else { touch },
        }
    }
}

/// Joint subproblem around the feasible point `vars_prev`, which must have
/// `0 < τ < 1`. Every harvester must be linear.
pub fn build_joint_subproblem(model: &DesignModel, kind: ProblemKind, vars_prev: &DesignVariables) -> Result<JointSubproblem> {
    let n = model.num_pairs();
    let mus = model
        .harvesters
        .iter()
        .enumerate()
        .map(|(k, h)| match h.response {
            Response::Linear { mu } => Ok(mu),
            Response::Sigmoid(_) => Err(Error::Dimension(format!("pair {k} uses the sigmoid harvester"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    let violation = model.max_violation(vars_prev);
    if violation > 1e-9 {
        return Err(Error::InfeasibleExpansion { violation });
    }
    let tau = vars_prev.tau;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InfeasibleExpansion {
            violation: (-tau).max(tau - 1.0).max(0.0),
        });
    }

    let split = model.layout(kind);
    let (x_scale, p_ref) = (split.x_scale.clone(), split.p_ref);
    let t_at = 3 * n;
    let alpha_at = 3 * n + 1;
    let dim = 3 * n + 1 + usize::from(kind == ProblemKind::MaxMin);
    let unit = |i: usize| {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        v
    };

    let t0 = 1.0 - tau;
    let root = tau.sqrt();
    let mut z0 = DVector::zeros(dim);
    for j in 0..n {
        z0[j] = vars_prev.x[j].re * root / x_scale[j];
        z0[n + j] = vars_prev.x[j].im * root / x_scale[j];
        z0[2 * n + j] = t0 * vars_prev.p[j] / p_ref;
    }
    z0[t_at] = t0;
    if kind == ProblemKind::MaxMin {
        z0[alpha_at] = model.throughput(vars_prev).min() - 1.0;
    }

    let mut fns = Vec::new();
    let mut kinds = Vec::new();
    for j in 0..n {
        let mut quad = DMatrix::zeros(dim, dim);
        quad[(j, j)] = 1.0;
        quad[(n + j, n + j)] = 1.0;
        fns.push(SmoothFunction::new(vec![Term::Quadratic {
            quad,
            coef: unit(t_at),
            offset: -1.0,
        }]));
        kinds.push(ConstraintKind::PowerCap(j));
        fns.push(SmoothFunction::affine(-unit(2 * n + j), 0.0));
        kinds.push(ConstraintKind::NonNegativePower(j));
    }
    fns.push(SmoothFunction::affine(unit(t_at), -1.0));
    kinds.push(ConstraintKind::WetFraction);
    fns.push(SmoothFunction::affine(-unit(t_at), 0.0));
    kinds.push(ConstraintKind::WetFraction);

    let c = &model.config;
    let w0 = z0.rows(0, 2 * n).into_owned();
    for k in 0..n {
        let e = model.energy_scale[k];
        let mu = mus[k];
        let form = &model.forms[k];
        let fw0 = form * &w0;
        // μ w̃ᵀFw̃ ≥ μ (2 w̃₀ᵀF w̃ - w̃₀ᵀF w̃₀).
        let mut coef = DVector::zeros(dim);
        coef.rows_mut(0, 2 * n).copy_from(&(&fw0 * (-2.0 * mu / e)));
        coef[2 * n + k] = c.amp_eff[k] * p_ref / e;
        fns.push(SmoothFunction::affine(
            coef,
            (c.p_circuit[k] - c.e_initial[k] + mu * w0.dot(&fw0)) / e,
        ));
        kinds.push(ConstraintKind::LinearizedHarvest(k));

        let mut quad = DMatrix::zeros(dim, dim);
        quad.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&(form * (mu / e)));
        fns.push(SmoothFunction::new(vec![Term::Quadratic {
            quad,
            coef: DVector::zeros(dim),
            offset: (c.e_initial[k] - c.e_max[k]) / e,
        }]));
        kinds.push(ConstraintKind::StorageCap(k));
    }

    let rate_terms = |k: usize| -> Vec<Term> {
        let co = &model.coeffs;
        let sigma2 = co.noise[k];
        let on_e = |row: DVector<f64>| {
            let mut v = DVector::zeros(dim);
            v.rows_mut(2 * n, n).copy_from(&(row * (p_ref / sigma2)));
            v
        };
        let perspective = |row: DVector<f64>| {
            SmoothFunction::new(vec![
                Term::Affine {
                    coef: unit(t_at) * sigma2.log2(),
                    offset: 0.0,
                },
                Term::PerspectiveLog {
                    weight: 1.0 / LN_2,
                    num: on_e(row),
                    den: unit(t_at),
                },
            ])
        };
        let signal = perspective(co.q.row(k).transpose());
        // The interference perspective is homogeneous, so its tangent at z0
        // is its gradient there.
        let interference = perspective(co.b.row(k).transpose()).gradient(&z0);
        let mut terms = signal.terms;
        terms.push(Term::Affine {
            coef: -interference,
            offset: 0.0,
        });
        terms
    };

    let objective = match kind {
        ProblemKind::SumThroughput => SmoothFunction::new((0..n).flat_map(rate_terms).collect()),
        ProblemKind::MaxMin => {
            for k in 0..n {
                let mut terms = vec![Term::Affine {
                    coef: unit(alpha_at),
                    offset: 0.0,
                }];
                terms.extend(rate_terms(k).into_iter().map(negate));
                fns.push(SmoothFunction::new(terms));
                kinds.push(ConstraintKind::RateFloor(k));
            }
            SmoothFunction::affine(unit(alpha_at), 0.0)
        }
    };

    Ok(JointSubproblem {
        objective: match kind {
            ProblemKind::SumThroughput => ObjectiveKind::SumRate,
            ProblemKind::MaxMin => ObjectiveKind::Epigraph,
        },
        problem: Problem {
            dim,
            objective,
            constraints: fns,
        },
        constraints: kinds,
        expansion: z0,
        num_pairs: n,
        x_scale,
        p_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EhModel, NonlinearEhParams, NetworkConfig};
    use crate::testing::{instance, model};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips_the_expansion_point() {
        let (m, vars) = model(3, 2);
        let sub = build_joint_subproblem(&m, ProblemKind::SumThroughput, &vars).unwrap();
        let back = sub.vars(&sub.expansion);
        assert!((back.tau - vars.tau).abs() < 1e-15);
        assert!((&back.x - &vars.x).norm() < 1e-12 * vars.x.norm());
        assert!((&back.p - &vars.p).norm() < 1e-12 * vars.p.norm());
        assert!(sub.problem.max_violation(&sub.expansion) <= 1e-12);
    }

    #[test]
    fn sum_surrogate_touches_and_dominates() {
        let (m, vars) = model(3, 4);
        let sub = build_joint_subproblem(&m, ProblemKind::SumThroughput, &vars).unwrap();
        let touch = sub.surrogate_value(&sub.expansion).unwrap();
        assert!((touch - m.objective(ProblemKind::SumThroughput, &vars)).abs() < 1e-9);
        let audit = sub.audit(&m, 300, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(audit.min_slack >= -1e-12, "{audit:?}");
        assert!(audit.max_touch_error <= 1e-9, "{audit:?}");
    }

    #[test]
    fn maxmin_step_is_feasible_and_not_worse() {
        let (m, vars) = model(4, 5);
        let sub = build_joint_subproblem(&m, ProblemKind::MaxMin, &vars).unwrap();
        let audit = sub.audit(&m, 300, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(audit.min_slack >= -1e-12, "{audit:?}");
        assert!(audit.max_touch_error <= 1e-9, "{audit:?}");
        let res = sub.solve(&SolverOptions::default());
        let next = sub.vars(&res.z);
        assert!(m.max_violation(&next) <= 1e-9);
        assert!(m.objective(ProblemKind::MaxMin, &next) >= m.objective(ProblemKind::MaxMin, &vars) - 1e-9);
        assert!(m.objective(ProblemKind::MaxMin, &next) >= res.z[sub.alpha_index()] - 1e-9);
    }

    #[test]
    fn rejects_sigmoid_harvesters_and_boundary_tau() {
        let mut cfg = NetworkConfig::reference(2);
        cfg.eh_model = EhModel::NonLinear(NonlinearEhParams::reference(2));
        let (m, vars) = instance(&cfg, 0);
        assert!(build_joint_subproblem(&m, ProblemKind::SumThroughput, &vars).is_err());
        let (m, mut vars) = model(2, 0);
        vars.tau = 1.0;
        assert!(build_joint_subproblem(&m, ProblemKind::SumThroughput, &vars).is_err());
    }
}
