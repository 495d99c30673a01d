//! Log-barrier interior-point method for smooth concave maximization over
//! smooth convex inequalities in real variables.
//!
//! Objective and constraint functions are sums of [`Term`]s with analytic
//! gradients and Hessians. Newton centering uses a Cholesky solve with a
//! diagonal shift fallback and a backtracking line search that never leaves
//! the strict interior.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::energy::{sigmoid_curvature, sigmoid_response, sigmoid_slope};
use crate::model::SigmoidParams;

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    /// `cᵀz + d`.
    Affine { coef: DVector<f64>, offset: f64 },
    /// `zᵀPz + cᵀz + d` with symmetric `P`.
    Quadratic {
        quad: DMatrix<f64>,
        coef: DVector<f64>,
        offset: f64,
    },
    /// `w ln(cᵀz + d)`, defined where `cᵀz + d > 0`.
    Log {
        weight: f64,
        coef: DVector<f64>,
        offset: f64,
    },
    /// `scale · ψ(zᵀFz)` with the sigmoid harvester response `ψ`.
    SigmoidOfQuadratic {
        scale: f64,
        form: DMatrix<f64>,
        params: SigmoidParams,
    },
    /// `w t ln(1 + u/t)` with `u = aᵀz`, `t = bᵀz`; defined where `t > 0`
    /// and `t + u > 0`. Concave for `w > 0`.
    PerspectiveLog {
        weight: f64,
        num: DVector<f64>,
        den: DVector<f64>,
    },
}

impl Term {
    fn dim(&self) -> usize {
        match self {
            Term::Affine { coef, .. } | Term::Quadratic { coef, .. } | Term::Log { coef, .. } => coef.len(),
            Term::SigmoidOfQuadratic { form, .. } => form.nrows(),
            Term::PerspectiveLog { num, .. } => num.len(),
        }
    }

    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        match self {
            Term::Affine { coef, offset } => Some(coef.dot(z) + offset),
            Term::Quadratic { quad, coef, offset } => Some(quad_form(quad, z) + coef.dot(z) + offset),
            Term::Log { weight, coef, offset } => {
                let arg = coef.dot(z) + offset;
                (arg > 0.0).then(|| weight * arg.ln())
            }
            Term::SigmoidOfQuadratic { scale, form, params } => {
                Some(scale * sigmoid_response(quad_form(form, z), params))
            }
            Term::PerspectiveLog { weight, num, den } => {
                let (u, t) = (num.dot(z), den.dot(z));
                (t > 0.0 && t + u > 0.0).then(|| weight * t * (u / t).ln_1p())
            }
        }
    }

    fn add_gradient(&self, z: &DVector<f64>, grad: &mut DVector<f64>) {
        match self {
            Term::Affine { coef, .. } => *grad += coef,
            Term::Quadratic { quad, coef, .. } => {
                *grad += quad * z * 2.0 + coef;
            }
            Term::Log { weight, coef, offset } => {
                let arg = coef.dot(z) + offset;
                grad.axpy(weight / arg, coef, 1.0);
            }
            Term::SigmoidOfQuadratic { scale, form, params } => {
                let fz = form * z;
                let s = z.dot(&fz);
                grad.axpy(2.0 * scale * sigmoid_slope(s, params), &fz, 1.0);
            }
            Term::PerspectiveLog { weight, num, den } => {
                let (u, t) = (num.dot(z), den.dot(z));
                let r = u / t;
                grad.axpy(weight / (1.0 + r), num, 1.0);
                grad.axpy(weight * (r.ln_1p() - r / (1.0 + r)), den, 1.0);
            }
        }
    }

    fn add_hessian(&self, z: &DVector<f64>, hess: &mut DMatrix<f64>) {
        match self {
            Term::Affine { .. } => {}
            Term::Quadratic { quad, .. } => *hess += quad * 2.0,
            Term::Log { weight, coef, offset } => {
                let arg = coef.dot(z) + offset;
                hess.ger(-weight / (arg * arg), coef, coef, 1.0);
            }
            Term::SigmoidOfQuadratic { scale, form, params } => {
                let fz = form * z;
                let s = z.dot(&fz);
                hess.ger(4.0 * scale * sigmoid_curvature(s, params), &fz, &fz, 1.0);
                *hess += form * (2.0 * scale * sigmoid_slope(s, params));
            }
            Term::PerspectiveLog { weight, num, den } => {
                // -w / (t (t+u)²) · v vᵀ with v = t a - u b.
                let (u, t) = (num.dot(z), den.dot(z));
                let v = num * t - den * u;
                hess.ger(-weight / (t * (t + u) * (t + u)), &v, &v, 1.0);
            }
        }
    }

    /// The same term on `[z; extra]`, ignoring the extra coordinates.
    fn lift(&self, n: usize) -> Term {
        let pad_v = |v: &DVector<f64>| {
            let mut out = DVector::zeros(n);
            out.rows_mut(0, v.len()).copy_from(v);
            out
        };
        let pad_m = |m: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(n, n);
            out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
            out
        };
        match self {
            Term::Affine { coef, offset } => Term::Affine {
                coef: pad_v(coef),
                offset: *offset,
            },
            Term::Quadratic { quad, coef, offset } => Term::Quadratic {
                quad: pad_m(quad),
                coef: pad_v(coef),
                offset: *offset,
            },
            Term::Log { weight, coef, offset } => Term::Log {
                weight: *weight,
                coef: pad_v(coef),
                offset: *offset,
            },
            Term::SigmoidOfQuadratic { scale, form, params } => Term::SigmoidOfQuadratic {
                scale: *scale,
                form: pad_m(form),
                params: *params,
            },
            Term::PerspectiveLog { weight, num, den } => Term::PerspectiveLog {
                weight: *weight,
                num: pad_v(num),
                den: pad_v(den),
            },
        }
    }
}

fn quad_form(m: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
    z.dot(&(m * z))
}

/// A sum of terms over `R^n`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SmoothFunction {
    pub terms: Vec<Term>,
}

impl SmoothFunction {
    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    pub fn affine(coef: DVector<f64>, offset: f64) -> Self {
        Self::new(vec![Term::Affine { coef, offset }])
    }

    pub fn push(&mut self, term: Term) {
        self.terms.push(term);
    }

    /// `None` outside the domain of some logarithm.
    pub fn value(&self, z: &DVector<f64>) -> Option<f64> {
        self.terms.iter().try_fold(0.0, |acc, t| t.value(z).map(|v| acc + v))
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        for t in &self.terms {
            t.add_gradient(z, &mut g);
        }
        g
    }

    pub fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(z.len(), z.len());
        for t in &self.terms {
            t.add_hessian(z, &mut h);
        }
        h
    }

    fn check_dim(&self, n: usize) -> bool {
        self.terms.iter().all(|t| t.dim() == n)
    }

    fn lift(&self, n: usize) -> SmoothFunction {
        SmoothFunction::new(self.terms.iter().map(|t| t.lift(n)).collect())
    }
}

/// Maximize `objective(z)` subject to `constraints[i](z) ≤ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub dim: usize,
    pub objective: SmoothFunction,
    pub constraints: Vec<SmoothFunction>,
}

impl Problem {
    /// Largest constraint value, `+∞` outside a log domain.
    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(z).unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn strictly_feasible(&self, z: &DVector<f64>) -> bool {
        self.objective.value(z).is_some() && self.constraints.iter().all(|c| matches!(c.value(z), Some(v) if v < 0.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub t_initial: f64,
    pub mu: f64,
    /// Stop when `m / t` falls below this.
    pub gap: f64,
    /// Centering stops when half the squared Newton decrement is below this
    /// times `max(1, t |f0|)`.
    pub newton_tol: f64,
    pub max_newton_per_centering: usize,
    pub max_centering: usize,
    pub ls_alpha: f64,
    pub ls_beta: f64,
    /// Record the barrier value after every Newton step.
    pub track_barrier: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            t_initial: 1.0,
            mu: 20.0,
            gap: 1e-8,
            newton_tol: 1e-10,
            max_newton_per_centering: 100,
            max_centering: 60,
            ls_alpha: 0.1,
            ls_beta: 0.5,
            track_barrier: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [self.t_initial, self.gap, self.newton_tol];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_newton_per_centering == 0 || self.max_centering == 0 {
            return Err("solver options must be strictly positive".into());
        }
        if !(self.mu > 1.0) {
            return Err("barrier multiplier must exceed 1".into());
        }
        if !(self.ls_alpha > 0.0 && self.ls_alpha < 0.5) || !(self.ls_beta > 0.0 && self.ls_beta < 1.0) {
            return Err("line-search parameters out of range".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub z: DVector<f64>,
    pub objective: f64,
    /// `m / t` at exit.
    pub gap: f64,
    pub newton_steps: usize,
    pub centering_steps: usize,
    pub phase_one: bool,
    pub status: SolverStatus,
    /// `(centering index, barrier value)` after each accepted Newton step
    /// when tracking is enabled.
    pub barrier_trace: Vec<(usize, f64)>,
}

/// Solve from `start`. A Phase-I search runs first when `start` is not
/// strictly feasible.
pub fn solve(problem: &Problem, start: &DVector<f64>, options: &SolverOptions) -> SolverResult {
    let n = problem.dim;
    assert_eq!(start.len(), n, "start point dimension");
    debug_assert!(problem.objective.check_dim(n) && problem.constraints.iter().all(|c| c.check_dim(n)));

    let mut z0 = start.clone();
    let mut phase_one = false;
    if !problem.strictly_feasible(&z0) {
        phase_one = true;
        match phase_one_search(problem, &z0, options) {
            Some(z) => z0 = z,
            None => {
                let objective = problem.objective.value(start).unwrap_or(f64::NAN);
                return SolverResult {
                    z: start.clone(),
                    objective,
                    gap: f64::INFINITY,
                    newton_steps: 0,
                    centering_steps: 0,
                    phase_one,
                    status: SolverStatus::Infeasible,
                    barrier_trace: Vec::new(),
                };
            }
        }
    }
    let mut result = barrier_method(problem, z0, options, None);
    result.phase_one = phase_one;
    result
}

/// Minimize `s` subject to `f_i(z) ≤ s` and `s ≥ -1` until `s < 0`.
fn phase_one_search(problem: &Problem, start: &DVector<f64>, options: &SolverOptions) -> Option<DVector<f64>> {
    let n = problem.dim;
    // Logarithms must end up inside their domain too.
    let domain: Vec<SmoothFunction> = std::iter::once(&problem.objective)
        .chain(&problem.constraints)
        .flat_map(|f| f.terms.iter())
        .flat_map(|t| match t {
            Term::Log { coef, offset, .. } => vec![SmoothFunction::affine(-coef, -offset)],
            Term::PerspectiveLog { num, den, .. } => {
                vec![SmoothFunction::affine(-den, 0.0), SmoothFunction::affine(-(num + den), 0.0)]
            }
            _ => Vec::new(),
        })
        .collect();
    let worst = problem
        .constraints
        .iter()
        .chain(&domain)
        .map(|c| c.value(start).unwrap_or(f64::INFINITY))
        .fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() {
        return None;
    }
    let mut slack_coef = DVector::zeros(n + 1);
    slack_coef[n] = -1.0;
    let constraints: Vec<SmoothFunction> = problem
        .constraints
        .iter()
        .chain(&domain)
        .map(|c| {
            let mut lifted = c.lift(n + 1);
            lifted.push(Term::Affine {
                coef: slack_coef.clone(),
                offset: 0.0,
            });
            lifted
        })
        .chain(std::iter::once(SmoothFunction::affine(slack_coef.clone(), -1.0)))
        .chain(std::iter::once(trust_ball(start, n + 1)))
        .collect();
    let mut objective_coef = DVector::zeros(n + 1);
    objective_coef[n] = -1.0;
    let aux = Problem {
        dim: n + 1,
        objective: SmoothFunction::affine(objective_coef, 0.0),
        constraints,
    };
    let mut w = DVector::zeros(n + 1);
    w.rows_mut(0, n).copy_from(start);
    w[n] = worst.max(-0.5) + 1.0;
    let stop = |w: &DVector<f64>| w[n] < -1e-6;
    let opts = SolverOptions {
        track_barrier: false,
        ..options.clone()
    };
    let res = barrier_method(&aux, w, &opts, Some(&stop));
    let z = res.z.rows(0, n).into_owned();
    problem.strictly_feasible(&z).then_some(z)
}

/// `‖z - start‖² ≤ 100 (1 + ‖start‖²)` on the first `start.len()`
/// coordinates, which keeps directions that no constraint bounds from
/// running off during Phase I.
fn trust_ball(start: &DVector<f64>, dim: usize) -> SmoothFunction {
    let n = start.len();
    let mut quad = DMatrix::zeros(dim, dim);
    let mut coef = DVector::zeros(dim);
    for i in 0..n {
        quad[(i, i)] = 1.0;
        coef[i] = -2.0 * start[i];
    }
    let radius2 = 100.0 * (1.0 + start.norm_squared());
    SmoothFunction::new(vec![Term::Quadratic {
        quad,
        coef,
        offset: start.norm_squared() - radius2,
    }])
}

fn barrier_value(problem: &Problem, z: &DVector<f64>, t: f64) -> Option<f64> {
    let f0 = problem.objective.value(z)?;
    let mut v = -t * f0;
    for c in &problem.constraints {
        let fi = c.value(z)?;
        if !(fi < 0.0) {
            return None;
        }
        v -= (-fi).ln();
    }
    v.is_finite().then_some(v)
}

fn barrier_derivatives(problem: &Problem, z: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
    let mut grad = problem.objective.gradient(z) * (-t);
    let mut hess = problem.objective.hessian(z) * (-t);
    for c in &problem.constraints {
        let fi = c.value(z).expect("interior point");
        let gi = c.gradient(z);
        let inv = -1.0 / fi;
        grad.axpy(inv, &gi, 1.0);
        hess.ger(inv * inv, &gi, &gi, 1.0);
        hess += c.hessian(z) * inv;
    }
    (grad, hess)
}

/// Solve `H d = -g`, shifting the diagonal until the factorization succeeds.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let sym = (hess + hess.transpose()) * 0.5;
    if let Some(ch) = Cholesky::new(sym.clone()) {
        return Some(ch.solve(&(-grad)));
    }
    let scale = sym.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut shift = 1e-12 * scale;
    for _ in 0..40 {
        let mut shifted = sym.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += shift;
        }
        if let Some(ch) = Cholesky::new(shifted) {
            return Some(ch.solve(&(-grad)));
        }
        shift *= 10.0;
    }
    None
}

type StopRule<'a> = Option<&'a dyn Fn(&DVector<f64>) -> bool>;

fn barrier_method(problem: &Problem, start: DVector<f64>, options: &SolverOptions, stop: StopRule) -> SolverResult {
    let m = problem.constraints.len();
    let mut z = start;
    let mut t = options.t_initial;
    let mut newton_steps = 0;
    let mut centering_steps = 0;
    let mut centered;
    let mut trace = Vec::new();

    let finish = |z: DVector<f64>, t: f64, newton_steps, centering_steps, status, trace| {
        let objective = problem.objective.value(&z).unwrap_or(f64::NAN);
        SolverResult {
            z,
            objective,
            gap: if m == 0 { 0.0 } else { m as f64 / t },
            newton_steps,
            centering_steps,
            phase_one: false,
            status,
            barrier_trace: trace,
        }
    };

    loop {
        centering_steps += 1;
        centered = false;
        let mut value = match barrier_value(problem, &z, t) {
            Some(v) => v,
            None => return finish(z, t, newton_steps, centering_steps, SolverStatus::Infeasible, trace),
        };
        for _ in 0..options.max_newton_per_centering {
            let (grad, hess) = barrier_derivatives(problem, &z, t);
            let Some(dir) = newton_direction(&hess, &grad) else {
                break;
            };
            let slope = grad.dot(&dir);
            // Relative to the barrier magnitude: at large t the absolute
            // decrement cannot drop below rounding noise.
            let scale = (t * problem.objective.value(&z).unwrap_or(0.0).abs()).max(1.0);
            if !(slope < 0.0) || -slope / 2.0 <= options.newton_tol * scale {
                centered = true;
                break;
            }
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-16 {
                let cand = &z + &dir * step;
                if let Some(v) = barrier_value(problem, &cand, t) {
                    if v <= value + options.ls_alpha * step * slope {
                        accepted = Some((cand, v));
                        break;
                    }
                }
                step *= options.ls_beta;
            }
            let Some((cand, v)) = accepted else {
                // No measurable decrease left at this precision.
                centered = true;
                break;
            };
            z = cand;
            value = v;
            newton_steps += 1;
            if options.track_barrier {
                trace.push((centering_steps, v));
            }
            if let Some(rule) = stop {
                if rule(&z) {
                    return finish(z, t, newton_steps, centering_steps, SolverStatus::Optimal, trace);
                }
            }
        }
        if m == 0 || m as f64 / t < options.gap {
            break;
        }
        if centering_steps >= options.max_centering {
            break;
        }
        t *= options.mu;
    }
    let status = if centered && (m == 0 || m as f64 / t < options.gap) {
        SolverStatus::Optimal
    } else {
        SolverStatus::MaxIters
    };
    finish(z, t, newton_steps, centering_steps, status, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn log_sum_problem(n: usize) -> Problem {
        let objective = SmoothFunction::new(
            (0..n)
                .map(|i| Term::Log {
                    weight: 1.0,
                    coef: unit(n, i),
                    offset: 0.0,
                })
                .collect(),
        );
        let mut constraints = vec![SmoothFunction::affine(DVector::from_element(n, 1.0), -1.0)];
        constraints.extend((0..n).map(|i| SmoothFunction::affine(-unit(n, i), 0.0)));
        Problem {
            dim: n,
            objective,
            constraints,
        }
    }

    #[test]
    fn symmetric_water_filling() {
        let problem = log_sum_problem(4);
        let res = solve(&problem, &DVector::from_element(4, 0.1), &SolverOptions::default());
        assert_eq!(res.status, SolverStatus::Optimal);
        assert!(!res.phase_one);
        for v in res.z.iter() {
            assert!((v - 0.25).abs() < 1e-7, "{v}");
        }
    }

    #[test]
    fn epigraph() {
        let problem = Problem {
            dim: 1,
            objective: SmoothFunction::affine(unit(1, 0), 0.0),
            constraints: vec![
                SmoothFunction::affine(unit(1, 0), -3.0),
                SmoothFunction::affine(unit(1, 0), -5.0),
            ],
        };
        let res = solve(&problem, &DVector::zeros(1), &SolverOptions::default());
        assert_eq!(res.status, SolverStatus::Optimal);
        assert!((res.z[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn phase_one_from_boundary_and_outside() {
        let problem = log_sum_problem(3);
        for start in [DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.6, 0.6, 0.6])] {
            let res = solve(&problem, &start, &SolverOptions::default());
            assert!(res.phase_one);
            assert_eq!(res.status, SolverStatus::Optimal);
            assert!((res.z[0] - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn reports_infeasible() {
        let problem = Problem {
            dim: 1,
            objective: SmoothFunction::affine(unit(1, 0), 0.0),
            constraints: vec![
                SmoothFunction::affine(unit(1, 0), -1.0),
                SmoothFunction::affine(-unit(1, 0), 2.0),
            ],
        };
        let res = solve(&problem, &DVector::zeros(1), &SolverOptions::default());
        assert_eq!(res.status, SolverStatus::Infeasible);
    }

    #[test]
    fn ball_constraint() {
        // max x + y  s.t.  x² + y² ≤ 2.
        let problem = Problem {
            dim: 2,
            objective: SmoothFunction::affine(DVector::from_element(2, 1.0), 0.0),
            constraints: vec![SmoothFunction::new(vec![Term::Quadratic {
                quad: DMatrix::identity(2, 2),
                coef: DVector::zeros(2),
                offset: -2.0,
            }])],
        };
        let res = solve(&problem, &DVector::zeros(2), &SolverOptions::default());
        assert!((res.z[0] - 1.0).abs() < 1e-7 && (res.z[1] - 1.0).abs() < 1e-7);
        assert!(problem.max_violation(&res.z) <= 1e-8);
    }

    /// Rate-like objective over the simplex against a dense grid on its
    /// boundary, where the maximizer lies because the objective increases in
    /// every coordinate.
    #[test]
    fn matches_projected_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 3;
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..20.0)).collect();
        let lin: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.3)).collect();
        let f = |p: &[f64]| (0..n).map(|i| w[i] * (1.0 + c[i] * p[i]).ln() + lin[i] * p[i]).sum::<f64>();
        let mut objective = SmoothFunction::default();
        for i in 0..n {
            objective.push(Term::Log {
                weight: w[i],
                coef: unit(n, i) * c[i],
                offset: 1.0,
            });
        }
        objective.push(Term::Affine {
            coef: DVector::from_vec(lin.clone()),
            offset: 0.0,
        });
        let mut constraints = vec![SmoothFunction::affine(DVector::from_element(n, 1.0), -1.0)];
        constraints.extend((0..n).map(|i| SmoothFunction::affine(-unit(n, i), 0.0)));
        let problem = Problem {
            dim: n,
            objective,
            constraints,
        };
        let res = solve(&problem, &DVector::from_element(n, 0.1), &SolverOptions::default());

        let step = 1e-3;
        let steps = (1.0 / step) as usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let p = [i as f64 * step, j as f64 * step, 1.0 - (i + j) as f64 * step];
                best = best.max(f(&p));
            }
        }
        let slack = 2.0 * step * (0..n).map(|i| w[i] * c[i] + lin[i]).fold(0.0, f64::max);
        assert!(res.objective >= best - 1e-9);
        assert!(res.objective <= best + slack);
    }

    #[test]
    fn centering_is_monotone_and_resolve_is_stable() {
        let problem = log_sum_problem(5);
        let opts = SolverOptions {
            track_barrier: true,
            ..SolverOptions::default()
        };
        let res = solve(&problem, &DVector::from_element(5, 0.01), &opts);
        for pair in res.barrier_trace.windows(2) {
            if pair[0].0 == pair[1].0 {
                assert!(pair[1].1 <= pair[0].1 + 1e-10);
            }
        }
        let again = solve(&problem, &res.z, &SolverOptions::default());
        assert!((again.objective - res.objective).abs() < 1e-8);
    }

    #[test]
    fn sigmoid_term_derivatives() {
        let params = SigmoidParams {
            n_sat: 48.86e-6,
            a_tilde: 26515.46,
            b_tilde: -29.81e-6,
        };
        let form = DMatrix::from_row_slice(2, 2, &[2e-5, 5e-6, 5e-6, 1e-5]);
        let f = SmoothFunction::new(vec![Term::SigmoidOfQuadratic {
            scale: 1e4,
            form,
            params,
        }]);
        let z = DVector::from_vec(vec![0.9, -1.1]);
        let g = f.gradient(&z);
        let h = f.hessian(&z);
        let eps = 1e-6;
        for i in 0..2 {
            let zp = &z + unit(2, i) * eps;
            let zm = &z - unit(2, i) * eps;
            let fd = (f.value(&zp).unwrap() - f.value(&zm).unwrap()) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-6 * g[i].abs().max(1e-9));
            let fd_col = (f.gradient(&zp) - f.gradient(&zm)) / (2.0 * eps);
            for j in 0..2 {
                assert!((fd_col[j] - h[(j, i)]).abs() < 1e-5 * h.norm());
            }
        }
    }

    #[test]
    fn perspective_log_derivatives_and_concavity() {
        let f = SmoothFunction::new(vec![Term::PerspectiveLog {
            weight: 1.3,
            num: DVector::from_vec(vec![2.0, 0.5, 0.0]),
            den: DVector::from_vec(vec![0.0, 0.2, 1.0]),
        }]);
        let z = DVector::from_vec(vec![0.7, 0.4, 0.3]);
        let g = f.gradient(&z);
        let h = f.hessian(&z);
        let eps = 1e-6;
        for i in 0..3 {
            let zp = &z + unit(3, i) * eps;
            let zm = &z - unit(3, i) * eps;
            let fd = (f.value(&zp).unwrap() - f.value(&zm).unwrap()) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-7, "{fd} {}", g[i]);
            let fd_col = (f.gradient(&zp) - f.gradient(&zm)) / (2.0 * eps);
            for j in 0..3 {
                assert!((fd_col[j] - h[(j, i)]).abs() < 1e-6);
            }
        }
        assert!(h.symmetric_eigenvalues().max() <= 1e-12);
        // Homogeneous of degree one.
        assert!((f.value(&(&z * 3.0)).unwrap() - 3.0 * f.value(&z).unwrap()).abs() < 1e-12);
        assert!(f.value(&DVector::from_vec(vec![0.7, 0.4, -0.1])).is_none());
    }

    #[test]
    fn perspective_log_maximization_with_phase_one() {
        // max t ln(1 + u/t) - 0.5 u - 0.1 t  over u, t in [0, 1]:
        // the optimum is u = t = 1 with value ln 2 - 0.6.
        let mut objective = SmoothFunction::new(vec![Term::PerspectiveLog {
            weight: 1.0,
            num: unit(2, 0),
            den: unit(2, 1),
        }]);
        objective.push(Term::Affine {
            coef: DVector::from_vec(vec![-0.5, -0.1]),
            offset: 0.0,
        });
        let mut constraints: Vec<SmoothFunction> = (0..2).map(|i| SmoothFunction::affine(unit(2, i), -1.0)).collect();
        constraints.extend((0..2).map(|i| SmoothFunction::affine(-unit(2, i), 0.0)));
        let problem = Problem {
            dim: 2,
            objective,
            constraints,
        };
        let res = solve(&problem, &DVector::from_vec(vec![0.0, 0.0]), &SolverOptions::default());
        assert_eq!(res.status, SolverStatus::Optimal);
        assert!((res.objective - (2f64.ln() - 0.6)).abs() < 1e-7, "{}", res.objective);
    }
}
