//! Harvested-energy models and the convexifying weight for the sigmoid
//! harvester.
//!
//! Every model has the form `E = τ φ(s)` where `s = xᴴ Q x` is the received
//! RF power. `Q` is a rank-one term `h hᴴ` plus a nonnegative diagonal: the
//! diagonal is zero for perfect CSI, the estimation-error variances for the
//! average-sense model, and carries all the energy for the phase-incoherent
//! baseline.
//!
//! Complex gradients follow `∂f/∂x*` for real `f`, scaled so that the
//! directional derivative along `d` is `Re{u d}` with `u` a row vector.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::model::{EhModel, NetworkConfig, SigmoidParams};

/// `max σ(1-σ)(2σ-1)` over the logistic range, `1/(6√3)`.
const SIGMOID_CURVATURE_PEAK: f64 = 0.096_225_044_864_937_63;

/// `|hᴴ x|²`.
pub fn received_power(x: &DVector<Complex64>, h_k: &DVector<Complex64>) -> f64 {
    h_k.dotc(x).norm_sqr()
}

/// `μ τ |hᴴ x|²`.
pub fn harvested_energy_linear(x: &DVector<Complex64>, h_k: &DVector<Complex64>, mu: f64, tau: f64) -> f64 {
    mu * tau * received_power(x, h_k)
}

/// Sigmoid harvester fed with the raw received power; no `μ` factor.
pub fn harvested_energy_nonlinear(
    x: &DVector<Complex64>,
    h_k: &DVector<Complex64>,
    params: &SigmoidParams,
    tau: f64,
) -> f64 {
    tau * sigmoid_response(received_power(x, h_k), params)
}

/// `μ τ (|ĥᴴ x|² + σ² ‖x‖²)`: the expected linear harvest under an
/// isotropic estimation error.
pub fn harvested_energy_imperfect(
    x: &DVector<Complex64>,
    h_hat_k: &DVector<Complex64>,
    sigma2_h_delta: f64,
    mu: f64,
    tau: f64,
) -> f64 {
    mu * tau * (received_power(x, h_hat_k) + sigma2_h_delta * x.norm_squared())
}

/// `ψ(s) = N (σ(ã(s - b̃)) - Ω) / (1 - Ω)`; exactly zero at `s = 0`.
pub fn sigmoid_response(s: f64, p: &SigmoidParams) -> f64 {
    let omega = p.omega();
    let logistic = 1.0 / (1.0 + (-(p.a_tilde * (s - p.b_tilde))).exp());
    p.n_sat * (logistic - omega) / (1.0 - omega)
}

fn logistic(s: f64, p: &SigmoidParams) -> f64 {
    1.0 / (1.0 + (-(p.a_tilde * (s - p.b_tilde))).exp())
}

/// `ψ'(s)`.
pub fn sigmoid_slope(s: f64, p: &SigmoidParams) -> f64 {
    let l = logistic(s, p);
    p.n_sat * p.a_tilde * l * (1.0 - l) / (1.0 - p.omega())
}

/// `ψ''(s)`.
pub fn sigmoid_curvature(s: f64, p: &SigmoidParams) -> f64 {
    let l = logistic(s, p);
    p.n_sat * p.a_tilde * p.a_tilde * l * (1.0 - l) * (1.0 - 2.0 * l) / (1.0 - p.omega())
}

/// `β₀ = 4 τ N ã² exp(ã b̃) / (1 - Ω) · λ_max(Q²) · Σ p_max` with `Q = h hᴴ`,
/// so `λ_max(Q²) = ‖h‖⁴`.
pub fn beta_lower_bound(params: &SigmoidParams, h_k: &DVector<Complex64>, tau: f64, total_power_budget: f64) -> f64 {
    beta_lower_bound_lambda(params, h_k.norm_squared(), tau, total_power_budget)
}

/// [`beta_lower_bound`] for a general `Q` given (an upper bound on) its
/// largest eigenvalue.
pub fn beta_lower_bound_lambda(params: &SigmoidParams, lambda_max_q: f64, tau: f64, total_power_budget: f64) -> f64 {
    let p = params;
    4.0 * tau * p.n_sat * p.a_tilde * p.a_tilde * (p.a_tilde * p.b_tilde).exp() / (1.0 - p.omega())
        * lambda_max_q
        * lambda_max_q
        * total_power_budget
}

/// Weight that makes `τ ψ(xᴴQx) + ½β‖x‖²` convex on `‖x‖² ≤ budget` for any
/// sigmoid parameters: the negative curvature of `ψ` peaks at
/// `N ã² / (6√3 (1 - Ω))`.
pub fn beta_curvature_bound(params: &SigmoidParams, lambda_max_q: f64, tau: f64, total_power_budget: f64) -> f64 {
    let p = params;
    4.0 * tau * p.n_sat * p.a_tilde * p.a_tilde * SIGMOID_CURVATURE_PEAK / (1.0 - p.omega())
        * lambda_max_q
        * lambda_max_q
        * total_power_budget
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Response {
    Linear { mu: f64 },
    Sigmoid(SigmoidParams),
}

/// Harvester of one pair: `E(x, τ) = τ φ(|hᴴx|² + Σ_j d_j |x_j|²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Harvester {
    pub h: DVector<Complex64>,
    pub diag: DVector<f64>,
    pub response: Response,
}

/// Which description of the phase-1 channel the harvester uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HarvestView {
    /// True channels, coherent combining.
    Perfect,
    /// Estimates plus the error variances, in the average sense.
    Imperfect,
    /// Per-ET powers only: cross terms average out under random phases.
    PowerOnly,
    /// Power-only on the estimates plus error variances.
    PowerOnlyImperfect,
}

impl Harvester {
    pub fn for_pair(config: &NetworkConfig, channels: &ChannelSet, k: usize, view: HarvestView) -> Harvester {
        let response = match &config.eh_model {
            EhModel::Linear => Response::Linear { mu: config.mu[k] },
            EhModel::NonLinear(nl) => Response::Sigmoid(nl.pair(k)),
        };
        let n = channels.num_pairs();
        let row = |m: &DMatrix<Complex64>| DVector::from_fn(n, |j, _| m[(k, j)].conj());
        let err = DVector::from_fn(n, |j, _| channels.h_err_var[(k, j)]);
        let (h, diag) = match view {
            HarvestView::Perfect => (row(&channels.h), DVector::zeros(n)),
            HarvestView::Imperfect => (row(&channels.h_hat), err),
            HarvestView::PowerOnly => (
                DVector::zeros(n),
                DVector::from_fn(n, |j, _| channels.h[(k, j)].norm_sqr()),
            ),
            HarvestView::PowerOnlyImperfect => (
                DVector::zeros(n),
                DVector::from_fn(n, |j, _| channels.h_hat[(k, j)].norm_sqr() + err[j]),
            ),
        };
        Harvester { h, diag, response }
    }

    pub fn all(config: &NetworkConfig, channels: &ChannelSet, view: HarvestView) -> Vec<Harvester> {
        (0..config.num_pairs)
            .map(|k| Harvester::for_pair(config, channels, k, view))
            .collect()
    }

    /// `s = xᴴ Q x`.
    pub fn received_power(&self, x: &DVector<Complex64>) -> f64 {
        let coherent = self.h.dotc(x).norm_sqr();
        let spread: f64 = self
            .diag
            .iter()
            .zip(x.iter())
            .filter(|(d, _)| **d != 0.0)
            .map(|(d, xj)| d * xj.norm_sqr())
            .sum();
        coherent + spread
    }

    pub fn phi(&self, s: f64) -> f64 {
        match self.response {
            Response::Linear { mu } => mu * s,
            Response::Sigmoid(p) => sigmoid_response(s, &p),
        }
    }

    pub fn phi_slope(&self, s: f64) -> f64 {
        match self.response {
            Response::Linear { mu } => mu,
            Response::Sigmoid(p) => sigmoid_slope(s, &p),
        }
    }

    /// Smallest received power that yields `e` per unit WET time: zero for
    /// `e ≤ 0`, infinite beyond saturation.
    pub fn phi_inverse(&self, e: f64) -> f64 {
        if e <= 0.0 {
            return 0.0;
        }
        match self.response {
            Response::Linear { mu } => e / mu,
            Response::Sigmoid(p) => {
                let omega = p.omega();
                let logistic = e * (1.0 - omega) / p.n_sat + omega;
                if logistic >= 1.0 {
                    f64::INFINITY
                } else {
                    p.b_tilde - (1.0 / logistic - 1.0).ln() / p.a_tilde
                }
            }
        }
    }

    /// Harvest per unit WET time, `f(x) = E(x, τ) / τ`.
    pub fn rate(&self, x: &DVector<Complex64>) -> f64 {
        self.phi(self.received_power(x))
    }

    pub fn energy(&self, x: &DVector<Complex64>, tau: f64) -> f64 {
        tau * self.rate(x)
    }

    /// Largest eigenvalue of `Q`, or an upper bound when both parts are
    /// present.
    pub fn lambda_max(&self) -> f64 {
        self.h.norm_squared() + self.diag.max().max(0.0)
    }

    /// `Q` as a dense Hermitian matrix.
    pub fn q_matrix(&self) -> DMatrix<Complex64> {
        let mut q = &self.h * self.h.adjoint();
        for j in 0..self.diag.len() {
            q[(j, j)] += self.diag[j];
        }
        q
    }

    /// `Q_r = [[A, -B], [B, A]]` for `Q = A + iB`, so `xᴴQx = zᵀ Q_r z` with
    /// `z = [Re x; Im x]`.
    pub fn real_form(&self) -> DMatrix<f64> {
        real_form(&self.q_matrix())
    }

    /// Weight for the sigmoid DC split at WET fraction `tau`; zero for the
    /// linear model.
    pub fn beta(&self, tau: f64, total_power_budget: f64) -> f64 {
        match self.response {
            Response::Linear { .. } => 0.0,
            Response::Sigmoid(p) => {
                let l = self.lambda_max();
                1.05 * beta_lower_bound_lambda(&p, l, tau, total_power_budget)
                    .max(beta_curvature_bound(&p, l, tau, total_power_budget))
            }
        }
    }

    /// `u = 2 τ φ'(s₀) x₀ᴴ Q + β x₀ᴴ`, the gradient of
    /// `τ φ(xᴴQx) + ½β‖x‖²` at `x₀` as a row vector.
    pub fn u_gradient(&self, x0: &DVector<Complex64>, tau: f64, beta: f64) -> DVector<Complex64> {
        let slope = self.phi_slope(self.received_power(x0));
        let qx = self.q_matrix() * x0;
        // (x₀ᴴ Q)_j = conj((Q x₀)_j) for Hermitian Q.
        qx.map(|v| v.conj() * (2.0 * tau * slope)) + x0.map(|v| v.conj() * beta)
    }
}

pub fn real_form(q: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = q.nrows();
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (q[(i, j)].re, q[(i, j)].im);
            r[(i, j)] = a;
            r[(i + n, j + n)] = a;
            r[(i, j + n)] = -b;
            r[(i + n, j)] = b;
        }
    }
    r
}

/// Received power and harvested energy of every pair.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    pub received: Vec<f64>,
    pub harvested: Vec<f64>,
    pub model: &'static str,
}

impl EnergyReport {
    pub fn new(harvesters: &[Harvester], x: &DVector<Complex64>, tau: f64) -> Self {
        let received: Vec<f64> = harvesters.iter().map(|h| h.received_power(x)).collect();
        let harvested = harvesters
            .iter()
            .zip(&received)
            .map(|(h, &s)| tau * h.phi(s))
            .collect();
        let model = match harvesters.first().map(|h| h.response) {
            Some(Response::Sigmoid(_)) => "nonlinear",
            _ => "linear",
        };
        Self {
            received,
            harvested,
            model,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reference_params() -> SigmoidParams {
        SigmoidParams {
            n_sat: 48.86e-6,
            a_tilde: 26515.46,
            b_tilde: -29.81e-6,
        }
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
    }

    #[test]
    fn linear_examples() {
        let one = DVector::from_element(1, c(1.0, 0.0));
        assert_eq!(harvested_energy_linear(&one, &one, 1.0, 0.5), 0.5);
        let h = DVector::from_element(2, c(1.0, 0.0));
        for q in [0.1f64, 1.0, 7.0] {
            let r = q.sqrt();
            let destructive = DVector::from_vec(vec![c(r, 0.0), c(r, 0.0) * Complex64::from_polar(1.0, std::f64::consts::PI)]);
            assert!(harvested_energy_linear(&destructive, &h, 1.0, 1.0) < 1e-14 * q);
            let constructive = DVector::from_vec(vec![c(r, 0.0), c(r, 0.0)]);
            assert!((harvested_energy_linear(&constructive, &h, 1.0, 1.0) - 4.0 * q).abs() < 1e-12 * q);
        }
    }

    #[test]
    fn nonlinear_zero_and_saturation() {
        let p = reference_params();
        assert_eq!(sigmoid_response(0.0, &p), 0.0);
        let x = DVector::from_element(1, c(1.0, 0.0));
        let e = harvested_energy_nonlinear(&x, &x, &p, 0.7);
        assert!((e / (0.7 * 48.86e-6) - 1.0).abs() < 1e-3);
        assert!(e <= 0.7 * 48.86e-6);
        assert!(sigmoid_response(2e-4, &p) < 48.86e-6);
    }

    #[test]
    fn nonlinear_matches_high_precision_value() {
        // 50-digit evaluation of the same formula at 20 µW, τ = 1.
        let oracle = 1.587_262_840_439_185_3e-5;
        let v = sigmoid_response(20e-6, &reference_params());
        assert!((v / oracle - 1.0).abs() < 1e-12, "{v}");
        assert!((reference_params().omega() - 0.687_922_764_225_879_2).abs() < 1e-15);
    }

    #[test]
    fn phi_inverse_round_trips() {
        let p = reference_params();
        let hv = Harvester {
            h: DVector::zeros(1),
            diag: DVector::zeros(1),
            response: Response::Sigmoid(p),
        };
        for s in [1e-7, 5e-6, 2e-5, 1e-4] {
            assert!((hv.phi_inverse(hv.phi(s)) / s - 1.0).abs() < 1e-6);
        }
        assert_eq!(hv.phi_inverse(p.n_sat), f64::INFINITY);
        assert_eq!(hv.phi_inverse(-1.0), 0.0);
        let lin = Harvester {
            response: Response::Linear { mu: 0.5 },
            ..hv
        };
        assert_eq!(lin.phi_inverse(1.0), 2.0);
    }

    #[test]
    fn nonlinear_is_monotone() {
        let p = reference_params();
        let top = 2.0 * p.n_sat;
        let mut prev = sigmoid_response(0.0, &p);
        for i in 1..=1000 {
            let v = sigmoid_response(top * i as f64 / 1000.0, &p);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn imperfect_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vec(&mut rng, 3, 1.0);
        let h = random_vec(&mut rng, 3, 0.1);
        assert_eq!(harvested_energy_imperfect(&x, &h, 0.0, 0.8, 0.3), harvested_energy_linear(&x, &h, 0.8, 0.3));
        let one = DVector::from_element(1, c(1.0, 0.0));
        let zero = DVector::from_element(1, c(0.0, 0.0));
        assert!((harvested_energy_imperfect(&one, &zero, 0.19, 1.0, 1.0) - 0.19).abs() < 1e-16);
    }

    #[test]
    fn imperfect_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_vec(&mut rng, 3, 1.0);
        let h_hat = random_vec(&mut rng, 3, 1.0);
        let var = 0.19;
        let n = 100_000;
        let normal = rand_distr::Normal::new(0.0, (var / 2.0f64).sqrt()).unwrap();
        let mut acc = 0.0;
        for _ in 0..n {
            let h = DVector::from_fn(3, |j, _| h_hat[j] + c(rng.sample(normal), rng.sample(normal)));
            acc += harvested_energy_linear(&x, &h, 0.9, 0.4);
        }
        let mc = acc / n as f64;
        let analytic = harvested_energy_imperfect(&x, &h_hat, var, 0.9, 0.4);
        assert!((mc / analytic - 1.0).abs() < 0.01, "{mc} vs {analytic}");
    }

    #[test]
    fn beta_bound_examples() {
        let p = reference_params();
        let zero = DVector::from_element(3, c(0.0, 0.0));
        assert_eq!(beta_lower_bound(&p, &zero, 0.5, 3.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_vec(&mut rng, 3, 0.01);
        let base = beta_lower_bound(&p, &h, 0.5, 3.0);
        let scaled = beta_lower_bound(&p, &(&h * c(2.0, 0.0)), 0.5, 3.0);
        assert!((scaled / base - 16.0).abs() < 1e-12);
    }

    #[test]
    fn beta_bound_matches_dense_eigensolver() {
        let p = reference_params();
        let k = 5;
        let budget = 1.585 * k as f64;
        let mut h = DVector::from_element(k, c(0.0, 0.0));
        h[2] = c(1.0, 0.0);
        let q = &h * h.adjoint();
        let q2 = real_form(&(&q * &q));
        let lambda = SymmetricEigen::new(q2).eigenvalues.max();
        let omega = p.omega();
        let expected = 4.0 * 0.5 * p.n_sat * p.a_tilde.powi(2) * (p.a_tilde * p.b_tilde).exp() / (1.0 - omega) * lambda * budget;
        let got = beta_lower_bound(&p, &h, 0.5, budget);
        assert!((got / expected - 1.0).abs() < 1e-12);
    }

    /// Real-coordinate Hessian of `τψ(zᵀQ_r z) + ½β‖z‖²` by central differences
    /// of the analytic gradient.
    fn numeric_hessian(hv: &Harvester, z: &DVector<f64>, tau: f64, beta: f64, step: f64) -> DMatrix<f64> {
        let qr = hv.real_form();
        let grad = |z: &DVector<f64>| -> DVector<f64> {
            let s = (z.transpose() * &qr * z)[(0, 0)];
            &qr * z * (2.0 * tau * hv.phi_slope(s)) + z * beta
        };
        let n = z.len();
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += step;
            zm[i] -= step;
            let col = (grad(&zp) - grad(&zm)) / (2.0 * step);
            hess.set_column(i, &col);
        }
        (&hess + hess.transpose()) * 0.5
    }

    #[test]
    fn dc_weight_convexifies() {
        let p = reference_params();
        let k = 3;
        let p_max = 1.585;
        let budget = p_max * k as f64;
        let tau = 0.6;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut found_negative = false;
        for trial in 0..100 {
            let h = random_vec(&mut rng, k, 3e-3);
            let hv = Harvester {
                h: h.clone(),
                diag: DVector::zeros(k),
                response: Response::Sigmoid(p),
            };
            let beta0 = beta_lower_bound(&p, &h, tau, budget);
            let beta = hv.beta(tau, budget);
            assert!(beta >= 1.05 * beta0);
            let x = DVector::from_fn(k, |_, _| {
                Complex64::from_polar(p_max.sqrt() * rng.random::<f64>().sqrt(), rng.random_range(0.0..6.3))
            });
            let z = DVector::from_fn(2 * k, |i, _| if i < k { x[i].re } else { x[i - k].im });
            let step = 1e-5 * p_max.sqrt();
            let hess = numeric_hessian(&hv, &z, tau, beta, step);
            let min_eig = SymmetricEigen::new(hess).eigenvalues.min();
            assert!(min_eig >= -1e-6 * beta, "trial {trial}: {min_eig} vs β {beta}");

            // Without the quadratic, points past the sigmoid's inflection are
            // not convex.
            let s_target = p.b_tilde + 2.0 / p.a_tilde;
            if s_target > 0.0 {
                let scale = (s_target / hv.received_power(&x)).sqrt();
                let zs = &z * scale;
                let bare = numeric_hessian(&hv, &zs, tau, 0.0, 1e-5 * zs.norm().max(1e-9));
                if SymmetricEigen::new(bare).eigenvalues.min() < 0.0 {
                    found_negative = true;
                }
            }
        }
        assert!(found_negative);
    }

    #[test]
    fn u_gradient_matches_finite_differences() {
        let p = reference_params();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 3;
        let tau = 0.4;
        for _ in 0..10 {
            let h = random_vec(&mut rng, k, 3e-3);
            let hv = Harvester {
                h,
                diag: DVector::from_fn(k, |_, _| rng.random_range(0.0..1e-6)),
                response: Response::Sigmoid(p),
            };
            let beta = hv.beta(tau, 1.585 * k as f64);
            let x0 = random_vec(&mut rng, k, 1.0);
            let u = hv.u_gradient(&x0, tau, beta);
            let f = |x: &DVector<Complex64>| hv.energy(x, tau) + 0.5 * beta * x.norm_squared();
            for _ in 0..50 {
                let d = random_vec(&mut rng, k, 1.0);
                let step = 1e-6;
                let fd = (f(&(&x0 + &d * c(step, 0.0))) - f(&(&x0 - &d * c(step, 0.0)))) / (2.0 * step);
                let analytic = u.iter().zip(d.iter()).map(|(a, b)| (a * b).re).sum::<f64>();
                assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1e-12), "{fd} vs {analytic}");
            }
        }
    }

    #[test]
    fn real_form_reproduces_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let hv = Harvester {
            h: random_vec(&mut rng, 4, 1.0),
            diag: DVector::from_fn(4, |_, _| rng.random_range(0.0..1.0)),
            response: Response::Linear { mu: 1.0 },
        };
        let x = random_vec(&mut rng, 4, 1.0);
        let z = DVector::from_fn(8, |i, _| if i < 4 { x[i].re } else { x[i - 4].im });
        let via_real = (z.transpose() * hv.real_form() * &z)[(0, 0)];
        assert!((via_real - hv.received_power(&x)).abs() < 1e-12 * via_real);
        let lambda = SymmetricEigen::new(hv.real_form()).eigenvalues.max();
        assert!(lambda <= hv.lambda_max() + 1e-12);
    }
}
