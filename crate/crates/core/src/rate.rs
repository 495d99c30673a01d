//! SINR and throughput of the information-transfer phase.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::model::NetworkConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsiMode {
    PerfectCsi,
    ImperfectCsi,
}

/// Row `k` of `a`, `b` and `q` holds the pair-`k` vectors `a_k`, `b_k` and
/// `q_k = a_k + b_k`, so that `γ_k = a_kᵀp / (b_kᵀp + σ_k²)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateCoefficients {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub noise: DVector<f64>,
}

impl RateCoefficients {
    pub fn num_pairs(&self) -> usize {
        self.noise.len()
    }

    /// `a_kᵀ p`.
    pub fn signal(&self, p: &DVector<f64>, k: usize) -> f64 {
        self.a.row(k).dot(&p.transpose())
    }

    /// `b_kᵀ p + σ_k²`.
    pub fn interference_plus_noise(&self, p: &DVector<f64>, k: usize) -> f64 {
        self.b.row(k).dot(&p.transpose()) + self.noise[k]
    }

    /// `q_kᵀ p + σ_k²`.
    pub fn total_plus_noise(&self, p: &DVector<f64>, k: usize) -> f64 {
        self.q.row(k).dot(&p.transpose()) + self.noise[k]
    }
}

/// Perfect CSI: `a_k[k] = |g_kk|²`, `b_k[j] = |g_jk|²` for `j ≠ k`.
/// Imperfect CSI: the same on `ĝ`, with the phase-2 error variance added to
/// every entry of `b_k` including the diagonal.
pub fn build_coefficients(channels: &ChannelSet, config: &NetworkConfig, mode: CsiMode) -> Result<RateCoefficients> {
    let k = config.num_pairs;
    if channels.num_pairs() != k || channels.g.ncols() != k || config.noise_var.len() != k {
        return Err(Error::Dimension(format!(
            "config has {k} pairs, channels have {}",
            channels.num_pairs()
        )));
    }
    let (g, err) = match mode {
        CsiMode::PerfectCsi => (&channels.g, None),
        CsiMode::ImperfectCsi => (&channels.g_hat, Some(&channels.g_err_var)),
    };
    let mut a = DMatrix::zeros(k, k);
    let mut b = DMatrix::zeros(k, k);
    for row in 0..k {
        a[(row, row)] = g[(row, row)].norm_sqr();
        for j in 0..k {
            let cross = if j == row { 0.0 } else { g[(j, row)].norm_sqr() };
            b[(row, j)] = match err {
                Some(e) if e[(j, row)] != 0.0 => cross + e[(j, row)],
                _ => cross,
            };
        }
    }
    let q = &a + &b;
    Ok(RateCoefficients {
        a,
        b,
        q,
        noise: DVector::from_column_slice(&config.noise_var),
    })
}

pub fn sinr(p: &DVector<f64>, coeffs: &RateCoefficients, k: usize) -> f64 {
    coeffs.signal(p, k) / coeffs.interference_plus_noise(p, k)
}

/// Per-pair throughput in bps/Hz, `R_k = (1 - τ) log₂(1 + γ_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Throughput {
    pub per_pair: Vec<f64>,
}

impl Throughput {
    pub fn sum(&self) -> f64 {
        self.per_pair.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.per_pair.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn throughput(p: &DVector<f64>, tau: f64, coeffs: &RateCoefficients) -> Throughput {
    let per_pair = (0..coeffs.num_pairs())
        .map(|k| (1.0 - tau) * (1.0 + sinr(p, coeffs, k)).log2())
        .collect();
    Throughput { per_pair }
}

/// Powers under per-pair caps that maximize the smallest SINR, and that SINR.
/// For a target `γ` the least powers meeting it solve
/// `(I - γ D⁻¹B) p = γ D⁻¹σ` with `D = diag(a_kk)`; the largest target whose
/// solution is nonnegative and within the caps is found by bisection.
pub fn maxmin_powers(coeffs: &RateCoefficients, caps: &DVector<f64>) -> (f64, DVector<f64>) {
    let k = coeffs.num_pairs();
    let zero = (0.0, DVector::zeros(k));
    if (0..k).any(|i| !(caps[i] > 0.0) || !(coeffs.a[(i, i)] > 0.0)) {
        return zero;
    }
    let least = |gamma: f64| -> Option<DVector<f64>> {
        let m = DMatrix::from_fn(k, k, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - gamma * coeffs.b[(i, j)] / coeffs.a[(i, i)]
        });
        let rhs = DVector::from_fn(k, |i, _| gamma * coeffs.noise[i] / coeffs.a[(i, i)]);
        let p = m.lu().solve(&rhs)?;
        let fits = (0..k).all(|i| p[i] >= 0.0 && p[i] <= caps[i]);
        fits.then_some(p)
    };
    let mut lo = 0.0;
    let mut hi = (0..k)
        .map(|i| coeffs.a[(i, i)] * caps[i] / coeffs.noise[i])
        .fold(f64::INFINITY, f64::min);
    let mut best = DVector::zeros(k);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match least(mid) {
            Some(p) => {
                lo = mid;
                best = p;
            }
            None => hi = mid,
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let achieved = (0..k).map(|i| sinr(&best, coeffs, i)).fold(f64::INFINITY, f64::min);
    (achieved, best)
}
