//! Rician channel realizations and the LMMSE estimate/error split.
//!
//! Index conventions: `h[(k, j)]` is the phase-1 link from ET `j` to ER `k`,
//! so the received amplitude at ER `k` is `(h x)[k]`. `g[(j, k)]` is the
//! phase-2 link from IT `j` to IR `k`. Both links `h[(i, j)]` and `g[(i, j)]`
//! join IT/ER `i` with ET/IR `j`, so they share the distance `d_ij` and, under
//! reciprocity, the same value.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{CsiModel, NetworkConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub h: DMatrix<Complex64>,
    pub g: DMatrix<Complex64>,
    pub h_hat: DMatrix<Complex64>,
    pub g_hat: DMatrix<Complex64>,
    /// Per-link estimation-error variances; all zero for perfect CSI.
    pub h_err_var: DMatrix<f64>,
    pub g_err_var: DMatrix<f64>,
    /// Deterministic line-of-sight mean of every link.
    pub los_mean: DMatrix<Complex64>,
    /// Variance of the scattered component of every link.
    pub nlos_var: DMatrix<f64>,
    pub seed: u64,
}

impl ChannelSet {
    pub fn num_pairs(&self) -> usize {
        self.h.nrows()
    }

    /// Perfect-CSI set from explicit matrices.
    pub fn from_true(h: DMatrix<Complex64>, g: DMatrix<Complex64>) -> Self {
        let k = h.nrows();
        Self {
            h_hat: h.clone(),
            g_hat: g.clone(),
            h,
            g,
            h_err_var: DMatrix::zeros(k, k),
            g_err_var: DMatrix::zeros(k, k),
            los_mean: DMatrix::zeros(k, k),
            nlos_var: DMatrix::zeros(k, k),
            seed: 0,
        }
    }

    /// The estimates treated as if they were exact.
    pub fn estimates_as_truth(&self) -> ChannelSet {
        let k = self.num_pairs();
        ChannelSet {
            h: self.h_hat.clone(),
            g: self.g_hat.clone(),
            h_hat: self.h_hat.clone(),
            g_hat: self.g_hat.clone(),
            h_err_var: DMatrix::zeros(k, k),
            g_err_var: DMatrix::zeros(k, k),
            los_mean: self.los_mean.clone(),
            nlos_var: self.nlos_var.clone(),
            seed: self.seed,
        }
    }

    pub fn has_estimation_error(&self) -> bool {
        self.h_err_var.iter().any(|&v| v != 0.0) || self.g_err_var.iter().any(|&v| v != 0.0)
    }

    /// CSV with columns `matrix,row,col,re,im`. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("matrix,row,col,re,im\n");
        let k = self.num_pairs();
        let complex: [(&str, &DMatrix<Complex64>); 5] = [
            ("h", &self.h),
            ("g", &self.g),
            ("h_hat", &self.h_hat),
            ("g_hat", &self.g_hat),
            ("los_mean", &self.los_mean),
        ];
        for (name, m) in complex {
            for i in 0..k {
                for j in 0..k {
                    let z = m[(i, j)];
                    let _ = writeln!(out, "{name},{i},{j},{:?},{:?}", z.re, z.im);
                }
            }
        }
        let real: [(&str, &DMatrix<f64>); 3] = [
            ("h_err_var", &self.h_err_var),
            ("g_err_var", &self.g_err_var),
            ("nlos_var", &self.nlos_var),
        ];
        for (name, m) in real {
            for i in 0..k {
                for j in 0..k {
                    let _ = writeln!(out, "{name},{i},{j},{:?},0.0", m[(i, j)]);
                }
            }
        }
        out
    }

    /// Parse [`ChannelSet::to_csv`] output. Only `h` and `g` are required;
    /// missing estimates default to the true channels and missing variances
    /// to zero.
    pub fn from_csv(text: &str) -> Result<ChannelSet> {
        let mut entries: Vec<(String, usize, usize, f64, f64)> = Vec::new();
        let mut lines = text.lines();
        match lines.next() {
            Some(header) if header.trim() == "matrix,row,col,re,im" => {}
            _ => return Err(Error::ChannelFile("missing header".into())),
        }
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::ChannelFile(format!("line {}: malformed row `{line}`", n + 2));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(bad());
            }
            let row = fields[1].parse().map_err(|_| bad())?;
            let col = fields[2].parse().map_err(|_| bad())?;
            let re = fields[3].parse().map_err(|_| bad())?;
            let im = fields[4].parse().map_err(|_| bad())?;
            entries.push((fields[0].to_string(), row, col, re, im));
        }
        let k = entries
            .iter()
            .filter(|e| e.0 == "h")
            .map(|e| e.1.max(e.2) + 1)
            .max()
            .ok_or_else(|| Error::ChannelFile("no `h` entries".into()))?;
        let collect = |name: &str| -> Result<Option<DMatrix<Complex64>>> {
            let mut m = DMatrix::from_element(k, k, Complex64::new(f64::NAN, f64::NAN));
            let mut count = 0;
            for (n, i, j, re, im) in &entries {
                if n == name {
                    if *i >= k || *j >= k {
                        return Err(Error::ChannelFile(format!(
                            "`{name}` index ({i}, {j}) out of range for {k} pairs"
                        )));
                    }
                    m[(*i, *j)] = Complex64::new(*re, *im);
                    count += 1;
                }
            }
            match count {
                0 => Ok(None),
                c if c == k * k && m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    Ok(Some(m))
                }
                _ => Err(Error::ChannelFile(format!("`{name}` is incomplete"))),
            }
        };
        let h = collect("h")?.ok_or_else(|| Error::ChannelFile("missing `h`".into()))?;
        let g = collect("g")?.ok_or_else(|| Error::ChannelFile("missing `g`".into()))?;
        let real = |name: &str| -> Result<DMatrix<f64>> {
            Ok(collect(name)?
                .map(|m| m.map(|z| z.re))
                .unwrap_or_else(|| DMatrix::zeros(k, k)))
        };
        Ok(ChannelSet {
            h_hat: collect("h_hat")?.unwrap_or_else(|| h.clone()),
            g_hat: collect("g_hat")?.unwrap_or_else(|| g.clone()),
            h,
            g,
            h_err_var: real("h_err_var")?,
            g_err_var: real("g_err_var")?,
            los_mean: collect("los_mean")?.unwrap_or_else(|| DMatrix::zeros(k, k)),
            nlos_var: real("nlos_var")?,
            seed: 0,
        })
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Draw one Rician realization with perfect CSI (`h_hat = h`, `g_hat = g`).
///
/// Each entry is `[√(M/(M+1)) + √(1/(M+1)) w] √(c0 (d/d0)^-v)` with
/// `w ~ CN(0, 1)` and the line-of-sight term fixed to `1 + 0j`. Under
/// reciprocity `g` is a copy of `h`; otherwise it is drawn independently.
pub fn generate_channels(config: &NetworkConfig, seed: u64) -> ChannelSet {
    let k = config.num_pairs;
    let geo = &config.geometry;
    let m = geo.rician_factor;
    let los_share = (m / (m + 1.0)).sqrt();
    let nlos_share = (1.0 / (m + 1.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let gain = DMatrix::from_fn(k, k, |i, j| geo.path_gain(i, j));
    let amp = gain.map(f64::sqrt);
    let los_mean = amp.map(|a| Complex64::new(los_share * a, 0.0));
    let nlos_var = gain.map(|pl| pl / (m + 1.0));

    let draw = |rng: &mut ChaCha8Rng| {
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let w = complex_normal(rng);
                out[(i, j)] = (Complex64::new(los_share, 0.0) + w * nlos_share) * amp[(i, j)];
            }
        }
        out
    };
    let h = draw(&mut rng);
    let g = if config.csi.reciprocity {
        h.clone()
    } else {
        draw(&mut rng)
    };
    ChannelSet {
        h_hat: h.clone(),
        g_hat: g.clone(),
        h,
        g,
        h_err_var: DMatrix::zeros(k, k),
        g_err_var: DMatrix::zeros(k, k),
        los_mean,
        nlos_var,
        seed,
    }
}

/// Split `truth - mean` into an estimate and an independent error.
///
/// With `c = truth - mean` of variance `s²`, the estimate is
/// `mean + ρ² c + ρ √(1-ρ²) s w`, `w ~ CN(0, 1)`. Then `ĥ - mean` has
/// variance `ρ² s²`, the error `truth - ĥ` has variance `(1-ρ²) s²`, and the
/// two are jointly Gaussian and uncorrelated. `ρ = 1` returns the truth
/// untouched.
fn estimate_link(
    truth: Complex64,
    mean: Complex64,
    var: f64,
    rho: f64,
    rng: &mut ChaCha8Rng,
) -> (Complex64, Complex64) {
    let w = complex_normal(rng);
    if rho == 1.0 {
        return (truth, truth);
    }
    let spread = rho * ((1.0 - rho * rho) * var).sqrt();
    let est = mean + (truth - mean) * (rho * rho) + w * spread;
    let err = truth - est;
    (est, est + err)
}

/// Attach LMMSE estimates to a realization.
///
/// The truth of the returned set is `ĥ + Δh` evaluated in floating point, so
/// the decomposition `h = ĥ + Δh` holds exactly; it differs from the input
/// truth by at most rounding. With `ρ = 1` the input is returned unchanged
/// apart from the error variances, which are exactly zero.
///
/// Under reciprocity the phase-2 truth stays equal to the phase-1 truth. When
/// both links share the same estimation quality and variance the phase-2
/// estimate reuses the phase-1 estimate; otherwise it is drawn from the same
/// conditional law given the common truth.
pub fn apply_csi_error(true_channels: &ChannelSet, csi: &CsiModel, seed: u64) -> ChannelSet {
    let k = true_channels.num_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c5c1_0000_0001);
    let var_h = true_channels.nlos_var.map(|v| csi.sigma2_h.unwrap_or(v));
    let var_g = true_channels.nlos_var.map(|v| csi.sigma2_g.unwrap_or(v));
    let h_err_var = var_h.map(|v| csi.error_variance_h(v));
    let g_err_var = var_g.map(|v| csi.error_variance_g(v));

    let mut h = DMatrix::zeros(k, k);
    let mut h_hat = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let (est, truth) = estimate_link(
                true_channels.h[(i, j)],
                true_channels.los_mean[(i, j)],
                var_h[(i, j)],
                csi.rho_h,
                &mut rng,
            );
            h_hat[(i, j)] = est;
            h[(i, j)] = truth;
        }
    }

    let shared = csi.reciprocity && csi.rho_g == csi.rho_h && csi.sigma2_g == csi.sigma2_h;
    let (g, g_hat) = if shared {
        (h.clone(), h_hat.clone())
    } else {
        let base = if csi.reciprocity { &h } else { &true_channels.g };
        let mut g = DMatrix::zeros(k, k);
        let mut g_hat = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let (est, truth) = estimate_link(
                    base[(i, j)],
                    true_channels.los_mean[(i, j)],
                    var_g[(i, j)],
                    csi.rho_g,
                    &mut rng,
                );
                g_hat[(i, j)] = est;
                g[(i, j)] = truth;
            }
        }
        if csi.reciprocity {
            // Keep phase-2 truth bitwise equal to phase 1.
            g = h.clone();
        }
        (g, g_hat)
    };

    ChannelSet {
        h,
        g,
        h_hat,
        g_hat,
        h_err_var,
        g_err_var,
        los_mean: true_channels.los_mean.clone(),
        nlos_var: true_channels.nlos_var.clone(),
        seed,
    }
}
