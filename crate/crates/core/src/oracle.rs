//! Brute-force reference solutions for one or two pairs.
//!
//! Waveforms are gridded by per-ET amplitude and the phase of the second ET
//! (the common phase does not matter). For each `τ` only waveforms whose
//! harvest rates are not dominated by another admissible waveform are
//! kept, since larger harvests only loosen the power caps. Powers are
//! gridded as fractions of their caps. The best grid point is refined by
//! pattern search that keeps `τ` on the harvest bound. Everything is
//! evaluated on the true channels with the exact constraints.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::energy::sigmoid_response;
use crate::error::{Error, Result};
use crate::model::{DesignVariables, EhModel, NetworkConfig};
use crate::surrogate::ProblemKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleResolution {
    pub tau: usize,
    pub amplitude: usize,
    pub phase: usize,
    pub power: usize,
    /// Refinement stops once the step is this fraction of the grid step.
    pub refine_depth: usize,
}

impl Default for OracleResolution {
    fn default() -> Self {
        Self {
            tau: 200,
            amplitude: 50,
            phase: 72,
            power: 50,
            refine_depth: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub objective: f64,
    pub vars: DesignVariables,
    pub evaluations: u64,
}

/// The instance, evaluated without any of the optimizer's machinery.
struct Instance<'a> {
    config: &'a NetworkConfig,
    channels: &'a ChannelSet,
    kind: ProblemKind,
}

/// `(τ, amplitudes, phase, power fractions)`; phase only used with two ETs.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Point {
    tau: f64,
    amp: [f64; 2],
    phase: f64,
    frac: [f64; 2],
}

impl Instance<'_> {
    fn k(&self) -> usize {
        self.config.num_pairs
    }

    fn waveform(&self, amp: [f64; 2], phase: f64) -> Vec<Complex64> {
        (0..self.k())
            .map(|j| Complex64::from_polar(amp[j], if j == 1 { phase } else { 0.0 }))
            .collect()
    }

    /// Energy per unit WET time at pair `k`.
    fn harvest(&self, x: &[Complex64], k: usize) -> f64 {
        let s = x
            .iter()
            .enumerate()
            .map(|(j, xj)| self.channels.h[(k, j)] * xj)
            .sum::<Complex64>()
            .norm_sqr();
        match &self.config.eh_model {
            EhModel::Linear => self.config.mu[k] * s,
            EhModel::NonLinear(nl) => sigmoid_response(s, &nl.pair(k)),
        }
    }

    /// Largest power the harvest constraint allows.
    fn cap(&self, tau: f64, f: f64, k: usize) -> f64 {
        let c = self.config;
        if tau >= 1.0 {
            return 0.0;
        }
        (tau * f + c.e_initial[k] - c.p_circuit[k]) / (c.amp_eff[k] * (1.0 - tau))
    }

    /// Storage and nonnegative-cap checks for a waveform at `tau`.
    fn admissible(&self, tau: f64, f: &[f64]) -> bool {
        let c = self.config;
        (0..self.k()).all(|k| {
            tau * f[k] + c.e_initial[k] <= c.e_max[k] && tau * f[k] + c.e_initial[k] >= c.p_circuit[k]
        })
    }

    fn objective(&self, tau: f64, p: &[f64]) -> f64 {
        let g = &self.channels.g;
        let rates = (0..self.k()).map(|k| {
            let signal = g[(k, k)].norm_sqr() * p[k];
            let interference: f64 = (0..self.k())
                .filter(|&j| j != k)
                .map(|j| g[(j, k)].norm_sqr() * p[j])
                .sum();
            (1.0 - tau) * (1.0 + signal / (interference + self.config.noise_var[k])).log2()
        });
        match self.kind {
            ProblemKind::SumThroughput => rates.sum(),
            ProblemKind::MaxMin => rates.fold(f64::INFINITY, f64::min),
        }
    }

    fn evaluate(&self, pt: &Point) -> Option<f64> {
        if !(0.0..1.0).contains(&pt.tau) {
            return None;
        }
        let c = self.config;
        if (0..self.k()).any(|j| pt.amp[j] < 0.0 || pt.amp[j] * pt.amp[j] > c.p_max[j]) {
            return None;
        }
        if pt.frac.iter().take(self.k()).any(|f| !(0.0..=1.0).contains(f)) {
            return None;
        }
        let x = self.waveform(pt.amp, pt.phase);
        let f: Vec<f64> = (0..self.k()).map(|k| self.harvest(&x, k)).collect();
        if !self.admissible(pt.tau, &f) {
            return None;
        }
        let p: Vec<f64> = (0..self.k()).map(|k| pt.frac[k] * self.cap(pt.tau, f[k], k).max(0.0)).collect();
        Some(self.objective(pt.tau, &p))
    }

    /// Smallest `τ` at which every pair harvests its circuit energy.
    fn lowest_tau(&self, pt: &Point) -> f64 {
        let c = self.config;
        let x = self.waveform(pt.amp, pt.phase);
        (0..self.k())
            .map(|k| {
                let need = c.p_circuit[k] - c.e_initial[k];
                if need <= 0.0 {
                    0.0
                } else {
                    need / self.harvest(&x, k)
                }
            })
            .fold(0.0, f64::max)
    }

    fn vars(&self, pt: &Point) -> DesignVariables {
        let x = self.waveform(pt.amp, pt.phase);
        let k = self.k();
        DesignVariables {
            p: DVector::from_fn(k, |i, _| pt.frac[i] * self.cap(pt.tau, self.harvest(&x, i), i).max(0.0)),
            x: DVector::from_vec(x),
            tau: pt.tau,
        }
    }
}

/// Best design on the grid, refined locally.
pub fn grid_oracle(
    config: &NetworkConfig,
    channels: &ChannelSet,
    kind: ProblemKind,
    resolution: &OracleResolution,
) -> Result<OracleResult> {
    let k = config.num_pairs;
    if k > 2 {
        return Err(Error::OracleTooLarge(k));
    }
    if channels.num_pairs() != k {
        return Err(Error::Dimension("channels do not match the config".into()));
    }
    let inst = Instance { config, channels, kind };
    let r = resolution;

    // Waveform grid with its harvest rates; amplitudes include zero.
    let amp_steps = |j: usize| -> Vec<f64> {
        (0..=r.amplitude)
            .map(|i| config.p_max[j].sqrt() * i as f64 / r.amplitude as f64)
            .collect()
    };
    let phases: Vec<f64> = if k == 2 {
        (0..r.phase).map(|i| std::f64::consts::TAU * i as f64 / r.phase as f64).collect()
    } else {
        vec![0.0]
    };
    let mut waveforms = Vec::new();
    for &a0 in &amp_steps(0) {
        let second = if k == 2 { amp_steps(1) } else { vec![0.0] };
        for &a1 in &second {
            for &ph in &phases {
                let x = inst.waveform([a0, a1], ph);
                let f: Vec<f64> = (0..k).map(|i| inst.harvest(&x, i)).collect();
                waveforms.push(([a0, a1], ph, f));
            }
        }
    }

    let taus: Vec<f64> = (0..r.tau).map(|i| (i as f64 + 0.5) / r.tau as f64).collect();
    let fracs: Vec<f64> = (0..=r.power).map(|i| i as f64 / r.power as f64).collect();
    let best = taus
        .par_iter()
        .map(|&tau| {
            let mut front: Vec<&([f64; 2], f64, Vec<f64>)> =
                waveforms.iter().filter(|w| inst.admissible(tau, &w.2)).collect();
            front.sort_by(|a, b| b.2[0].total_cmp(&a.2[0]).then(b.2.get(1).unwrap_or(&0.0).total_cmp(a.2.get(1).unwrap_or(&0.0))));
            let mut kept = Vec::new();
            let mut top = f64::NEG_INFINITY;
            for w in front {
                let second = w.2.get(1).copied().unwrap_or(0.0);
                if second > top || kept.is_empty() {
                    top = top.max(second);
                    kept.push(w);
                }
            }
            let mut best: Option<(f64, Point)> = None;
            let mut evaluations = 0u64;
            for w in kept {
                let caps: Vec<f64> = (0..k).map(|i| inst.cap(tau, w.2[i], i).max(0.0)).collect();
                let second_fracs: &[f64] = if k == 2 { &fracs } else { &[0.0] };
                for &f0 in &fracs {
                    for &f1 in second_fracs {
                        let frac = [f0, f1];
                        let p: Vec<f64> = (0..k).map(|i| frac[i] * caps[i]).collect();
                        let v = inst.objective(tau, &p);
                        evaluations += 1;
                        if best.as_ref().is_none_or(|(b, _)| v > *b) {
                            best = Some((
                                v,
                                Point {
                                    tau,
                                    amp: w.0,
                                    phase: w.1,
                                    frac,
                                },
                            ));
                        }
                    }
                }
            }
            (best, evaluations)
        })
        .collect::<Vec<_>>();
    let evaluations: u64 = best.iter().map(|b| b.1).sum();
    let (mut value, mut point) = best
        .into_iter()
        .filter_map(|b| b.0)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(Error::OracleEmpty)?;

    // Pattern search from a tenth of the grid step down to its
    // `refine_depth`-th part, along coordinates and pairwise diagonals so
    // that ridges coupling two coordinates do not stall it.
    let steps = [
        1.0 / r.tau as f64,
        config.p_max[0].sqrt() / r.amplitude as f64,
        config.p_max.get(1).map_or(0.0, |p| p.sqrt()) / r.amplitude as f64,
        std::f64::consts::TAU / r.phase as f64,
        1.0 / r.power as f64,
        1.0 / r.power as f64,
    ];
    let dims: Vec<usize> = if k == 2 { (0..6).collect() } else { vec![0, 1, 4] };
    let mut directions: Vec<[f64; 6]> = Vec::new();
    for (a, &da) in dims.iter().enumerate() {
        for sa in [1.0, -1.0] {
            let mut d = [0.0; 6];
            d[da] = sa;
            directions.push(d);
            for &db in &dims[a + 1..] {
                for sb in [1.0, -1.0] {
                    let mut d = d;
                    d[db] = sb;
                    directions.push(d);
                }
            }
        }
    }
    let mut scale = 0.1;
    let floor = 1.0 / r.refine_depth.max(10) as f64;
    let mut evals = evaluations;
    while scale >= floor * (1.0 - 1e-12) {
        let mut improved = false;
        for dir in &directions {
            loop {
                let mut cand = point;
                let delta = |d: usize| dir[d] * steps[d] * scale;
                cand.tau += delta(0);
                cand.amp[0] += delta(1);
                cand.amp[1] += delta(2);
                cand.phase += delta(3);
                cand.frac[0] = (cand.frac[0] + delta(4)).clamp(0.0, 1.0);
                cand.frac[1] = (cand.frac[1] + delta(5)).clamp(0.0, 1.0);
                for j in 0..k {
                    cand.amp[j] = cand.amp[j].clamp(0.0, config.p_max[j].sqrt());
                }
                // Lift τ onto the harvest bound so moves can follow it.
                cand.tau = cand.tau.max(inst.lowest_tau(&cand));
                evals += 1;
                match inst.evaluate(&cand) {
                    Some(v) if v > value => {
                        value = v;
                        point = cand;
                        improved = true;
                    }
                    _ => break,
                }
            }
        }
        if !improved {
            scale *= 0.5;
        }
    }
    Ok(OracleResult {
        objective: value,
        vars: inst.vars(&point),
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::energy::{HarvestView, Harvester};

    fn coarse() -> OracleResolution {
        OracleResolution {
            tau: 60,
            amplitude: 12,
            phase: 24,
            power: 12,
            refine_depth: 1000,
        }
    }

    #[test]
    fn rejects_three_pairs() {
        let cfg = NetworkConfig::reference(3);
        let ch = generate_channels(&cfg, 0);
        assert!(matches!(
            grid_oracle(&cfg, &ch, ProblemKind::SumThroughput, &coarse()),
            Err(Error::OracleTooLarge(3))
        ));
    }

    #[test]
    fn reports_empty_feasible_set() {
        let mut cfg = NetworkConfig::reference(1);
        cfg.p_circuit = vec![1.0];
        cfg.e_max = vec![2.0];
        let ch = generate_channels(&cfg, 0);
        assert!(matches!(
            grid_oracle(&cfg, &ch, ProblemKind::SumThroughput, &coarse()),
            Err(Error::OracleEmpty)
        ));
    }

    #[test]
    fn single_pair_matches_tight_harvest_scan() {
        let cfg = NetworkConfig::reference(1);
        let ch = generate_channels(&cfg, 4);
        let res = grid_oracle(&cfg, &ch, ProblemKind::SumThroughput, &OracleResolution::default()).unwrap();
        // Full power and all harvested energy spent; scan τ finely.
        let f = ch.h[(0, 0)].norm_sqr() * cfg.p_max[0];
        let a = ch.g[(0, 0)].norm_sqr() / cfg.noise_var[0];
        let mut best: f64 = 0.0;
        for i in 1..1_000_000 {
            let tau = i as f64 * 1e-6;
            if tau * f > cfg.e_max[0] {
                break;
            }
            let p = ((tau * f - cfg.p_circuit[0]) / (1.0 - tau)).max(0.0);
            best = best.max((1.0 - tau) * (1.0 + a * p).log2());
        }
        assert!((res.objective / best - 1.0).abs() < 1e-4, "{} vs {best}", res.objective);
        let hv = Harvester::for_pair(&cfg, &ch, 0, HarvestView::Perfect);
        assert!(res.vars.tau * hv.rate(&res.vars.x) <= cfg.e_max[0] * (1.0 + 1e-12));
    }

    #[test]
    fn invariant_to_global_phase() {
        let cfg = NetworkConfig::reference(2);
        let ch = generate_channels(&cfg, 7);
        let inst = Instance {
            config: &cfg,
            channels: &ch,
            kind: ProblemKind::SumThroughput,
        };
        let x = inst.waveform([1.0, 0.7], 1.3);
        let rotated: Vec<Complex64> = x.iter().map(|v| v * Complex64::from_polar(1.0, 0.77)).collect();
        for k in 0..2 {
            assert!((inst.harvest(&x, k) / inst.harvest(&rotated, k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_to_swapping_identical_pairs() {
        let cfg = NetworkConfig::reference(2);
        let mut ch = generate_channels(&cfg, 9);
        // Make the two pairs mirror images of each other.
        ch.h[(1, 1)] = ch.h[(0, 0)];
        ch.h[(1, 0)] = ch.h[(0, 1)];
        ch.g = ch.h.clone();
        let swapped = {
            let mut s = ch.clone();
            s.h[(0, 0)] = ch.h[(1, 1)];
            s.h[(1, 1)] = ch.h[(0, 0)];
            s.h[(0, 1)] = ch.h[(1, 0)];
            s.h[(1, 0)] = ch.h[(0, 1)];
            s.g = s.h.clone();
            s
        };
        for kind in [ProblemKind::SumThroughput, ProblemKind::MaxMin] {
            let a = grid_oracle(&cfg, &ch, kind, &coarse()).unwrap().objective;
            let b = grid_oracle(&cfg, &swapped, kind, &coarse()).unwrap().objective;
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = NetworkConfig::reference(2);
        let ch = generate_channels(&cfg, 2);
        let a = grid_oracle(&cfg, &ch, ProblemKind::MaxMin, &coarse()).unwrap();
        let b = grid_oracle(&cfg, &ch, ProblemKind::MaxMin, &coarse()).unwrap();
        assert_eq!(a, b);
    }
}
