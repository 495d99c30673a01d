//! Evaluation of a finished design on the true channels.

use wpifc_core::nalgebra::DVector;
use wpifc_core::energy::HarvestView;
use wpifc_core::{ChannelSet, CsiMode, DesignModel, DesignVariables, NetworkConfig, Result};

/// A design as the true channels see it.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rates: Vec<f64>,
    /// Powers after re-projection.
    pub p: DVector<f64>,
    /// Uniform factor applied to the powers of the pairs still running; 1
    /// when the design is feasible on the true channels.
    pub scale: f64,
    /// Pairs whose harvest cannot even cover the circuit energy; they are
    /// silenced.
    pub outage: Vec<usize>,
    /// Received RF power `s_k(x)` per pair during energy transfer, W.
    pub input_power: Vec<f64>,
    /// Harvester output `f_k(x)` per unit transfer time, W.
    pub output_power: Vec<f64>,
}

impl Evaluation {
    pub fn sum(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Throughput of `vars` on `truth`. When a harvest constraint fails under the
/// true channels the powers are scaled down by one common factor until every
/// constraint holds; a pair that cannot cover its circuit energy at all
/// transmits nothing. Energy beyond the storage capacity is lost.
pub fn evaluate_on_truth(config: &NetworkConfig, truth: &ChannelSet, vars: &DesignVariables) -> Result<Evaluation> {
    evaluate(config, truth, HarvestView::Perfect, CsiMode::PerfectCsi, vars)
}

/// As [`evaluate_on_truth`], with harvest and rates averaged over the
/// estimation error given the estimates in `channels`.
pub fn evaluate_expected(config: &NetworkConfig, channels: &ChannelSet, vars: &DesignVariables) -> Result<Evaluation> {
    evaluate(config, channels, HarvestView::Imperfect, CsiMode::ImperfectCsi, vars)
}

fn evaluate(
    config: &NetworkConfig,
    channels: &ChannelSet,
    view: HarvestView,
    csi: CsiMode,
    vars: &DesignVariables,
) -> Result<Evaluation> {
    let model = DesignModel::new(config, channels, view, csi)?;
    let k = config.num_pairs;
    let tau = vars.tau;
    let rates = model.harvest_rates(&vars.x);
    let input_power = model.harvesters.iter().map(|h| h.received_power(&vars.x)).collect();

    let mut p = vars.p.clone();
    let mut outage = Vec::new();
    let mut scale: f64 = 1.0;
    for i in 0..k {
        let stored = (tau * rates[i] + config.e_initial[i]).min(config.e_max[i]);
        let spare = stored - config.p_circuit[i];
        if spare < 0.0 {
            outage.push(i);
            p[i] = 0.0;
            continue;
        }
        let need = config.amp_eff[i] * (1.0 - tau) * p[i];
        if need > spare {
            scale = scale.min(spare / need);
        }
    }
    if scale < 1.0 {
        p *= scale;
    }
    let rates_out = model.throughput(&DesignVariables {
        x: vars.x.clone(),
        p: p.clone(),
        tau,
    });
    Ok(Evaluation {
        rates: rates_out.per_pair,
        p,
        scale,
        outage,
        input_power,
        output_power: rates,
    })
}
