//! Instances shared by unit tests.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::channel::generate_channels;
use crate::energy::HarvestView;
use crate::model::{DesignVariables, NetworkConfig};
use crate::rate::CsiMode;
use crate::surrogate::DesignModel;

/// First instance from `seed` on whose channels [`feasible_point`]
/// exists.
pub fn instance(cfg: &NetworkConfig, seed: u64) -> (DesignModel, DesignVariables) {
    (seed..seed + 100)
        .find_map(|s| {
            let ch = generate_channels(cfg, s);
            let m = DesignModel::new(cfg, &ch, HarvestView::Perfect, CsiMode::PerfectCsi).unwrap();
            feasible_point(&m).map(|v| (m, v))
        })
        .expect("no feasible instance")
}

pub fn model(k: usize, seed: u64) -> (DesignModel, DesignVariables) {
    instance(&NetworkConfig::reference(k), seed)
}

/// Full-power in-phase waveform, the middle of the feasible τ interval and
/// equal powers at the largest feasible level.
pub fn feasible_point(m: &DesignModel) -> Option<DesignVariables> {
    let k = m.num_pairs();
    let x = DVector::from_fn(k, |j, _| Complex64::new(m.config.p_max[j].sqrt(), 0.0));
    let f = m.harvest_rates(&x);
    let c = &m.config;
    let lo = (0..k).map(|i| c.p_circuit[i] / f[i]).fold(0.0, f64::max);
    let hi = (0..k).map(|i| c.e_max[i] / f[i]).fold(1.0, f64::min);
    if lo >= hi {
        return None;
    }
    let tau = 0.5 * (lo + hi);
    let p = (0..k)
        .map(|i| (tau * f[i] - c.p_circuit[i]) / (c.amp_eff[i] * (1.0 - tau)))
        .fold(f64::INFINITY, f64::min);
    Some(DesignVariables {
        x,
        p: DVector::from_element(k, p),
        tau,
    })
}
