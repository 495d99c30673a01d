//! End-to-end runs through the public API: config document, channels,
//! optimizer, and an independent check of the constraints and rates.

use proptest::prelude::*;
use wpifc_core::model::to_document;
use wpifc_core::nalgebra::DVector;
use wpifc_core::num_complex::Complex64;
use wpifc_core::{
    apply_csi_error, generate_channels, load_config, run, ChannelSet, CsiMode, DesignVariables, EhModel,
    NetworkConfig, NonlinearEhParams, OuterOptions, ProblemKind, SolverOptions, TauInit, Termination,
};

const DOC: &str = r#"{
    "num_pairs": 3,
    "p_max_dbm": 32,
    "p_circuit_dbm": -23,
    "amp_eff": 1,
    "mu": 1,
    "noise_dbm": -70,
    "e_initial_uj": 0,
    "e_max_uj": 50,
    "eh_model": {"kind": "linear"},
    "csi": {"rho_h": 0.9, "rho_g": 0.9},
    "geometry": {
        "rician_factor": 3,
        "ref_attenuation_db": -20,
        "ref_distance_m": 1,
        "pathloss_exp": 3,
        "layout": {"kind": "symmetric", "line_length_m": 50}
    }
}"#;

fn options(seed: u64) -> OuterOptions {
    OuterOptions {
        tau_init: TauInit::Random { seed },
        ..OuterOptions::default()
    }
}

/// Harvest per unit transfer time of pair `k`, from the channel entries.
fn harvest(cfg: &NetworkConfig, ch: &ChannelSet, x: &DVector<Complex64>, k: usize) -> f64 {
    let s = (0..cfg.num_pairs).map(|j| ch.h[(k, j)] * x[j]).sum::<Complex64>().norm_sqr();
    cfg.mu[k] * s
}

/// Largest violation of the power, harvest and storage constraints, joules
/// or watts as appropriate, relative to the quantity it bounds.
fn violation(cfg: &NetworkConfig, ch: &ChannelSet, v: &DesignVariables) -> f64 {
    let mut worst: f64 = (-v.tau).max(v.tau - 1.0);
    for k in 0..cfg.num_pairs {
        let e = v.tau * harvest(cfg, ch, &v.x, k) + cfg.e_initial[k];
        let need = cfg.p_circuit[k] + cfg.amp_eff[k] * (1.0 - v.tau) * v.p[k];
        worst = worst
            .max(v.x[k].norm_sqr() / cfg.p_max[k] - 1.0)
            .max(-v.p[k])
            .max((need - e) / cfg.e_max[k])
            .max((e - cfg.e_max[k]) / cfg.e_max[k]);
    }
    worst
}

fn rates(cfg: &NetworkConfig, ch: &ChannelSet, v: &DesignVariables) -> Vec<f64> {
    let k = cfg.num_pairs;
    (0..k)
        .map(|i| {
            let signal = ch.g[(i, i)].norm_sqr() * v.p[i];
            let interference: f64 = (0..k).filter(|&j| j != i).map(|j| ch.g[(j, i)].norm_sqr() * v.p[j]).sum();
            (1.0 - v.tau) * (1.0 + signal / (interference + cfg.noise_var[i])).log2()
        })
        .collect()
}

#[test]
fn document_to_design() {
    let cfg = load_config(DOC).unwrap();
    let ch = generate_channels(&cfg, 2);
    for kind in [ProblemKind::SumThroughput, ProblemKind::MaxMin] {
        let (vars, trace) = run(&cfg, &ch, kind, &options(2), &SolverOptions::default()).unwrap();
        assert!(violation(&cfg, &ch, &vars) <= 1e-9);
        let r = rates(&cfg, &ch, &vars);
        let objective = match kind {
            ProblemKind::SumThroughput => r.iter().sum::<f64>(),
            ProblemKind::MaxMin => r.iter().copied().fold(f64::INFINITY, f64::min),
        };
        let last = trace.outer.last().unwrap();
        assert!((last.objective - objective).abs() <= 1e-9 * objective.max(1.0));
        assert_eq!(last.tau, vars.tau);
        assert_eq!(trace.termination, Termination::Converged);
    }
}

#[test]
fn document_round_trip_gives_the_same_design() {
    let cfg = load_config(DOC).unwrap();
    let again = load_config(&to_document(&cfg)).unwrap();
    assert_eq!(cfg, again);
    let ch = generate_channels(&cfg, 5);
    let a = run(&cfg, &ch, ProblemKind::SumThroughput, &options(5), &SolverOptions::default()).unwrap();
    let b = run(&again, &ch, ProblemKind::SumThroughput, &options(5), &SolverOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn channel_file_round_trip_gives_the_same_design() {
    let cfg = NetworkConfig::reference(3);
    let ch = apply_csi_error(&generate_channels(&cfg, 9), &cfg.csi, 9);
    let back = ChannelSet::from_csv(&ch.to_csv()).unwrap();
    let opts = OuterOptions {
        csi: CsiMode::ImperfectCsi,
        ..options(9)
    };
    let a = run(&cfg, &ch, ProblemKind::MaxMin, &opts, &SolverOptions::default()).unwrap();
    let b = run(&cfg, &back, ProblemKind::MaxMin, &opts, &SolverOptions::default()).unwrap();
    assert_eq!(a.0, b.0);
}

#[test]
fn warm_start_from_the_result_does_not_lose_ground() {
    let cfg = NetworkConfig::reference(4);
    let ch = generate_channels(&cfg, 1);
    let (first, trace) = run(&cfg, &ch, ProblemKind::SumThroughput, &options(1), &SolverOptions::default()).unwrap();
    let opts = OuterOptions {
        warm_start: Some(first.clone()),
        ..options(1)
    };
    let (second, again) = run(&cfg, &ch, ProblemKind::SumThroughput, &opts, &SolverOptions::default()).unwrap();
    let before = trace.outer.last().unwrap().objective;
    assert!(again.outer.last().unwrap().objective >= before - 1e-9);
    assert!(violation(&cfg, &ch, &second) <= 1e-9);
}

#[test]
fn joint_steps_only_help() {
    let cfg = NetworkConfig::reference(2);
    for seed in [0, 1, 2, 4] {
        let ch = generate_channels(&cfg, seed);
        for kind in [ProblemKind::SumThroughput, ProblemKind::MaxMin] {
            let with = run(&cfg, &ch, kind, &options(seed), &SolverOptions::default()).unwrap();
            let opts = OuterOptions {
                joint_refinement: false,
                ..options(seed)
            };
            let without = run(&cfg, &ch, kind, &opts, &SolverOptions::default()).unwrap();
            let obj = |t: &wpifc_core::RunTrace| t.outer.last().unwrap().objective;
            assert!(obj(&with.1) >= obj(&without.1) - 1e-6, "seed {seed} {kind:?}");
        }
    }
}

#[test]
fn sigmoid_design_respects_the_sigmoid_harvest() {
    let mut cfg = NetworkConfig::reference(3);
    cfg.eh_model = EhModel::NonLinear(NonlinearEhParams::reference(3));
    let ch = generate_channels(&cfg, 3);
    let (vars, _) = run(&cfg, &ch, ProblemKind::SumThroughput, &options(3), &SolverOptions::default()).unwrap();
    let nl = NonlinearEhParams::reference(3);
    for k in 0..3 {
        let s = (0..3).map(|j| ch.h[(k, j)] * vars.x[j]).sum::<Complex64>().norm_sqr();
        let omega = 1.0 / (1.0 + (nl.a_tilde[k] * nl.b_tilde[k]).exp());
        let logistic = 1.0 / (1.0 + (-nl.a_tilde[k] * (s - nl.b_tilde[k])).exp());
        let e = vars.tau * nl.n_sat[k] * (logistic - omega) / (1.0 - omega);
        let need = cfg.p_circuit[k] + (1.0 - vars.tau) * vars.p[k];
        assert!(need <= e * (1.0 + 1e-9), "pair {k}: needs {need}, harvests {e}");
        assert!(e <= cfg.e_max[k] * (1.0 + 1e-9));
    }
}

#[test]
fn waveform_design_beats_power_only() {
    let cfg = NetworkConfig::reference(3);
    let ch = generate_channels(&cfg, 4);
    let opts = OuterOptions {
        baseline: true,
        ..options(4)
    };
    let (vars, _) = run(&cfg, &ch, ProblemKind::SumThroughput, &opts, &SolverOptions::default()).unwrap();
    let (full, _) = run(&cfg, &ch, ProblemKind::SumThroughput, &options(4), &SolverOptions::default()).unwrap();
    let sum = |v: &DesignVariables| rates(&cfg, &ch, v).iter().sum::<f64>();
    assert!(sum(&full) >= sum(&vars) - 1e-6);
    assert!(vars.tau > 0.0 && vars.tau < 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn designs_are_feasible_and_reproducible(seed in 0u64..500, k in 1usize..=3, maxmin in any::<bool>()) {
        let cfg = NetworkConfig::reference(k);
        let ch = generate_channels(&cfg, seed);
        let kind = if maxmin { ProblemKind::MaxMin } else { ProblemKind::SumThroughput };
        let first = run(&cfg, &ch, kind, &options(seed), &SolverOptions::default());
        let second = run(&cfg, &ch, kind, &options(seed), &SolverOptions::default());
        match (first, second) {
            (Ok(a), Ok(b)) => {
                prop_assert!(violation(&cfg, &ch, &a.0) <= 1e-9);
                let obj = a.1.objectives();
                prop_assert!(obj.windows(2).all(|w| w[1] >= w[0] - 1e-7));
                prop_assert_eq!(a, b);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "runs disagree on feasibility"),
        }
    }
}
