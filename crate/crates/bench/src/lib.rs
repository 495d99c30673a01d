//! Benchmark fixtures: reference instances that admit a feasible design.

use wpifc_core::{
    generate_channels, run, ChannelSet, DesignVariables, NetworkConfig, OuterOptions, ProblemKind,
    SolverOptions, TauInit,
};

/// A reference instance with `k` pairs and its converged sum-throughput design.
pub struct Fixture {
    pub config: NetworkConfig,
    pub channels: ChannelSet,
    pub seed: u64,
    pub design: DesignVariables,
}

pub fn options(seed: u64) -> OuterOptions {
    OuterOptions {
        tau_init: TauInit::Random { seed },
        ..OuterOptions::default()
    }
}

/// The first seed from `first` whose `k`-pair reference instance solves.
pub fn fixture(k: usize, first: u64) -> Fixture {
    let config = NetworkConfig::reference(k);
    (first..first + 100)
        .find_map(|seed| {
            let channels = generate_channels(&config, seed);
            let (design, _) = run(
                &config,
                &channels,
                ProblemKind::SumThroughput,
                &options(seed),
                &SolverOptions::default(),
            )
            .ok()?;
            Some(Fixture {
                config: config.clone(),
                channels,
                seed,
                design,
            })
        })
        .expect("no feasible instance in 100 seeds")
}
