//! Joint energy-waveform, transmit-power and time-split design for a
//! K-pair wireless-powered interference channel under harvest-then-transmit.

pub mod channel;
pub mod energy;
pub mod error;
pub mod joint;
pub mod model;
pub mod optimizer;
pub mod oracle;
pub mod rate;
pub mod solver;
pub mod surrogate;
#[cfg(test)]
mod testing;

pub use nalgebra;
pub use num_complex;

pub use channel::{apply_csi_error, generate_channels, ChannelSet};
pub use energy::{beta_lower_bound, HarvestView, Harvester};
pub use error::{ConfigError, Error, Result};
pub use model::{
    dbm_to_watts, load_config, AuditSummary, CsiModel, DesignVariables, EhModel, GeometryConfig, InnerRecord,
    NetworkConfig, NonlinearEhParams, OuterRecord, RunTrace, SigmoidParams, Termination,
};
pub use optimizer::{
    optimal_tau, run, run_baseline_power_only, run_maxmin, run_sum_throughput, OuterOptions, TauBounds, TauInit,
    TauRule,
};
pub use oracle::{grid_oracle, OracleResolution, OracleResult};
pub use rate::{throughput, CsiMode, Throughput};
pub use solver::{SolverOptions, SolverStatus};
pub use surrogate::{ConvexSubproblem, DesignModel, ProblemKind};
