//! Experiment runner: Monte Carlo studies, receding-horizon episodes, and
//! artifact export.

mod export;
mod monte_carlo;
mod receding;
mod sample;

pub use export::{
    export_monte_carlo, export_receding, export_solve, load_solve_report, trajectory_csv,
    trajectory_svg, SolveReport,
};
pub use monte_carlo::{
    cluster_trajectories, run_monte_carlo, Cluster, MonteCarloConfig, MonteCarloReport,
    SampleRecord,
};
pub use receding::{run_receding_horizon, Disturbance, RecedingHorizonLog, ReplanRecord};
pub use sample::{derive_seed, sample_sinusoidal_controls, sample_sinusoidal_strategy, SinusoidRanges};
