//! Benchmark CLI: single solves, Monte Carlo studies, and receding-horizon
//! episodes over scenario configuration files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use ilq_games::harness::{
    export_monte_carlo, export_receding, export_solve, run_monte_carlo, run_receding_horizon,
    MonteCarloConfig,
};
use ilq_games::scenario::{self, ScenarioSpec};
use ilq_games::solver::ilq_solve;
use ilq_games::{GameError, Result};

#[derive(Parser)]
#[command(name = "ilq-games", about = "Iterative LQ game solver and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario once from the zero-strategy initialization.
    Solve {
        /// Scenario TOML file, or a built-in name (hallway, intersection,
        /// collision_avoidance).
        #[arg(long)]
        scenario: String,
        /// Override the scenario's step size.
        #[arg(long)]
        eta: Option<f64>,
        /// Override the convergence tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Override the iteration cap.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Directory for report.json, trajectory.csv, trajectory.svg.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo convergence study from random sinusoidal strategies.
    Montecarlo {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        samples: usize,
        /// Master seed; per-sample seeds are derived deterministically.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a receding-horizon episode with warm-started replans.
    Receding {
        #[arg(long)]
        scenario: String,
        /// Episode length in seconds (defaults to the scenario's).
        #[arg(long)]
        episode: Option<f64>,
        /// Replanning interval in seconds (defaults to the scenario's).
        #[arg(long)]
        replan: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    if arg.ends_with(".toml") {
        let text = std::fs::read_to_string(arg).map_err(|source| GameError::Io {
            path: arg.to_string(),
            source,
        })?;
        scenario::parse_scenario(&text)
    } else {
        scenario::builtin(arg)
    }
}

/// Ok(true) = converged/successful, Ok(false) = ran but did not converge.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Solve {
            scenario,
            eta,
            tol,
            max_iters,
            out,
        } => {
            let spec = load_scenario(&scenario)?;
            let problem = spec.build_problem()?;
            let mut config = problem.config;
            if let Some(v) = eta {
                config.eta = v;
            }
            if let Some(v) = tol {
                config.tolerance = v;
            }
            if let Some(v) = max_iters {
                config.max_iterations = v;
            }
            let zero: Vec<Vec<DVector<f64>>> = (0..config.discretization.num_steps())
                .map(|_| {
                    (0..problem.system.num_players())
                        .map(|i| DVector::zeros(problem.system.control_dim(i)))
                        .collect()
                })
                .collect();
            let result = ilq_solve(&problem.system, &problem.costs, &problem.x0, &zero, &config)?;
            let total_time: f64 = result.diagnostics.iter().map(|d| d.wall_time_secs).sum();
            println!(
                "{}: converged={} iterations={} time={:.3}s",
                spec.name, result.converged, result.iterations, total_time
            );
            if let Some(costs) = result.diagnostics.last().map(|d| &d.player_costs) {
                for (i, c) in costs.iter().enumerate() {
                    println!("  player {i} cost {c:.4}");
                }
            }
            if let Some(dir) = out {
                export_solve(&spec, &result, &dir)?;
                println!("wrote artifacts to {}", dir.display());
            }
            Ok(result.converged)
        }
        Command::Montecarlo {
            scenario,
            samples,
            seed,
            out,
        } => {
            let spec = load_scenario(&scenario)?;
            let report = run_monte_carlo(&spec, samples, seed, &MonteCarloConfig::default())?;
            println!(
                "{}: {}/{} converged ({} resampled), {} clusters, {} outliers",
                spec.name,
                report.samples.iter().filter(|s| s.converged).count(),
                report.num_samples,
                report.resample_count,
                report.clusters.len(),
                report.outliers.len()
            );
            for (i, c) in report.clusters.iter().enumerate() {
                println!("  cluster {i}: {} members", c.members.len());
            }
            if let Some(dir) = out {
                export_monte_carlo(&spec, &report, &dir)?;
                println!("wrote artifacts to {}", dir.display());
            }
            Ok(report.unconverged.is_empty())
        }
        Command::Receding {
            scenario,
            episode,
            replan,
            out,
        } => {
            let mut spec = load_scenario(&scenario)?;
            if episode.is_some() || replan.is_some() {
                let mut r = spec.receding.ok_or_else(|| {
                    GameError::Config("scenario has no [receding] section".into())
                })?;
                if let Some(v) = episode {
                    r.episode_length = v;
                }
                if let Some(v) = replan {
                    r.replan_interval = v;
                }
                spec.receding = Some(r);
            }
            let log = run_receding_horizon(&spec, None)?;
            println!(
                "{}: {} replans, all_converged={}, min clearance {:.3} m",
                spec.name,
                log.replans.len(),
                log.all_converged,
                log.min_clearance
            );
            if let Some(dir) = out {
                export_receding(&spec, &log, &dir)?;
                println!("wrote artifacts to {}", dir.display());
            }
            Ok(log.all_converged)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
