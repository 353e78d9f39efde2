//! Monte Carlo convergence study: many solves from random sinusoidal
//! initial strategies, clustering of converged trajectories, per-cluster
//! cost statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::scenario::ScenarioSpec;
use crate::solver::ilq_solve;

use super::sample::{derive_seed, sample_sinusoidal_controls, SinusoidRanges};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub ranges: SinusoidRanges,
    /// Euclidean distance (stacked state sequences) below which a sample
    /// joins an existing cluster.
    pub cluster_threshold: f64,
    /// Clusters smaller than this are reclassified as outliers.
    pub min_cluster_size: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            ranges: SinusoidRanges::default(),
            cluster_threshold: 18.0,
            min_cluster_size: 3,
        }
    }
}

/// One solve from one sampled initialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub seed: u64,
    pub converged: bool,
    /// Whether this record came from the one-shot resample of a
    /// non-converged first attempt.
    pub resampled: bool,
    pub iterations: usize,
    /// [iteration][player] total trajectory cost.
    pub per_iteration_costs: Vec<Vec<f64>>,
    /// Final state trajectory, one row per time sample.
    pub trajectory: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    /// The founding member's trajectory.
    pub representative: Vec<Vec<f64>>,
    /// [iteration][player] mean cost across members (shorter runs padded
    /// with their final value).
    pub cost_mean: Vec<Vec<f64>>,
    pub cost_std: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scenario: String,
    pub num_samples: usize,
    pub master_seed: u64,
    pub config: MonteCarloConfig,
    pub samples: Vec<SampleRecord>,
    pub clusters: Vec<Cluster>,
    /// Converged samples not matching any retained cluster.
    pub outliers: Vec<usize>,
    /// Samples that failed to converge even after resampling.
    pub unconverged: Vec<usize>,
    pub resample_count: usize,
    /// Iterations-to-convergence for every converged sample.
    pub iterations_to_convergence: Vec<usize>,
}

impl MonteCarloReport {
    pub fn convergence_rate(&self) -> f64 {
        let converged = self.samples.iter().filter(|s| s.converged).count();
        converged as f64 / self.num_samples as f64
    }
}

/// Greedy agglomerative clustering over stacked state sequences. Samples are
/// processed in id order; each joins the first cluster whose representative
/// is within the threshold, else founds a new cluster.
pub fn cluster_trajectories(
    trajectories: &[(usize, Vec<Vec<f64>>)],
    threshold: f64,
    min_cluster_size: usize,
) -> Result<(Vec<Cluster>, Vec<usize>)> {
    if let Some((_, first)) = trajectories.first() {
        let len = first.len();
        let width = first.first().map_or(0, |r| r.len());
        for (id, t) in trajectories {
            if t.len() != len || t.iter().any(|r| r.len() != width) {
                return Err(GameError::InvalidArgument(format!(
                    "trajectory {id} has mismatched length"
                )));
            }
        }
    }
    let mut clusters: Vec<Cluster> = Vec::new();
    for (id, traj) in trajectories {
        let mut joined = false;
        for cluster in &mut clusters {
            if stacked_distance(traj, &cluster.representative) <= threshold {
                cluster.members.push(*id);
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(Cluster {
                members: vec![*id],
                representative: traj.clone(),
                cost_mean: Vec::new(),
                cost_std: Vec::new(),
            });
        }
    }
    let mut outliers = Vec::new();
    clusters.retain(|c| {
        if c.members.len() < min_cluster_size {
            outliers.extend(c.members.iter().copied());
            false
        } else {
            true
        }
    });
    outliers.sort_unstable();
    Ok((clusters, outliers))
}

fn stacked_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
        .sum::<f64>()
        .sqrt()
}

/// Runs the full study. Samples execute in parallel with per-sample seeds
/// derived from the master seed; the report is assembled in id order.
pub fn run_monte_carlo(
    spec: &ScenarioSpec,
    num_samples: usize,
    master_seed: u64,
    mc_config: &MonteCarloConfig,
) -> Result<MonteCarloReport> {
    if num_samples < 1 {
        return Err(GameError::InvalidArgument("num_samples must be >= 1".into()));
    }
    let problem = spec.build_problem()?;

    let mut samples: Vec<SampleRecord> = (0..num_samples)
        .into_par_iter()
        .map(|id| -> Result<SampleRecord> {
            let seed = derive_seed(master_seed, id as u64);
            let first = run_sample(&problem, spec, id, seed, false, mc_config)?;
            if first.converged {
                return Ok(first);
            }
            // One-shot resample with a fresh derived seed.
            let retry_seed = derive_seed(master_seed, (id + num_samples) as u64);
            run_sample(&problem, spec, id, retry_seed, true, mc_config)
        })
        .collect::<Result<Vec<_>>>()?;
    samples.sort_by_key(|s| s.id);

    let resample_count = samples.iter().filter(|s| s.resampled).count();
    let converged: Vec<(usize, Vec<Vec<f64>>)> = samples
        .iter()
        .filter(|s| s.converged)
        .map(|s| (s.id, s.trajectory.clone()))
        .collect();
    let unconverged: Vec<usize> = samples
        .iter()
        .filter(|s| !s.converged)
        .map(|s| s.id)
        .collect();
    let (mut clusters, outliers) = cluster_trajectories(
        &converged,
        mc_config.cluster_threshold,
        mc_config.min_cluster_size,
    )?;

    for cluster in &mut clusters {
        let (mean, std) = cost_statistics(&samples, &cluster.members);
        cluster.cost_mean = mean;
        cluster.cost_std = std;
    }

    let iterations_to_convergence = samples
        .iter()
        .filter(|s| s.converged)
        .map(|s| s.iterations)
        .collect();

    Ok(MonteCarloReport {
        scenario: spec.name.clone(),
        num_samples,
        master_seed,
        config: mc_config.clone(),
        samples,
        clusters,
        outliers,
        unconverged,
        resample_count,
        iterations_to_convergence,
    })
}

fn run_sample(
    problem: &crate::scenario::BuiltProblem,
    spec: &ScenarioSpec,
    id: usize,
    seed: u64,
    resampled: bool,
    mc_config: &MonteCarloConfig,
) -> Result<SampleRecord> {
    let controls = sample_sinusoidal_controls(
        seed,
        &problem.system,
        &spec.time,
        &mc_config.ranges,
    )?;
    let result = match ilq_solve(
        &problem.system,
        &problem.costs,
        &problem.x0,
        &controls,
        &problem.config,
    ) {
        Ok(r) => r,
        // A diverged sample is data, not a harness failure.
        Err(GameError::Divergence { .. }) | Err(GameError::SolverDivergence { .. }) => {
            return Ok(SampleRecord {
                id,
                seed,
                converged: false,
                resampled,
                iterations: 0,
                per_iteration_costs: Vec::new(),
                trajectory: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    Ok(SampleRecord {
        id,
        seed,
        converged: result.converged,
        resampled,
        iterations: result.iterations,
        per_iteration_costs: result
            .diagnostics
            .iter()
            .map(|d| d.player_costs.clone())
            .collect(),
        trajectory: result
            .operating_point
            .states()
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect(),
    })
}

/// Mean and standard deviation of each player's cost at each iteration over
/// the given members, padding shorter runs with their final value.
fn cost_statistics(samples: &[SampleRecord], members: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows: Vec<&SampleRecord> = members
        .iter()
        .map(|id| samples.iter().find(|s| s.id == *id).unwrap())
        .collect();
    let max_iters = rows
        .iter()
        .map(|s| s.per_iteration_costs.len())
        .max()
        .unwrap_or(0);
    let num_players = rows
        .first()
        .and_then(|s| s.per_iteration_costs.first())
        .map_or(0, |c| c.len());
    let mut mean = vec![vec![0.0; num_players]; max_iters];
    let mut std = vec![vec![0.0; num_players]; max_iters];
    for it in 0..max_iters {
        for p in 0..num_players {
            let values: Vec<f64> = rows
                .iter()
                .map(|s| {
                    let idx = it.min(s.per_iteration_costs.len() - 1);
                    s.per_iteration_costs[idx][p]
                })
                .collect();
            let m = values.iter().sum::<f64>() / values.len() as f64;
            let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / values.len() as f64;
            mean[it][p] = m;
            std[it][p] = v.sqrt();
        }
    }
    (mean, std)
}
