//! Receding-horizon execution: replan every fixed interval, execute the
//! first slice of the converged feedback strategies, warm-start the next
//! solve from the shifted plan.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};
use crate::lqgame::AffineStrategy;
use crate::scenario::ScenarioSpec;
use crate::solver::{ilq_solve, ilq_solve_warm, OperatingPoint, SolveResult};

/// Constant turn-rate offset injected into one player's executed controls
/// over a time window; the planner never sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub player: usize,
    pub start_time: f64,
    pub end_time: f64,
    pub omega_offset: f64,
}

/// One replan cycle of the episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplanRecord {
    pub index: usize,
    /// Episode time at which this plan was computed.
    pub time: f64,
    pub converged: bool,
    pub iterations: usize,
    pub solve_time_secs: f64,
    /// Minimum pairwise clearance over the states executed under this plan.
    pub min_clearance: f64,
    /// Whether the disturbance was active during any executed step.
    pub disturbance_applied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecedingHorizonLog {
    pub scenario: String,
    pub replan_interval: f64,
    pub episode_length: f64,
    pub replans: Vec<ReplanRecord>,
    /// Executed state trajectory, one row per dt step over the episode.
    pub states: Vec<Vec<f64>>,
    /// Executed controls, [step][player][channel].
    pub controls: Vec<Vec<Vec<f64>>>,
    pub min_clearance: f64,
    pub all_converged: bool,
}

/// Minimum pairwise distance between player positions in a stacked state.
fn clearance(spec: &ScenarioSpec, offsets: &[usize], x: &DVector<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..spec.players.len() {
        let (xi, yi) = spec.players[i].model.position_indices();
        let pi = (x[offsets[i] + xi], x[offsets[i] + yi]);
        for j in (i + 1)..spec.players.len() {
            let (xj, yj) = spec.players[j].model.position_indices();
            let pj = (x[offsets[j] + xj], x[offsets[j] + yj]);
            let d = ((pi.0 - pj.0).powi(2) + (pi.1 - pj.1).powi(2)).sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Runs an episode: solve, execute `replan_interval` worth of steps under the
/// converged strategies (optionally disturbed), shift and warm-start, repeat
/// until `episode_length` is covered.
pub fn run_receding_horizon(
    spec: &ScenarioSpec,
    disturbance: Option<Disturbance>,
) -> Result<RecedingHorizonLog> {
    let receding = spec.receding.ok_or_else(|| {
        GameError::Config(format!(
            "scenario {} has no [receding] section",
            spec.name
        ))
    })?;
    let problem = spec.build_problem()?;
    let dt = problem.config.discretization.dt;
    let replan_steps = (receding.replan_interval / dt).round() as usize;
    if replan_steps < 1 || replan_steps > problem.config.discretization.num_steps() {
        return Err(GameError::Config(format!(
            "replan_interval {} maps to {replan_steps} steps, out of range",
            receding.replan_interval
        )));
    }
    let num_replans = (receding.episode_length / receding.replan_interval).round() as usize;
    if let Some(d) = disturbance {
        if d.player >= spec.players.len() {
            return Err(GameError::InvalidArgument(format!(
                "disturbance targets player {}, scenario has {}",
                d.player,
                spec.players.len()
            )));
        }
    }
    let offsets: Vec<usize> = (0..spec.players.len())
        .map(|i| problem.system.state_block(i).start)
        .collect();

    let mut x = problem.x0.clone();
    let mut states: Vec<Vec<f64>> = vec![x.iter().copied().collect()];
    let mut controls: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut replans = Vec::with_capacity(num_replans);
    let mut previous: Option<(OperatingPoint, Vec<AffineStrategy>)> = None;
    let mut min_clearance = clearance(spec, &offsets, &x);

    for replan in 0..num_replans {
        let t0 = replan as f64 * receding.replan_interval;
        let result: SolveResult = match &previous {
            None => {
                let zero: Vec<Vec<DVector<f64>>> = (0..problem.config.discretization.num_steps())
                    .map(|_| {
                        (0..problem.system.num_players())
                            .map(|i| DVector::zeros(problem.system.control_dim(i)))
                            .collect()
                    })
                    .collect();
                ilq_solve(&problem.system, &problem.costs, &x, &zero, &problem.config)
            }
            Some((anchor, strategies)) => {
                let shifted_anchor = anchor.shifted(replan_steps);
                let shifted: Vec<AffineStrategy> = strategies
                    .iter()
                    .map(|s| shift_strategy(s, replan_steps))
                    .collect();
                ilq_solve_warm(
                    &problem.system,
                    &problem.costs,
                    &x,
                    &shifted_anchor,
                    &shifted,
                    &problem.config,
                )
            }
        }
        .map_err(|e| GameError::EpisodeFailure {
            replan,
            source: Box::new(e),
        })?;

        // Execute the first slice of the plan on the true system.
        let op = &result.operating_point;
        let mut record_clearance = f64::INFINITY;
        let mut disturbance_applied = false;
        for k in 0..replan_steps {
            let t = t0 + k as f64 * dt;
            let dx = &x - op.state_at(k);
            let mut u: Vec<DVector<f64>> = result
                .strategies
                .iter()
                .enumerate()
                .map(|(i, s)| &op.controls_at(k)[i] - &s.gains[k] * &dx - &s.affine[k])
                .collect();
            if let Some(d) = disturbance {
                if t >= d.start_time && t < d.end_time {
                    u[d.player][0] += d.omega_offset;
                    disturbance_applied = true;
                }
            }
            x = problem
                .system
                .integrate_step(t, &x, &u, dt)
                .map_err(|e| GameError::EpisodeFailure {
                    replan,
                    source: Box::new(e),
                })?;
            controls.push(u.iter().map(|v| v.iter().copied().collect()).collect());
            states.push(x.iter().copied().collect());
            let c = clearance(spec, &offsets, &x);
            record_clearance = record_clearance.min(c);
            min_clearance = min_clearance.min(c);
        }

        replans.push(ReplanRecord {
            index: replan,
            time: t0,
            converged: result.converged,
            iterations: result.iterations,
            solve_time_secs: result
                .diagnostics
                .iter()
                .map(|d| d.wall_time_secs)
                .sum(),
            min_clearance: record_clearance,
            disturbance_applied,
        });
        previous = Some((result.operating_point, result.strategies));
    }

    let all_converged = replans.iter().all(|r| r.converged);
    Ok(RecedingHorizonLog {
        scenario: spec.name.clone(),
        replan_interval: receding.replan_interval,
        episode_length: receding.episode_length,
        replans,
        states,
        controls,
        min_clearance,
        all_converged,
    })
}

/// Shifts a strategy forward, replicating the final step for the tail.
fn shift_strategy(s: &AffineStrategy, shift: usize) -> AffineStrategy {
    let steps = s.len();
    let shift = shift.min(steps.saturating_sub(1));
    AffineStrategy {
        gains: (0..steps)
            .map(|k| s.gains[(k + shift).min(steps - 1)].clone())
            .collect(),
        affine: (0..steps)
            .map(|k| s.affine[(k + shift).min(steps - 1)].clone())
            .collect(),
    }
}
