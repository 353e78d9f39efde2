//! Outer iteration: rollout, linearize, quadraticize, LQ-game solve, damped
//! strategy update, until the state trajectory stops moving.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::PlayerCost;
use crate::dynamics::{discretize, MultiPlayerSystem, TimeDiscretization};
use crate::error::{GameError, Result};
use crate::lqgame::{solve_lq_game, AffineStrategy, LQGameStage};

/// Trajectory iterate: states over the discretized horizon (num_steps + 1
/// samples) and all players' controls (num_steps samples).
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    states: Vec<DVector<f64>>,
    controls: Vec<Vec<DVector<f64>>>,
}

impl OperatingPoint {
    /// Integrates the given control sequences open loop from `x0`.
    pub fn rollout(
        system: &MultiPlayerSystem,
        x0: &DVector<f64>,
        controls: &[Vec<DVector<f64>>],
        dt: f64,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(controls.len() + 1);
        let mut x = x0.clone();
        states.push(x.clone());
        for (k, u) in controls.iter().enumerate() {
            x = system
                .integrate_step(k as f64 * dt, &x, u, dt)
                .map_err(|_| GameError::Divergence { step: k })?;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(GameError::Divergence { step: k });
            }
            states.push(x.clone());
        }
        Ok(Self {
            states,
            controls: controls.to_vec(),
        })
    }

    pub fn num_steps(&self) -> usize {
        self.controls.len()
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    /// State sample at step `k`, 0 <= k <= num_steps.
    pub fn state_at(&self, k: usize) -> &DVector<f64> {
        &self.states[k]
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// All players' controls applied over step `k`.
    pub fn controls_at(&self, k: usize) -> &[DVector<f64>] {
        &self.controls[k]
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn controls(&self) -> &[Vec<DVector<f64>>] {
        &self.controls
    }

    /// Drops the first `shift` steps and replicates the final entries so the
    /// horizon length is preserved (receding-horizon warm start).
    pub fn shifted(&self, shift: usize) -> OperatingPoint {
        let steps = self.num_steps();
        let shift = shift.min(steps);
        let states = (0..=steps)
            .map(|k| self.states[(k + shift).min(steps)].clone())
            .collect();
        let controls = (0..steps)
            .map(|k| self.controls[(k + shift).min(steps - 1)].clone())
            .collect();
        OperatingPoint { states, controls }
    }

    /// l-infinity distance between the state sequences of two iterates.
    pub fn state_distance_inf(&self, other: &OperatingPoint) -> Result<f64> {
        if self.states.len() != other.states.len() {
            return Err(GameError::InvalidArgument(format!(
                "operating point length mismatch: {} vs {}",
                self.states.len(),
                other.states.len()
            )));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            for (x, y) in a.iter().zip(b.iter()) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }
}

/// Step-size policy for the damped update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum StepPolicy {
    Fixed,
    /// eta_k = eta * rate^k.
    Decay { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Step size in (0, 1] applied to the affine terms.
    pub eta: f64,
    /// l-infinity state-trajectory convergence tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub step_policy: StepPolicy,
    /// Regularization escalation on coupled-solve failure.
    pub reg_initial: f64,
    pub reg_growth: f64,
    pub reg_cap: f64,
    pub discretization: TimeDiscretization,
}

impl SolverConfig {
    pub fn new(discretization: TimeDiscretization) -> Self {
        Self {
            eta: 0.01,
            tolerance: 0.01,
            max_iterations: 100,
            step_policy: StepPolicy::Fixed,
            reg_initial: 1e-4,
            reg_growth: 10.0,
            reg_cap: 1.0,
            discretization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(GameError::InvalidArgument(format!(
                "eta must be in (0, 1], got {}",
                self.eta
            )));
        }
        if self.tolerance <= 0.0 {
            return Err(GameError::InvalidArgument("tolerance must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(GameError::InvalidArgument(
                "max_iterations must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn eta_at(&self, iteration: usize) -> f64 {
        match self.step_policy {
            StepPolicy::Fixed => self.eta,
            StepPolicy::Decay { rate } => self.eta * rate.powi(iteration as i32),
        }
    }
}

/// Per-iteration diagnostics emitted by the solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    /// Each player's total trajectory cost on the new iterate.
    pub player_costs: Vec<f64>,
    /// max over players and time of the candidate affine term, inf norm,
    /// before eta scaling.
    pub max_alpha_inf: f64,
    /// l-infinity state change from the previous iterate.
    pub trajectory_delta_inf: f64,
    /// Regularization actually used this iteration (0 when none needed).
    pub regularization: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub converged: bool,
    /// Strategies anchored to `operating_point`, affine terms eta-scaled.
    pub strategies: Vec<AffineStrategy>,
    pub operating_point: OperatingPoint,
    pub iterations: usize,
    pub diagnostics: Vec<IterationDiagnostics>,
}

/// Rolls the nonlinear system forward under the affine strategies anchored to
/// `anchor`, with the affine terms scaled by `eta`.
pub fn compute_operating_point(
    system: &MultiPlayerSystem,
    x0: &DVector<f64>,
    anchor: &OperatingPoint,
    strategies: &[AffineStrategy],
    eta: f64,
    dt: f64,
) -> Result<OperatingPoint> {
    let steps = anchor.num_steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut x = x0.clone();
    states.push(x.clone());
    for k in 0..steps {
        let dx = &x - anchor.state_at(k);
        let u: Vec<DVector<f64>> = strategies
            .iter()
            .enumerate()
            .map(|(i, s)| {
                &anchor.controls_at(k)[i] - &s.gains[k] * &dx - &s.affine[k] * eta
            })
            .collect();
        x = system
            .integrate_step(k as f64 * dt, &x, &u, dt)
            .map_err(|_| GameError::Divergence { step: k })?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GameError::Divergence { step: k });
        }
        controls.push(u);
        states.push(x.clone());
    }
    Ok(OperatingPoint { states, controls })
}

/// Linearizes the dynamics and quadraticizes every player's cost about the
/// operating point. `extra_reg` is added on top of each cost's own (eps_q,
/// eps_r) during regularization retries.
pub fn build_lq_approximation(
    system: &MultiPlayerSystem,
    costs: &[PlayerCost],
    op: &OperatingPoint,
    discretization: &TimeDiscretization,
    extra_reg: f64,
) -> Result<(Vec<LQGameStage>, Vec<(DMatrix<f64>, DVector<f64>)>)> {
    let dt = discretization.dt;
    let horizon = discretization.horizon;
    let n = system.state_dim();
    let mut stages = Vec::with_capacity(op.num_steps());
    for k in 0..op.num_steps() {
        let t = k as f64 * dt;
        let x = op.state_at(k);
        let u = op.controls_at(k);
        let (a_c, b_c) = system.linearize(t, x, u)?;
        let (a, b) = discretize(&a_c, &b_c, dt);
        let mut stage_costs = Vec::with_capacity(costs.len());
        for cost in costs {
            let mut approx = cost
                .quadraticize(system, horizon, t, x, u)
                .map_err(|e| annotate_step(e, k))?;
            if extra_reg > 0.0 {
                for d in 0..n {
                    approx.q[(d, d)] += extra_reg;
                }
                for r in &mut approx.r {
                    for d in 0..r.nrows() {
                        r[(d, d)] += extra_reg;
                    }
                }
            }
            stage_costs.push(approx);
        }
        stages.push(LQGameStage {
            a,
            b,
            cost: stage_costs,
        });
    }

    // Terminal condition: quadraticized state cost at the final sample.
    let xt = op.terminal_state();
    let zero_u: Vec<DVector<f64>> = (0..system.num_players())
        .map(|i| DVector::zeros(system.control_dim(i)))
        .collect();
    let mut terminal = Vec::with_capacity(costs.len());
    for cost in costs {
        let mut approx = cost
            .quadraticize(system, horizon, horizon, xt, &zero_u)
            .map_err(|e| annotate_step(e, op.num_steps()))?;
        if extra_reg > 0.0 {
            for d in 0..n {
                approx.q[(d, d)] += extra_reg;
            }
        }
        terminal.push((approx.q, approx.l));
    }
    Ok((stages, terminal))
}

fn annotate_step(e: GameError, step: usize) -> GameError {
    match e {
        GameError::DegenerateGeometry(msg) => {
            GameError::DegenerateGeometry(format!("step {step}: {msg}"))
        }
        other => other,
    }
}

/// True iff the state trajectories differ by at most `tolerance` in
/// l-infinity norm (boundary inclusive).
pub fn check_convergence(
    current: &OperatingPoint,
    previous: &OperatingPoint,
    tolerance: f64,
) -> Result<bool> {
    Ok(current.state_distance_inf(previous)? <= tolerance)
}

/// Runs the full iteration from open-loop initial controls (all-zero control
/// sequences correspond to the zero-strategy initialization).
pub fn ilq_solve(
    system: &MultiPlayerSystem,
    costs: &[PlayerCost],
    x0: &DVector<f64>,
    initial_controls: &[Vec<DVector<f64>>],
    config: &SolverConfig,
) -> Result<SolveResult> {
    let anchor = OperatingPoint::rollout(system, x0, initial_controls, config.discretization.dt)?;
    ilq_solve_from(system, costs, anchor, config)
}

/// Runs the iteration from an existing anchor trajectory and strategies
/// (receding-horizon warm start).
pub fn ilq_solve_warm(
    system: &MultiPlayerSystem,
    costs: &[PlayerCost],
    x0: &DVector<f64>,
    anchor: &OperatingPoint,
    strategies: &[AffineStrategy],
    config: &SolverConfig,
) -> Result<SolveResult> {
    // Re-anchor to the new initial state before iterating; the feedback gains
    // absorb the deviation between the planned and actual state.
    let new_anchor =
        compute_operating_point(system, x0, anchor, strategies, 1.0, config.discretization.dt)?;
    ilq_solve_from(system, costs, new_anchor, config)
}

fn ilq_solve_from(
    system: &MultiPlayerSystem,
    costs: &[PlayerCost],
    mut anchor: OperatingPoint,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    for c in costs {
        c.validate(system)?;
    }
    let dt = config.discretization.dt;
    let horizon = config.discretization.horizon;
    let x0 = anchor.initial_state().clone();

    let mut diagnostics = Vec::new();
    let mut strategies: Vec<AffineStrategy> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 0..config.max_iterations {
        let started = Instant::now();

        // LQ solve with regularization escalation on failure.
        let mut extra_reg = 0.0;
        let (candidate, used_reg) = loop {
            let (stages, terminal) =
                build_lq_approximation(system, costs, &anchor, &config.discretization, extra_reg)?;
            match solve_lq_game(&stages, &terminal) {
                Ok(c) => break (c, extra_reg),
                Err(GameError::SolveFailure { .. }) => {
                    let next = if extra_reg == 0.0 {
                        config.reg_initial
                    } else {
                        extra_reg * config.reg_growth
                    };
                    if next > config.reg_cap {
                        let (stages, terminal) = build_lq_approximation(
                            system,
                            costs,
                            &anchor,
                            &config.discretization,
                            config.reg_cap,
                        )?;
                        break (solve_lq_game(&stages, &terminal)?, config.reg_cap);
                    }
                    extra_reg = next;
                }
                Err(e) => return Err(e),
            }
        };

        let max_alpha_inf = candidate
            .iter()
            .flat_map(|s| s.affine.iter())
            .map(|a| a.amax())
            .fold(0.0f64, f64::max);

        // Damped update, halving eta on divergence.
        let mut eta = config.eta_at(iteration).min(1.0);
        let mut new_op = None;
        for _attempt in 0..=5 {
            match compute_operating_point(system, &x0, &anchor, &candidate, eta, dt) {
                Ok(op) => {
                    new_op = Some(op);
                    break;
                }
                Err(GameError::Divergence { .. }) => eta *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let new_op = new_op.ok_or(GameError::SolverDivergence { iteration })?;

        let delta = new_op.state_distance_inf(&anchor)?;
        let player_costs = costs
            .iter()
            .map(|c| c.evaluate_total_cost(system, horizon, &new_op, dt))
            .collect::<Result<Vec<f64>>>()?;

        diagnostics.push(IterationDiagnostics {
            player_costs,
            max_alpha_inf,
            trajectory_delta_inf: delta,
            regularization: used_reg,
            wall_time_secs: started.elapsed().as_secs_f64(),
        });
        iterations = iteration + 1;

        // Keep the executed strategy: full gains, eta-scaled affine terms.
        strategies = candidate
            .into_iter()
            .map(|mut s| {
                for a in &mut s.affine {
                    *a *= eta;
                }
                s
            })
            .collect();
        anchor = new_op;

        if delta <= config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        converged,
        strategies,
        operating_point: anchor,
        iterations,
        diagnostics,
    })
}
