//! Discrete-time finite-horizon N-player general-sum LQ game solver.
//!
//! Backward dynamic programming with a coupled linear solve at each step:
//! all players' first-order conditions are stacked into one block system so
//! the resulting strategies form a feedback Nash equilibrium of the LQ game.

use nalgebra::{DMatrix, DVector};

use crate::cost::QuadraticCostApprox;
use crate::error::{GameError, Result};

/// Threshold on the reciprocal condition estimate below which the coupled
/// solve is declared failed (caller escalates regularization).
pub const RCOND_FAILURE_THRESHOLD: f64 = 1e-12;

/// One time step of the LQ approximation: discrete dynamics plus every
/// player's quadratic cost.
#[derive(Debug, Clone)]
pub struct LQGameStage {
    /// n x n discrete-time transition matrix.
    pub a: DMatrix<f64>,
    /// n x m_i discrete-time input map per player.
    pub b: Vec<DMatrix<f64>>,
    /// Quadratic cost approximation per player.
    pub cost: Vec<QuadraticCostApprox>,
}

/// Per-player quadratic value approximation at one time step.
#[derive(Debug, Clone)]
pub struct ValueApprox {
    /// Quadratic terms Z_i, n x n symmetric.
    pub z: Vec<DMatrix<f64>>,
    /// Linear terms zeta_i, length n.
    pub zeta: Vec<DVector<f64>>,
}

/// One player's affine feedback strategy over the horizon:
/// u_i(t) = u_hat_i(t) - P_i(t) dx(t) - alpha_i(t).
#[derive(Debug, Clone)]
pub struct AffineStrategy {
    pub gains: Vec<DMatrix<f64>>,
    pub affine: Vec<DVector<f64>>,
}

impl AffineStrategy {
    /// Zero strategy for a player with control dimension `m` over `steps` steps.
    pub fn zero(m: usize, n: usize, steps: usize) -> Self {
        Self {
            gains: vec![DMatrix::zeros(m, n); steps],
            affine: vec![DVector::zeros(m); steps],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// Solves the simultaneous one-step first-order conditions of all players and
/// propagates each player's value approximation one step backward.
pub fn solve_coupled_step(
    value_next: &ValueApprox,
    stage: &LQGameStage,
    step: usize,
) -> Result<(Vec<(DMatrix<f64>, DVector<f64>)>, ValueApprox)> {
    let num_players = stage.b.len();
    let n = stage.a.nrows();
    let dims: Vec<usize> = stage.b.iter().map(|b| b.ncols()).collect();
    let m_total: usize = dims.iter().sum();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, m| {
            let o = *acc;
            *acc += m;
            Some(o)
        })
        .collect();

    // Stacked system S [P; alpha] = [Y_P; Y_alpha], one row block per player.
    let mut s = DMatrix::zeros(m_total, m_total);
    let mut y = DMatrix::zeros(m_total, n + 1);
    for i in 0..num_players {
        let bt_z = stage.b[i].transpose() * &value_next.z[i]; // m_i x n
        for j in 0..num_players {
            let mut block = &bt_z * &stage.b[j];
            if i == j {
                block += &stage.cost[i].r[i];
            }
            s.view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                .copy_from(&block);
        }
        y.view_mut((offsets[i], 0), (dims[i], n))
            .copy_from(&(&bt_z * &stage.a));
        let y_alpha = stage.b[i].transpose() * &value_next.zeta[i] + &stage.cost[i].rv[i];
        y.view_mut((offsets[i], n), (dims[i], 1)).copy_from(&y_alpha);
    }

    let svd = s.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let rcond = if sigma_max > 0.0 {
        sigma_min / sigma_max
    } else {
        0.0
    };
    if !rcond.is_finite() || rcond < RCOND_FAILURE_THRESHOLD {
        return Err(GameError::SolveFailure { step, rcond });
    }
    let lu = s.lu();
    let x = lu
        .solve(&y)
        .ok_or(GameError::SolveFailure { step, rcond })?;

    let mut strategies = Vec::with_capacity(num_players);
    for i in 0..num_players {
        let p = x.view((offsets[i], 0), (dims[i], n)).into_owned();
        let alpha: DVector<f64> = x.view((offsets[i], n), (dims[i], 1)).column(0).into_owned();
        strategies.push((p, alpha));
    }

    // Closed-loop transition under all players' strategies.
    let mut f = stage.a.clone();
    let mut beta = DVector::zeros(n);
    for (j, (p, alpha)) in strategies.iter().enumerate() {
        f -= &stage.b[j] * p;
        beta -= &stage.b[j] * alpha;
    }

    let mut z_now = Vec::with_capacity(num_players);
    let mut zeta_now = Vec::with_capacity(num_players);
    for i in 0..num_players {
        let mut z = stage.cost[i].q.clone();
        let mut zeta = stage.cost[i].l.clone();
        for (j, (p, alpha)) in strategies.iter().enumerate() {
            let pt_r = p.transpose() * &stage.cost[i].r[j];
            z += &pt_r * p;
            zeta += &pt_r * alpha - p.transpose() * &stage.cost[i].rv[j];
        }
        z += f.transpose() * &value_next.z[i] * &f;
        zeta += f.transpose() * (&value_next.z[i] * &beta + &value_next.zeta[i]);
        // Exact symmetry is an invariant of the recursion; enforce it.
        z = (&z + z.transpose()) * 0.5;
        z_now.push(z);
        zeta_now.push(zeta);
    }

    Ok((
        strategies,
        ValueApprox {
            z: z_now,
            zeta: zeta_now,
        },
    ))
}

/// Backward sweep over all stages. `terminal` supplies each player's boundary
/// value (Q_i, l_i) at the final time.
pub fn solve_lq_game(
    stages: &[LQGameStage],
    terminal: &[(DMatrix<f64>, DVector<f64>)],
) -> Result<Vec<AffineStrategy>> {
    if stages.is_empty() {
        return Err(GameError::InvalidArgument("no stages".into()));
    }
    let num_players = stages[0].b.len();
    let n = stages[0].a.nrows();
    let steps = stages.len();

    let mut value = ValueApprox {
        z: terminal.iter().map(|(q, _)| q.clone()).collect(),
        zeta: terminal.iter().map(|(_, l)| l.clone()).collect(),
    };

    let mut out: Vec<AffineStrategy> = (0..num_players)
        .map(|i| AffineStrategy {
            gains: vec![DMatrix::zeros(stages[0].b[i].ncols(), n); steps],
            affine: vec![DVector::zeros(stages[0].b[i].ncols()); steps],
        })
        .collect();

    for k in (0..steps).rev() {
        let (strategies, value_now) = solve_coupled_step(&value, &stages[k], k)?;
        for (i, (p, alpha)) in strategies.into_iter().enumerate() {
            out[i].gains[k] = p;
            out[i].affine[k] = alpha;
        }
        value = value_now;
    }
    Ok(out)
}

/// Rolls the deviation dynamics forward under du_i = -P_i dx - alpha_i and
/// accumulates each player's quadratic stage cost plus terminal value.
pub fn closed_loop_rollout(
    strategies: &[AffineStrategy],
    stages: &[LQGameStage],
    terminal: &[(DMatrix<f64>, DVector<f64>)],
    x0_dev: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<Vec<DVector<f64>>>, Vec<f64>) {
    let num_players = strategies.len();
    let mut dx = x0_dev.clone();
    let mut states = vec![dx.clone()];
    let mut controls: Vec<Vec<DVector<f64>>> = vec![Vec::new(); num_players];
    let mut costs = vec![0.0; num_players];

    for (k, stage) in stages.iter().enumerate() {
        let du: Vec<DVector<f64>> = strategies
            .iter()
            .map(|s| -(&s.gains[k] * &dx) - &s.affine[k])
            .collect();
        for i in 0..num_players {
            let mut c = 0.5 * (dx.dot(&(&stage.cost[i].q * &dx))) + stage.cost[i].l.dot(&dx);
            for j in 0..num_players {
                c += 0.5 * du[j].dot(&(&stage.cost[i].r[j] * &du[j]))
                    + stage.cost[i].rv[j].dot(&du[j]);
            }
            costs[i] += c;
            controls[i].push(du[i].clone());
        }
        let mut next = &stage.a * &dx;
        for j in 0..num_players {
            next += &stage.b[j] * &du[j];
        }
        dx = next;
        states.push(dx.clone());
    }
    for i in 0..num_players {
        costs[i] += 0.5 * dx.dot(&(&terminal[i].0 * &dx)) + terminal[i].1.dot(&dx);
    }
    (states, controls, costs)
}
