//! Per-player running costs as weighted sums of semi-quadratic primitives,
//! with exact analytic gradients and Hessians for quadraticization.
//!
//! Every primitive is continuous with continuous first derivative across its
//! indicator boundary (the quadratic vanishes with zero slope at the
//! threshold); second derivatives jump there, which the outer iteration
//! tolerates.

mod polyline;

pub use polyline::{ClosestKind, ClosestPoint, Polyline};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::MultiPlayerSystem;
use crate::error::{GameError, Result};
use crate::solver::OperatingPoint;

/// One weighted running-cost term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPrimitive {
    pub weight: f64,
    pub kind: CostKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum CostKind {
    /// Quadratic penalty on |p_y| beyond the hallway half-width.
    Wall { d_hall: f64 },
    /// Quadratic penalty when closer than `d_prox` to player `other`.
    Proximity { other: usize, d_prox: f64 },
    /// Quadratic distance to a goal position, active for the last
    /// `t_window` seconds of the horizon.
    Goal { goal: [f64; 2], t_window: f64 },
    /// u^T R u with diagonal R on the player's own control.
    ControlQuadratic { diag: Vec<f64> },
    /// Squared distance to a lane centerline.
    LaneCenter { lane: Polyline },
    /// Quadratic penalty on lane distance beyond the half-width `d_lane`.
    LaneBoundary { lane: Polyline, d_lane: f64 },
    /// Quadratic penalty on deviation from a reference speed.
    NominalSpeed { v_ref: f64 },
    /// One-sided quadratic penalties outside [v_min, v_max].
    SpeedBounds { v_min: f64, v_max: f64 },
}

impl CostPrimitive {
    pub fn validate(&self, player: usize, system: &MultiPlayerSystem) -> Result<()> {
        if self.weight < 0.0 {
            return Err(GameError::Config(format!(
                "player {player}: cost weight must be >= 0, got {}",
                self.weight
            )));
        }
        match &self.kind {
            CostKind::Wall { d_hall } if *d_hall <= 0.0 => Err(GameError::Config(format!(
                "player {player}: d_hall must be > 0, got {d_hall}"
            ))),
            CostKind::Proximity { other, d_prox } => {
                if *d_prox <= 0.0 {
                    return Err(GameError::Config(format!(
                        "player {player}: d_prox must be > 0, got {d_prox}"
                    )));
                }
                if *other >= system.num_players() || *other == player {
                    return Err(GameError::Config(format!(
                        "player {player}: proximity references invalid player {other}"
                    )));
                }
                Ok(())
            }
            CostKind::ControlQuadratic { diag } => {
                if diag.len() != system.control_dim(player) {
                    return Err(GameError::Config(format!(
                        "player {player}: control cost diagonal has {} entries, control dim is {}",
                        diag.len(),
                        system.control_dim(player)
                    )));
                }
                if diag.iter().any(|d| *d <= 0.0) {
                    return Err(GameError::Config(format!(
                        "player {player}: control cost diagonal entries must be > 0"
                    )));
                }
                Ok(())
            }
            CostKind::LaneBoundary { d_lane, .. } if *d_lane <= 0.0 => {
                Err(GameError::Config(format!(
                    "player {player}: d_lane must be > 0, got {d_lane}"
                )))
            }
            CostKind::NominalSpeed { .. } | CostKind::SpeedBounds { .. }
                if system.player(player).speed_index().is_none() =>
            {
                Err(GameError::Config(format!(
                    "player {player}: speed cost on a model without a speed state"
                )))
            }
            CostKind::SpeedBounds { v_min, v_max } if v_min > v_max => {
                Err(GameError::Config(format!(
                    "player {player}: v_min {v_min} > v_max {v_max}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Weighted sum of primitives for one player, with regularization knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerCost {
    pub player: usize,
    pub primitives: Vec<CostPrimitive>,
    #[serde(default)]
    pub eps_q: f64,
    #[serde(default)]
    pub eps_r: f64,
}

/// One time step of the quadratic cost approximation for one player.
#[derive(Debug, Clone)]
pub struct QuadraticCostApprox {
    /// State Hessian, n x n, symmetric.
    pub q: DMatrix<f64>,
    /// State gradient, length n.
    pub l: DVector<f64>,
    /// Control Hessians, one m_j x m_j block per player.
    pub r: Vec<DMatrix<f64>>,
    /// Control gradients, one length-m_j vector per player.
    pub rv: Vec<DVector<f64>>,
}

impl PlayerCost {
    pub fn new(player: usize, primitives: Vec<CostPrimitive>) -> Self {
        Self {
            player,
            primitives,
            eps_q: 0.0,
            eps_r: 0.0,
        }
    }

    pub fn validate(&self, system: &MultiPlayerSystem) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(GameError::Config(format!(
                "player {}: at least one cost primitive required",
                self.player
            )));
        }
        if self.eps_q < 0.0 || self.eps_r < 0.0 {
            return Err(GameError::Config(format!(
                "player {}: regularization must be >= 0",
                self.player
            )));
        }
        for p in &self.primitives {
            p.validate(self.player, system)?;
        }
        Ok(())
    }

    /// g_i(t, x, u_{1:N}): weighted sum of active primitives.
    pub fn evaluate_running_cost(
        &self,
        system: &MultiPlayerSystem,
        horizon: f64,
        t: f64,
        x: &DVector<f64>,
        u_all: &[DVector<f64>],
    ) -> Result<f64> {
        let mut total = 0.0;
        for prim in &self.primitives {
            total += prim.weight * self.primitive_value(prim, system, horizon, t, x, u_all)?;
        }
        Ok(total)
    }

    /// Left-endpoint quadrature of the running cost over the horizon,
    /// matching the zero-order hold on controls.
    pub fn evaluate_total_cost(
        &self,
        system: &MultiPlayerSystem,
        horizon: f64,
        op: &OperatingPoint,
        dt: f64,
    ) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..op.num_steps() {
            let u: Vec<DVector<f64>> = op.controls_at(k).to_vec();
            total +=
                self.evaluate_running_cost(system, horizon, k as f64 * dt, op.state_at(k), &u)?;
        }
        Ok(total * dt)
    }

    fn primitive_value(
        &self,
        prim: &CostPrimitive,
        system: &MultiPlayerSystem,
        horizon: f64,
        t: f64,
        x: &DVector<f64>,
        u_all: &[DVector<f64>],
    ) -> Result<f64> {
        let blk = system.state_block(self.player);
        let px = x[blk.start];
        let py = x[blk.start + 1];
        Ok(match &prim.kind {
            CostKind::Wall { d_hall } => {
                if py.abs() > *d_hall {
                    (py.abs() - d_hall).powi(2)
                } else {
                    0.0
                }
            }
            CostKind::Proximity { other, d_prox } => {
                let ob = system.state_block(*other);
                let dx = px - x[ob.start];
                let dy = py - x[ob.start + 1];
                let d = dx.hypot(dy);
                if d < *d_prox {
                    (d_prox - d).powi(2)
                } else {
                    0.0
                }
            }
            CostKind::Goal { goal, t_window } => {
                if t > horizon - t_window {
                    (px - goal[0]).powi(2) + (py - goal[1]).powi(2)
                } else {
                    0.0
                }
            }
            CostKind::ControlQuadratic { diag } => {
                let u = &u_all[self.player];
                diag.iter().zip(u.iter()).map(|(d, ui)| d * ui * ui).sum()
            }
            CostKind::LaneCenter { lane } => lane.closest([px, py])?.distance.powi(2),
            CostKind::LaneBoundary { lane, d_lane } => {
                let d = lane.closest([px, py])?.distance;
                if d > *d_lane {
                    (d - d_lane).powi(2)
                } else {
                    0.0
                }
            }
            CostKind::NominalSpeed { v_ref } => {
                let v = x[blk.start + system.player(self.player).speed_index().unwrap()];
                (v - v_ref).powi(2)
            }
            CostKind::SpeedBounds { v_min, v_max } => {
                let v = x[blk.start + system.player(self.player).speed_index().unwrap()];
                if v > *v_max {
                    (v - v_max).powi(2)
                } else if v < *v_min {
                    (v_min - v).powi(2)
                } else {
                    0.0
                }
            }
        })
    }

    /// Exact analytic gradient and Hessians of the weighted primitive sum,
    /// plus eps_q*I on Q and eps_r*I on every R block. Mixed state-control
    /// and cross-control partials are zero for every primitive here and are
    /// not represented.
    pub fn quadraticize(
        &self,
        system: &MultiPlayerSystem,
        horizon: f64,
        t: f64,
        x: &DVector<f64>,
        u_all: &[DVector<f64>],
    ) -> Result<QuadraticCostApprox> {
        let n = system.state_dim();
        let mut q = DMatrix::zeros(n, n);
        let mut l = DVector::zeros(n);
        let mut r: Vec<DMatrix<f64>> = (0..system.num_players())
            .map(|j| DMatrix::zeros(system.control_dim(j), system.control_dim(j)))
            .collect();
        let mut rv: Vec<DVector<f64>> = (0..system.num_players())
            .map(|j| DVector::zeros(system.control_dim(j)))
            .collect();

        let blk = system.state_block(self.player);
        let (ix, iy) = (blk.start, blk.start + 1);

        for prim in &self.primitives {
            let w = prim.weight;
            let px = x[ix];
            let py = x[iy];
            match &prim.kind {
                CostKind::Wall { d_hall } => {
                    if py.abs() > *d_hall {
                        let sign = py.signum();
                        l[iy] += 2.0 * w * (py - sign * d_hall);
                        q[(iy, iy)] += 2.0 * w;
                    }
                }
                CostKind::Proximity { other, d_prox } => {
                    let ob = system.state_block(*other);
                    let (jx, jy) = (ob.start, ob.start + 1);
                    let delta = [px - x[jx], py - x[jy]];
                    let d = delta[0].hypot(delta[1]);
                    if d < *d_prox {
                        if d <= 0.0 {
                            return Err(GameError::DegenerateGeometry(format!(
                                "players {} and {} at zero distance",
                                self.player, other
                            )));
                        }
                        let e = [delta[0] / d, delta[1] / d];
                        let dh = -2.0 * w * (d_prox - d);
                        let hh = 2.0 * w;
                        // grad blocks
                        l[ix] += dh * e[0];
                        l[iy] += dh * e[1];
                        l[jx] -= dh * e[0];
                        l[jy] -= dh * e[1];
                        // Hessian of h(||delta||): h'' ee^T + (h'/d)(I - ee^T)
                        let radial = dh / d;
                        let mut h = [[0.0; 2]; 2];
                        for a in 0..2 {
                            for b in 0..2 {
                                let ee = e[a] * e[b];
                                h[a][b] = hh * ee + radial * ((a == b) as u8 as f64 - ee);
                            }
                        }
                        let idx_i = [ix, iy];
                        let idx_j = [jx, jy];
                        for a in 0..2 {
                            for b in 0..2 {
                                q[(idx_i[a], idx_i[b])] += h[a][b];
                                q[(idx_j[a], idx_j[b])] += h[a][b];
                                q[(idx_i[a], idx_j[b])] -= h[a][b];
                                q[(idx_j[a], idx_i[b])] -= h[a][b];
                            }
                        }
                    }
                }
                CostKind::Goal { goal, t_window } => {
                    if t > horizon - t_window {
                        l[ix] += 2.0 * w * (px - goal[0]);
                        l[iy] += 2.0 * w * (py - goal[1]);
                        q[(ix, ix)] += 2.0 * w;
                        q[(iy, iy)] += 2.0 * w;
                    }
                }
                CostKind::ControlQuadratic { diag } => {
                    let u = &u_all[self.player];
                    for (k, d) in diag.iter().enumerate() {
                        rv[self.player][k] += 2.0 * w * d * u[k];
                        r[self.player][(k, k)] += 2.0 * w * d;
                    }
                }
                CostKind::LaneCenter { lane } => {
                    let c = lane.closest([px, py])?;
                    match c.kind {
                        ClosestKind::SegmentInterior { normal } => {
                            // d^2 = (n . (p - c))^2: quadratic along the normal.
                            let s = normal[0] * (px - c.point[0]) + normal[1] * (py - c.point[1]);
                            l[ix] += 2.0 * w * s * normal[0];
                            l[iy] += 2.0 * w * s * normal[1];
                            q[(ix, ix)] += 2.0 * w * normal[0] * normal[0];
                            q[(ix, iy)] += 2.0 * w * normal[0] * normal[1];
                            q[(iy, ix)] += 2.0 * w * normal[1] * normal[0];
                            q[(iy, iy)] += 2.0 * w * normal[1] * normal[1];
                        }
                        ClosestKind::Endpoint { vertex } => {
                            l[ix] += 2.0 * w * (px - vertex[0]);
                            l[iy] += 2.0 * w * (py - vertex[1]);
                            q[(ix, ix)] += 2.0 * w;
                            q[(iy, iy)] += 2.0 * w;
                        }
                    }
                }
                CostKind::LaneBoundary { lane, d_lane } => {
                    let c = lane.closest([px, py])?;
                    if c.distance > *d_lane {
                        let excess = c.distance - d_lane;
                        match c.kind {
                            ClosestKind::SegmentInterior { normal } => {
                                // distance is affine here, so only the outer
                                // quadratic contributes curvature
                                l[ix] += 2.0 * w * excess * normal[0];
                                l[iy] += 2.0 * w * excess * normal[1];
                                q[(ix, ix)] += 2.0 * w * normal[0] * normal[0];
                                q[(ix, iy)] += 2.0 * w * normal[0] * normal[1];
                                q[(iy, ix)] += 2.0 * w * normal[1] * normal[0];
                                q[(iy, iy)] += 2.0 * w * normal[1] * normal[1];
                            }
                            ClosestKind::Endpoint { vertex } => {
                                let e = [
                                    (px - vertex[0]) / c.distance,
                                    (py - vertex[1]) / c.distance,
                                ];
                                let radial = 2.0 * w * excess / c.distance;
                                l[ix] += 2.0 * w * excess * e[0];
                                l[iy] += 2.0 * w * excess * e[1];
                                let idx = [ix, iy];
                                for a in 0..2 {
                                    for b in 0..2 {
                                        let ee = e[a] * e[b];
                                        q[(idx[a], idx[b])] += 2.0 * w * ee
                                            + radial * ((a == b) as u8 as f64 - ee);
                                    }
                                }
                            }
                        }
                    }
                }
                CostKind::NominalSpeed { v_ref } => {
                    let iv = blk.start + system.player(self.player).speed_index().unwrap();
                    l[iv] += 2.0 * w * (x[iv] - v_ref);
                    q[(iv, iv)] += 2.0 * w;
                }
                CostKind::SpeedBounds { v_min, v_max } => {
                    let iv = blk.start + system.player(self.player).speed_index().unwrap();
                    let v = x[iv];
                    if v > *v_max {
                        l[iv] += 2.0 * w * (v - v_max);
                        q[(iv, iv)] += 2.0 * w;
                    } else if v < *v_min {
                        l[iv] += 2.0 * w * (v - v_min);
                        q[(iv, iv)] += 2.0 * w;
                    }
                }
            }
        }

        for k in 0..n {
            q[(k, k)] += self.eps_q;
        }
        for rj in &mut r {
            for k in 0..rj.nrows() {
                rj[(k, k)] += self.eps_r;
            }
        }
        Ok(QuadraticCostApprox { q, l, r, rv })
    }
}
