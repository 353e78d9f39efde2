//! Multi-player continuous-time dynamics: model evaluation, RK4 integration
//! under zero-order-hold controls, and analytic Jacobian linearization.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// A single player's kinematic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum PlayerModel {
    /// State (p_x, p_y, theta, v), controls (omega, a).
    Unicycle4D,
    /// State (p_x, p_y, theta, phi, v), controls (psi, a).
    /// `inter_axle` is the distance between axles in meters.
    Bicycle5D { inter_axle: f64 },
    /// State (p_x, p_y, theta), control (omega); fixed speed in m/s.
    DubinsConstantSpeed3D { speed: f64 },
}

impl PlayerModel {
    pub fn state_dim(&self) -> usize {
        match self {
            PlayerModel::Unicycle4D => 4,
            PlayerModel::Bicycle5D { .. } => 5,
            PlayerModel::DubinsConstantSpeed3D { .. } => 3,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            PlayerModel::Unicycle4D => 2,
            PlayerModel::Bicycle5D { .. } => 2,
            PlayerModel::DubinsConstantSpeed3D { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PlayerModel::Bicycle5D { inter_axle } if *inter_axle <= 0.0 => Err(
                GameError::InvalidArgument(format!("inter_axle must be > 0, got {inter_axle}")),
            ),
            PlayerModel::DubinsConstantSpeed3D { speed } if *speed <= 0.0 => Err(
                GameError::InvalidArgument(format!("speed must be > 0, got {speed}")),
            ),
            _ => Ok(()),
        }
    }

    /// Time derivative of this player's state block.
    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        match self {
            PlayerModel::Unicycle4D => {
                let (theta, v) = (x[2], x[3]);
                dx[0] = v * theta.cos();
                dx[1] = v * theta.sin();
                dx[2] = u[0];
                dx[3] = u[1];
            }
            PlayerModel::Bicycle5D { inter_axle } => {
                let (theta, phi, v) = (x[2], x[3], x[4]);
                dx[0] = v * theta.cos();
                dx[1] = v * theta.sin();
                dx[2] = v * phi.tan() / inter_axle;
                dx[3] = u[0];
                dx[4] = u[1];
            }
            PlayerModel::DubinsConstantSpeed3D { speed } => {
                let theta = x[2];
                dx[0] = speed * theta.cos();
                dx[1] = speed * theta.sin();
                dx[2] = u[0];
            }
        }
    }

    /// Continuous-time Jacobian blocks, written into the given views.
    fn jacobians(&self, x: &[f64], a: &mut DMatrix<f64>, b: &mut DMatrix<f64>) {
        match self {
            PlayerModel::Unicycle4D => {
                let (theta, v) = (x[2], x[3]);
                a[(0, 2)] = -v * theta.sin();
                a[(0, 3)] = theta.cos();
                a[(1, 2)] = v * theta.cos();
                a[(1, 3)] = theta.sin();
                b[(2, 0)] = 1.0;
                b[(3, 1)] = 1.0;
            }
            PlayerModel::Bicycle5D { inter_axle } => {
                let (theta, phi, v) = (x[2], x[3], x[4]);
                let sec2 = 1.0 / (phi.cos() * phi.cos());
                a[(0, 2)] = -v * theta.sin();
                a[(0, 4)] = theta.cos();
                a[(1, 2)] = v * theta.cos();
                a[(1, 4)] = theta.sin();
                a[(2, 3)] = v * sec2 / inter_axle;
                a[(2, 4)] = phi.tan() / inter_axle;
                b[(3, 0)] = 1.0;
                b[(4, 1)] = 1.0;
            }
            PlayerModel::DubinsConstantSpeed3D { speed } => {
                let theta = x[2];
                a[(0, 2)] = -speed * theta.sin();
                a[(1, 2)] = speed * theta.cos();
                b[(2, 0)] = 1.0;
            }
        }
    }

    /// Index of the position components within this player's state block.
    pub fn position_indices(&self) -> (usize, usize) {
        (0, 1)
    }

    /// Index of the speed component within this player's state block, if any.
    pub fn speed_index(&self) -> Option<usize> {
        match self {
            PlayerModel::Unicycle4D => Some(3),
            PlayerModel::Bicycle5D { .. } => Some(4),
            PlayerModel::DubinsConstantSpeed3D { .. } => None,
        }
    }
}

/// Joint dynamics of all players. Players are dynamically decoupled; coupling
/// enters only through costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPlayerSystem {
    players: Vec<PlayerModel>,
    state_offsets: Vec<usize>,
    total_state_dim: usize,
}

impl MultiPlayerSystem {
    pub fn new(players: Vec<PlayerModel>) -> Result<Self> {
        if players.is_empty() {
            return Err(GameError::InvalidArgument("no players".into()));
        }
        for p in &players {
            p.validate()?;
        }
        let mut offsets = Vec::with_capacity(players.len());
        let mut n = 0;
        for p in &players {
            offsets.push(n);
            n += p.state_dim();
        }
        Ok(Self {
            players,
            state_offsets: offsets,
            total_state_dim: n,
        })
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn state_dim(&self) -> usize {
        self.total_state_dim
    }

    pub fn control_dim(&self, player: usize) -> usize {
        self.players[player].control_dim()
    }

    pub fn total_control_dim(&self) -> usize {
        self.players.iter().map(|p| p.control_dim()).sum()
    }

    pub fn player(&self, i: usize) -> &PlayerModel {
        &self.players[i]
    }

    pub fn players(&self) -> &[PlayerModel] {
        &self.players
    }

    /// Contiguous state-block range for player `i` (player-major layout).
    pub fn state_block(&self, i: usize) -> Range<usize> {
        let start = self.state_offsets[i];
        start..start + self.players[i].state_dim()
    }

    fn check_dims(&self, x: &DVector<f64>, u_all: &[DVector<f64>]) -> Result<()> {
        if x.len() != self.total_state_dim {
            return Err(GameError::InvalidArgument(format!(
                "state dimension {} != {}",
                x.len(),
                self.total_state_dim
            )));
        }
        if u_all.len() != self.players.len() {
            return Err(GameError::InvalidArgument(format!(
                "got {} control vectors for {} players",
                u_all.len(),
                self.players.len()
            )));
        }
        for (i, (p, u)) in self.players.iter().zip(u_all).enumerate() {
            if u.len() != p.control_dim() {
                return Err(GameError::DimensionMismatch {
                    player: i,
                    expected: p.control_dim(),
                    actual: u.len(),
                });
            }
        }
        Ok(())
    }

    /// Joint vector field f(t, x, u_{1:N}), assembled block-wise.
    pub fn evaluate(&self, _t: f64, x: &DVector<f64>, u_all: &[DVector<f64>]) -> Result<DVector<f64>> {
        self.check_dims(x, u_all)?;
        let mut dx = DVector::zeros(self.total_state_dim);
        for (i, p) in self.players.iter().enumerate() {
            let r = self.state_block(i);
            p.eval(
                &x.as_slice()[r.clone()],
                u_all[i].as_slice(),
                &mut dx.as_mut_slice()[r],
            );
        }
        Ok(dx)
    }

    /// One classical RK4 step with controls held constant over [t, t+dt].
    pub fn integrate_step(
        &self,
        t: f64,
        x: &DVector<f64>,
        u_all: &[DVector<f64>],
        dt: f64,
    ) -> Result<DVector<f64>> {
        if !x.iter().all(|v| v.is_finite())
            || !u_all.iter().all(|u| u.iter().all(|v| v.is_finite()))
        {
            return Err(GameError::NonFiniteInput {
                context: "integrate_step".into(),
            });
        }
        let k1 = self.evaluate(t, x, u_all)?;
        let k2 = self.evaluate(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)), u_all)?;
        let k3 = self.evaluate(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)), u_all)?;
        let k4 = self.evaluate(t + dt, &(x + &k3 * dt), u_all)?;
        Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
    }

    /// Continuous-time Jacobians (D_x f, D_{u_i} f) at the given point.
    pub fn linearize(
        &self,
        _t: f64,
        x: &DVector<f64>,
        u_all: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        self.check_dims(x, u_all)?;
        let n = self.total_state_dim;
        let mut a = DMatrix::zeros(n, n);
        let mut bs = Vec::with_capacity(self.players.len());
        for (i, p) in self.players.iter().enumerate() {
            let r = self.state_block(i);
            let nd = p.state_dim();
            let md = p.control_dim();
            let mut ai = DMatrix::zeros(nd, nd);
            let mut bi_blk = DMatrix::zeros(nd, md);
            p.jacobians(&x.as_slice()[r.clone()], &mut ai, &mut bi_blk);
            a.view_mut((r.start, r.start), (nd, nd)).copy_from(&ai);
            let mut bi = DMatrix::zeros(n, md);
            bi.view_mut((r.start, 0), (nd, md)).copy_from(&bi_blk);
            bs.push(bi);
        }
        Ok((a, bs))
    }
}

/// First-order hold-consistent discretization: A_d = I + dt*A, B_d = dt*B.
pub fn discretize(
    a_cont: &DMatrix<f64>,
    b_cont: &[DMatrix<f64>],
    dt: f64,
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = a_cont.nrows();
    let a_disc = DMatrix::identity(n, n) + a_cont * dt;
    let b_disc = b_cont.iter().map(|b| b * dt).collect();
    (a_disc, b_disc)
}

/// Time grid for the discretized horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDiscretization {
    pub dt: f64,
    pub horizon: f64,
}

impl TimeDiscretization {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if dt <= 0.0 {
            return Err(GameError::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        let td = Self { dt, horizon };
        if td.num_steps() < 1 {
            return Err(GameError::InvalidArgument(format!(
                "horizon {horizon} too short for dt {dt}"
            )));
        }
        Ok(td)
    }

    pub fn num_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn time_at(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn single(model: PlayerModel) -> MultiPlayerSystem {
        MultiPlayerSystem::new(vec![model]).unwrap()
    }

    #[test]
    fn unicycle_evaluate() {
        let sys = single(PlayerModel::Unicycle4D);
        let dx = sys
            .evaluate(0.0, &vec(&[0.0, 0.0, 0.0, 1.0]), &[vec(&[0.0, 0.0])])
            .unwrap();
        assert_eq!(dx, vec(&[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn dubins_evaluate() {
        let sys = single(PlayerModel::DubinsConstantSpeed3D { speed: 1.0 });
        let dx = sys
            .evaluate(0.0, &vec(&[0.0, 0.0, std::f64::consts::FRAC_PI_2]), &[vec(&[0.0])])
            .unwrap();
        assert_relative_eq!(dx[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(dx[1], 1.0);
        assert_eq!(dx[2], 0.0);
    }

    #[test]
    fn bicycle_evaluate() {
        let sys = single(PlayerModel::Bicycle5D { inter_axle: 1.0 });
        let dx = sys
            .evaluate(0.0, &vec(&[0.0, 0.0, 0.0, 0.0, 2.0]), &[vec(&[0.0, 0.0])])
            .unwrap();
        assert_eq!(dx, vec(&[2.0, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn evaluate_rejects_wrong_control_dim() {
        let sys = single(PlayerModel::Unicycle4D);
        let err = sys
            .evaluate(0.0, &vec(&[0.0; 4]), &[vec(&[0.0])])
            .unwrap_err();
        match err {
            GameError::DimensionMismatch { player, .. } => assert_eq!(player, 0),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn rk4_straight_line_is_exact() {
        let sys = single(PlayerModel::Unicycle4D);
        let x1 = sys
            .integrate_step(0.0, &vec(&[0.0, 0.0, 0.0, 1.0]), &[vec(&[0.0, 0.0])], 0.1)
            .unwrap();
        assert_relative_eq!(x1[0], 0.1, epsilon = 1e-14);
        assert_relative_eq!(x1[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(x1[3], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rk4_matches_constant_turn_rate_arc() {
        // Closed-form solution at unit speed, turn rate 1: p = (sin t, 1 - cos t).
        let sys = single(PlayerModel::Unicycle4D);
        let dt = 0.1;
        let x1 = sys
            .integrate_step(0.0, &vec(&[0.0, 0.0, 0.0, 1.0]), &[vec(&[1.0, 0.0])], dt)
            .unwrap();
        assert_relative_eq!(x1[0], dt.sin(), epsilon = 1e-8);
        assert_relative_eq!(x1[1], 1.0 - dt.cos(), epsilon = 1e-8);
        assert_relative_eq!(x1[2], dt, epsilon = 1e-14);
        assert_relative_eq!(x1[3], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rk4_rejects_non_finite() {
        let sys = single(PlayerModel::Unicycle4D);
        let err = sys
            .integrate_step(
                0.0,
                &vec(&[f64::NAN, 0.0, 0.0, 1.0]),
                &[vec(&[0.0, 0.0])],
                0.1,
            )
            .unwrap_err();
        assert!(matches!(err, GameError::NonFiniteInput { .. }));
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Error against a dt/100 reference must shrink by >= 14x when dt halves.
        let sys = single(PlayerModel::Unicycle4D);
        let x0 = vec(&[0.3, -0.2, 0.7, 1.3]);
        let u = [vec(&[0.8, 0.4])];
        let reference = |dt: f64| {
            let fine = dt / 100.0;
            let mut x = x0.clone();
            for k in 0..100 {
                x = sys.integrate_step(k as f64 * fine, &x, &u, fine).unwrap();
            }
            x
        };
        let err = |dt: f64| {
            let x1 = sys.integrate_step(0.0, &x0, &u, dt).unwrap();
            (x1 - reference(dt)).norm()
        };
        let e1 = err(0.2);
        let e2 = err(0.1);
        assert!(e1 / e2 >= 14.0, "order ratio {}", e1 / e2);
    }

    fn random_state_controls(
        sys: &MultiPlayerSystem,
        rng: &mut impl Rng,
    ) -> (DVector<f64>, Vec<DVector<f64>>) {
        let x = DVector::from_fn(sys.state_dim(), |_, _| rng.gen_range(-3.0..3.0));
        let u = (0..sys.num_players())
            .map(|i| DVector::from_fn(sys.control_dim(i), |_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        (x, u)
    }

    /// Central finite differences of the vector field, used as an oracle only.
    fn fd_jacobians(
        sys: &MultiPlayerSystem,
        x: &DVector<f64>,
        u_all: &[DVector<f64>],
    ) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let n = sys.state_dim();
        let h = 1e-6;
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (sys.evaluate(0.0, &xp, u_all).unwrap()
                - sys.evaluate(0.0, &xm, u_all).unwrap())
                / (2.0 * h);
            a.set_column(j, &col);
        }
        let mut bs = Vec::new();
        for i in 0..sys.num_players() {
            let m = sys.control_dim(i);
            let mut b = DMatrix::zeros(n, m);
            for j in 0..m {
                let mut up = u_all.to_vec();
                let mut um = u_all.to_vec();
                up[i][j] += h;
                um[i][j] -= h;
                let col = (sys.evaluate(0.0, x, &up).unwrap()
                    - sys.evaluate(0.0, x, &um).unwrap())
                    / (2.0 * h);
                b.set_column(j, &col);
            }
            bs.push(b);
        }
        (a, bs)
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let systems = [
            single(PlayerModel::Unicycle4D),
            single(PlayerModel::Bicycle5D { inter_axle: 1.3 }),
            single(PlayerModel::DubinsConstantSpeed3D { speed: 0.9 }),
            MultiPlayerSystem::new(vec![
                PlayerModel::Unicycle4D,
                PlayerModel::DubinsConstantSpeed3D { speed: 1.5 },
            ])
            .unwrap(),
        ];
        for sys in &systems {
            for _ in 0..100 {
                let (x, u) = random_state_controls(sys, &mut rng);
                let (a, bs) = sys.linearize(0.0, &x, &u).unwrap();
                let (a_fd, bs_fd) = fd_jacobians(sys, &x, &u);
                let scale = a_fd.norm().max(1.0);
                assert!((&a - &a_fd).norm() / scale < 1e-5);
                for (b, b_fd) in bs.iter().zip(&bs_fd) {
                    assert!((b - b_fd).norm() / b_fd.norm().max(1.0) < 1e-5);
                }
            }
        }
    }

    #[test]
    fn dubins_structure() {
        let sys = single(PlayerModel::DubinsConstantSpeed3D { speed: 1.0 });
        let (a, bs) = sys
            .linearize(0.0, &vec(&[0.0, 0.0, 0.4]), &[vec(&[0.0])])
            .unwrap();
        assert_eq!(a.nrows(), 3);
        assert_eq!(bs[0].shape(), (3, 1));
        assert_eq!(bs[0][(0, 0)], 0.0);
        assert_eq!(bs[0][(1, 0)], 0.0);
        assert_eq!(bs[0][(2, 0)], 1.0);
    }

    #[test]
    fn player_decoupling() {
        let sys = MultiPlayerSystem::new(vec![PlayerModel::Unicycle4D, PlayerModel::Unicycle4D])
            .unwrap();
        let x = vec(&[0.1, 0.2, 0.3, 1.0, -0.5, 0.6, -0.7, 0.8]);
        let u0 = [vec(&[0.5, 0.2]), vec(&[0.0, 0.0])];
        let u1 = [vec(&[0.5, 0.2]), vec(&[3.0, -1.0])];
        let d0 = sys.evaluate(0.0, &x, &u0).unwrap();
        let d1 = sys.evaluate(0.0, &x, &u1).unwrap();
        // Player 0's block is unaffected by player 1's control.
        assert_eq!(d0.rows(0, 4), d1.rows(0, 4));
    }

    #[test]
    fn discretize_formulas() {
        let a = DMatrix::zeros(2, 2);
        let b = vec![DMatrix::from_column_slice(2, 1, &[1.0, 0.0])];
        let (ad, bd) = discretize(&a, &b, 0.1);
        assert_eq!(ad, DMatrix::identity(2, 2));
        assert_eq!(bd[0][(0, 0)], 0.1);
        assert_eq!(bd[0][(1, 0)], 0.0);

        let a = DMatrix::from_element(1, 1, 2.0);
        let (ad, _) = discretize(&a, &[], 0.1);
        assert_relative_eq!(ad[(0, 0)], 1.2);
    }

    #[test]
    fn time_discretization_rounds() {
        let td = TimeDiscretization::new(0.1, 10.0).unwrap();
        assert_eq!(td.num_steps(), 100);
        assert!(TimeDiscretization::new(0.0, 1.0).is_err());
    }

    #[test]
    fn determinism() {
        let sys = single(PlayerModel::Bicycle5D { inter_axle: 2.0 });
        let x = vec(&[0.1, 0.2, 0.3, 0.1, 2.0]);
        let u = [vec(&[0.3, -0.2])];
        let a = sys.integrate_step(0.0, &x, &u, 0.1).unwrap();
        let b = sys.integrate_step(0.0, &x, &u, 0.1).unwrap();
        assert_eq!(a, b);
    }
}
