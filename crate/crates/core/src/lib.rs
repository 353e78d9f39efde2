//! Solvers for N-player finite-horizon general-sum dynamic games via
//! iterated linear-quadratic approximation, plus scenario definitions and an
//! experiment harness.
//!
//! The core loop: roll out the current strategies, linearize the dynamics and
//! quadraticize each player's cost about the trajectory iterate, solve the
//! resulting LQ game with a coupled Riccati recursion for feedback Nash
//! strategies, then take a damped step toward them. See [`solver::ilq_solve`].

pub mod cost;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lqgame;
pub mod scenario;
pub mod solver;

pub use error::{GameError, Result};
