//! Scenario declarations: players, dynamics, costs, and geometry as data,
//! parsed from TOML configuration files into solver problems.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cost::{CostPrimitive, PlayerCost, Polyline};
use crate::dynamics::{MultiPlayerSystem, PlayerModel, TimeDiscretization};
use crate::error::{GameError, Result};
use crate::solver::{SolverConfig, StepPolicy};

/// One player's declaration: model, start, costs, and (for reporting) goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerSpec {
    pub model: PlayerModel,
    pub initial_state: Vec<f64>,
    /// Goal position, echoed into exports; the actual pull comes from the
    /// Goal cost primitive.
    pub goal: Option<[f64; 2]>,
    pub costs: Vec<CostPrimitive>,
    #[serde(default)]
    pub eps_q: f64,
    #[serde(default)]
    pub eps_r: f64,
}

/// Scenario geometry used for validation and plotting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Hallway half-width; players must start inside the walls.
    pub d_hall: Option<f64>,
    /// Lane centerlines for plotting.
    #[serde(default)]
    pub lanes: Vec<Polyline>,
    pub d_lane: Option<f64>,
}

/// Solver settings carried by a scenario; unset fields fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverOverrides {
    pub eta: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub step_policy: Option<StepPolicy>,
    pub reg_initial: Option<f64>,
    pub reg_growth: Option<f64>,
    pub reg_cap: Option<f64>,
}

/// Receding-horizon defaults for scenarios meant to be replanned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecedingDefaults {
    pub replan_interval: f64,
    pub episode_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub time: TimeDiscretization,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub geometry: Geometry,
    pub receding: Option<RecedingDefaults>,
    pub players: Vec<PlayerSpec>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.players.is_empty() {
            return Err(GameError::Config("scenario has no players".into()));
        }
        let system = self.build_system()?;
        for (i, p) in self.players.iter().enumerate() {
            let expected = p.model.state_dim();
            if p.initial_state.len() != expected {
                return Err(GameError::Config(format!(
                    "player {i}: initial_state has {} entries, model needs {expected}",
                    p.initial_state.len()
                )));
            }
            if let Some(d_hall) = self.geometry.d_hall {
                let py = p.initial_state[1];
                if py.abs() > d_hall {
                    return Err(GameError::Config(format!(
                        "player {i}: starts outside the hallway (|{py}| > {d_hall})"
                    )));
                }
            }
            PlayerCost {
                player: i,
                primitives: p.costs.clone(),
                eps_q: p.eps_q,
                eps_r: p.eps_r,
            }
            .validate(&system)?;
        }
        Ok(())
    }

    fn build_system(&self) -> Result<MultiPlayerSystem> {
        MultiPlayerSystem::new(self.players.iter().map(|p| p.model).collect())
    }

    /// Assembles the solver inputs declared by this scenario.
    pub fn build_problem(&self) -> Result<BuiltProblem> {
        self.validate()?;
        let system = self.build_system()?;
        let costs: Vec<PlayerCost> = self
            .players
            .iter()
            .enumerate()
            .map(|(i, p)| PlayerCost {
                player: i,
                primitives: p.costs.clone(),
                eps_q: p.eps_q,
                eps_r: p.eps_r,
            })
            .collect();
        let x0 = DVector::from_vec(
            self.players
                .iter()
                .flat_map(|p| p.initial_state.iter().copied())
                .collect(),
        );
        let mut config = SolverConfig::new(self.time);
        if let Some(v) = self.solver.eta {
            config.eta = v;
        }
        if let Some(v) = self.solver.tolerance {
            config.tolerance = v;
        }
        if let Some(v) = self.solver.max_iterations {
            config.max_iterations = v;
        }
        if let Some(v) = self.solver.step_policy {
            config.step_policy = v;
        }
        if let Some(v) = self.solver.reg_initial {
            config.reg_initial = v;
        }
        if let Some(v) = self.solver.reg_growth {
            config.reg_growth = v;
        }
        if let Some(v) = self.solver.reg_cap {
            config.reg_cap = v;
        }
        Ok(BuiltProblem {
            system,
            costs,
            x0,
            config,
        })
    }
}

/// Solver-ready scenario.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub system: MultiPlayerSystem,
    pub costs: Vec<PlayerCost>,
    pub x0: DVector<f64>,
    pub config: SolverConfig,
}

/// Parses and validates a scenario configuration document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec =
        toml::from_str(text).map_err(|e| GameError::Config(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

/// Serializes a scenario back to configuration text.
pub fn serialize_scenario(spec: &ScenarioSpec) -> Result<String> {
    toml::to_string_pretty(spec).map_err(|e| GameError::Config(e.to_string()))
}

pub const HALLWAY_CONFIG: &str = include_str!("../../../configs/hallway.toml");
pub const INTERSECTION_CONFIG: &str = include_str!("../../../configs/intersection.toml");
pub const COLLISION_AVOIDANCE_CONFIG: &str =
    include_str!("../../../configs/collision_avoidance.toml");

/// Built-in scenario by name.
pub fn builtin(name: &str) -> Result<ScenarioSpec> {
    match name {
        "hallway" => parse_scenario(HALLWAY_CONFIG),
        "intersection" => parse_scenario(INTERSECTION_CONFIG),
        "collision_avoidance" => parse_scenario(COLLISION_AVOIDANCE_CONFIG),
        other => Err(GameError::Config(format!("unknown built-in scenario {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostKind;

    #[test]
    fn builtin_scenarios_validate() {
        for name in ["hallway", "intersection", "collision_avoidance"] {
            let spec = builtin(name).unwrap();
            assert_eq!(spec.name, name);
            spec.build_problem().unwrap();
        }
    }

    #[test]
    fn hallway_dimensions_match() {
        let p = builtin("hallway").unwrap().build_problem().unwrap();
        assert_eq!(p.system.state_dim(), 12);
        assert_eq!(p.system.total_control_dim(), 6);
        assert_eq!(p.system.num_players(), 3);
        assert_eq!(p.config.discretization.num_steps(), 100);
    }

    #[test]
    fn intersection_dimensions_match() {
        let p = builtin("intersection").unwrap().build_problem().unwrap();
        assert_eq!(p.system.state_dim(), 14);
        assert_eq!(p.config.discretization.num_steps(), 50);
    }

    #[test]
    fn collision_avoidance_models_match() {
        let spec = builtin("collision_avoidance").unwrap();
        assert!(matches!(spec.players[0].model, PlayerModel::Unicycle4D));
        assert!(matches!(
            spec.players[1].model,
            PlayerModel::DubinsConstantSpeed3D { .. }
        ));
        assert!(matches!(
            spec.players[2].model,
            PlayerModel::DubinsConstantSpeed3D { .. }
        ));
        assert!(spec.receding.is_some());
    }

    #[test]
    fn round_trip_is_lossless() {
        for name in ["hallway", "intersection", "collision_avoidance"] {
            let spec = builtin(name).unwrap();
            let text = serialize_scenario(&spec).unwrap();
            let again = parse_scenario(&text).unwrap();
            assert_eq!(spec, again);
        }
    }

    #[test]
    fn negative_proximity_rejected() {
        let mut spec = builtin("hallway").unwrap();
        for c in &mut spec.players[0].costs {
            if let CostKind::Proximity { d_prox, .. } = &mut c.kind {
                *d_prox = -1.0;
            }
        }
        let text = serialize_scenario(&spec).unwrap();
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("d_prox"), "got {err}");
    }

    #[test]
    fn missing_initial_state_rejected() {
        let text = HALLWAY_CONFIG.replacen("initial_state", "initial_state_typo", 1);
        assert!(parse_scenario(&text).is_err());
    }

    #[test]
    fn wrong_state_dimension_rejected() {
        let mut spec = builtin("hallway").unwrap();
        spec.players[0].initial_state.pop();
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("initial_state"));
    }

    #[test]
    fn start_outside_hallway_rejected() {
        let mut spec = builtin("hallway").unwrap();
        spec.players[1].initial_state[1] = 5.0;
        assert!(spec.validate().is_err());
    }
}
