//! Artifact export: JSON reports, per-step CSV, and SVG trajectory plots.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::MultiPlayerSystem;
use crate::error::{GameError, Result};
use crate::scenario::ScenarioSpec;
use crate::solver::{IterationDiagnostics, OperatingPoint, SolveResult};

use super::monte_carlo::MonteCarloReport;
use super::receding::RecedingHorizonLog;

/// Serializable summary of one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub scenario: String,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Final state trajectory, one row per time sample.
    pub states: Vec<Vec<f64>>,
    /// Final controls, [step][player][channel].
    pub controls: Vec<Vec<Vec<f64>>>,
}

impl SolveReport {
    pub fn from_result(scenario: &str, result: &SolveResult) -> Self {
        Self {
            scenario: scenario.to_string(),
            converged: result.converged,
            iterations: result.iterations,
            diagnostics: result.diagnostics.clone(),
            states: result
                .operating_point
                .states()
                .iter()
                .map(|s| s.iter().copied().collect())
                .collect(),
            controls: result
                .operating_point
                .controls()
                .iter()
                .map(|step| step.iter().map(|u| u.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| GameError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| GameError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_solve_report(path: &Path) -> Result<SolveReport> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| GameError::Config(e.to_string()))
}

/// One row per time step: time, then each player's state block and controls.
pub fn trajectory_csv(system: &MultiPlayerSystem, op: &OperatingPoint, dt: f64) -> String {
    let mut header = vec!["time".to_string()];
    for i in 0..system.num_players() {
        for j in 0..system.player(i).state_dim() {
            header.push(format!("p{i}_x{j}"));
        }
        for j in 0..system.control_dim(i) {
            header.push(format!("p{i}_u{j}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..op.num_steps() {
        let mut row = vec![format!("{:.6}", k as f64 * dt)];
        let x = op.state_at(k);
        let u = op.controls_at(k);
        for i in 0..system.num_players() {
            for idx in system.state_block(i) {
                row.push(format!("{:.9}", x[idx]));
            }
            for v in u[i].iter() {
                row.push(format!("{:.9}", v));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

const SVG_SIZE: f64 = 600.0;
const PLAYER_COLORS: [&str; 6] = [
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Plots each player's planar trajectory as one `<path>`, with scenario
/// geometry (hallway walls, lane centerlines) drawn underneath.
pub fn trajectory_svg(spec: &ScenarioSpec, states: &[Vec<f64>]) -> Result<String> {
    let system = spec.build_problem()?.system;
    let offsets: Vec<usize> = (0..spec.players.len())
        .map(|i| system.state_block(i).start)
        .collect();

    // Bounds over trajectories and geometry.
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |x: f64, y: f64| {
        min.0 = min.0.min(x);
        min.1 = min.1.min(y);
        max.0 = max.0.max(x);
        max.1 = max.1.max(y);
    };
    for (i, p) in spec.players.iter().enumerate() {
        let (xi, yi) = p.model.position_indices();
        for s in states {
            grow(s[offsets[i] + xi], s[offsets[i] + yi]);
        }
    }
    for lane in &spec.geometry.lanes {
        for pt in &lane.points {
            grow(pt[0], pt[1]);
        }
    }
    if let Some(d) = spec.geometry.d_hall {
        grow(0.0, -d);
        grow(0.0, d);
    }
    drop(grow);
    if !min.0.is_finite() {
        return Err(GameError::InvalidArgument("no points to plot".into()));
    }
    let span = (max.0 - min.0).max(max.1 - min.1).max(1e-6);
    let margin = 0.05 * span;
    let scale = SVG_SIZE / (span + 2.0 * margin);
    let map = |x: f64, y: f64| {
        (
            (x - min.0 + margin) * scale,
            SVG_SIZE - (y - min.1 + margin) * scale,
        )
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n",
        SVG_SIZE
    );
    // Geometry under the trajectories.
    if let Some(d) = spec.geometry.d_hall {
        for wall_y in [d, -d] {
            let (x1, y1) = map(min.0, wall_y);
            let (x2, y2) = map(max.0, wall_y);
            svg.push_str(&format!(
                "  <line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" stroke=\"#444\" stroke-width=\"2\"/>\n"
            ));
        }
    }
    for lane in &spec.geometry.lanes {
        let pts: Vec<String> = lane
            .points
            .iter()
            .map(|p| {
                let (x, y) = map(p[0], p[1]);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"#bbb\" stroke-width=\"1\" stroke-dasharray=\"6,4\"/>\n",
            pts.join(" ")
        ));
    }
    for (i, p) in spec.players.iter().enumerate() {
        let (xi, yi) = p.model.position_indices();
        let mut d = String::new();
        for (k, s) in states.iter().enumerate() {
            let (x, y) = map(s[offsets[i] + xi], s[offsets[i] + yi]);
            d.push_str(&format!("{}{x:.1} {y:.1} ", if k == 0 { "M" } else { "L" }));
        }
        svg.push_str(&format!(
            "  <path d=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            d.trim_end(),
            PLAYER_COLORS[i % PLAYER_COLORS.len()]
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Writes report.json, trajectory.csv, and trajectory.svg for one solve.
pub fn export_solve(spec: &ScenarioSpec, result: &SolveResult, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let report = SolveReport::from_result(&spec.name, result);
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| GameError::Config(e.to_string()))?;
    write_file(&dir.join("report.json"), &json)?;
    let system = spec.build_problem()?.system;
    write_file(
        &dir.join("trajectory.csv"),
        &trajectory_csv(&system, &result.operating_point, spec.time.dt),
    )?;
    write_file(
        &dir.join("trajectory.svg"),
        &trajectory_svg(spec, &report.states)?,
    )?;
    Ok(())
}

/// Writes the study report plus one SVG per retained cluster representative.
pub fn export_monte_carlo(
    spec: &ScenarioSpec,
    report: &MonteCarloReport,
    dir: &Path,
) -> Result<()> {
    ensure_dir(dir)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| GameError::Config(e.to_string()))?;
    write_file(&dir.join("montecarlo.json"), &json)?;
    for (c, cluster) in report.clusters.iter().enumerate() {
        write_file(
            &dir.join(format!("cluster_{c}.svg")),
            &trajectory_svg(spec, &cluster.representative)?,
        )?;
    }
    Ok(())
}

/// Writes the episode log and the executed-trajectory SVG.
pub fn export_receding(
    spec: &ScenarioSpec,
    log: &RecedingHorizonLog,
    dir: &Path,
) -> Result<()> {
    ensure_dir(dir)?;
    let json = serde_json::to_string_pretty(log)
        .map_err(|e| GameError::Config(e.to_string()))?;
    write_file(&dir.join("episode.json"), &json)?;
    write_file(
        &dir.join("episode.svg"),
        &trajectory_svg(spec, &log.states)?,
    )?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| GameError::Io {
        path: dir.display().to_string(),
        source,
    })
}
