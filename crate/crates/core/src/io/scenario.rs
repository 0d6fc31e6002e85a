//! Scenario files: versioned JSON describing hyperplanes, obstacles,
//! agents, the spline size and planner overrides.
//!
//! ```json
//! {
//!   "version": 1,
//!   "hyperplanes": { "normals": [[-0.5931, 0.8051]], "offsets": [4.2239] },
//!   "obstacles": [ { "name": "O1", "tuple": "(+)" },
//!                  { "name": "box", "vertices": [[0, 0], [1, 0], [1, 1]] } ],
//!   "agents": [ { "waypoints": [[-9, -0.5], [6, 0]], "timestamps": [0, 10],
//!                 "safety": [[-0.2, -0.2], [0.2, -0.2], [0.2, 0.2], [-0.2, 0.2]] } ],
//!   "spline": { "n": 12, "d": 6 },
//!   "bounding_box": { "min": [-12, -10], "max": [10, 12] },
//!   "gravity": 9.81,
//!   "dt": 0.01,
//!   "planner": { "margin": 1e-6, "max_bb_nodes": 50000 }
//! }
//! ```
//!
//! Only `version`, `agents` and `spline.n` are required.

use std::path::Path;

use log::warn;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use super::IoError;
use crate::arrangement::{Arrangement, BoundingBox, Hyperplane, ObstacleSpec, SafetyRegion, SignTuple};
use crate::flatness::DEFAULT_GRAVITY;
use crate::plan::{AgentSpec, PlannerConfig, PlanningProblem, SplineParams};
use crate::spline::Point;

pub const SCENARIO_VERSION: u32 = 1;
/// Order used when a scenario leaves `spline.d` out.
pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub problem: PlanningProblem,
    pub gravity: f64,
    /// Sampling step for traces and verification; `None` uses a
    /// thousandth of the horizon.
    pub dt: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    #[serde(default)]
    hyperplanes: HyperplaneSet,
    #[serde(default)]
    obstacles: Vec<ObstacleEntry>,
    agents: Vec<AgentEntry>,
    spline: SplineEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bounding_box: Option<BoxEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gravity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    #[serde(default)]
    planner: PlannerEntry,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperplaneSet {
    normals: Vec<[f64; 2]>,
    offsets: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tuple: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentEntry {
    waypoints: Vec<[f64; 2]>,
    timestamps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    safety: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplineEntry {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxEntry {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    big_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_bb_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    convergence_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slack_penalty: Option<f64>,
    /// Row-major `W` of the velocity cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cost_weight: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
}

fn pt(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

fn arr(p: &Point) -> [f64; 2] {
    [p.x, p.y]
}

fn invalid(msg: impl Into<String>) -> IoError {
    IoError::Scenario(msg.into())
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario, IoError> {
        if self.version != SCENARIO_VERSION {
            return Err(invalid(format!("version: unsupported scenario version {} (expected {SCENARIO_VERSION})", self.version)));
        }
        let hs = &self.hyperplanes;
        if hs.normals.len() != hs.offsets.len() {
            return Err(invalid(format!(
                "hyperplanes: {} normals but {} offsets",
                hs.normals.len(),
                hs.offsets.len()
            )));
        }
        let hyperplanes: Vec<Hyperplane> =
            hs.normals.iter().zip(&hs.offsets).map(|(n, k)| Hyperplane::new(pt(*n), *k)).collect();

        let mut obstacles = Vec::with_capacity(self.obstacles.len());
        for (i, o) in self.obstacles.iter().enumerate() {
            let spec = match (&o.tuple, &o.vertices) {
                (Some(t), None) => ObstacleSpec::Tuple(
                    t.parse::<SignTuple>().map_err(|e| invalid(format!("obstacles[{i}] ({}): {e}", o.name)))?,
                ),
                (None, Some(v)) => ObstacleSpec::Vertices(v.iter().map(|p| pt(*p)).collect()),
                _ => {
                    return Err(invalid(format!(
                        "obstacles[{i}] ({}): give exactly one of `tuple` or `vertices`",
                        o.name
                    )))
                }
            };
            obstacles.push((o.name.clone(), spec));
        }

        let mut agents = Vec::with_capacity(self.agents.len());
        for (k, a) in self.agents.iter().enumerate() {
            let mut spec = AgentSpec::new(a.waypoints.iter().map(|p| pt(*p)).collect(), a.timestamps.clone());
            if let Some(s) = &a.safety {
                spec.safety = SafetyRegion::new(s.iter().map(|p| pt(*p)).collect())
                    .map_err(|e| invalid(format!("agents[{k}].safety: {e}")))?;
            }
            agents.push(spec);
        }

        let bbox = match &self.bounding_box {
            Some(b) => BoundingBox::new(pt(b.min), pt(b.max)).map_err(|e| invalid(format!("bounding_box: {e}")))?,
            None => {
                let all: Vec<Point> = agents.iter().flat_map(|a| a.waypoints.iter().copied()).collect();
                BoundingBox::around(&all).map_err(|e| invalid(format!("agents: {e}")))?
            }
        };
        let arrangement = Arrangement::build(hyperplanes, &obstacles, bbox)?;

        let d = self.spline.d.unwrap_or_else(|| {
            warn!("spline.d missing; using order d = {DEFAULT_ORDER}");
            DEFAULT_ORDER
        });
        let mut config = PlannerConfig::default();
        let p = &self.planner;
        config.big_m = p.big_m.or(config.big_m);
        config.max_bb_nodes = p.max_bb_nodes.unwrap_or(config.max_bb_nodes);
        config.escalation.n_step = p.n_step.unwrap_or(config.escalation.n_step);
        config.escalation.n_max = p.n_max.unwrap_or(config.escalation.n_max);
        config.alternation.max_rounds = p.max_rounds.unwrap_or(config.alternation.max_rounds);
        config.alternation.convergence_tol = p.convergence_tol.unwrap_or(config.alternation.convergence_tol);
        config.alternation.slack_penalty = p.slack_penalty.unwrap_or(config.alternation.slack_penalty);
        if let Some(w) = p.cost_weight {
            config.cost_weight = Matrix2::new(w[0][0], w[0][1], w[1][0], w[1][1]);
        }
        config.margin = p.margin.unwrap_or(config.margin);
        config.workers = p.workers.unwrap_or(config.workers);

        let problem = PlanningProblem::new(agents, arrangement, SplineParams { n: self.spline.n, d })?.with_config(config);
        problem.validate()?;
        let gravity = self.gravity.unwrap_or(DEFAULT_GRAVITY);
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(invalid("gravity: must be positive"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(invalid("dt: must be positive"));
            }
        }
        Ok(Scenario { problem, gravity, dt: self.dt })
    }

    fn from_scenario(s: &Scenario) -> Self {
        let p = &s.problem;
        let arr_ = &p.arrangement;
        let c = &p.config;
        let w = c.cost_weight;
        ScenarioFile {
            version: SCENARIO_VERSION,
            hyperplanes: HyperplaneSet {
                normals: arr_.hyperplanes.iter().map(|h| arr(&h.normal)).collect(),
                offsets: arr_.hyperplanes.iter().map(|h| h.offset).collect(),
            },
            obstacles: arr_
                .obstacles
                .iter()
                .map(|o| match &o.declared {
                    ObstacleSpec::Tuple(t) => ObstacleEntry { name: o.name.clone(), tuple: Some(t.to_string()), vertices: None },
                    ObstacleSpec::Vertices(v) => {
                        ObstacleEntry { name: o.name.clone(), tuple: None, vertices: Some(v.iter().map(arr).collect()) }
                    }
                })
                .collect(),
            agents: p
                .agents
                .iter()
                .map(|a| AgentEntry {
                    waypoints: a.waypoints.iter().map(arr).collect(),
                    timestamps: a.timestamps.clone(),
                    safety: (!a.safety.is_point()).then(|| a.safety.vertices().iter().map(arr).collect()),
                })
                .collect(),
            spline: SplineEntry { n: p.spline.n, d: Some(p.spline.d) },
            bounding_box: Some(BoxEntry { min: arr(&arr_.bounding_box.min), max: arr(&arr_.bounding_box.max) }),
            gravity: Some(s.gravity),
            dt: s.dt,
            planner: PlannerEntry {
                big_m: c.big_m,
                max_bb_nodes: Some(c.max_bb_nodes),
                n_step: Some(c.escalation.n_step),
                n_max: Some(c.escalation.n_max),
                max_rounds: Some(c.alternation.max_rounds),
                convergence_tol: Some(c.alternation.convergence_tol),
                slack_penalty: Some(c.alternation.slack_penalty),
                cost_weight: Some([[w[(0, 0)], w[(0, 1)]], [w[(1, 0)], w[(1, 1)]]]),
                margin: Some(c.margin),
                workers: Some(c.workers),
            },
        }
    }
}

/// Parses scenario JSON. Schema errors name the offending field path.
pub fn parse_scenario(text: &str) -> Result<Scenario, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error::deserialize(de)
        .map_err(|e| IoError::Schema { path: e.path().to_string(), message: e.inner().to_string() })?;
    file.into_scenario()
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })?;
    parse_scenario(&text)
}

/// Scenario JSON with every default written out. Solver settings are not
/// part of the format.
pub fn scenario_to_json(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(&ScenarioFile::from_scenario(scenario)).expect("scenario serializes")
}
