//! Plan files, trace CSV and sweep tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::flatness::{FlatError, FlatModel};
use crate::plan::{AgentPlan, Certificates};
use crate::spline::{ControlPolygon, KnotVector, Point};

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSelection {
    pub agent: usize,
    pub region: usize,
    pub obstacle: usize,
    pub hyperplane: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelection {
    pub first: usize,
    pub second: usize,
    pub region: usize,
    pub hyperplane: usize,
    /// The normal is negated: `-h_m' p_first <= -h_m' p_second`.
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePlane {
    pub agent: usize,
    pub region: usize,
    pub obstacle: usize,
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlane {
    pub first: usize,
    pub second: usize,
    pub region: usize,
    pub normal: [f64; 2],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertificateRecord {
    None,
    Binary { big_m: f64, obstacles: Vec<ObstacleSelection>, pairs: Vec<PairSelection> },
    Planes { obstacles: Vec<ObstaclePlane>, pairs: Vec<PairPlane> },
}

impl From<&Certificates> for CertificateRecord {
    fn from(c: &Certificates) -> Self {
        match c {
            Certificates::None => CertificateRecord::None,
            Certificates::Binary(b) => CertificateRecord::Binary {
                big_m: b.big_m,
                obstacles: b
                    .obstacles
                    .iter()
                    .map(|(&(agent, region, obstacle), c)| ObstacleSelection {
                        agent,
                        region,
                        obstacle,
                        hyperplane: c.hyperplane,
                    })
                    .collect(),
                pairs: b
                    .pairs
                    .iter()
                    .map(|(&(first, second, region), c)| PairSelection {
                        first,
                        second,
                        region,
                        hyperplane: c.hyperplane,
                        flipped: c.flipped,
                    })
                    .collect(),
            },
            Certificates::Planes(p) => CertificateRecord::Planes {
                obstacles: p
                    .obstacles
                    .iter()
                    .map(|(&(agent, region, obstacle), c)| ObstaclePlane { agent, region, obstacle, normal: *c })
                    .collect(),
                pairs: p
                    .pairs
                    .iter()
                    .map(|(&(first, second, region), (c, offset))| PairPlane {
                        first,
                        second,
                        region,
                        normal: *c,
                        offset: *offset,
                    })
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub control_points: Vec<[f64; 2]>,
    /// Arc length (m).
    pub length: f64,
    /// Velocity energy `integral z' W z' dt`.
    pub objective: f64,
    pub certificates: CertificateRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub version: u32,
    /// `mip` or `exact`.
    pub method: String,
    /// `optimal`, `node_limit`, `success` or `degraded`.
    pub status: String,
    pub n: usize,
    pub d: usize,
    pub knots: Vec<f64>,
    pub agents: Vec<AgentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
}

impl PlanFile {
    pub fn new(method: &str, status: &str, plans: &[AgentPlan]) -> Self {
        let knots = &plans[0].knots;
        PlanFile {
            version: PLAN_VERSION,
            method: method.into(),
            status: status.into(),
            n: knots.n(),
            d: knots.order(),
            knots: knots.knots().to_vec(),
            agents: plans
                .iter()
                .map(|p| AgentRecord {
                    control_points: p.polygon.points.iter().map(|q| [q.x, q.y]).collect(),
                    length: p.length,
                    objective: p.objective,
                    certificates: (&p.certificates).into(),
                })
                .collect(),
            nodes: None,
            rounds: None,
        }
    }

    /// Curves of the plan; certificates are not read back.
    pub fn plans(&self) -> Result<Vec<AgentPlan>, IoError> {
        let knots = KnotVector::new(self.knots.clone(), self.d).map_err(|e| IoError::Plan(e.into()))?;
        self.agents
            .iter()
            .map(|a| {
                let polygon = ControlPolygon::new(a.control_points.iter().map(|p| Point::new(p[0], p[1])).collect());
                if polygon.len() != knots.num_basis() {
                    return Err(IoError::Scenario(format!(
                        "plan file: {} control points for {} basis functions",
                        polygon.len(),
                        knots.num_basis()
                    )));
                }
                Ok(AgentPlan {
                    polygon,
                    knots: knots.clone(),
                    length: a.length,
                    objective: a.objective,
                    certificates: Certificates::None,
                })
            })
            .collect()
    }
}

pub fn load_plan(path: &Path) -> Result<PlanFile, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| IoError::Schema { path: e.path().to_string(), message: e.inner().to_string() })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IoError::Scenario(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}

/// Trace times `t0 + j dt`, `j = 0 ..= floor((tn - t0) / dt)`.
pub fn trace_times(t0: f64, tn: f64, dt: f64) -> Vec<f64> {
    let count = ((tn - t0) / dt + 1e-9).floor() as usize;
    (0..=count).map(|j| (t0 + j as f64 * dt).min(tn)).collect()
}

#[derive(Debug, Serialize)]
struct TraceRow {
    agent: usize,
    t: f64,
    x: f64,
    y: f64,
    psi: Option<f64>,
    va: Option<f64>,
    phi: Option<f64>,
}

/// Writes `agent, t, x, y, psi, va, phi` (s, m, m, rad, m/s, rad). Rows
/// where the speed vanishes leave the heading and inputs empty. Returns
/// the number of singular rows.
pub fn write_trace<W: std::io::Write>(out: W, plans: &[AgentPlan], model: &FlatModel, dt: f64) -> Result<usize, IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut singular = 0;
    for (k, plan) in plans.iter().enumerate() {
        let curve = plan.curve();
        let (t0, tn) = (curve.knots().start(), curve.knots().end());
        for t in trace_times(t0, tn, dt) {
            let row = match model.trace(&curve, &[t]) {
                Ok(tp) => TraceRow {
                    agent: k,
                    t,
                    x: tp[0].state.x,
                    y: tp[0].state.y,
                    psi: Some(tp[0].state.psi),
                    va: Some(tp[0].input.va),
                    phi: Some(tp[0].input.phi),
                },
                Err(FlatError::SingularVelocity { .. }) => {
                    singular += 1;
                    let z = curve.eval(t).map_err(|e| IoError::Plan(e.into()))?;
                    TraceRow { agent: k, t, x: z.x, y: z.y, psi: None, va: None, phi: None }
                }
                Err(e) => return Err(IoError::Flat(e)),
            };
            w.serialize(row)?;
        }
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(singular)
}

/// One row of a sweep table; failed runs carry `*` in `length` and `status`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    /// `MI` or `EX`.
    pub method: String,
    pub length: String,
    /// Seconds; hardware dependent.
    pub wall_time: f64,
    pub status: String,
}

pub fn write_sweep<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| IoError::Csv(e.into()))?;
    Ok(())
}
