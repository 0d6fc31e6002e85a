//! Trajectory generation: waypoint-constrained minimum-energy B-spline
//! fitting with collision avoidance.
//!
//! The cost `integral of z'(t)' W z'(t) dt` is quadratic in the control
//! points through `z' = P M_1 B_{d-1}` and the Gram matrix of the order
//! `d-1` basis; waypoints are linear equalities `P B_d(t_s) = w_s`.
//! Avoidance constraints come from the sliding `d`-point hulls of the
//! control polygon, which contain the curve on their knot span.

mod audit;
mod escalate;
mod exact;
mod mip;

pub use audit::{audit_exact, audit_mip, AuditViolation};
pub use escalate::{escalate, plan_with_escalation, EscalationOutcome, Method};
pub use exact::{plan_exact, ExactOutcome, ExactStatus};
pub use mip::{plan_mip, plan_multi, MipOutcome, MultiMode, SearchStats};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::arrangement::{Arrangement, Obstacle, SafetyRegion};
use crate::qp::{QpError, QuadraticProgram, SolverSettings};
use crate::spline::{
    basis_eval, derivative_matrix, first_derivative_matrix, gram_matrix, ControlPolygon, KnotVector, Point, SplineCurve, SplineError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("no feasible assignment: {0}")]
    Infeasible(InfeasibilityReport),
    #[error("escalation limit n_max = {n_max} reached; last attempt: {last}")]
    EscalationExhausted { n_max: usize, last: InfeasibilityReport },
}

/// Which avoidance constraint a disjunction guards. Orders
/// lexicographically by agent, region, then obstacle / partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disjunction {
    /// Region `region` of `agent` against obstacle `obstacle`.
    Obstacle { agent: usize, region: usize, obstacle: usize },
    /// Region `region` of two simultaneously planned agents.
    Pair { first: usize, second: usize, region: usize },
    /// Region `region` of `agent` against the fixed hull of an earlier agent.
    Fixed { agent: usize, region: usize, other: usize },
}

impl std::fmt::Display for Disjunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Disjunction::Obstacle { agent, region, obstacle } => {
                write!(f, "agent {agent} region {region} obstacle {obstacle}")
            }
            Disjunction::Pair { first, second, region } => write!(f, "agents ({first}, {second}) region {region}"),
            Disjunction::Fixed { agent, region, other } => {
                write!(f, "agent {agent} region {region} vs planned agent {other}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize)]
pub struct InfeasibilityReport {
    pub n: usize,
    pub d: usize,
    /// Waypoint equalities (plus box) alone are infeasible.
    pub root_infeasible: bool,
    /// Disjunctions for which every branch was infeasible.
    pub dead_ends: Vec<Disjunction>,
    pub nodes: usize,
    /// Search stopped at the node cap before exhausting the tree.
    pub node_limit_hit: bool,
}

impl std::fmt::Display for InfeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n = {}, d = {}, {} nodes", self.n, self.d, self.nodes)?;
        if self.root_infeasible {
            write!(f, ", waypoint constraints infeasible")?;
        }
        if self.node_limit_hit {
            write!(f, ", node cap reached")?;
        }
        if !self.dead_ends.is_empty() {
            write!(f, ", dead ends: ")?;
            for (i, dj) in self.dead_ends.iter().enumerate() {
                if i > 0 {
                    write!(f, "; ")?;
                }
                write!(f, "{dj}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub waypoints: Vec<Point>,
    pub timestamps: Vec<f64>,
    pub safety: SafetyRegion,
}

impl AgentSpec {
    pub fn new(waypoints: Vec<Point>, timestamps: Vec<f64>) -> Self {
        Self { waypoints, timestamps, safety: SafetyRegion::point() }
    }

    pub fn with_safety(mut self, safety: SafetyRegion) -> Self {
        self.safety = safety;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplineParams {
    /// Index of the last control point (`n + 1` points).
    pub n: usize,
    /// Order; polynomial degree is `d - 1`.
    pub d: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Escalation {
    pub n_step: usize,
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alternation {
    pub max_rounds: usize,
    pub convergence_tol: f64,
    /// Penalty weight on separation slacks.
    pub slack_penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Big-M constant; `None` derives it from the bounding box.
    pub big_m: Option<f64>,
    pub max_bb_nodes: usize,
    pub escalation: Escalation,
    pub alternation: Alternation,
    /// Weight `W` of the velocity cost `z' W z'`.
    pub cost_weight: Matrix2<f64>,
    /// Required separation between hulls and obstacles (m).
    pub margin: f64,
    /// Worker threads for branch-and-bound children; 1 runs inline.
    pub workers: usize,
    pub solver: SolverSettings,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            big_m: None,
            max_bb_nodes: 50_000,
            escalation: Escalation { n_step: 2, n_max: 40 },
            alternation: Alternation { max_rounds: 50, convergence_tol: 1e-6, slack_penalty: 1e4 },
            cost_weight: Matrix2::identity(),
            margin: 1e-6,
            workers: 1,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    pub agents: Vec<AgentSpec>,
    pub arrangement: Arrangement,
    pub spline: SplineParams,
    pub config: PlannerConfig,
}

impl PlanningProblem {
    pub fn new(agents: Vec<AgentSpec>, arrangement: Arrangement, spline: SplineParams) -> Result<Self, PlanError> {
        let p = Self { agents, arrangement, spline, config: PlannerConfig::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_config(mut self, config: PlannerConfig) -> Self {
        self.config = config;
        self
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let first = self.agents.first().ok_or_else(|| PlanError::Invalid("no agents".into()))?;
        let (t0, tn) = match (first.timestamps.first(), first.timestamps.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return Err(PlanError::Invalid("agent 0 has no timestamps".into())),
        };
        for (k, a) in self.agents.iter().enumerate() {
            if a.waypoints.len() != a.timestamps.len() {
                return Err(PlanError::Invalid(format!(
                    "agent {k}: {} waypoints but {} timestamps",
                    a.waypoints.len(),
                    a.timestamps.len()
                )));
            }
            if a.waypoints.len() < 2 {
                return Err(PlanError::Invalid(format!("agent {k}: need at least two waypoints")));
            }
            if a.timestamps.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(PlanError::Invalid(format!("agent {k}: timestamps must increase strictly")));
            }
            if a.timestamps[0] != t0 || *a.timestamps.last().unwrap() != tn {
                return Err(PlanError::Invalid(format!(
                    "agent {k}: all agents share one knot vector, so first/last timestamps must match agent 0"
                )));
            }
            if a.waypoints.iter().any(|w| !(w.x.is_finite() && w.y.is_finite())) {
                return Err(PlanError::Invalid(format!("agent {k}: non-finite waypoint")));
            }
        }
        let SplineParams { n, d } = self.spline;
        if d < 2 {
            return Err(PlanError::Invalid(format!("order d = {d} must be at least 2")));
        }
        if n + 1 < d {
            return Err(PlanError::Invalid(format!("need n + 1 >= d (n = {n}, d = {d})")));
        }
        let most = self.agents.iter().map(|a| a.waypoints.len()).max().unwrap_or(0);
        if n + 1 < most {
            return Err(PlanError::Invalid(format!("n + 1 = {} control points cannot meet {most} waypoints", n + 1)));
        }
        if !(self.config.margin >= 0.0) {
            return Err(PlanError::Invalid("margin must be non-negative".into()));
        }
        if let Some(t) = self.config.big_m {
            if !(t > 0.0) {
                return Err(PlanError::Invalid("big-M constant must be positive".into()));
            }
        }
        if self.config.escalation.n_step < 1 {
            return Err(PlanError::Invalid("escalation step must be at least 1".into()));
        }
        Ok(())
    }

    pub fn time_range(&self) -> (f64, f64) {
        let ts = &self.agents[0].timestamps;
        (ts[0], ts[ts.len() - 1])
    }

    /// Shared clamped uniform knot vector on `[t_0, t_N]`.
    pub fn knots(&self) -> Result<KnotVector, PlanError> {
        let (t0, tn) = self.time_range();
        Ok(KnotVector::clamped_uniform(t0, tn, self.spline.n, self.spline.d)?)
    }

    /// Obstacles as seen by agent `k`: enlarged by `-S_k`.
    pub fn obstacles_for(&self, k: usize) -> Vec<Obstacle> {
        self.arrangement.obstacles.iter().map(|o| o.inflated(&self.agents[k].safety)).collect()
    }

    /// Big-M constant in force: configured, or `2 (max|k| + max|h| R)`
    /// with `R` the box radius grown by the largest safety-region extent
    /// and the margin, so every relaxed row is slack inside the box.
    pub fn big_m(&self) -> f64 {
        self.config.big_m.unwrap_or_else(|| {
            let reach = self
                .agents
                .iter()
                .map(|a| a.safety.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max))
                .fold(0.0, f64::max)
                + self.config.margin;
            let hmax = self.arrangement.hyperplanes.iter().map(|h| h.normal.norm()).fold(0.0, f64::max);
            self.arrangement.big_m(0.0) + 2.0 * hmax * reach
        })
    }

    /// Same problem with a different number of control points.
    pub fn with_n(&self, n: usize) -> Self {
        let mut p = self.clone();
        p.spline.n = n;
        p
    }
}

/// Quadratic objective and waypoint equalities of one agent.
#[derive(Debug, Clone)]
pub struct AgentSystem {
    /// `(2n+2) x (2n+2)` Hessian over point-major control coordinates.
    pub hessian: DMatrix<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct Assembly {
    pub knots: KnotVector,
    pub agents: Vec<AgentSystem>,
}

impl Assembly {
    pub fn vars_per_agent(&self) -> usize {
        2 * self.knots.num_basis()
    }

    /// QP over the listed agents, variables concatenated in list order.
    pub fn joint_qp(&self, agents: &[usize]) -> QuadraticProgram {
        let nv = self.vars_per_agent();
        let dim = nv * agents.len();
        let mut hess = DMatrix::zeros(dim, dim);
        let rows: usize = agents.iter().map(|&k| self.agents[k].eq_rhs.len()).sum();
        let mut a = DMatrix::zeros(rows, dim);
        let mut b = DVector::zeros(rows);
        let mut r = 0;
        for (pos, &k) in agents.iter().enumerate() {
            let sys = &self.agents[k];
            hess.view_mut((pos * nv, pos * nv), (nv, nv)).copy_from(&sys.hessian);
            let m = sys.eq_rhs.len();
            a.view_mut((r, pos * nv), (m, nv)).copy_from(&sys.eq_matrix);
            b.rows_mut(r, m).copy_from(&sys.eq_rhs);
            r += m;
        }
        QuadraticProgram::new(hess, DVector::zeros(dim)).with_equalities(a, b)
    }
}

/// `K = M_1 G M_1'` with `G` the Gram matrix of the order `d-1` basis, so
/// that `integral |z'|^2 = sum_ab W_ab P_a K P_b'`.
pub fn velocity_gram(knots: &KnotVector) -> Result<DMatrix<f64>, PlanError> {
    let d = knots.order();
    if d < 2 {
        return Err(PlanError::Invalid("order must be at least 2".into()));
    }
    let reduced = knots.reduced(1)?;
    let g = gram_matrix(reduced.knots(), d - 1);
    // order-2 curves have a piecewise-constant derivative, outside the
    // continuity guard of `derivative_matrix`
    let m1 = if d >= 3 { derivative_matrix(knots, 1)?.matrix } else { first_derivative_matrix(knots) };
    Ok(&m1 * g * m1.transpose())
}

/// Objective and waypoint equalities for every agent.
pub fn assemble(problem: &PlanningProblem) -> Result<Assembly, PlanError> {
    problem.validate()?;
    let knots = problem.knots()?;
    let k = velocity_gram(&knots)?;
    let w = problem.config.cost_weight;
    if (w - w.transpose()).amax() > 1e-12 || w.cholesky().is_none() {
        return Err(PlanError::Invalid("cost weight must be symmetric positive definite".into()));
    }
    let np = knots.num_basis();
    let nv = 2 * np;
    let mut hess = DMatrix::zeros(nv, nv);
    for i in 0..np {
        for j in 0..np {
            for a in 0..2 {
                for b in 0..2 {
                    hess[(2 * i + a, 2 * j + b)] = 2.0 * k[(i, j)] * w[(a, b)];
                }
            }
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let mut agents = Vec::with_capacity(problem.agents.len());
    for spec in &problem.agents {
        let rows = 2 * spec.waypoints.len();
        let mut a = DMatrix::zeros(rows, nv);
        let mut b = DVector::zeros(rows);
        for (s, (wp, &t)) in spec.waypoints.iter().zip(&spec.timestamps).enumerate() {
            let basis = basis_eval(&knots, knots.order(), t)?;
            for (j, v) in basis.iter().enumerate() {
                a[(2 * s, 2 * j)] = *v;
                a[(2 * s + 1, 2 * j + 1)] = *v;
            }
            b[2 * s] = wp.x;
            b[2 * s + 1] = wp.y;
        }
        agents.push(AgentSystem { hessian: hess.clone(), eq_matrix: a, eq_rhs: b });
    }
    Ok(Assembly { knots, agents })
}

/// Hyperplane selected for one obstacle disjunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObstacleChoice {
    /// Index into the arrangement's hyperplanes.
    pub hyperplane: usize,
}

/// Hyperplane and orientation selected for an inter-agent disjunction:
/// `s h_m' p_first <= s h_m' p_second` up to margins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairChoice {
    pub hyperplane: usize,
    pub flipped: bool,
}

impl PairChoice {
    pub fn from_option(o: usize) -> Self {
        Self { hyperplane: o / 2, flipped: o % 2 == 1 }
    }

    pub fn sign(&self) -> f64 {
        if self.flipped { -1.0 } else { 1.0 }
    }
}

/// Binary selectors of the mixed-integer formulation. `alpha[(k,i,l,m)]`
/// is 0 for the one enforced hyperplane of each obstacle disjunction and 1
/// otherwise; likewise for `beta` over the `2M` oriented pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinaryAssignment {
    pub big_m: f64,
    pub num_hyperplanes: usize,
    pub obstacles: BTreeMap<(usize, usize, usize), ObstacleChoice>,
    pub pairs: BTreeMap<(usize, usize, usize), PairChoice>,
}

impl BinaryAssignment {
    pub fn alpha(&self, agent: usize, region: usize, obstacle: usize, m: usize) -> Option<u8> {
        self.obstacles.get(&(agent, region, obstacle)).map(|c| u8::from(c.hyperplane != m))
    }

    /// `beta` for pool entry `o` (`m = o / 2`, odd entries flipped).
    pub fn beta(&self, first: usize, second: usize, region: usize, o: usize) -> Option<u8> {
        self.pairs.get(&(first, second, region)).map(|c| u8::from(PairChoice::from_option(o) != *c))
    }
}

/// Separating directions of the exact formulation, unit length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeparatingPlanes {
    /// `(k, i, l) -> c`: `max_j c'p_j <= min_{x in O_l} c'x - margin`.
    pub obstacles: BTreeMap<(usize, usize, usize), [f64; 2]>,
    /// `(k1, k2, i) -> (c, offset)`: `max_j c'p^{k1}_j <= offset <= min_j c'p^{k2}_j` with margins.
    pub pairs: BTreeMap<(usize, usize, usize), ([f64; 2], f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificates {
    None,
    Binary(BinaryAssignment),
    Planes(SeparatingPlanes),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlan {
    pub polygon: ControlPolygon,
    pub knots: KnotVector,
    /// Arc length of the curve (m).
    pub length: f64,
    /// Value of the quadratic velocity cost.
    pub objective: f64,
    pub certificates: Certificates,
}

impl AgentPlan {
    pub fn curve(&self) -> SplineCurve {
        SplineCurve::new(self.knots.clone(), self.polygon.clone()).expect("plan polygon matches its knots")
    }

    pub(crate) fn from_vars(
        knots: &KnotVector,
        x: &[f64],
        hessian: &DMatrix<f64>,
        certificates: Certificates,
    ) -> Result<Self, PlanError> {
        let polygon = ControlPolygon::from_flat(x);
        let v = DVector::from_column_slice(x);
        let objective = 0.5 * v.dot(&(hessian * &v));
        let curve = SplineCurve::new(knots.clone(), polygon.clone())?;
        Ok(Self { length: curve.length(), polygon, knots: knots.clone(), objective, certificates })
    }

    /// Largest waypoint miss `|z(t_s) - w_s|`.
    pub fn waypoint_error(&self, spec: &AgentSpec) -> f64 {
        let c = self.curve();
        spec.waypoints
            .iter()
            .zip(&spec.timestamps)
            .map(|(w, &t)| c.eval(t).map(|z| (z - w).norm()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}

/// Solves the avoidance-free problem for each agent.
pub fn plan_unconstrained(problem: &PlanningProblem) -> Result<Vec<AgentPlan>, PlanError> {
    let asm = assemble(problem)?;
    (0..problem.agents.len())
        .map(|k| {
            let qp = asm.joint_qp(&[k]);
            let sol = crate::qp::solve(&qp, &problem.config.solver)?;
            if !sol.is_optimal() {
                return Err(PlanError::Infeasible(InfeasibilityReport {
                    n: problem.spline.n,
                    d: problem.spline.d,
                    root_infeasible: true,
                    ..Default::default()
                }));
            }
            AgentPlan::from_vars(&asm.knots, sol.x.as_slice(), &asm.agents[k].hessian, Certificates::None)
        })
        .collect()
}
