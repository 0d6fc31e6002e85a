//! Exact avoidance by alternation between separating directions and
//! control points.
//!
//! With the control points fixed, each region hull gets the unit direction
//! `c` that best separates it from an obstacle (or from another agent's
//! hull): the nearest-point direction between the two hulls, the previous
//! round's direction, and the oriented hyperplane normals are candidates,
//! and the widest gap wins. With the directions fixed the problem is a QP
//! in the control points, with a penalized slack per separation. Keeping
//! the previous direction as a candidate makes the penalized objective
//! non-increasing from round to round.

use std::collections::BTreeMap;

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{
    assemble, plan_unconstrained, AgentPlan, Assembly, Certificates, PlanError, PlanningProblem, SeparatingPlanes,
};
use crate::qp::{self, QpStatus, QuadraticProgram, WarmStart};
use crate::spline::Point;

/// Extra separation asked of the QP on top of the configured margin, so
/// that certificates re-checked outside the solver keep the full margin.
const HEADROOM: f64 = 1e-7;
/// Slack below which a separation counts as met.
const SLACK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactStatus {
    /// Converged with every separation certified.
    Success,
    /// Stopped with positive slack, failed re-check, or no convergence.
    Degraded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactOutcome {
    pub plans: Vec<AgentPlan>,
    pub planes: SeparatingPlanes,
    pub status: ExactStatus,
    /// Penalized objective after each round; the entry at 0 is the warm start.
    pub round_objectives: Vec<f64>,
    /// Largest shortfall of a separation gap below the margin.
    pub max_slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Obstacle(usize, usize, usize),
    Pair(usize, usize, usize),
}

/// Smallest Euclidean gap `min_b c'b - max_a c'a` over candidate unit
/// directions; the first candidate wins ties.
fn best_direction(a: &[Point], b: &[Point], candidates: &[Point]) -> (Point, f64) {
    let gap = |c: &Point| {
        let hi = a.iter().map(|p| c.dot(p)).fold(f64::NEG_INFINITY, f64::max);
        let lo = b.iter().map(|p| c.dot(p)).fold(f64::INFINITY, f64::min);
        lo - hi
    };
    let mut best = (candidates[0], gap(&candidates[0]));
    for c in &candidates[1..] {
        let g = gap(c);
        if g > best.1 {
            best = (*c, g);
        }
    }
    best
}

/// Unit vector from `conv(a)` toward `conv(b)` through their nearest
/// points, when the hulls are apart.
fn nearest_direction(a: &[Point], b: &[Point], settings: &qp::SolverSettings) -> Option<Point> {
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    // u = sum mu_v b_v - sum lambda_j a_j, minimize |u|^2 / 2
    let mut d = DMatrix::zeros(2, n);
    for (j, p) in a.iter().enumerate() {
        d[(0, j)] = -p.x;
        d[(1, j)] = -p.y;
    }
    for (v, p) in b.iter().enumerate() {
        d[(0, na + v)] = p.x;
        d[(1, na + v)] = p.y;
    }
    let q = d.transpose() * &d;
    let mut eq = DMatrix::zeros(2, n);
    for j in 0..na {
        eq[(0, j)] = 1.0;
    }
    for v in 0..nb {
        eq[(1, na + v)] = 1.0;
    }
    let qp = QuadraticProgram::new(q, DVector::zeros(n))
        .with_equalities(eq, DVector::from_element(2, 1.0))
        .with_inequalities(-DMatrix::identity(n, n), DVector::zeros(n));
    let sol = qp::solve(&qp, settings).ok()?;
    if sol.status != QpStatus::Optimal {
        return None;
    }
    let u = &d * &sol.x;
    let u = Point::new(u[0], u[1]);
    (u.norm() > 1e-9).then(|| u / u.norm())
}

fn centroid(points: &[Point]) -> Point {
    points.iter().fold(Point::zeros(), |acc, p| acc + p) / points.len() as f64
}

struct Geometry<'a> {
    problem: &'a PlanningProblem,
    asm: &'a Assembly,
    /// Inflated obstacle vertices inside the box, per agent.
    obstacles: Vec<Vec<Vec<Point>>>,
    /// Unit outward normals of each obstacle's pool, per agent.
    pools: Vec<Vec<Vec<Point>>>,
    /// Oriented unit normals `+-h_m`.
    directions: Vec<Point>,
}

impl<'a> Geometry<'a> {
    fn new(problem: &'a PlanningProblem, asm: &'a Assembly) -> Self {
        let clip = problem.arrangement.bounding_box.polytope();
        let mut obstacles = Vec::new();
        let mut pools = Vec::new();
        for k in 0..problem.agents.len() {
            let inflated = problem.obstacles_for(k);
            obstacles.push(inflated.iter().map(|o| o.polytope.intersect(&clip).vertices()).collect());
            pools.push(
                inflated
                    .iter()
                    .map(|o| o.pool.iter().map(|(_, f)| -f.normal / f.normal.norm()).collect())
                    .collect(),
            );
        }
        let directions = problem
            .arrangement
            .hyperplanes
            .iter()
            .flat_map(|h| {
                let u = h.normal / h.normal.norm();
                [u, -u]
            })
            .collect();
        Self { problem, asm, obstacles, pools, directions }
    }

    fn region(&self, x: &[DVector<f64>], k: usize, i: usize) -> Vec<Point> {
        let d = self.asm.knots.order();
        (i + 1 - d..=i).map(|j| Point::new(x[k][2 * j], x[k][2 * j + 1])).collect()
    }

    /// Points of `agent k` grown by its safety region.
    fn grown(&self, pts: &[Point], k: usize) -> Vec<Point> {
        let s = self.problem.agents[k].safety.vertices();
        pts.iter().flat_map(|p| s.iter().map(move |v| p + v)).collect()
    }

    /// Separating direction per key at the points `x`.
    fn separate(&self, x: &[DVector<f64>], previous: &BTreeMap<Key, Point>) -> BTreeMap<Key, (Point, f64)> {
        let settings = &self.problem.config.solver;
        let mut out = BTreeMap::new();
        let regions: Vec<usize> = self.asm.knots.regions().collect();
        for k in 0..x.len() {
            for (l, verts) in self.obstacles[k].iter().enumerate() {
                if verts.is_empty() {
                    continue;
                }
                for &i in &regions {
                    let key = Key::Obstacle(k, i, l);
                    let pts = self.region(x, k, i);
                    let mut cand = Vec::new();
                    cand.extend(previous.get(&key).copied());
                    cand.extend(nearest_direction(&pts, verts, settings));
                    let toward = centroid(verts) - centroid(&pts);
                    if toward.norm() > 1e-12 {
                        cand.push(toward / toward.norm());
                    }
                    cand.extend(self.pools[k][l].iter().copied());
                    if cand.is_empty() {
                        cand.push(Point::new(1.0, 0.0));
                    }
                    out.insert(key, best_direction(&pts, verts, &cand));
                }
            }
        }
        for k1 in 0..x.len() {
            for k2 in k1 + 1..x.len() {
                for &i in &regions {
                    let key = Key::Pair(k1, k2, i);
                    let a = self.grown(&self.region(x, k1, i), k1);
                    let b = self.grown(&self.region(x, k2, i), k2);
                    let mut cand = Vec::new();
                    cand.extend(previous.get(&key).copied());
                    cand.extend(nearest_direction(&a, &b, settings));
                    let toward = centroid(&b) - centroid(&a);
                    if toward.norm() > 1e-12 {
                        cand.push(toward / toward.norm());
                    }
                    cand.extend(self.directions.iter().copied());
                    if cand.is_empty() {
                        cand.push(Point::new(1.0, 0.0));
                    }
                    out.insert(key, best_direction(&a, &b, &cand));
                }
            }
        }
        out
    }

    /// Control-point QP for fixed directions. Variables: every agent's
    /// points, then one slack per key.
    fn points_qp(&self, planes: &BTreeMap<Key, (Point, f64)>) -> QuadraticProgram {
        let order: Vec<usize> = (0..self.problem.agents.len()).collect();
        let joint = self.asm.joint_qp(&order);
        let nv = self.asm.vars_per_agent();
        let d = self.asm.knots.order();
        let npts = joint.dim();
        let ns = planes.len();
        let dim = npts + ns;
        let margin = self.problem.config.margin + HEADROOM;
        let penalty = self.problem.config.alternation.slack_penalty;

        let mut q = DMatrix::zeros(dim, dim);
        q.view_mut((0, 0), (npts, npts)).copy_from(&joint.q_mat);
        let mut c = DVector::zeros(dim);
        c.rows_mut(npts, ns).fill(penalty);
        let mut a = DMatrix::zeros(joint.a_eq.nrows(), dim);
        a.view_mut((0, 0), (joint.a_eq.nrows(), npts)).copy_from(&joint.a_eq);
        let mut qp = QuadraticProgram::new(q, c).with_equalities(a, joint.b_eq.clone());

        let row = |entries: &[(usize, f64)]| {
            let mut r = DVector::zeros(dim);
            for &(i, v) in entries {
                r[i] += v;
            }
            r
        };
        let bbox = &self.problem.arrangement.bounding_box;
        let mut rows = Vec::new();
        for v in 0..npts {
            let comp = v % 2;
            rows.push((row(&[(v, 1.0)]), bbox.max[comp]));
            rows.push((row(&[(v, -1.0)]), -bbox.min[comp]));
        }
        for s in 0..ns {
            rows.push((row(&[(npts + s, -1.0)]), 0.0));
        }
        for (s, (key, (dir, _))) in planes.iter().enumerate() {
            let slack = npts + s;
            match *key {
                Key::Obstacle(k, i, l) => {
                    let thr = self.obstacles[k][l].iter().map(|v| dir.dot(v)).fold(f64::INFINITY, f64::min);
                    for j in i + 1 - d..=i {
                        let base = k * nv + 2 * j;
                        rows.push((row(&[(base, dir.x), (base + 1, dir.y), (slack, -1.0)]), thr - margin));
                    }
                }
                Key::Pair(k1, k2, i) => {
                    let (s1, s2) = (&self.problem.agents[k1].safety, &self.problem.agents[k2].safety);
                    let rhs = -(s1.support(dir) + s2.support(&-dir) + margin);
                    for j in i + 1 - d..=i {
                        for jj in i + 1 - d..=i {
                            let (b1, b2) = (k1 * nv + 2 * j, k2 * nv + 2 * jj);
                            rows.push((
                                row(&[(b1, dir.x), (b1 + 1, dir.y), (b2, -dir.x), (b2 + 1, -dir.y), (slack, -1.0)]),
                                rhs,
                            ));
                        }
                    }
                }
            }
        }
        qp.push_inequalities(&rows);
        qp
    }

    /// Penalized objective of points `x` under `planes`, with the least
    /// slacks that make them feasible.
    fn penalized(&self, x: &[DVector<f64>], planes: &BTreeMap<Key, (Point, f64)>) -> f64 {
        let margin = self.problem.config.margin + HEADROOM;
        let energy: f64 = x.iter().enumerate().map(|(k, v)| 0.5 * v.dot(&(&self.asm.agents[k].hessian * v))).sum();
        let slack: f64 = planes.values().map(|(_, gap)| (margin - gap).max(0.0)).sum();
        energy + self.problem.config.alternation.slack_penalty * slack
    }

    /// Largest shortfall of a gap below the configured margin.
    fn shortfall(&self, planes: &BTreeMap<Key, (Point, f64)>) -> f64 {
        planes.values().map(|(_, gap)| (self.problem.config.margin - gap).max(0.0)).fold(0.0, f64::max)
    }
}

fn to_planes(geo: &Geometry, x: &[DVector<f64>], sep: &BTreeMap<Key, (Point, f64)>) -> SeparatingPlanes {
    let mut planes = SeparatingPlanes::default();
    for (key, (c, _)) in sep {
        match *key {
            Key::Obstacle(k, i, l) => {
                planes.obstacles.insert((k, i, l), [c.x, c.y]);
            }
            Key::Pair(k1, k2, i) => {
                let a = geo.grown(&geo.region(x, k1, i), k1);
                let b = geo.grown(&geo.region(x, k2, i), k2);
                let hi = a.iter().map(|p| c.dot(p)).fold(f64::NEG_INFINITY, f64::max);
                let lo = b.iter().map(|p| c.dot(p)).fold(f64::INFINITY, f64::min);
                planes.pairs.insert((k1, k2, i), ([c.x, c.y], 0.5 * (hi + lo)));
            }
        }
    }
    planes
}

/// Alternating exact planner, warm-started from `warm` (for instance the
/// mixed-integer plans) or from the avoidance-free optimum.
pub fn plan_exact(problem: &PlanningProblem, warm: Option<&[AgentPlan]>) -> Result<ExactOutcome, PlanError> {
    let asm = assemble(problem)?;
    let count = problem.agents.len();
    let start: Vec<AgentPlan> = match warm {
        Some(p) => {
            if p.len() != count || p.iter().any(|a| a.polygon.len() != asm.knots.num_basis()) {
                return Err(PlanError::Invalid("warm start does not match the problem's agents and knots".into()));
            }
            p.to_vec()
        }
        None => plan_unconstrained(problem)?,
    };
    let mut x: Vec<DVector<f64>> = start.iter().map(|p| p.polygon.to_flat()).collect();

    // warm start directions: the binary certificates, if any
    let mut previous: BTreeMap<Key, Point> = BTreeMap::new();
    for (k, plan) in start.iter().enumerate() {
        if let Certificates::Binary(b) = &plan.certificates {
            for ((kk, i, l), choice) in &b.obstacles {
                if *kk != k {
                    continue;
                }
                let inflated = problem.obstacles_for(k);
                if let Some((_, f)) = inflated.get(*l).and_then(|o| o.pool.iter().find(|(m, _)| *m == choice.hyperplane)) {
                    previous.insert(Key::Obstacle(k, *i, *l), -f.normal / f.normal.norm());
                }
            }
            for ((k1, k2, i), choice) in &b.pairs {
                if *k1 < *k2 && *k1 == k {
                    let h = problem.arrangement.hyperplanes[choice.hyperplane].normal;
                    previous.insert(Key::Pair(*k1, *k2, *i), h / h.norm() * choice.sign());
                }
            }
        }
    }

    let geo = Geometry::new(problem, &asm);
    let alt = problem.config.alternation;
    let mut sep = geo.separate(&x, &previous);
    let mut current = geo.penalized(&x, &sep);
    let mut objectives = vec![current];
    let mut converged = sep.is_empty() && warm.is_none();
    let mut rounds = 0;
    while !converged && rounds < alt.max_rounds.max(1) {
        rounds += 1;
        let qp = geo.points_qp(&sep);
        let mut guess = DVector::zeros(qp.dim());
        for (k, v) in x.iter().enumerate() {
            guess.rows_mut(k * asm.vars_per_agent(), v.len()).copy_from(v);
        }
        let sol = qp::solve_warm(&qp, &problem.config.solver, &WarmStart { x: Some(guess), ..Default::default() })?;
        if sol.status != QpStatus::Optimal {
            debug!("exact round {rounds}: point QP ended with {:?}", sol.status);
            break;
        }
        let next: Vec<DVector<f64>> =
            (0..count).map(|k| sol.x.rows(k * asm.vars_per_agent(), asm.vars_per_agent()).into_owned()).collect();
        let directions: BTreeMap<Key, Point> = sep.iter().map(|(k, (c, _))| (*k, *c)).collect();
        let next_sep = geo.separate(&next, &directions);
        let value = geo.penalized(&next, &next_sep);
        // the previous directions stay candidates, so this cannot rise
        // beyond solver accuracy
        let change = (current - value).abs();
        x = next;
        sep = next_sep;
        current = value;
        objectives.push(value);
        debug!("exact round {rounds}: objective {value}");
        if sep.is_empty() || change <= alt.convergence_tol * current.abs().max(1.0) {
            converged = true;
        }
    }

    let slack = geo.shortfall(&sep);
    let planes = to_planes(&geo, &x, &sep);
    let mut plans = Vec::with_capacity(count);
    for (k, xk) in x.iter().enumerate().take(count) {
        let mine = SeparatingPlanes {
            obstacles: planes.obstacles.iter().filter(|(key, _)| key.0 == k).map(|(a, b)| (*a, *b)).collect(),
            pairs: planes.pairs.iter().filter(|(key, _)| key.0 == k || key.1 == k).map(|(a, b)| (*a, *b)).collect(),
        };
        plans.push(AgentPlan::from_vars(&asm.knots, xk.as_slice(), &asm.agents[k].hessian, Certificates::Planes(mine))?);
    }
    let certified = super::audit_exact(problem, &plans, &planes).is_empty();
    let status = if converged && slack <= SLACK_TOL && certified { ExactStatus::Success } else { ExactStatus::Degraded };
    Ok(ExactOutcome { plans, planes, status, round_objectives: objectives, max_slack: slack })
}
