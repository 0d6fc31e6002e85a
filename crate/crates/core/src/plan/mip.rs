//! Mixed-integer avoidance by disjunctive branch-and-bound.
//!
//! Every `(agent, region, obstacle)` triple, and every pair of agents per
//! region, is a one-of-many disjunction over separating hyperplanes. A
//! node QP carries the waypoint equalities, box bounds on the control
//! points, and the rows of the options assigned so far; disjunctions the
//! node optimum already satisfies are never branched on. Node QPs are
//! relaxations of the big-M program in which unassigned selectors sit at
//! their slack value, so the first popped node that satisfies every
//! disjunction is optimal.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use log::{debug, warn};
use nalgebra::DVector;
use rayon::prelude::*;

use super::{
    assemble, AgentPlan, Assembly, BinaryAssignment, Certificates, Disjunction, InfeasibilityReport, ObstacleChoice,
    PairChoice, PlanError, PlanningProblem,
};
use crate::qp::{self, QpStatus, QuadraticProgram, WarmStart};
use crate::spline::Point;

/// A disjunction counts as satisfied when some option violates none of its
/// rows by more than this.
pub const SATISFACTION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiMode {
    /// All agents in one program with inter-agent disjunctions.
    #[default]
    Simultaneous,
    /// Agents in index order, earlier plans frozen as per-region obstacles.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub struct SearchStats {
    /// QPs solved, root included.
    pub nodes: usize,
    pub max_depth: usize,
    /// Node QPs that hit the iteration cap and were dropped.
    pub unsolved: usize,
    /// The node cap stopped best-first search; the plan came from a dive
    /// and carries no optimality guarantee.
    pub node_limit_hit: bool,
}

impl SearchStats {
    fn absorb(&mut self, other: &SearchStats) {
        self.nodes += other.nodes;
        self.max_depth = self.max_depth.max(other.max_depth);
        self.unsolved += other.unsolved;
        self.node_limit_hit |= other.node_limit_hit;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipOutcome {
    pub plans: Vec<AgentPlan>,
    pub assignment: BinaryAssignment,
    pub stats: SearchStats,
}

type Row = (DVector<f64>, f64);

#[derive(Debug, Clone, Copy)]
enum Tag {
    Obstacle(usize),
    Pair(PairChoice),
}

#[derive(Debug, Clone)]
struct Choice {
    tag: Tag,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
struct Group {
    disjunction: Disjunction,
    options: Vec<Choice>,
}

/// Earlier plan frozen during iterative planning.
struct Frozen<'a> {
    index: usize,
    plan: &'a AgentPlan,
}

struct Formulation {
    base: QuadraticProgram,
    groups: Vec<Group>,
}

fn unit_row(dim: usize, entries: &[(usize, f64)]) -> DVector<f64> {
    let mut r = DVector::zeros(dim);
    for &(i, v) in entries {
        r[i] += v;
    }
    r
}

impl Formulation {
    /// `order` lists the problem's agent indices in joint-variable order.
    fn build(problem: &PlanningProblem, asm: &Assembly, order: &[usize], frozen: &[Frozen]) -> Result<Self, PlanError> {
        let nv = asm.vars_per_agent();
        let dim = nv * order.len();
        let np = asm.knots.num_basis();
        let d = asm.knots.order();
        let margin = problem.config.margin;
        let mut base = asm.joint_qp(order);

        let bbox = &problem.arrangement.bounding_box;
        let mut bounds = Vec::with_capacity(2 * dim);
        for pos in 0..order.len() {
            for j in 0..np {
                for c in 0..2 {
                    let v = pos * nv + 2 * j + c;
                    bounds.push((unit_row(dim, &[(v, 1.0)]), bbox.max[c]));
                    bounds.push((unit_row(dim, &[(v, -1.0)]), -bbox.min[c]));
                }
            }
        }
        base.push_inequalities(&bounds);

        let hyperplanes = &problem.arrangement.hyperplanes;
        let needs_pool = order.len() > 1 || !frozen.is_empty();
        if needs_pool && hyperplanes.is_empty() {
            return Err(PlanError::Invalid("inter-agent avoidance needs at least one hyperplane".into()));
        }
        // oriented unit directions +-h_m
        let directions: Vec<(PairChoice, Point)> = (0..2 * hyperplanes.len())
            .map(|o| {
                let c = PairChoice::from_option(o);
                let h = hyperplanes[c.hyperplane].normal;
                (c, h / h.norm() * c.sign())
            })
            .collect();

        let regions: Vec<usize> = asm.knots.regions().collect();
        let mut groups = Vec::new();
        for (pos, &k) in order.iter().enumerate() {
            let var = |j: usize, c: usize| pos * nv + 2 * j + c;
            for (l, obstacle) in problem.obstacles_for(k).iter().enumerate() {
                for &i in &regions {
                    let options = obstacle
                        .pool
                        .iter()
                        .map(|(m, f)| {
                            let s = f.normal.norm();
                            let (a, b) = (f.normal / s, f.offset / s);
                            // a'p_j >= b + margin
                            let rows = (i + 1 - d..=i)
                                .map(|j| (unit_row(dim, &[(var(j, 0), -a.x), (var(j, 1), -a.y)]), -(b + margin)))
                                .collect();
                            Choice { tag: Tag::Obstacle(*m), rows }
                        })
                        .collect();
                    groups.push(Group { disjunction: Disjunction::Obstacle { agent: k, region: i, obstacle: l }, options });
                }
            }
            for f in frozen {
                let other = &problem.agents[f.index].safety;
                let own = &problem.agents[k].safety;
                for &i in &regions {
                    let q = f.plan.polygon.region(i, d);
                    let options = directions
                        .iter()
                        .map(|(c, h)| {
                            let low = q.iter().map(|p| h.dot(p)).fold(f64::INFINITY, f64::min);
                            let rhs = low - own.support(h) - other.support(&-h) - margin;
                            let rows = (i + 1 - d..=i)
                                .map(|j| (unit_row(dim, &[(var(j, 0), h.x), (var(j, 1), h.y)]), rhs))
                                .collect();
                            Choice { tag: Tag::Pair(*c), rows }
                        })
                        .collect();
                    groups.push(Group { disjunction: Disjunction::Fixed { agent: k, region: i, other: f.index }, options });
                }
            }
        }
        for (p1, &k1) in order.iter().enumerate() {
            for (p2, &k2) in order.iter().enumerate().skip(p1 + 1) {
                let (s1, s2) = (&problem.agents[k1].safety, &problem.agents[k2].safety);
                for &i in &regions {
                    let options = directions
                        .iter()
                        .map(|(c, h)| {
                            let rhs = -(s1.support(h) + s2.support(&-h) + margin);
                            let mut rows = Vec::with_capacity(d * d);
                            for j in i + 1 - d..=i {
                                for jj in i + 1 - d..=i {
                                    let row = unit_row(
                                        dim,
                                        &[
                                            (p1 * nv + 2 * j, h.x),
                                            (p1 * nv + 2 * j + 1, h.y),
                                            (p2 * nv + 2 * jj, -h.x),
                                            (p2 * nv + 2 * jj + 1, -h.y),
                                        ],
                                    );
                                    rows.push((row, rhs));
                                }
                            }
                            Choice { tag: Tag::Pair(*c), rows }
                        })
                        .collect();
                    groups.push(Group { disjunction: Disjunction::Pair { first: k1, second: k2, region: i }, options });
                }
            }
        }
        groups.sort_by_key(|g| g.disjunction);
        Ok(Self { base, groups })
    }

    fn violation(choice: &Choice, x: &DVector<f64>) -> f64 {
        choice.rows.iter().map(|(r, h)| r.dot(x) - h).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest worst-row violation over the options, and the option
    /// attaining it (first on ties).
    fn score(group: &Group, x: &DVector<f64>) -> (f64, Option<usize>) {
        let mut best = (f64::INFINITY, None);
        for (o, c) in group.options.iter().enumerate() {
            let v = Self::violation(c, x);
            if v < best.0 {
                best = (v, Some(o));
            }
        }
        best
    }

    /// Most violated unsatisfied disjunction; ties go to the smallest.
    fn most_violated(&self, x: &DVector<f64>) -> Option<usize> {
        let mut pick: Option<(usize, f64)> = None;
        for (g, group) in self.groups.iter().enumerate() {
            let (v, _) = Self::score(group, x);
            if v > SATISFACTION_TOL && pick.is_none_or(|(_, best)| v > best) {
                pick = Some((g, v));
            }
        }
        pick.map(|(g, _)| g)
    }

    fn node_qp(&self, assigned: &[(usize, usize)]) -> QuadraticProgram {
        let mut qp = self.base.clone();
        let mut seen = BTreeSet::new();
        let mut rows = Vec::new();
        for &(g, o) in assigned {
            for (r, h) in &self.groups[g].options[o].rows {
                let mut key: Vec<u64> = r.iter().map(|v| v.to_bits()).collect();
                key.push(h.to_bits());
                if seen.insert(key) {
                    rows.push((r.clone(), *h));
                }
            }
        }
        qp.push_inequalities(&rows);
        qp
    }
}

#[derive(Debug, Clone)]
struct Node {
    objective: f64,
    /// Sorted `(group, option)` pairs.
    assigned: Vec<(usize, usize)>,
    x: DVector<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.objective.total_cmp(&other.objective).then_with(|| self.assigned.cmp(&other.assigned))
    }
}

enum NodeResult {
    Solved(Node),
    Infeasible,
    Unsolved,
}

struct Search<'a> {
    form: &'a Formulation,
    problem: &'a PlanningProblem,
    pool: Option<rayon::ThreadPool>,
    stats: SearchStats,
    dead_ends: BTreeSet<Disjunction>,
}

impl<'a> Search<'a> {
    fn new(form: &'a Formulation, problem: &'a PlanningProblem) -> Result<Self, PlanError> {
        let workers = problem.config.workers.max(1);
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| PlanError::Invalid(format!("worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { form, problem, pool, stats: SearchStats::default(), dead_ends: BTreeSet::new() })
    }

    fn solve(&self, assigned: Vec<(usize, usize)>, warm: Option<&DVector<f64>>) -> Result<NodeResult, PlanError> {
        let qp = self.form.node_qp(&assigned);
        let start = WarmStart { x: warm.cloned(), ..Default::default() };
        let sol = qp::solve_warm(&qp, &self.problem.config.solver, &start)?;
        Ok(match sol.status {
            QpStatus::Optimal => NodeResult::Solved(Node { objective: sol.objective, assigned, x: sol.x }),
            QpStatus::Infeasible => NodeResult::Infeasible,
            QpStatus::MaxIterations => NodeResult::Unsolved,
        })
    }

    /// Solves every child of `node` on disjunction `g`, in option order.
    fn expand(&mut self, node: &Node, g: usize) -> Result<Vec<Node>, PlanError> {
        let jobs: Vec<Vec<(usize, usize)>> = (0..self.form.groups[g].options.len())
            .map(|o| {
                let mut a = node.assigned.clone();
                a.push((g, o));
                a.sort_unstable();
                a
            })
            .collect();
        let results: Vec<Result<NodeResult, PlanError>> = match &self.pool {
            Some(pool) => pool.install(|| jobs.into_par_iter().map(|a| self.solve(a, Some(&node.x))).collect()),
            None => jobs.into_iter().map(|a| self.solve(a, Some(&node.x))).collect(),
        };
        let mut children = Vec::new();
        for r in results {
            self.stats.nodes += 1;
            match r? {
                NodeResult::Solved(c) => children.push(c),
                NodeResult::Infeasible => {}
                NodeResult::Unsolved => self.stats.unsolved += 1,
            }
        }
        self.stats.max_depth = self.stats.max_depth.max(node.assigned.len() + 1);
        if children.is_empty() {
            self.dead_ends.insert(self.form.groups[g].disjunction);
        }
        Ok(children)
    }

    fn run(&mut self) -> Result<Result<Node, bool>, PlanError> {
        self.stats.nodes += 1;
        let root = match self.solve(Vec::new(), None)? {
            NodeResult::Solved(n) => n,
            NodeResult::Infeasible => return Ok(Err(true)),
            NodeResult::Unsolved => {
                self.stats.unsolved += 1;
                return Ok(Err(true));
            }
        };
        let cap = self.problem.config.max_bb_nodes.max(1);
        let mut open = BinaryHeap::new();
        open.push(Reverse(root));
        while let Some(Reverse(node)) = open.pop() {
            let Some(g) = self.form.most_violated(&node.x) else {
                return Ok(Ok(node));
            };
            if self.stats.nodes >= cap {
                self.stats.node_limit_hit = true;
                warn!("branch-and-bound node cap {cap} reached; diving for a feasible plan");
                open.push(Reverse(node));
                return self.dive(open, cap);
            }
            for c in self.expand(&node, g)? {
                open.push(Reverse(c));
            }
        }
        Ok(Err(false))
    }

    /// Depth-first from the best open nodes, cheapest child first, for at
    /// most `budget` further solves.
    fn dive(&mut self, open: BinaryHeap<Reverse<Node>>, budget: usize) -> Result<Result<Node, bool>, PlanError> {
        let limit = self.stats.nodes + budget;
        let mut stack: Vec<Node> = open.into_sorted_vec().into_iter().map(|Reverse(n)| n).collect();
        // into_sorted_vec on Reverse is descending in objective; pop takes the best
        while let Some(node) = stack.pop() {
            let Some(g) = self.form.most_violated(&node.x) else {
                return Ok(Ok(node));
            };
            if self.stats.nodes >= limit {
                break;
            }
            let mut children = self.expand(&node, g)?;
            children.sort();
            stack.extend(children.into_iter().rev());
        }
        Ok(Err(false))
    }
}

/// Chosen option of every disjunction at `x`: assigned, else the best
/// satisfied one.
fn certify(form: &Formulation, node: &Node, big_m: f64, num_hyperplanes: usize) -> BinaryAssignment {
    let assigned: BTreeMap<usize, usize> = node.assigned.iter().copied().collect();
    let mut out = BinaryAssignment { big_m, num_hyperplanes, ..Default::default() };
    for (g, group) in form.groups.iter().enumerate() {
        let o = assigned.get(&g).copied().or_else(|| Formulation::score(group, &node.x).1);
        let Some(o) = o else { continue };
        match (group.disjunction, group.options[o].tag) {
            (Disjunction::Obstacle { agent, region, obstacle }, Tag::Obstacle(m)) => {
                out.obstacles.insert((agent, region, obstacle), ObstacleChoice { hyperplane: m });
            }
            (Disjunction::Pair { first, second, region }, Tag::Pair(c)) => {
                out.pairs.insert((first, second, region), c);
            }
            // the planned agent takes the first slot: s h'p_agent <= s h'p_other
            (Disjunction::Fixed { agent, region, other }, Tag::Pair(c)) => {
                out.pairs.insert((agent, other, region), c);
            }
            _ => unreachable!("option tag matches its disjunction"),
        }
    }
    out
}

fn restrict(assignment: &BinaryAssignment, k: usize) -> BinaryAssignment {
    BinaryAssignment {
        big_m: assignment.big_m,
        num_hyperplanes: assignment.num_hyperplanes,
        obstacles: assignment.obstacles.iter().filter(|(key, _)| key.0 == k).map(|(a, b)| (*a, *b)).collect(),
        pairs: assignment
            .pairs
            .iter()
            .filter(|(key, _)| key.0 == k || key.1 == k)
            .map(|(a, b)| (*a, *b))
            .collect(),
    }
}

struct Solved {
    x: DVector<f64>,
    assignment: BinaryAssignment,
    stats: SearchStats,
}

fn search(
    problem: &PlanningProblem,
    asm: &Assembly,
    order: &[usize],
    frozen: &[Frozen],
) -> Result<Solved, PlanError> {
    let form = Formulation::build(problem, asm, order, frozen)?;
    let mut s = Search::new(&form, problem)?;
    let found = s.run()?;
    debug!("branch-and-bound: {:?}", s.stats);
    match found {
        Ok(node) => {
            let assignment = certify(&form, &node, problem.big_m(), problem.arrangement.num_hyperplanes());
            Ok(Solved { x: node.x, assignment, stats: s.stats })
        }
        Err(root_infeasible) => Err(PlanError::Infeasible(InfeasibilityReport {
            n: problem.spline.n,
            d: problem.spline.d,
            root_infeasible,
            dead_ends: s.dead_ends.into_iter().collect(),
            nodes: s.stats.nodes,
            node_limit_hit: s.stats.node_limit_hit,
        })),
    }
}

/// All agents at once; pairs of agents are kept apart per region.
pub fn plan_mip(problem: &PlanningProblem) -> Result<MipOutcome, PlanError> {
    plan_multi(problem, MultiMode::Simultaneous)
}

pub fn plan_multi(problem: &PlanningProblem, mode: MultiMode) -> Result<MipOutcome, PlanError> {
    let asm = assemble(problem)?;
    let nv = asm.vars_per_agent();
    let count = problem.agents.len();
    let mut xs: Vec<DVector<f64>> = Vec::with_capacity(count);
    let mut assignment = BinaryAssignment {
        big_m: problem.big_m(),
        num_hyperplanes: problem.arrangement.num_hyperplanes(),
        ..Default::default()
    };
    let mut stats = SearchStats::default();
    match mode {
        MultiMode::Simultaneous => {
            let order: Vec<usize> = (0..count).collect();
            let s = search(problem, &asm, &order, &[])?;
            for k in 0..count {
                xs.push(s.x.rows(k * nv, nv).into_owned());
            }
            assignment = s.assignment;
            stats = s.stats;
        }
        MultiMode::Iterative => {
            let mut plans: Vec<AgentPlan> = Vec::with_capacity(count);
            for k in 0..count {
                let frozen: Vec<Frozen> = plans.iter().enumerate().map(|(index, plan)| Frozen { index, plan }).collect();
                let s = search(problem, &asm, &[k], &frozen)?;
                stats.absorb(&s.stats);
                assignment.obstacles.extend(s.assignment.obstacles);
                assignment.pairs.extend(s.assignment.pairs);
                plans.push(AgentPlan::from_vars(&asm.knots, s.x.as_slice(), &asm.agents[k].hessian, Certificates::None)?);
                xs.push(s.x);
            }
        }
    }
    let plans = xs
        .iter()
        .enumerate()
        .map(|(k, x)| {
            AgentPlan::from_vars(
                &asm.knots,
                x.as_slice(),
                &asm.agents[k].hessian,
                Certificates::Binary(restrict(&assignment, k)),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MipOutcome { plans, assignment, stats })
}
