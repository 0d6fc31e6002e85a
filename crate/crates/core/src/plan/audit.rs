//! Re-checks of returned certificates by direct arithmetic, independent of
//! the solver that produced them.

use super::{BinaryAssignment, PlanningProblem, SeparatingPlanes};
use crate::plan::AgentPlan;
use crate::spline::Point;

/// Tolerance on the big-M inequalities.
pub const MIP_AUDIT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AuditViolation {
    pub constraint: String,
    /// Amount by which the inequality fails (m, or scaled by `|h_m|`).
    pub excess: f64,
}

fn violation(out: &mut Vec<AuditViolation>, excess: f64, tol: f64, what: impl FnOnce() -> String) {
    if !(excess <= tol) {
        out.push(AuditViolation { constraint: what(), excess });
    }
}

fn region(plan: &AgentPlan, i: usize) -> &[Point] {
    plan.polygon.region(i, plan.knots.order())
}

fn box_check(problem: &PlanningProblem, plans: &[AgentPlan], tol: f64, out: &mut Vec<AuditViolation>) {
    let bbox = &problem.arrangement.bounding_box;
    for (k, plan) in plans.iter().enumerate() {
        for (j, p) in plan.polygon.points.iter().enumerate() {
            let excess = (bbox.min - p).max().max((p - bbox.max).max());
            violation(out, excess, tol, || format!("agent {k} control point {j} outside the bounding box"));
        }
    }
}

/// Checks the big-M rows for every selector of `assignment`, the
/// one-active cardinality bounds, and that every disjunction is covered.
pub fn audit_mip(problem: &PlanningProblem, plans: &[AgentPlan], assignment: &BinaryAssignment) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let tol = MIP_AUDIT_TOL;
    let t = assignment.big_m;
    let m_count = problem.arrangement.num_hyperplanes();
    let hyperplanes = &problem.arrangement.hyperplanes;
    let margin = problem.config.margin;
    if plans.is_empty() {
        return out;
    }
    let regions: Vec<usize> = plans[0].knots.regions().collect();
    box_check(problem, plans, tol, &mut out);

    for (k, plan) in plans.iter().enumerate() {
        let safety = &problem.agents[k].safety;
        for (l, obstacle) in problem.arrangement.obstacles.iter().enumerate() {
            for &i in &regions {
                if !assignment.obstacles.contains_key(&(k, i, l)) {
                    violation(&mut out, f64::INFINITY, tol, || format!("agent {k} region {i} obstacle {l}: no selector"));
                    continue;
                }
                let mut active = 0;
                for (m, h) in hyperplanes.iter().enumerate() {
                    let alpha = f64::from(assignment.alpha(k, i, l, m).unwrap_or(1));
                    if alpha == 0.0 {
                        active += 1;
                        if !obstacle.pool.iter().any(|(pm, _)| *pm == m) {
                            violation(&mut out, f64::INFINITY, tol, || {
                                format!("agent {k} region {i} obstacle {l}: hyperplane {m} cuts the obstacle")
                            });
                        }
                    }
                    // obstacle on the a'x <= b side, grown by -S
                    let f = h.half_space(obstacle.tuple.get(m));
                    let scale = f.normal.norm();
                    let b = f.offset + safety.support(&-f.normal) + margin * scale;
                    for p in region(plan, i) {
                        let excess = -f.normal.dot(p) + b - t * alpha;
                        violation(&mut out, excess, tol * scale.max(1.0), || {
                            format!("agent {k} region {i} obstacle {l} hyperplane {m} (alpha = {alpha})")
                        });
                    }
                }
                // sum of alpha <= M - 1
                violation(&mut out, 1.0 - active as f64, 0.0, || {
                    format!("agent {k} region {i} obstacle {l}: no active hyperplane")
                });
            }
        }
    }

    for k1 in 0..plans.len() {
        for k2 in k1 + 1..plans.len() {
            for &i in &regions {
                let forward = assignment.pairs.contains_key(&(k1, k2, i));
                let backward = assignment.pairs.contains_key(&(k2, k1, i));
                if forward == backward {
                    violation(&mut out, f64::INFINITY, tol, || {
                        format!("agents ({k1}, {k2}) region {i}: expected exactly one selector set")
                    });
                    continue;
                }
                let (a, b) = if forward { (k1, k2) } else { (k2, k1) };
                let (sa, sb) = (&problem.agents[a].safety, &problem.agents[b].safety);
                let mut active = 0;
                for o in 0..2 * m_count {
                    let beta = f64::from(assignment.beta(a, b, i, o).unwrap_or(1));
                    if beta == 0.0 {
                        active += 1;
                    }
                    let hm = hyperplanes[o / 2].normal;
                    let h = if o % 2 == 1 { -hm } else { hm };
                    let scale = hm.norm();
                    let unit = h / scale;
                    let rhs = -scale * (sa.support(&unit) + sb.support(&-unit) + margin) + t * beta;
                    for p in region(&plans[a], i) {
                        for q in region(&plans[b], i) {
                            let excess = h.dot(p) - h.dot(q) - rhs;
                            violation(&mut out, excess, tol * scale.max(1.0), || {
                                format!("agents ({a}, {b}) region {i} pool entry {o} (beta = {beta})")
                            });
                        }
                    }
                }
                violation(&mut out, 1.0 - active as f64, 0.0, || {
                    format!("agents ({a}, {b}) region {i}: no active hyperplane")
                });
            }
        }
    }
    out
}

/// Checks `max_j c'p_j <= min_{v in O} c'v - margin` for every obstacle
/// certificate and `max c'(p^1 + S_1) + margin <= min c'(p^2 + S_2)` for
/// every pair, with unit `c`, against the obstacles as clipped by the box.
/// Control points must lie in the box, where the clipped obstacles are
/// exact.
pub fn audit_exact(problem: &PlanningProblem, plans: &[AgentPlan], planes: &SeparatingPlanes) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    if plans.is_empty() {
        return out;
    }
    let margin = problem.config.margin;
    let regions: Vec<usize> = plans[0].knots.regions().collect();
    let clip = problem.arrangement.bounding_box.polytope();
    box_check(problem, plans, MIP_AUDIT_TOL, &mut out);
    let unit = |c: &[f64; 2], out: &mut Vec<AuditViolation>, what: &dyn Fn() -> String| {
        let c = Point::new(c[0], c[1]);
        violation(out, (c.norm() - 1.0).abs(), 1e-12, || format!("{}: direction not unit", what()));
        c
    };
    for (k, plan) in plans.iter().enumerate() {
        for (l, obstacle) in problem.obstacles_for(k).iter().enumerate() {
            let verts = obstacle.polytope.intersect(&clip).vertices();
            if verts.is_empty() {
                continue;
            }
            for &i in &regions {
                let Some(c) = planes.obstacles.get(&(k, i, l)) else {
                    violation(&mut out, f64::INFINITY, 0.0, || format!("agent {k} region {i} obstacle {l}: no plane"));
                    continue;
                };
                let c = unit(c, &mut out, &|| format!("agent {k} region {i} obstacle {l}"));
                let hi = region(plan, i).iter().map(|p| c.dot(p)).fold(f64::NEG_INFINITY, f64::max);
                let lo = verts.iter().map(|v| c.dot(v)).fold(f64::INFINITY, f64::min);
                violation(&mut out, hi + margin - lo, 0.0, || format!("agent {k} region {i} obstacle {l}: separation"));
            }
        }
    }
    for k1 in 0..plans.len() {
        for k2 in k1 + 1..plans.len() {
            let (s1, s2) = (&problem.agents[k1].safety, &problem.agents[k2].safety);
            for &i in &regions {
                let Some((c, _)) = planes.pairs.get(&(k1, k2, i)) else {
                    violation(&mut out, f64::INFINITY, 0.0, || format!("agents ({k1}, {k2}) region {i}: no plane"));
                    continue;
                };
                let c = unit(c, &mut out, &|| format!("agents ({k1}, {k2}) region {i}"));
                let hi = region(&plans[k1], i).iter().map(|p| c.dot(p)).fold(f64::NEG_INFINITY, f64::max) + s1.support(&c);
                let lo = region(&plans[k2], i).iter().map(|p| c.dot(p)).fold(f64::INFINITY, f64::min) - s2.support(&-c);
                violation(&mut out, hi + margin - lo, 0.0, || format!("agents ({k1}, {k2}) region {i}: separation"));
            }
        }
    }
    out
}
