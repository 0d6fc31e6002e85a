//! Independent check of plans by dense sampling of the curves.
//!
//! Only the curves, the waypoints and the obstacle geometry are read; no
//! certificate or solver state from the planners is trusted.

use rayon::prelude::*;
use thiserror::Error;

use crate::arrangement::{convex_hull, hull_polytope, Arrangement, GeoError, Polytope, SafetyRegion};
use crate::flatness::{FlatError, FlatModel};
use crate::plan::{AgentPlan, AgentSpec};
use crate::spline::{Point, SplineCurve};

/// Step of the finite differences in the dynamics residual (s).
pub const RESIDUAL_STEP: f64 = 1e-4;
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("dt = {dt} too coarse: need dt <= {limit} for at least {MIN_SAMPLES} samples")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("{plans} plans for {agents} agents")]
    AgentCount { plans: usize, agents: usize },
    #[error("agents do not share a time range")]
    TimeRange,
    #[error(transparent)]
    Geometry(#[from] GeoError),
    #[error(transparent)]
    Flat(#[from] FlatError),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub dt: f64,
    /// Smallest signed distance of a curve point to a raw obstacle
    /// (negative inside).
    pub min_obstacle_clearance: f64,
    /// Same against obstacles grown by each agent's safety region; equal
    /// to the raw clearance for point agents.
    pub min_inflated_clearance: f64,
    /// Smallest distance between two agents' curve points at equal times.
    pub min_interagent_distance: Option<f64>,
    /// Smallest signed distance between the agents' safety regions.
    pub min_interagent_clearance: Option<f64>,
    pub max_waypoint_error: f64,
    /// Largest mismatch of the aircraft model along the curves; absent
    /// for curves of order below 4.
    pub max_dynamics_residual: Option<f64>,
    /// Samples where the speed vanished and the heading is undefined.
    pub singular_samples: usize,
}

impl VerificationReport {
    /// Clear of obstacles and other agents, with waypoints met to `tol`.
    pub fn is_clean(&self, tol: f64) -> bool {
        self.min_obstacle_clearance > 0.0
            && self.min_inflated_clearance > 0.0
            && self.min_interagent_clearance.is_none_or(|c| c > 0.0)
            && self.max_waypoint_error <= tol
    }
}

/// Sample times `t0 + j dt` up to `tn`, with `tn` itself always included.
pub fn sample_times(t0: f64, tn: f64, dt: f64) -> Vec<f64> {
    let count = ((tn - t0) / dt + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|j| (t0 + j as f64 * dt).min(tn)).collect();
    if times.last().is_some_and(|&t| t < tn) {
        times.push(tn);
    }
    times
}

/// Default step: a thousandth of the horizon.
pub fn default_dt(t0: f64, tn: f64) -> f64 {
    1e-3 * (tn - t0)
}

/// `S_1 (+) (-S_2)`: `z_1 + S_1` meets `z_2 + S_2` iff `z_2 - z_1` lies in it.
fn difference_body(a: &SafetyRegion, b: &SafetyRegion) -> Vec<Point> {
    let pts: Vec<Point> = a.vertices().iter().flat_map(|s| b.vertices().iter().map(move |t| s - t)).collect();
    convex_hull(&pts)
}

fn body_distance(hull: &[Point], poly: Option<&Polytope>, x: &Point) -> Result<f64, GeoError> {
    match (hull.len(), poly) {
        (_, Some(p)) => p.signed_distance(x),
        (1, _) => Ok((x - hull[0]).norm()),
        (2, _) => {
            let (a, b) = (hull[0], hull[1]);
            let ab = b - a;
            let t = ((x - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            Ok((x - (a + ab * t)).norm())
        }
        _ => Ok(x.norm()),
    }
}

/// Verifies `plans` for `agents` at step `dt` (default: a thousandth of the
/// horizon) with the given aircraft model.
pub fn check(
    plans: &[AgentPlan],
    agents: &[AgentSpec],
    arrangement: &Arrangement,
    dt: Option<f64>,
    model: &FlatModel,
) -> Result<VerificationReport, VerifyError> {
    if plans.len() != agents.len() || plans.is_empty() {
        return Err(VerifyError::AgentCount { plans: plans.len(), agents: agents.len() });
    }
    let curves: Vec<SplineCurve> = plans.iter().map(AgentPlan::curve).collect();
    let (t0, tn) = (curves[0].knots().start(), curves[0].knots().end());
    if curves.iter().any(|c| c.knots().start() != t0 || c.knots().end() != tn) {
        return Err(VerifyError::TimeRange);
    }
    let dt = dt.unwrap_or_else(|| default_dt(t0, tn));
    let limit = (tn - t0) / MIN_SAMPLES as f64;
    if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
        return Err(VerifyError::StepTooLarge { dt, limit });
    }
    let times = sample_times(t0, tn, dt);

    let inflated: Vec<Vec<Polytope>> = agents
        .iter()
        .map(|a| arrangement.obstacles.iter().map(|o| o.inflated(&a.safety).polytope).collect())
        .collect();

    // per sample: (raw clearance, inflated clearance, min distance, min body clearance)
    let per_sample: Vec<Result<(f64, f64, f64, f64), VerifyError>> = times
        .par_iter()
        .map(|&t| {
            let mut pts = Vec::with_capacity(curves.len());
            for c in &curves {
                pts.push(c.eval(t).map_err(FlatError::from)?);
            }
            let (mut raw, mut grown) = (f64::INFINITY, f64::INFINITY);
            for (k, p) in pts.iter().enumerate() {
                for (l, o) in arrangement.obstacles.iter().enumerate() {
                    let r = o.polytope.signed_distance(p)?;
                    raw = raw.min(r);
                    grown = grown.min(if agents[k].safety.is_point() { r } else { inflated[k][l].signed_distance(p)? });
                }
            }
            let (mut dist, mut body) = (f64::INFINITY, f64::INFINITY);
            for a in 0..pts.len() {
                for b in a + 1..pts.len() {
                    let gap = pts[b] - pts[a];
                    dist = dist.min(gap.norm());
                    let hull = difference_body(&agents[a].safety, &agents[b].safety);
                    let poly = if hull.len() >= 3 { hull_polytope(&hull) } else { None };
                    body = body.min(body_distance(&hull, poly.as_ref(), &gap)?);
                }
            }
            Ok((raw, grown, dist, body))
        })
        .collect();

    let mut raw = f64::INFINITY;
    let mut grown = f64::INFINITY;
    let mut dist = f64::INFINITY;
    let mut body = f64::INFINITY;
    for r in per_sample {
        let (a, b, c, d) = r?;
        raw = raw.min(a);
        grown = grown.min(b);
        dist = dist.min(c);
        body = body.min(d);
    }

    let max_waypoint_error = plans.iter().zip(agents).map(|(p, a)| p.waypoint_error(a)).fold(0.0, f64::max);

    let mut singular = 0;
    let mut residual: Option<f64> = None;
    if curves.iter().all(|c| c.order() >= 4) {
        let per: Vec<Result<Option<f64>, VerifyError>> = times
            .par_iter()
            .map(|&t| {
                let mut worst: Option<f64> = Some(0.0);
                for c in &curves {
                    match model.dynamics_residual(c, &[t], RESIDUAL_STEP) {
                        Ok(r) => worst = worst.map(|w| w.max(r)),
                        Err(FlatError::SingularVelocity { .. }) => worst = None,
                        Err(e) => return Err(e.into()),
                    }
                }
                Ok(worst)
            })
            .collect();
        let mut acc: f64 = 0.0;
        for r in per {
            match r? {
                Some(v) => acc = acc.max(v),
                None => singular += 1,
            }
        }
        residual = Some(acc);
    }

    let multi = plans.len() > 1;
    Ok(VerificationReport {
        samples: times.len(),
        dt,
        min_obstacle_clearance: if arrangement.obstacles.is_empty() { f64::MAX } else { raw },
        min_inflated_clearance: if arrangement.obstacles.is_empty() { f64::MAX } else { grown },
        min_interagent_distance: multi.then_some(dist),
        min_interagent_clearance: multi.then_some(body),
        max_waypoint_error,
        max_dynamics_residual: residual,
        singular_samples: singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_grid_counts() {
        let t = sample_times(0.0, 10.0, 0.01);
        assert_eq!(t.len(), 1001);
        assert_eq!(*t.last().unwrap(), 10.0);
        let t = sample_times(0.0, 1.0, 0.3);
        assert_eq!(t, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn difference_body_of_squares() {
        let h = difference_body(&SafetyRegion::square(0.2), &SafetyRegion::square(0.1));
        assert_eq!(h.len(), 4);
        assert!(h.iter().all(|v| (v.x.abs() - 0.3).abs() < 1e-12 && (v.y.abs() - 0.3).abs() < 1e-12));
    }
}
