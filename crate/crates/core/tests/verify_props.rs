mod common;

use common::*;
use flatplan::arrangement::{Arrangement, BoundingBox, ObstacleSpec, SafetyRegion};
use flatplan::flatness::FlatModel;
use flatplan::plan::{plan_unconstrained, AgentPlan, AgentSpec, Certificates, PlanningProblem, SplineParams};
use flatplan::spline::{ControlPolygon, KnotVector, Point, SplineCurve};
use flatplan::verify::{self, VerifyError};

fn block_arrangement(v: Vec<Point>) -> Arrangement {
    let bbox = BoundingBox::new(pt(-2.0, -6.0), pt(12.0, 6.0)).unwrap();
    Arrangement::build(vec![], &[("block".into(), ObstacleSpec::Vertices(v))], bbox).unwrap()
}

fn plan_from(points: Vec<Point>, d: usize, tn: f64) -> AgentPlan {
    let n = points.len() - 1;
    let knots = KnotVector::clamped_uniform(0.0, tn, n, d).unwrap();
    let polygon = ControlPolygon::new(points);
    let curve = SplineCurve::new(knots.clone(), polygon.clone()).unwrap();
    AgentPlan { length: curve.length(), polygon, knots, objective: 0.0, certificates: Certificates::None }
}

fn segment(from: Point, to: Point) -> (AgentPlan, AgentSpec) {
    let pts = (0..=6).map(|i| from + (to - from) * (i as f64 / 6.0)).collect();
    (plan_from(pts, 4, 10.0), AgentSpec::new(vec![from, to], vec![0.0, 10.0]))
}

#[test]
fn straight_segment_clearance_is_point_to_polytope_distance() {
    let block = vec![pt(4.0, 2.0), pt(6.0, 2.0), pt(6.5, 3.0), pt(4.0, 3.5)];
    let arr = block_arrangement(block.clone());
    let (plan, spec) = segment(pt(0.0, 0.0), pt(10.0, 0.5));
    let r = verify::check(std::slice::from_ref(&plan), &[spec], &arr, None, &FlatModel::default()).unwrap();
    let curve = plan.curve();
    let want = verify::sample_times(0.0, 10.0, verify::default_dt(0.0, 10.0))
        .iter()
        .map(|&t| polygon_distance(&block, &curve.eval(t).unwrap()))
        .fold(f64::INFINITY, f64::min);
    assert!(want > 0.0);
    assert!((r.min_obstacle_clearance - want).abs() <= 1e-7, "{} vs {want}", r.min_obstacle_clearance);
    assert_eq!(r.min_inflated_clearance, r.min_obstacle_clearance);
    assert_eq!(r.samples, 1001);
    assert!(r.max_waypoint_error <= 1e-12);
    assert!(r.max_dynamics_residual.unwrap() <= 1e-6);
    assert!(r.is_clean(1e-6));
    assert!(r.min_interagent_distance.is_none());
}

#[test]
fn polygon_through_an_obstacle_is_caught() {
    let arr = block_arrangement(vec![pt(4.0, -1.0), pt(6.0, -1.0), pt(6.0, 1.0), pt(4.0, 1.0)]);
    let (plan, spec) = segment(pt(0.0, 0.0), pt(10.0, 0.0));
    let r = verify::check(&[plan], &[spec], &arr, None, &FlatModel::default()).unwrap();
    assert!((r.min_obstacle_clearance + 1.0).abs() <= 1e-9);
    assert!(!r.is_clean(1e-6));
}

#[test]
fn safety_region_shrinks_inflated_clearance() {
    let arr = block_arrangement(vec![pt(4.0, 1.0), pt(6.0, 1.0), pt(6.0, 3.0), pt(4.0, 3.0)]);
    let (plan, spec) = segment(pt(0.0, 0.0), pt(10.0, 0.0));
    let spec = spec.with_safety(SafetyRegion::square(0.25));
    let r = verify::check(&[plan], &[spec], &arr, None, &FlatModel::default()).unwrap();
    assert!((r.min_obstacle_clearance - 1.0).abs() <= 1e-7);
    assert!((r.min_inflated_clearance - 0.75).abs() <= 1e-7);
}

#[test]
fn two_agents_distance_and_body_clearance() {
    let bbox = BoundingBox::new(pt(-2.0, -6.0), pt(12.0, 6.0)).unwrap();
    let arr = Arrangement::build(vec![], &[], bbox).unwrap();
    let (a, sa) = segment(pt(0.0, 0.0), pt(10.0, 0.0));
    let (b, sb) = segment(pt(0.0, 2.0), pt(10.0, 2.0));
    let sa = sa.with_safety(SafetyRegion::square(0.5));
    let sb = sb.with_safety(SafetyRegion::square(0.25));
    let r = verify::check(&[a, b], &[sa, sb], &arr, None, &FlatModel::default()).unwrap();
    assert!((r.min_interagent_distance.unwrap() - 2.0).abs() <= 1e-9);
    assert!((r.min_interagent_clearance.unwrap() - 1.25).abs() <= 1e-7);
    assert_eq!(r.min_obstacle_clearance, f64::MAX);
}

#[test]
fn coarse_steps_are_refused() {
    let (plan, spec) = segment(pt(0.0, 0.0), pt(10.0, 0.0));
    let arr = block_arrangement(vec![pt(4.0, 1.0), pt(6.0, 1.0), pt(6.0, 3.0)]);
    let err = verify::check(&[plan], &[spec], &arr, Some(0.05), &FlatModel::default()).unwrap_err();
    assert!(matches!(err, VerifyError::StepTooLarge { .. }));
}

#[test]
fn report_is_a_pure_function() {
    let s = reference_scenario();
    let p = PlanningProblem { spline: SplineParams { n: 12, d: 6 }, ..s.problem.clone() };
    let plans = plan_unconstrained(&p).unwrap();
    let a = verify::check(&plans, &p.agents, &p.arrangement, Some(0.01), &FlatModel::default()).unwrap();
    let b = verify::check(&plans, &p.agents, &p.arrangement, Some(0.01), &FlatModel::default()).unwrap();
    assert_eq!(a, b);
    // the unconstrained curve cuts through an obstacle
    assert!(a.min_obstacle_clearance < 0.0);
}
