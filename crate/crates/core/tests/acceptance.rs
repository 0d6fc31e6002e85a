//! One line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use flatplan::arrangement::{SafetyRegion, SignTuple};
use flatplan::flatness::{FlatModel, FlatSample};
use flatplan::plan::{
    audit_exact, audit_mip, plan_exact, plan_mip, plan_multi, AgentPlan, ExactStatus, MultiMode, PlanError,
    PlanningProblem, SplineParams,
};
use flatplan::spline::{basis_eval, derivative_matrix, gram_matrix, ControlPolygon, KnotVector, SplineCurve};
use flatplan::verify::{self, VerificationReport};
use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn reference(n: usize, d: usize) -> PlanningProblem {
    let mut p = reference_scenario().problem;
    p.spline = SplineParams { n, d };
    p
}

fn verify_at(p: &PlanningProblem, plans: &[AgentPlan], dt: f64) -> Result<VerificationReport, String> {
    verify::check(plans, &p.agents, &p.arrangement, Some(dt), &FlatModel::default()).map_err(|e| e.to_string())
}

fn mip_length(n: usize, d: usize) -> Result<f64, String> {
    let out = plan_mip(&reference(n, d)).map_err(|e| format!("n = {n}, d = {d}: {e}"))?;
    Ok(out.plans[0].length)
}

fn c1_mip_plan() -> Outcome {
    let p = reference(12, 6);
    let start = Instant::now();
    let out = plan_mip(&p).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(audit_mip(&p, &out.plans, &out.assignment).is_empty(), "audit found violations")?;
    let r = verify_at(&p, &out.plans, 0.01)?;
    ensure(r.min_obstacle_clearance > 0.0, format!("clearance {}", r.min_obstacle_clearance))?;
    ensure(r.max_waypoint_error <= 1e-6, format!("waypoint error {:e}", r.max_waypoint_error))?;
    ensure(secs <= 60.0, format!("runtime {secs:.1} s"))?;
    Ok(format!(
        "clearance {:.4} m, waypoint error {:.1e} m, length {:.3} m, {:.2} s",
        r.min_obstacle_clearance, r.max_waypoint_error, out.plans[0].length, secs
    ))
}

fn c2_length_at_twenty() -> Outcome {
    let l = mip_length(20, 4)?;
    ensure((15.5..=18.0).contains(&l), format!("length {l:.3} outside [15.5, 18]"))?;
    Ok(format!("length {l:.3} m"))
}

fn c3_length_spread() -> Outcome {
    let ls = [15, 20, 25, 30].iter().map(|&n| mip_length(n, 4)).collect::<Result<Vec<_>, _>>()?;
    let lo = ls.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    ensure(spread <= 0.05, format!("spread {:.2}% over {ls:?}", 100.0 * spread))?;
    Ok(format!("lengths {:?}, spread {:.2}%", ls.iter().map(|l| (l * 1e3).round() / 1e3).collect::<Vec<_>>(), 100.0 * spread))
}

fn c4_exact() -> Outcome {
    let p = reference(12, 6);
    let mip = plan_mip(&p).map_err(|e| e.to_string())?;
    let out = plan_exact(&p, Some(&mip.plans)).map_err(|e| e.to_string())?;
    ensure(out.status == ExactStatus::Success, format!("status {:?}", out.status))?;
    ensure(audit_exact(&p, &out.plans, &out.planes).is_empty(), "audit found violations")?;
    let clip = p.arrangement.bounding_box.polytope();
    let curve = out.plans[0].curve();
    let mut worst = f64::INFINITY;
    for j in 0..10_000 {
        let t = 10.0 * j as f64 / 9_999.0;
        let i = curve.knots().region_of(t).map_err(|e| e.to_string())?;
        let z = curve.eval(t).map_err(|e| e.to_string())?;
        for (l, o) in p.obstacles_for(0).iter().enumerate() {
            let c = out.planes.obstacles[&(0, i, l)];
            let c = pt(c[0], c[1]);
            let lo = o.polytope.intersect(&clip).vertices().iter().map(|v| c.dot(v)).fold(f64::INFINITY, f64::min);
            worst = worst.min(lo - p.config.margin - c.dot(&z));
        }
    }
    ensure(worst >= -1e-12, format!("certificate violated by {worst:e}"))?;
    Ok(format!("{} rounds, length {:.3} m, certificate slack >= {worst:.2e}", out.round_objectives.len() - 1, out.plans[0].length))
}

fn c5_spline_suite() -> Outcome {
    let mut r = rng(501);
    // partition of unity
    for (n, d) in [(12, 6), (20, 4)] {
        let kv = KnotVector::clamped_uniform(0.0, 10.0, n, d).unwrap();
        for _ in 0..10_000 {
            let t = r.random_range(0.0..=10.0);
            let s: f64 = basis_eval(&kv, d, t).unwrap().iter().sum();
            ensure((s - 1.0).abs() <= 1e-12, format!("partition {s} at t = {t}"))?;
        }
    }
    // convex hull, finite differences
    let (n, d) = (12, 6);
    let pts = (0..=n).map(|_| pt(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0))).collect();
    let kv = KnotVector::clamped_uniform(0.0, 1.0, n, d).unwrap();
    let c = SplineCurve::new(kv.clone(), ControlPolygon::new(pts)).unwrap();
    for _ in 0..10_000 {
        let t = r.random_range(0.0..1.0);
        let i = kv.region_of(t).unwrap();
        ensure(hull_contains(c.polygon().region(i, d), &c.eval(t).unwrap(), 1e-9), format!("hull at t = {t}"))?;
    }
    let scale = c.polygon().max_abs();
    let m1 = derivative_matrix(&kv, 1).unwrap().matrix;
    let lower = kv.reduced(1).unwrap();
    let px = DMatrix::from_fn(2, n + 1, |row, j| c.polygon().points[j][row]);
    for j in 0..100 {
        let t = 0.001 + 0.998 * j as f64 / 99.0;
        let h = 1e-6;
        let fd = (c.eval(t + h).unwrap() - c.eval(t - h).unwrap()) / (2.0 * h);
        let b = DVector::from_vec(basis_eval(&lower, lower.order(), t).unwrap());
        let v = &px * &m1 * b;
        ensure((pt(v[0], v[1]) - fd).amax() <= 1e-5 * scale, format!("derivative at t = {t}"))?;
    }
    // Gram against quadrature
    let vk = KnotVector::clamped_uniform(0.0, 10.0, 12, 4).unwrap().reduced(1).unwrap();
    let knots = vk.knots().to_vec();
    let g = gram_matrix(&knots, vk.order());
    let mut gerr: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let mut want = 0.0;
            for s in 0..knots.len() - 1 {
                if knots[s + 1] > knots[s] {
                    let f = |t: f64| naive_basis(&knots, i, 3, t) * naive_basis(&knots, j, 3, t);
                    want += adaptive_simpson(&f, knots[s], knots[s + 1], 1e-14);
                }
            }
            gerr = gerr.max((g[(i, j)] - want).abs());
        }
    }
    ensure(gerr <= 1e-9, format!("Gram error {gerr:e}"))?;
    // exact rational recursion
    let q = |a: i64, b: i64| Rational64::new(a, b);
    let rk = [q(0, 1), q(0, 1), q(0, 1), q(0, 1), q(1, 2), q(1, 1), q(1, 1), q(1, 1), q(1, 1)];
    let fk = KnotVector::new(rk.iter().map(|&k| to_f64(k)).collect(), 4).unwrap();
    let mut rerr: f64 = 0.0;
    for t in [q(1, 4), q(1, 3), q(7, 10)] {
        for (i, v) in basis_eval(&fk, 4, to_f64(t)).unwrap().iter().enumerate() {
            rerr = rerr.max((v - to_f64(rational_basis(&rk, i, 4, t))).abs());
        }
    }
    ensure(rerr <= 1e-12, format!("rational error {rerr:e}"))?;
    Ok(format!("Gram error {gerr:.1e}, rational error {rerr:.1e}"))
}

fn c6_dynamics() -> Outcome {
    let mut worst: f64 = 0.0;
    for (n, d) in [(12, 6), (20, 4)] {
        let p = reference(n, d);
        let out = plan_mip(&p).map_err(|e| e.to_string())?;
        let r = verify_at(&p, &out.plans, 0.01)?;
        let res = r.max_dynamics_residual.ok_or("no residual reported")?;
        ensure(res <= 1e-3, format!("residual {res:e} at n = {n}, d = {d}"))?;
        worst = worst.max(res);
    }
    let m = FlatModel::default();
    let (radius, omega) = (50.0, 0.1);
    for k in 0..100 {
        let (s, c) = (omega * k as f64 * 0.37).sin_cos();
        let fs = FlatSample {
            z: pt(radius * c, radius * s),
            dz: pt(-radius * omega * s, radius * omega * c),
            ddz: pt(-radius * omega * omega * c, -radius * omega * omega * s),
        };
        let u = m.phi_input(&fs).map_err(|e| e.to_string())?;
        ensure((u.va - radius * omega).abs() <= 1e-9, "circular airspeed")?;
        ensure((u.phi.tan() - radius * omega * omega / m.gravity).abs() <= 1e-9, "circular roll")?;
    }
    Ok(format!("residual {worst:.2e}, circular closed form within 1e-9"))
}

fn c7_arrangement() -> Outcome {
    let arr = reference_scenario().problem.arrangement;
    let lib: BTreeSet<SignTuple> = arr.feasible.keys().cloned().collect();
    let oracle: BTreeSet<SignTuple> = all_tuples(arr.num_hyperplanes())
        .into_iter()
        .filter(|t| area(&clipped_cell(&arr.hyperplanes, t, &arr.bounding_box)) > 1e-9)
        .collect();
    ensure(lib == oracle, format!("{} cells vs {} from the oracle", lib.len(), oracle.len()))?;
    for s in ["(+++--+++-)", "(+-+-+++++)", "(+-+++--++)"] {
        ensure(arr.feasible.contains_key(&s.parse::<SignTuple>().unwrap()), format!("{s} not feasible"))?;
    }
    let b = arr.bounding_box;
    let mut r = rng(701);
    let mut classified = 0;
    for _ in 0..10_000 {
        let x = pt(r.random_range(b.min.x..b.max.x), r.random_range(b.min.y..b.max.y));
        if let Ok(t) = arr.cell_of(&x) {
            ensure(arr.feasible.contains_key(&t), format!("{x:?} classified into {t}"))?;
            classified += 1;
        }
    }
    ensure(classified > 9_990, format!("only {classified} points classified"))?;
    Ok(format!("{} cells, {classified} of 10000 points classified", lib.len()))
}

fn c8_enumeration() -> Outcome {
    let toys = toy_problems();
    for (idx, p) in toys.iter().enumerate() {
        let best = exhaustive_optimum(p).map_err(|e| e.to_string())?;
        match (plan_mip(p), best) {
            (Ok(out), Some(want)) => {
                let got: f64 = out.plans.iter().map(|pl| pl.objective).sum();
                ensure((got - want).abs() <= 1e-6 * want.abs().max(1.0), format!("toy {idx}: {got} vs {want}"))?;
            }
            (Err(PlanError::Infeasible(_)), None) => {}
            (got, want) => return Err(format!("toy {idx}: {:?} vs {want:?}", got.map(|o| o.plans[0].objective))),
        }
    }
    Ok(format!("{} toy problems agree", toys.len()))
}

fn c9_two_agents() -> Outcome {
    let p = crossing_problem(10);
    let sim = plan_multi(&p, MultiMode::Simultaneous).map_err(|e| e.to_string())?;
    let r = verify_at(&p, &sim.plans, 0.01)?;
    let dist = r.min_interagent_distance.ok_or("no inter-agent distance")?;
    ensure(dist > 0.0, format!("distance {dist}"))?;
    let it = plan_multi(&p, MultiMode::Iterative).map_err(|e| e.to_string())?;
    let alone = plan_mip(&single_agent(&p, 0)).map_err(|e| e.to_string())?;
    let gap = max_point_gap(&it.plans[0].polygon.points, &alone.plans[0].polygon.points);
    ensure(gap <= 1e-9, format!("first agent moved by {gap:e}"))?;
    let ri = verify_at(&p, &it.plans, 0.01)?;
    ensure(ri.min_interagent_distance.unwrap_or(0.0) > 0.0, "iterative agents collide")?;
    Ok(format!("simultaneous distance {dist:.3} m, iterative first agent unchanged"))
}

fn c10_safety_region() -> Outcome {
    let mut p = reference(12, 6);
    p.agents[0] = p.agents[0].clone().with_safety(SafetyRegion::square(0.2));
    let out = plan_mip(&p).map_err(|e| e.to_string())?;
    let r = verify_at(&p, &out.plans, 0.01)?;
    ensure(r.min_obstacle_clearance >= 0.2 - 1e-6, format!("raw clearance {}", r.min_obstacle_clearance))?;
    Ok(format!("raw clearance {:.4} m", r.min_obstacle_clearance))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("mixed-integer plan on the reference scene", c1_mip_plan),
        ("length at n = 20, d = 4", c2_length_at_twenty),
        ("length spread over n", c3_length_spread),
        ("exact planner certificates", c4_exact),
        ("spline suite", c5_spline_suite),
        ("flatness maps", c6_dynamics),
        ("arrangement enumeration", c7_arrangement),
        ("branch and bound vs enumeration", c8_enumeration),
        ("two agents", c9_two_agents),
        ("safety region clearance", c10_safety_region),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
