//! Exact separating-plane refinement of a mixed-integer plan, with the
//! round-by-round objective and the re-checked certificates.

use flatplan::arrangement::{Arrangement, BoundingBox, Hyperplane, ObstacleSpec};
use flatplan::plan::{audit_exact, plan_exact, plan_mip, AgentSpec, PlanningProblem, SplineParams};
use flatplan::spline::Point;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = [
        (-0.5931, 0.8051, 4.2239),
        (0.1814, 0.9834, 0.1719),
        (-0.0044, 1.0000, 0.9975),
        (-0.1323, 0.9912, 0.2728),
        (-0.7011, -0.7131, 3.6785),
        (0.8152, -0.5792, 0.0317),
        (0.4352, 0.9003, 1.6598),
        (1.0000, -0.0075, 4.5790),
        (-0.5961, -0.8029, 1.0280),
    ];
    let hyperplanes = h.iter().map(|&(a, b, k)| Hyperplane::new(Point::new(a, b), k)).collect();
    let obstacles: Vec<(String, ObstacleSpec)> = ["(+++--+++-)", "(+-+-+++++)", "(+-+++--++)"]
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("O{}", i + 1), ObstacleSpec::Tuple(t.parse().unwrap())))
        .collect();
    let waypoints = vec![Point::new(-9.0, -0.5), Point::new(0.0, 1.5), Point::new(6.0, 0.0)];
    let arrangement = Arrangement::build(hyperplanes, &obstacles, BoundingBox::around(&waypoints)?)?;
    let agent = AgentSpec::new(waypoints, vec![0.0, 5.0, 10.0]);
    let problem = PlanningProblem::new(vec![agent], arrangement, SplineParams { n: 12, d: 6 })?;

    let mip = plan_mip(&problem)?;
    let exact = plan_exact(&problem, Some(&mip.plans))?;
    println!("mixed-integer: length {:.4}, energy {:.6}", mip.plans[0].length, mip.plans[0].objective);
    println!("exact ({:?}): length {:.4}, energy {:.6}", exact.status, exact.plans[0].length, exact.plans[0].objective);
    for (r, v) in exact.round_objectives.iter().enumerate() {
        println!("  round {r}: {v:.6}");
    }
    for ((_, i, l), c) in exact.planes.obstacles.iter().filter(|((_, i, _), _)| *i <= 7) {
        println!("  region {i} obstacle {l}: c = ({:.4}, {:.4})", c[0], c[1]);
    }
    let violations = audit_exact(&problem, &exact.plans, &exact.planes);
    println!("certificate violations: {}", violations.len());
    Ok(())
}
