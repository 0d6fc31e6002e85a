//! Mixed-integer plan through the three-obstacle scenario, for a few
//! polygon sizes.

use std::time::Instant;

use flatplan::arrangement::{Arrangement, BoundingBox, Hyperplane, ObstacleSpec};
use flatplan::plan::{audit_mip, plan_mip, AgentSpec, PlanningProblem, SplineParams};
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
    let bbox = BoundingBox::around(&waypoints)?;
    let arrangement = Arrangement::build(hyperplanes, &obstacles, bbox)?;
    let agent = AgentSpec::new(waypoints, vec![0.0, 5.0, 10.0]);

    for (n, d) in [(12, 6), (15, 4), (20, 4), (25, 4), (30, 4)] {
        let problem = PlanningProblem::new(vec![agent.clone()], arrangement.clone(), SplineParams { n, d })?;
        let start = Instant::now();
        match plan_mip(&problem) {
            Ok(out) => {
                let audit = audit_mip(&problem, &out.plans, &out.assignment);
                println!(
                    "n = {n:2}, d = {d}: length {:.3}, energy {:.4}, {} nodes, {:.2} s, audit violations {}",
                    out.plans[0].length,
                    out.plans[0].objective,
                    out.stats.nodes,
                    start.elapsed().as_secs_f64(),
                    audit.len()
                );
            }
            Err(e) => println!("n = {n:2}, d = {d}: {e}"),
        }
    }
    Ok(())
}
