//! Two walls with offset openings: a short control polygon cannot weave
//! through both, so the planner grows it until it can.

use flatplan::arrangement::{Arrangement, BoundingBox, ObstacleSpec};
use flatplan::plan::{plan_with_escalation, AgentSpec, Method, MultiMode, PlanningProblem, SplineParams};
use flatplan::spline::Point;

fn block(x0: f64, x1: f64, y0: f64, y1: f64) -> ObstacleSpec {
    ObstacleSpec::Vertices(vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)])
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (opening, offset) = (0.8, 2.0);
    let waypoints = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
    let bbox = BoundingBox::new(Point::new(-1.0, -5.0), Point::new(11.0, 5.0))?;
    let mut obstacles = Vec::new();
    for (name, x, y) in [("first", 3.0, offset), ("second", 7.0, -offset)] {
        obstacles.push((format!("{name} wall, top"), block(x - 0.25, x + 0.25, y + opening / 2.0, 6.0)));
        obstacles.push((format!("{name} wall, bottom"), block(x - 0.25, x + 0.25, -6.0, y - opening / 2.0)));
    }
    let arrangement = Arrangement::build(vec![], &obstacles, bbox)?;
    let agent = AgentSpec::new(waypoints, vec![0.0, 10.0]);
    let problem = PlanningProblem::new(vec![agent], arrangement, SplineParams { n: 8, d: 4 })?;

    let out = plan_with_escalation(&problem, Method::Mip, MultiMode::Simultaneous)?;
    for a in &out.attempts {
        println!("infeasible: {a}");
    }
    println!("feasible at n = {}: length {:.3}", out.problem.spline.n, out.mip.plans[0].length);
    Ok(())
}
