//! Two agents swapping corners, planned jointly and one after the other.

use flatplan::arrangement::{Arrangement, BoundingBox, Hyperplane};
use flatplan::flatness::FlatModel;
use flatplan::plan::{plan_multi, AgentSpec, MultiMode, PlanningProblem, SplineParams};
use flatplan::spline::Point;
use flatplan::verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Point::new;
    let hyperplanes = vec![
        Hyperplane::new(p(1.0, 0.0), 5.0),
        Hyperplane::new(p(0.0, 1.0), 5.0),
        Hyperplane::new(p(1.0, 1.0), 10.0),
        Hyperplane::new(p(1.0, -1.0), 0.0),
    ];
    let arr = Arrangement::build(hyperplanes, &[], BoundingBox::new(p(-3.0, -3.0), p(13.0, 13.0))?)?;
    let agents = vec![
        AgentSpec::new(vec![p(0.0, 0.0), p(10.0, 10.0)], vec![0.0, 10.0]),
        AgentSpec::new(vec![p(10.0, 0.0), p(0.0, 10.0)], vec![0.0, 10.0]),
    ];
    let problem = PlanningProblem::new(agents, arr, SplineParams { n: 10, d: 4 })?;
    for mode in [MultiMode::Simultaneous, MultiMode::Iterative] {
        let out = plan_multi(&problem, mode)?;
        let r = verify::check(&out.plans, &problem.agents, &problem.arrangement, None, &FlatModel::default())?;
        println!(
            "{mode:?}: lengths {:.3} and {:.3}, closest approach {:.3} m, {} nodes",
            out.plans[0].length,
            out.plans[1].length,
            r.min_interagent_distance.unwrap_or(f64::NAN),
            out.stats.nodes
        );
    }
    Ok(())
}
