//! Planning a body of nonzero size: obstacles grow by the safety region.

use std::path::Path;

use flatplan::arrangement::SafetyRegion;
use flatplan::flatness::FlatModel;
use flatplan::io::load_scenario;
use flatplan::plan::plan_mip;
use flatplan::verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = load_scenario(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_obstacles.json"))?;
    for half in [0.0, 0.1, 0.2, 0.3] {
        let mut problem = s.problem.clone();
        problem.agents[0] = problem.agents[0].clone().with_safety(SafetyRegion::square(half));
        match plan_mip(&problem) {
            Ok(out) => {
                let r = verify::check(&out.plans, &problem.agents, &problem.arrangement, Some(0.01), &FlatModel::default())?;
                println!(
                    "half width {half:.1}: length {:.3}, raw clearance {:.4}, body clearance {:.4}",
                    out.plans[0].length, r.min_obstacle_clearance, r.min_inflated_clearance
                );
            }
            Err(e) => println!("half width {half:.1}: {e}"),
        }
    }
    Ok(())
}
