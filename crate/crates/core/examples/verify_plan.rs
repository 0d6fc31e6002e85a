//! Dense-sampling check of a plan, and of a deliberately bad one.

use std::path::Path;

use flatplan::flatness::FlatModel;
use flatplan::io::load_scenario;
use flatplan::plan::{plan_mip, plan_unconstrained};
use flatplan::verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = load_scenario(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_obstacles.json"))?;
    let p = &s.problem;
    let model = FlatModel::default();
    let planned = plan_mip(p)?.plans;
    let ignoring = plan_unconstrained(p)?;
    for (name, plans) in [("planned", &planned), ("obstacles ignored", &ignoring)] {
        let r = verify::check(plans, &p.agents, &p.arrangement, Some(0.01), &model)?;
        println!(
            "{name}: clearance {:.4} m, waypoint error {:.1e} m, residual {:.1e}, {} samples, clean {}",
            r.min_obstacle_clearance,
            r.max_waypoint_error,
            r.max_dynamics_residual.unwrap_or(f64::NAN),
            r.samples,
            r.is_clean(1e-6)
        );
    }
    Ok(())
}
