//! Length and wall time of both planners over polygon sizes, as CSV on stdout.

use std::path::Path;
use std::time::Instant;

use flatplan::io::load_scenario;
use flatplan::plan::{plan_exact, plan_mip, ExactStatus, PlanError, SplineParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = load_scenario(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_obstacles.json"))?;
    println!("n,method,length,wall_time");
    for n in [10, 15, 20, 25, 30] {
        let mut problem = s.problem.clone();
        problem.spline = SplineParams { n, d: 4 };
        let start = Instant::now();
        let mip = match plan_mip(&problem) {
            Ok(out) => Some(out),
            Err(PlanError::Infeasible(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let len = mip.as_ref().map_or("*".into(), |m| format!("{:.3}", m.plans[0].length));
        println!("{n},MI,{len},{:.3}", start.elapsed().as_secs_f64());
        let start = Instant::now();
        let ex = plan_exact(&problem, mip.as_ref().map(|m| m.plans.as_slice()))?;
        let len = if ex.status == ExactStatus::Success { format!("{:.3}", ex.plans[0].length) } else { "*".into() };
        println!("{n},EX,{len},{:.3}", start.elapsed().as_secs_f64());
    }
    Ok(())
}
