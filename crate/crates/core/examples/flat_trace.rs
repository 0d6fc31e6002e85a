//! Heading, airspeed and roll along a planned curve.

use std::path::Path;

use flatplan::flatness::FlatModel;
use flatplan::io::load_scenario;
use flatplan::plan::plan_mip;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = load_scenario(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_obstacles.json"))?;
    let out = plan_mip(&s.problem)?;
    let curve = out.plans[0].curve();
    let model = FlatModel { gravity: s.gravity, ..FlatModel::default() };
    let times: Vec<f64> = (0..=10).map(|j| j as f64).collect();
    println!("{:>5} {:>9} {:>9} {:>8} {:>8} {:>8}", "t", "x", "y", "psi", "va", "phi");
    for p in model.trace(&curve, &times)? {
        println!(
            "{:5.1} {:9.4} {:9.4} {:8.4} {:8.4} {:8.4}",
            p.t, p.state.x, p.state.y, p.state.psi, p.input.va, p.input.phi
        );
    }
    let dense: Vec<f64> = (0..=1000).map(|j| 0.01 * j as f64).collect();
    println!("largest dynamics residual {:.2e}", model.dynamics_residual(&curve, &dense, 1e-4)?);
    Ok(())
}
