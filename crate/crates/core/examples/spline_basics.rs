//! Basis values, derivatives and the convex hull of a small clamped spline.

use flatplan::spline::{basis_eval, derivative_matrix, ControlPolygon, KnotVector, Point, SplineCurve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let knots = KnotVector::clamped_uniform(0.0, 1.0, 5, 4)?;
    println!("knots {:?}", knots.knots());
    for t in [0.0, 0.25, 0.5, 1.0] {
        let b = basis_eval(&knots, 4, t)?;
        let sum: f64 = b.iter().sum();
        println!("t = {t:.2}: B = {b:.4?} (sum {sum:.15})");
    }

    let pts = [(0.0, 0.0), (1.0, 2.0), (2.5, 2.5), (4.0, 0.5), (5.0, 1.5), (6.0, 0.0)];
    let polygon = ControlPolygon::new(pts.iter().map(|&(x, y)| Point::new(x, y)).collect());
    let curve = SplineCurve::new(knots.clone(), polygon)?;
    for t in [0.1, 0.45, 0.8] {
        let i = knots.region_of(t)?;
        let z = curve.eval(t)?;
        let dz = curve.derivative(1, t)?;
        println!(
            "t = {t:.2}: z = ({:.4}, {:.4}), dz = ({:.4}, {:.4}), region {i} uses points {:?}",
            z.x,
            z.y,
            dz.x,
            dz.y,
            curve.polygon().region(i, 4).iter().map(|p| (p.x, p.y)).collect::<Vec<_>>()
        );
    }
    let m = derivative_matrix(&knots, 1)?;
    println!("first derivative matrix is {} x {}", m.matrix.nrows(), m.matrix.ncols());
    println!("arc length {:.6}", curve.length());
    Ok(())
}
