//! Cells of a hyperplane arrangement, obstacle tuples and point location.

use flatplan::arrangement::{Arrangement, BoundingBox, Hyperplane, ObstacleSpec};
use flatplan::spline::Point;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hyperplanes = vec![
        Hyperplane::new(Point::new(1.0, 0.0), 2.0),
        Hyperplane::new(Point::new(1.0, 0.0), 4.0),
        Hyperplane::new(Point::new(0.0, 1.0), 1.0),
        Hyperplane::new(Point::new(1.0, 1.0), 4.0),
    ];
    let obstacles = vec![("block".to_string(), ObstacleSpec::Tuple("(-++-)".parse()?))];
    let bbox = BoundingBox::new(Point::new(-1.0, -3.0), Point::new(7.0, 5.0))?;
    let arr = Arrangement::build(hyperplanes, &obstacles, bbox)?;

    println!("{} feasible cells", arr.feasible.len());
    for (t, w) in &arr.feasible {
        let tag = if arr.interdicted.contains(t) { "obstacle" } else { "free" };
        println!("  {t}  witness ({:6.3}, {:6.3})  {tag}", w.x, w.y);
    }
    for o in &arr.obstacles {
        println!("{} vertices {:?}", o.name, o.vertices.iter().map(|v| (v.x, v.y)).collect::<Vec<_>>());
    }
    for p in [Point::new(3.0, 0.0), Point::new(0.0, 0.0), Point::new(5.0, 3.0)] {
        println!("({}, {}) lies in {}", p.x, p.y, arr.cell_of(&p)?);
    }
    Ok(())
}
