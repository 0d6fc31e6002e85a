//! SVG rendering of a scenario and its plans: obstacles, the hyperplanes
//! bounding them, control polygons, region hulls and curves.

use std::fmt::Write as _;

use crate::arrangement::{convex_hull, Arrangement, BoundingBox, Hyperplane};
use crate::plan::{AgentPlan, AgentSpec};
use crate::spline::Point;

const WIDTH: f64 = 800.0;
const CURVE_SAMPLES: usize = 400;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    bbox: BoundingBox,
    scale: f64,
    height: f64,
}

impl Frame {
    fn new(bbox: BoundingBox) -> Self {
        let span = bbox.max - bbox.min;
        let scale = WIDTH / span.x;
        Self { bbox, scale, height: span.y * scale }
    }

    fn map(&self, p: &Point) -> (f64, f64) {
        ((p.x - self.bbox.min.x) * self.scale, (self.bbox.max.y - p.y) * self.scale)
    }

    fn points(&self, pts: &[Point]) -> String {
        let mut s = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s
    }
}

/// Segment of `h` inside the box, if any.
fn clip_line(h: &Hyperplane, bbox: &BoundingBox) -> Option<(Point, Point)> {
    let n2 = h.normal.norm_squared();
    let origin = h.normal * (h.offset / n2);
    let dir = Point::new(-h.normal.y, h.normal.x);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in 0..2 {
        if dir[c].abs() < 1e-15 {
            if origin[c] < bbox.min[c] || origin[c] > bbox.max[c] {
                return None;
            }
            continue;
        }
        let a = (bbox.min[c] - origin[c]) / dir[c];
        let b = (bbox.max[c] - origin[c]) / dir[c];
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    (lo < hi).then(|| (origin + dir * lo, origin + dir * hi))
}

/// Renders the arrangement, the waypoints and every plan. Curves are
/// `polyline` elements of class `curve`, one per agent.
pub fn render(arrangement: &Arrangement, agents: &[AgentSpec], plans: &[AgentPlan]) -> String {
    let frame = Frame::new(arrangement.bounding_box);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.2} {:.2}">"#,
        WIDTH, frame.height, WIDTH, frame.height
    );
    let _ = writeln!(s, r#"<rect class="frame" x="0" y="0" width="{WIDTH:.2}" height="{:.2}" fill="white" stroke="black"/>"#, frame.height);

    let clip = arrangement.bounding_box.polytope();
    for o in &arrangement.obstacles {
        let v = o.polytope.intersect(&clip).vertices();
        if v.len() >= 3 {
            let _ = writeln!(
                s,
                r##"<polygon class="obstacle" points="{}" fill="#999999" fill-opacity="0.6" stroke="#444444"><title>{}</title></polygon>"##,
                frame.points(&v),
                o.name
            );
        }
    }
    for (m, h) in arrangement.hyperplanes.iter().enumerate() {
        if let Some((a, b)) = clip_line(h, &arrangement.bounding_box) {
            let ((x1, y1), (x2, y2)) = (frame.map(&a), frame.map(&b));
            let _ = writeln!(
                s,
                r##"<line class="hyperplane" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#bbbbbb" stroke-dasharray="4 3"><title>H{}</title></line>"##,
                m + 1
            );
        }
    }
    for (k, plan) in plans.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let d = plan.knots.order();
        for i in plan.knots.regions() {
            let hull = convex_hull(plan.polygon.region(i, d));
            if hull.len() >= 3 {
                let _ = writeln!(
                    s,
                    r#"<polygon class="hull" points="{}" fill="{color}" fill-opacity="0.06" stroke="{color}" stroke-opacity="0.25"/>"#,
                    frame.points(&hull)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<polyline class="control-polygon" points="{}" fill="none" stroke="{color}" stroke-dasharray="2 2"/>"#,
            frame.points(&plan.polygon.points)
        );
        for p in &plan.polygon.points {
            let (x, y) = frame.map(p);
            let _ = writeln!(s, r#"<circle class="control-point" cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
        }
        let curve = plan.curve();
        let (t0, tn) = (curve.knots().start(), curve.knots().end());
        let pts: Vec<Point> = (0..=CURVE_SAMPLES)
            .filter_map(|j| curve.eval(t0 + (tn - t0) * j as f64 / CURVE_SAMPLES as f64).ok())
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            frame.points(&pts)
        );
    }
    for a in agents {
        for w in &a.waypoints {
            let (x, y) = frame.map(w);
            let _ = writeln!(s, r#"<circle class="waypoint" cx="{x:.2}" cy="{y:.2}" r="4" fill="black"/>"#);
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipped_diagonal() {
        let bbox = BoundingBox::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0)).unwrap();
        let (a, b) = clip_line(&Hyperplane::new(Point::new(1.0, 1.0), 0.0), &bbox).unwrap();
        assert!(((a - b).norm() - 8f64.sqrt()).abs() < 1e-12);
        assert!(clip_line(&Hyperplane::new(Point::new(1.0, 0.0), 2.0), &bbox).is_none());
    }
}
