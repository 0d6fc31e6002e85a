//! Hyperplane arrangements over the planar flat-output space.
//!
//! Each hyperplane `h'x = k` splits the plane into `H+ = {h'x <= k}` and
//! `H- = {h'x >= k}`. A cell is the intersection of one half-space per
//! hyperplane and is named by its sign tuple. Obstacles are cells (or
//! vertex-defined polygons) and the tuples touching them are interdicted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::qp::{self, QuadraticProgram, SolverSettings};
use crate::spline::Point;

/// Largest arrangement accepted by exhaustive enumeration.
pub const MAX_HYPERPLANES: usize = 25;

/// Distance below which a point is considered to lie on a hyperplane.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Minimum inscribed slack for a cell to count as non-empty.
const INTERIOR_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("hyperplane {0} has a zero normal")]
    ZeroNormal(usize),
    #[error("point ({x}, {y}) lies within {tol:e} of hyperplane {index}")]
    AmbiguousCell { x: f64, y: f64, index: usize, tol: f64 },
    #[error("{0} hyperplanes exceed the exhaustive enumeration limit of {MAX_HYPERPLANES}")]
    TooManyHyperplanes(usize),
    #[error("bounding box is empty or unbounded")]
    BadBoundingBox,
    #[error("obstacle {name}: sign tuple has length {got}, arrangement has {expected} hyperplanes")]
    TupleLength { name: String, got: usize, expected: usize },
    #[error("invalid sign character {0:?}")]
    BadSign(char),
    #[error("obstacle {name}: tuple {tuple} is not a feasible cell")]
    InfeasibleTuple { name: String, tuple: String },
    #[error("obstacle {0}: need at least 3 affinely independent vertices")]
    DegenerateObstacle(String),
    #[error("safety region must be a non-empty bounded polygon containing the origin")]
    BadSafetyRegion,
    #[error("feasibility subproblem failed: {0}")]
    Solver(String),
}

/// `H = {x : normal' x = offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperplane {
    pub normal: Point,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Point, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Half-space `sign` of this hyperplane as `a'x <= b`.
    pub fn half_space(&self, sign: Sign) -> HalfSpace {
        match sign {
            Sign::Plus => HalfSpace::new(self.normal, self.offset),
            Sign::Minus => HalfSpace::new(-self.normal, -self.offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignTuple(pub Vec<Sign>);

impl SignTuple {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, m: usize) -> Sign {
        self.0[m]
    }
}

impl fmt::Display for SignTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            f.write_str(match s {
                Sign::Plus => "+",
                Sign::Minus => "-",
            })?;
        }
        Ok(())
    }
}

impl FromStr for SignTuple {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != '(' && *c != ')' && *c != ',')
            .map(|c| match c {
                '+' => Ok(Sign::Plus),
                '-' | '\u{2212}' => Ok(Sign::Minus),
                other => Err(GeoError::BadSign(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(SignTuple)
    }
}

/// `a'x <= b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Point,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Point, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// `b - a'x`, positive inside.
    pub fn slack(&self, x: &Point) -> f64 {
        self.offset - self.normal.dot(x)
    }
}

/// Polytope in H-representation, `{x : a_i'x <= b_i for all i}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polytope {
    pub faces: Vec<HalfSpace>,
}

impl Polytope {
    pub fn new(faces: Vec<HalfSpace>) -> Self {
        Self { faces }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        self.faces.iter().all(|f| f.slack(x) >= -tol * f.normal.norm().max(1.0))
    }

    pub fn intersect(&self, other: &Polytope) -> Polytope {
        let mut faces = self.faces.clone();
        faces.extend_from_slice(&other.faces);
        Polytope { faces }
    }

    /// Largest `s <= 1` such that the ball of radius `s` around some point
    /// fits inside, with that point. Solved as a small LP.
    pub fn inscribed(&self) -> Result<(Point, f64), GeoError> {
        let rows = self.faces.len();
        let mut g = DMatrix::zeros(rows + 1, 3);
        let mut h = DVector::zeros(rows + 1);
        for (i, f) in self.faces.iter().enumerate() {
            let norm = f.normal.norm();
            g[(i, 0)] = f.normal.x;
            g[(i, 1)] = f.normal.y;
            g[(i, 2)] = norm;
            h[i] = f.offset;
        }
        g[(rows, 2)] = 1.0;
        h[rows] = 1.0;
        let lp = QuadraticProgram::new(DMatrix::zeros(3, 3), DVector::from_row_slice(&[0.0, 0.0, -1.0]))
            .with_inequalities(g, h);
        let sol = qp::solve(&lp, &SolverSettings::default()).map_err(|e| GeoError::Solver(e.to_string()))?;
        match sol.status {
            qp::QpStatus::Optimal => Ok((Point::new(sol.x[0], sol.x[1]), sol.x[2])),
            qp::QpStatus::Infeasible => Ok((Point::zeros(), f64::NEG_INFINITY)),
            qp::QpStatus::MaxIterations => Ok(self.inscribed_by_vertices()),
        }
    }

    /// Same LP solved by visiting every basic solution; used when the
    /// iterative solver stalls on a degenerate instance. The centre is
    /// confined to a large box so that a vertex optimum exists.
    fn inscribed_by_vertices(&self) -> (Point, f64) {
        const FAR: f64 = 1e6;
        let mut rows: Vec<([f64; 3], f64)> =
            self.faces.iter().map(|f| ([f.normal.x, f.normal.y, f.normal.norm()], f.offset)).collect();
        rows.push(([0.0, 0.0, 1.0], 1.0));
        rows.extend([
            ([1.0, 0.0, 0.0], FAR),
            ([-1.0, 0.0, 0.0], FAR),
            ([0.0, 1.0, 0.0], FAR),
            ([0.0, -1.0, 0.0], FAR),
        ]);
        let feasible = |x: &nalgebra::Vector3<f64>| {
            rows.iter().all(|(a, b)| a[0] * x[0] + a[1] * x[1] + a[2] * x[2] <= b + 1e-9 * (1.0 + b.abs()))
        };
        let mut best: Option<nalgebra::Vector3<f64>> = None;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                for k in j + 1..rows.len() {
                    let m = nalgebra::Matrix3::from_rows(&[
                        nalgebra::RowVector3::from(rows[i].0),
                        nalgebra::RowVector3::from(rows[j].0),
                        nalgebra::RowVector3::from(rows[k].0),
                    ]);
                    let Some(inv) = m.try_inverse() else { continue };
                    let x = inv * nalgebra::Vector3::new(rows[i].1, rows[j].1, rows[k].1);
                    if feasible(&x) && best.is_none_or(|b| x[2] > b[2]) {
                        best = Some(x);
                    }
                }
            }
        }
        match best {
            Some(x) => (Point::new(x[0], x[1]), x[2]),
            None => (Point::zeros(), f64::NEG_INFINITY),
        }
    }

    /// True when the polytope has a non-empty interior.
    pub fn has_interior(&self) -> Result<bool, GeoError> {
        Ok(self.inscribed()?.1 > INTERIOR_TOL)
    }

    /// Vertices of a bounded planar polytope, counter-clockwise.
    pub fn vertices(&self) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::new();
        let f = &self.faces;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                let det = f[i].normal.x * f[j].normal.y - f[i].normal.y * f[j].normal.x;
                let scale = f[i].normal.norm() * f[j].normal.norm();
                if det.abs() <= 1e-12 * scale {
                    continue;
                }
                let x = (f[i].offset * f[j].normal.y - f[j].offset * f[i].normal.y) / det;
                let y = (f[i].normal.x * f[j].offset - f[j].normal.x * f[i].offset) / det;
                let p = Point::new(x, y);
                if self.contains(&p, 1e-9) && !out.iter().any(|q| (q - p).norm() < 1e-9) {
                    out.push(p);
                }
            }
        }
        sort_ccw(&mut out);
        out
    }

    /// Signed Euclidean distance, positive outside. Outside distances come
    /// from a projection QP; inside, from the nearest face.
    pub fn signed_distance(&self, x: &Point) -> Result<f64, GeoError> {
        let inside = self.faces.iter().map(|f| f.slack(x) / f.normal.norm()).fold(f64::INFINITY, f64::min);
        if inside >= 0.0 {
            return Ok(-inside);
        }
        Ok(self.project(x)?.1)
    }

    /// Euclidean projection of `x` and its distance.
    pub fn project(&self, x: &Point) -> Result<(Point, f64), GeoError> {
        let rows = self.faces.len();
        let mut g = DMatrix::zeros(rows, 2);
        let mut h = DVector::zeros(rows);
        for (i, f) in self.faces.iter().enumerate() {
            g[(i, 0)] = f.normal.x;
            g[(i, 1)] = f.normal.y;
            h[i] = f.offset;
        }
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2), DVector::from_row_slice(&[-x.x, -x.y]))
            .with_inequalities(g, h);
        let sol = qp::solve(&qp, &SolverSettings::default()).map_err(|e| GeoError::Solver(e.to_string()))?;
        if sol.status != qp::QpStatus::Optimal {
            return Err(GeoError::Solver(format!("projection ended with {:?}", sol.status)));
        }
        let p = Point::new(sol.x[0], sol.x[1]);
        Ok((p, (p - x).norm()))
    }

    pub fn centroid(&self) -> Option<Point> {
        let v = self.vertices();
        polygon_centroid(&v)
    }
}

/// Area centroid of a counter-clockwise polygon.
pub fn polygon_centroid(v: &[Point]) -> Option<Point> {
    if v.len() < 3 {
        return None;
    }
    let (mut a, mut c) = (0.0, Point::zeros());
    for i in 0..v.len() {
        let (p, q) = (v[i], v[(i + 1) % v.len()]);
        let cross = p.x * q.y - q.x * p.y;
        a += cross;
        c += (p + q) * cross;
    }
    if a.abs() < 1e-15 {
        return None;
    }
    Some(c / (3.0 * a))
}

fn sort_ccw(pts: &mut [Point]) {
    if pts.is_empty() {
        return;
    }
    let c = pts.iter().fold(Point::zeros(), |a, p| a + p) / pts.len() as f64;
    pts.sort_by(|a, b| {
        let ta = (a.y - c.y).atan2(a.x - c.x);
        let tb = (b.y - c.y).atan2(b.x - c.x);
        ta.total_cmp(&tb)
    });
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, collinear
/// points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point, a: &Point, b: &Point| (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// H-representation of the convex hull of `points`, faces with unit normals.
pub fn hull_polytope(points: &[Point]) -> Option<Polytope> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let faces = (0..hull.len())
        .map(|i| {
            let (p, q) = (hull[i], hull[(i + 1) % hull.len()]);
            let e = q - p;
            // outward normal of a counter-clockwise edge
            let n = Point::new(e.y, -e.x).normalize();
            HalfSpace::new(n, n.dot(&p))
        })
        .collect();
    Some(Polytope::new(faces))
}

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn new(min: Point, max: Point) -> Result<Self, GeoError> {
        if !(min.x < max.x && min.y < max.y) || !min.iter().chain(max.iter()).all(|v| v.is_finite()) {
            return Err(GeoError::BadBoundingBox);
        }
        Ok(Self { min, max })
    }

    /// Square box around the points: centered on their range, side 1.5
    /// times the larger axis spread (at least 1).
    pub fn around(points: &[Point]) -> Result<Self, GeoError> {
        let first = points.first().ok_or(GeoError::BadBoundingBox)?;
        let (mut lo, mut hi) = (*first, *first);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let spread = (hi - lo).amax().max(1.0);
        let half = 0.75 * spread;
        let c = (lo + hi) / 2.0;
        Self::new(c - Point::new(half, half), c + Point::new(half, half))
    }

    pub fn polytope(&self) -> Polytope {
        Polytope::new(vec![
            HalfSpace::new(Point::new(1.0, 0.0), self.max.x),
            HalfSpace::new(Point::new(-1.0, 0.0), -self.min.x),
            HalfSpace::new(Point::new(0.0, 1.0), self.max.y),
            HalfSpace::new(Point::new(0.0, -1.0), -self.min.y),
        ])
    }

    /// Radius of the smallest origin-centered ball containing the box.
    pub fn radius(&self) -> f64 {
        let corners = [self.min, self.max, Point::new(self.min.x, self.max.y), Point::new(self.max.x, self.min.y)];
        corners.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// Polygon `S_k` attached to an agent, in its body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyRegion {
    vertices: Vec<Point>,
}

impl SafetyRegion {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeoError> {
        if vertices.is_empty() || !vertices.iter().all(|v| v.x.is_finite() && v.y.is_finite()) {
            return Err(GeoError::BadSafetyRegion);
        }
        let region = Self { vertices };
        if !region.contains_origin() {
            return Err(GeoError::BadSafetyRegion);
        }
        Ok(region)
    }

    /// The single point `{0}`.
    pub fn point() -> Self {
        Self { vertices: vec![Point::zeros()] }
    }

    /// Square of the given half-width centered at the origin.
    pub fn square(half_width: f64) -> Self {
        let h = half_width;
        Self { vertices: vec![Point::new(-h, -h), Point::new(h, -h), Point::new(h, h), Point::new(-h, h)] }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// `max_{s in S} dir's`.
    pub fn support(&self, dir: &Point) -> f64 {
        self.vertices.iter().map(|v| dir.dot(v)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_point(&self) -> bool {
        self.vertices.iter().all(|v| v.norm() == 0.0)
    }

    fn contains_origin(&self) -> bool {
        let hull = convex_hull(&self.vertices);
        match hull.len() {
            0 => false,
            1 => hull[0].norm() <= 1e-12,
            2 => {
                let (a, b) = (hull[0], hull[1]);
                let ab = b - a;
                let t = (-a).dot(&ab) / ab.norm_squared();
                (0.0..=1.0).contains(&t) && (a + ab * t).norm() <= 1e-12
            }
            _ => hull_polytope(&hull).is_some_and(|p| p.contains(&Point::zeros(), 1e-12)),
        }
    }
}

/// Outer approximation of `O (+) (-S)` using the faces of `O`: every face
/// offset grows by `max_{s in S} a'(-s)`. An empty region (no vertices)
/// is treated as the origin.
pub fn inflate_obstacle(cell: &Polytope, region: &SafetyRegion) -> Polytope {
    if region.vertices.is_empty() {
        return cell.clone();
    }
    Polytope::new(
        cell.faces
            .iter()
            .map(|f| HalfSpace::new(f.normal, f.offset + region.support(&(-f.normal))))
            .collect(),
    )
}

/// How an obstacle is declared.
#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleSpec {
    Tuple(SignTuple),
    Vertices(Vec<Point>),
}

/// One obstacle, the separating candidates of its hyperplane pool, and
/// its vertices inside the bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub name: String,
    pub tuple: SignTuple,
    /// The obstacle as a polytope. For tuple obstacles this is the cell.
    pub polytope: Polytope,
    /// `(m, a'x <= b)`: hyperplane `m` with the obstacle on its `a'x <= b`
    /// side; a point separated by `m` satisfies `a'x >= b`.
    pub pool: Vec<(usize, HalfSpace)>,
    pub vertices: Vec<Point>,
    /// The declaration the obstacle was built from.
    pub declared: ObstacleSpec,
}

impl Obstacle {
    /// The obstacle enlarged by `-S` and the matching shifted pool.
    pub fn inflated(&self, region: &SafetyRegion) -> Obstacle {
        if region.is_point() {
            return self.clone();
        }
        let polytope = inflate_obstacle(&self.polytope, region);
        let pool = self
            .pool
            .iter()
            .map(|(m, f)| (*m, HalfSpace::new(f.normal, f.offset + region.support(&(-f.normal)))))
            .collect();
        let vertices = polytope.vertices();
        Obstacle {
            name: self.name.clone(),
            tuple: self.tuple.clone(),
            polytope,
            pool,
            vertices,
            declared: self.declared.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrangement {
    pub hyperplanes: Vec<Hyperplane>,
    pub bounding_box: BoundingBox,
    /// Feasible tuples with an interior witness point.
    pub feasible: BTreeMap<SignTuple, Point>,
    pub interdicted: BTreeSet<SignTuple>,
    pub admissible: BTreeSet<SignTuple>,
    pub obstacles: Vec<Obstacle>,
}

fn check_hyperplanes(hyperplanes: &[Hyperplane]) -> Result<(), GeoError> {
    if hyperplanes.len() > MAX_HYPERPLANES {
        return Err(GeoError::TooManyHyperplanes(hyperplanes.len()));
    }
    for (i, h) in hyperplanes.iter().enumerate() {
        if !(h.normal.norm() > 0.0) {
            return Err(GeoError::ZeroNormal(i));
        }
    }
    Ok(())
}

/// Cell of `tuple` clipped to the box.
pub fn cell_polytope(hyperplanes: &[Hyperplane], tuple: &SignTuple, bbox: &BoundingBox) -> Polytope {
    let mut p = bbox.polytope();
    p.faces.extend(hyperplanes.iter().zip(&tuple.0).map(|(h, s)| h.half_space(*s)));
    p
}

/// Sign of each hyperplane at `x`: `+` if `h'x <= k`.
pub fn classify(hyperplanes: &[Hyperplane], x: &Point) -> Result<SignTuple, GeoError> {
    hyperplanes
        .iter()
        .enumerate()
        .map(|(m, h)| {
            let v = h.normal.dot(x) - h.offset;
            if v.abs() <= BOUNDARY_TOL * h.normal.norm() {
                Err(GeoError::AmbiguousCell { x: x.x, y: x.y, index: m, tol: BOUNDARY_TOL })
            } else if v < 0.0 {
                Ok(Sign::Plus)
            } else {
                Ok(Sign::Minus)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(SignTuple)
}

/// Feasible cells of the arrangement inside the box, each with a witness.
///
/// Tuples grow one hyperplane at a time; a prefix whose partial cell is
/// empty is never expanded.
pub fn enumerate_cells(
    hyperplanes: &[Hyperplane],
    bbox: &BoundingBox,
) -> Result<BTreeMap<SignTuple, Point>, GeoError> {
    check_hyperplanes(hyperplanes)?;
    let mut layer: Vec<(Vec<Sign>, Point)> = {
        let (c, r) = bbox.polytope().inscribed()?;
        if r <= INTERIOR_TOL {
            return Err(GeoError::BadBoundingBox);
        }
        vec![(Vec::new(), c)]
    };
    for m in 0..hyperplanes.len() {
        let candidates: Vec<Vec<Sign>> = layer
            .iter()
            .flat_map(|(prefix, _)| {
                [Sign::Plus, Sign::Minus].into_iter().map(move |s| {
                    let mut t = prefix.clone();
                    t.push(s);
                    t
                })
            })
            .collect();
        type Tested = Result<Option<(Vec<Sign>, Point)>, GeoError>;
        let tested: Vec<Tested> = candidates
            .into_par_iter()
            .map(|t| {
                let poly = cell_polytope(&hyperplanes[..=m], &SignTuple(t.clone()), bbox);
                let (c, r) = poly.inscribed()?;
                Ok((r > INTERIOR_TOL).then_some((t, c)))
            })
            .collect();
        layer = Vec::new();
        for r in tested {
            if let Some(entry) = r? {
                layer.push(entry);
            }
        }
    }
    Ok(layer.into_iter().map(|(t, c)| (SignTuple(t), c)).collect())
}

impl Arrangement {
    /// Builds the arrangement, appending the facets of vertex-declared
    /// obstacles to the hyperplane list, and classifies every feasible cell.
    pub fn build(
        hyperplanes: Vec<Hyperplane>,
        obstacles: &[(String, ObstacleSpec)],
        bbox: BoundingBox,
    ) -> Result<Self, GeoError> {
        let mut hyperplanes = hyperplanes;
        check_hyperplanes(&hyperplanes)?;
        let mut hulls = Vec::new();
        for (name, spec) in obstacles {
            if let ObstacleSpec::Vertices(v) = spec {
                let poly = hull_polytope(v).ok_or_else(|| GeoError::DegenerateObstacle(name.clone()))?;
                for f in &poly.faces {
                    let dup = hyperplanes.iter().any(|h| {
                        let s = h.normal.norm();
                        ((h.normal / s - f.normal).norm() < 1e-12 && (h.offset / s - f.offset).abs() < 1e-12)
                            || ((h.normal / s + f.normal).norm() < 1e-12 && (h.offset / s + f.offset).abs() < 1e-12)
                    });
                    if !dup {
                        hyperplanes.push(Hyperplane::new(f.normal, f.offset));
                    }
                }
                hulls.push(Some(poly));
            } else {
                hulls.push(None);
            }
        }
        let feasible = enumerate_cells(&hyperplanes, &bbox)?;
        let mut interdicted = BTreeSet::new();
        let mut built = Vec::new();
        for ((name, spec), hull) in obstacles.iter().zip(hulls) {
            let obstacle = match (spec, hull) {
                (ObstacleSpec::Tuple(t), _) => {
                    if t.len() != hyperplanes.len() {
                        return Err(GeoError::TupleLength { name: name.clone(), got: t.len(), expected: hyperplanes.len() });
                    }
                    if !feasible.contains_key(t) {
                        return Err(GeoError::InfeasibleTuple { name: name.clone(), tuple: t.to_string() });
                    }
                    interdicted.insert(t.clone());
                    let polytope = Polytope::new(
                        hyperplanes.iter().zip(&t.0).map(|(h, s)| h.half_space(*s)).collect(),
                    );
                    let pool = (0..hyperplanes.len()).map(|m| (m, polytope.faces[m])).collect();
                    let vertices = polytope.intersect(&bbox.polytope()).vertices();
                    Obstacle { name: name.clone(), tuple: t.clone(), polytope, pool, vertices, declared: spec.clone() }
                }
                (ObstacleSpec::Vertices(_), Some(polytope)) => {
                    let vertices = polytope.intersect(&bbox.polytope()).vertices();
                    // cells whose interior meets the obstacle
                    let hits: Vec<Result<Option<SignTuple>, GeoError>> = feasible
                        .keys()
                        .collect::<Vec<_>>()
                        .into_par_iter()
                        .map(|t| {
                            let cell = cell_polytope(&hyperplanes, t, &bbox).intersect(&polytope);
                            Ok(cell.has_interior()?.then(|| t.clone()))
                        })
                        .collect();
                    let mut touched = Vec::new();
                    for h in hits {
                        if let Some(t) = h? {
                            touched.push(t);
                        }
                    }
                    let tuple = polygon_centroid(&vertices)
                        .and_then(|c| classify(&hyperplanes, &c).ok())
                        .filter(|t| touched.contains(t))
                        .or_else(|| touched.first().cloned())
                        .ok_or_else(|| GeoError::DegenerateObstacle(name.clone()))?;
                    interdicted.extend(touched);
                    // only hyperplanes leaving the whole obstacle on one side separate it
                    let pool = hyperplanes
                        .iter()
                        .enumerate()
                        .filter_map(|(m, h)| {
                            let f = h.half_space(tuple.get(m));
                            let scale = f.normal.norm();
                            vertices.iter().all(|v| f.slack(v) >= -1e-12 * scale).then_some((m, f))
                        })
                        .collect();
                    Obstacle { name: name.clone(), tuple, polytope, pool, vertices, declared: spec.clone() }
                }
                (ObstacleSpec::Vertices(_), None) => unreachable!(),
            };
            built.push(obstacle);
        }
        let admissible = feasible.keys().filter(|t| !interdicted.contains(*t)).cloned().collect();
        Ok(Self { hyperplanes, bounding_box: bbox, feasible, interdicted, admissible, obstacles: built })
    }

    pub fn num_hyperplanes(&self) -> usize {
        self.hyperplanes.len()
    }

    pub fn cell_of(&self, x: &Point) -> Result<SignTuple, GeoError> {
        classify(&self.hyperplanes, x)
    }

    pub fn cell(&self, tuple: &SignTuple) -> Polytope {
        cell_polytope(&self.hyperplanes, tuple, &self.bounding_box)
    }

    /// Big-M constant `T = 2 (max |k_m| + max |h_m| R)`, with `R` bounding
    /// the box and `extra_offset` covering inflation or margins.
    pub fn big_m(&self, extra_offset: f64) -> f64 {
        let kmax = self.hyperplanes.iter().map(|h| h.offset.abs()).fold(0.0, f64::max) + extra_offset.abs();
        let hmax = self.hyperplanes.iter().map(|h| h.normal.norm()).fold(0.0, f64::max);
        2.0 * (kmax + hmax * self.bounding_box.radius())
    }
}
