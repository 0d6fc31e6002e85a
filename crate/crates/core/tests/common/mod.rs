//! Independent oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use flatplan::arrangement::{Arrangement, BoundingBox, HalfSpace, Hyperplane, ObstacleSpec, SignTuple};
use flatplan::io::{load_scenario, Scenario};
use flatplan::plan::{assemble, AgentSpec, PlanError, PlanningProblem, SplineParams};
use flatplan::qp::{self, QpStatus};
use flatplan::spline::Point;
use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_obstacles.json")
}

pub fn reference_scenario() -> Scenario {
    load_scenario(&fixture_path()).expect("fixture parses")
}

pub fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

// ---------------------------------------------------------------- splines

/// `B_{i,k}(t)` straight from the recursion, in exact arithmetic, with
/// `0/0 = 0` and half-open spans.
pub fn rational_basis(knots: &[Rational64], i: usize, k: usize, t: Rational64) -> Rational64 {
    let zero = Rational64::from_integer(0);
    if k == 1 {
        return if knots[i] <= t && t < knots[i + 1] { Rational64::from_integer(1) } else { zero };
    }
    let mut v = zero;
    let den_l = knots[i + k - 1] - knots[i];
    if den_l != zero {
        v += (t - knots[i]) / den_l * rational_basis(knots, i, k - 1, t);
    }
    let den_r = knots[i + k] - knots[i + 1];
    if den_r != zero {
        v += (knots[i + k] - t) / den_r * rational_basis(knots, i + 1, k - 1, t);
    }
    v
}

pub fn to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Literal floating-point recursion, right-closed at the last knot.
pub fn naive_basis(knots: &[f64], i: usize, k: usize, t: f64) -> f64 {
    let last = *knots.last().unwrap();
    if k == 1 {
        let inside = knots[i] <= t && t < knots[i + 1];
        // the last non-degenerate span owns the final knot
        let closing = t == last && knots[i + 1] == last && knots[i] < last;
        return if inside || closing { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let den_l = knots[i + k - 1] - knots[i];
    if den_l != 0.0 {
        v += (t - knots[i]) / den_l * naive_basis(knots, i, k - 1, t);
    }
    let den_r = knots[i + k] - knots[i + 1];
    if den_r != 0.0 {
        v += (knots[i + k] - t) / den_r * naive_basis(knots, i + 1, k - 1, t);
    }
    v
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

/// `z` lies in the convex hull of `points` iff no direction separates it.
/// In the plane the hull's edge normals are among the pairwise normals, and
/// a degenerate (collinear) hull also needs the pairwise directions.
pub fn hull_contains(points: &[Point], z: &Point, tol: f64) -> bool {
    let support = |c: &Point| points.iter().map(|p| c.dot(p)).fold(f64::NEG_INFINITY, f64::max);
    let mut dirs: Vec<Point> = vec![pt(1.0, 0.0), pt(-1.0, 0.0), pt(0.0, 1.0), pt(0.0, -1.0)];
    for a in points {
        for b in points {
            let e = b - a;
            let len = e.norm();
            if len > 1e-14 {
                let e = e / len;
                dirs.extend([e, -e, pt(-e.y, e.x), pt(e.y, -e.x)]);
            }
        }
    }
    dirs.iter().all(|c| c.dot(z) <= support(c) + tol)
}

// --------------------------------------------------------------- geometry

/// Sutherland-Hodgman: keeps the part of a convex polygon with `a'x <= b`.
pub fn clip(poly: &[Point], h: &HalfSpace) -> Vec<Point> {
    let inside = |p: &Point| h.normal.dot(p) <= h.offset;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (pin, qin) = (inside(&p), inside(&q));
        if pin {
            out.push(p);
        }
        if pin != qin {
            let (fp, fq) = (h.normal.dot(&p) - h.offset, h.normal.dot(&q) - h.offset);
            out.push(p + (q - p) * (fp / (fp - fq)));
        }
    }
    out
}

pub fn area(poly: &[Point]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s.abs()
}

pub fn box_polygon(b: &BoundingBox) -> Vec<Point> {
    vec![b.min, pt(b.max.x, b.min.y), b.max, pt(b.min.x, b.max.y)]
}

/// Cell of `tuple` inside the box by clipping.
pub fn clipped_cell(hyperplanes: &[Hyperplane], tuple: &SignTuple, bbox: &BoundingBox) -> Vec<Point> {
    let mut poly = box_polygon(bbox);
    for (h, s) in hyperplanes.iter().zip(&tuple.0) {
        poly = clip(&poly, &h.half_space(*s));
        if poly.is_empty() {
            break;
        }
    }
    poly
}

/// Every sign tuple of `m` hyperplanes.
pub fn all_tuples(m: usize) -> Vec<SignTuple> {
    (0..1usize << m)
        .map(|bits| {
            let s: String = (0..m).map(|j| if bits >> j & 1 == 0 { '+' } else { '-' }).collect();
            format!("({s})").parse().unwrap()
        })
        .collect()
}

/// Distance from `x` to a convex polygon given counter-clockwise (zero
/// inside).
pub fn polygon_distance(poly: &[Point], x: &Point) -> f64 {
    let inside = (0..poly.len()).all(|i| {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        (q - p).perp(&(x - p)) >= 0.0
    });
    if inside {
        return 0.0;
    }
    (0..poly.len())
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
            let e = q - p;
            let t = ((x - p).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
            (x - (p + e * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

// --------------------------------------------------------------------- QP

/// FISTA with projection on the box `[lo, hi]`, run until the iterates
/// stop moving.
pub fn projected_gradient(q: &DMatrix<f64>, c: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    let lip = q.clone().symmetric_eigenvalues().max().max(1e-12);
    let project = |v: DVector<f64>| v.zip_zip_map(lo, hi, |x, l, h| x.clamp(l, h));
    let mut x = project(DVector::zeros(c.len()));
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let grad = q * &y + c;
        let next = project(&y - grad / lip);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let step = (&next - &x).norm();
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        if step < 1e-14 {
            break;
        }
    }
    x
}

pub fn quad_value(q: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(q * x)) + c.dot(x)
}

// --------------------------------------------------------------- planning

fn block(x0: f64, x1: f64, y0: f64, y1: f64) -> ObstacleSpec {
    ObstacleSpec::Vertices(vec![pt(x0, y0), pt(x1, y0), pt(x1, y1), pt(x0, y1)])
}

/// Two walls with offset openings of width `opening`; not passable with
/// few control points.
pub fn walls_problem(n: usize) -> PlanningProblem {
    let (opening, offset) = (0.8, 2.0);
    let bbox = BoundingBox::new(pt(-1.0, -5.0), pt(11.0, 5.0)).unwrap();
    let mut obstacles = Vec::new();
    for (name, x, y) in [("first", 3.0, offset), ("second", 7.0, -offset)] {
        obstacles.push((format!("{name} top"), block(x - 0.25, x + 0.25, y + opening / 2.0, 6.0)));
        obstacles.push((format!("{name} bottom"), block(x - 0.25, x + 0.25, -6.0, y - opening / 2.0)));
    }
    let arrangement = Arrangement::build(vec![], &obstacles, bbox).unwrap();
    let agent = AgentSpec::new(vec![pt(0.0, 0.0), pt(10.0, 0.0)], vec![0.0, 10.0]);
    PlanningProblem::new(vec![agent], arrangement, SplineParams { n, d: 4 }).unwrap()
}

fn tuple_problem(lines: &[(Point, f64)], obstacles: &[(&str, &str)], goal: Point, n: usize, d: usize) -> PlanningProblem {
    let hyperplanes: Vec<Hyperplane> = lines.iter().map(|(a, b)| Hyperplane::new(*a, *b)).collect();
    let obstacles: Vec<(String, ObstacleSpec)> =
        obstacles.iter().map(|(name, t)| (name.to_string(), ObstacleSpec::Tuple(t.parse().unwrap()))).collect();
    let bbox = BoundingBox::new(pt(-1.0, -6.0), pt(11.0, 6.0)).unwrap();
    let arrangement = Arrangement::build(hyperplanes, &obstacles, bbox).unwrap();
    let agent = AgentSpec::new(vec![pt(0.0, 0.0), goal], vec![0.0, 10.0]);
    PlanningProblem::new(vec![agent], arrangement, SplineParams { n, d }).unwrap()
}

/// Small single-agent instances with at most four hyperplanes.
pub fn toy_problems() -> Vec<PlanningProblem> {
    let x = pt(1.0, 0.0);
    let y = pt(0.0, 1.0);
    vec![
        // one block on the straight route, four hyperplanes
        tuple_problem(&[(x, 4.0), (x, 6.0), (y, 1.0), (y, -1.5)], &[("block", "(-++-)")], pt(10.0, 0.0), 6, 4),
        // two cells of a three-line arrangement
        tuple_problem(&[(x, 3.0), (x, 7.0), (y, 0.5)], &[("middle", "(-++)"), ("right", "(--+)")], pt(10.0, 2.0), 4, 3),
        // a slanted line
        tuple_problem(&[(x, 5.0), (pt(1.0, 1.0), 4.0), (y, -2.0)], &[("wedge", "(++-)")], pt(10.0, -1.0), 5, 3),
    ]
}

/// Best energy over every choice of one separating hyperplane per
/// (region, obstacle), or `None` if every choice is infeasible. Solves one
/// QP per assignment.
pub fn exhaustive_optimum(problem: &PlanningProblem) -> Result<Option<f64>, PlanError> {
    assert_eq!(problem.agents.len(), 1);
    let asm = assemble(problem)?;
    let base = asm.joint_qp(&[0]);
    let d = problem.spline.d;
    let regions: Vec<usize> = asm.knots.regions().collect();
    let obstacles = problem.obstacles_for(0);
    let margin = problem.config.margin;
    let dim = base.dim();
    let row = |j: usize, a: Point| {
        let mut r = DVector::zeros(dim);
        r[2 * j] = a.x;
        r[2 * j + 1] = a.y;
        r
    };
    // box rows on every control point
    let b = problem.arrangement.bounding_box;
    let mut boxed = base.clone();
    let mut rows = Vec::new();
    for j in 0..dim / 2 {
        rows.push((row(j, pt(1.0, 0.0)), b.max.x));
        rows.push((row(j, pt(-1.0, 0.0)), -b.min.x));
        rows.push((row(j, pt(0.0, 1.0)), b.max.y));
        rows.push((row(j, pt(0.0, -1.0)), -b.min.y));
    }
    boxed.push_inequalities(&rows);

    let slots: Vec<(usize, usize)> =
        regions.iter().flat_map(|&i| (0..obstacles.len()).map(move |l| (i, l))).collect();
    let sizes: Vec<usize> = slots.iter().map(|&(_, l)| obstacles[l].pool.len()).collect();
    let mut choice = vec![0usize; slots.len()];
    let mut best: Option<f64> = None;
    loop {
        let mut qp = boxed.clone();
        let mut rows = Vec::new();
        for (s, &(i, l)) in slots.iter().enumerate() {
            let (_, f) = obstacles[l].pool[choice[s]];
            let norm = f.normal.norm();
            // separated: a'p >= b + margin, i.e. -a'p <= -(b + margin)
            for j in i + 1 - d..=i {
                rows.push((row(j, -f.normal / norm), -(f.offset / norm + margin)));
            }
        }
        qp.push_inequalities(&rows);
        let sol = qp::solve(&qp, &problem.config.solver)?;
        match sol.status {
            QpStatus::Optimal => best = Some(best.map_or(sol.objective, |v: f64| v.min(sol.objective))),
            QpStatus::Infeasible => {}
            QpStatus::MaxIterations => panic!("oracle QP did not converge"),
        }
        // next assignment, odometer order
        let mut s = 0;
        loop {
            if s == choice.len() {
                return Ok(best);
            }
            choice[s] += 1;
            if choice[s] < sizes[s] {
                break;
            }
            choice[s] = 0;
            s += 1;
        }
    }
}

/// Two agents crossing diagonally, meeting mid-course unless they deviate.
pub fn crossing_problem(n: usize) -> PlanningProblem {
    let hyperplanes = vec![
        Hyperplane::new(pt(1.0, 0.0), 5.0),
        Hyperplane::new(pt(0.0, 1.0), 5.0),
        Hyperplane::new(pt(1.0, 1.0), 10.0),
        Hyperplane::new(pt(1.0, -1.0), 0.0),
    ];
    let bbox = BoundingBox::new(pt(-3.0, -3.0), pt(13.0, 13.0)).unwrap();
    let arrangement = Arrangement::build(hyperplanes, &[], bbox).unwrap();
    let agents = vec![
        AgentSpec::new(vec![pt(0.0, 0.0), pt(10.0, 10.0)], vec![0.0, 10.0]),
        AgentSpec::new(vec![pt(10.0, 0.0), pt(0.0, 10.0)], vec![0.0, 10.0]),
    ];
    PlanningProblem::new(agents, arrangement, SplineParams { n, d: 4 }).unwrap()
}

/// Two agents far apart on either side of `y = 10`.
pub fn corridor_problem() -> PlanningProblem {
    let hyperplanes = vec![Hyperplane::new(pt(0.0, 1.0), 10.0), Hyperplane::new(pt(1.0, 0.0), 5.0)];
    let bbox = BoundingBox::new(pt(-2.0, -5.0), pt(12.0, 25.0)).unwrap();
    let arrangement = Arrangement::build(hyperplanes, &[], bbox).unwrap();
    let agents = vec![
        AgentSpec::new(vec![pt(0.0, 0.0), pt(4.0, 2.0), pt(10.0, 0.0)], vec![0.0, 4.0, 10.0]),
        AgentSpec::new(vec![pt(0.0, 20.0), pt(6.0, 18.0), pt(10.0, 20.0)], vec![0.0, 4.0, 10.0]),
    ];
    PlanningProblem::new(agents, arrangement, SplineParams { n: 8, d: 4 }).unwrap()
}

pub fn single_agent(problem: &PlanningProblem, k: usize) -> PlanningProblem {
    let mut p = problem.clone();
    p.agents = vec![problem.agents[k].clone()];
    p
}

pub fn max_point_gap(a: &[Point], b: &[Point]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}
