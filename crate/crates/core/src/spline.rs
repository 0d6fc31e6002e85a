//! B-spline basis evaluation, clamped knot vectors, derivative matrices and
//! Gram matrices.
//!
//! Orders follow the convention where order 1 functions are span indicators,
//! so a basis of order `d` is piecewise polynomial of degree `d - 1`.

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

/// A point of the flat-output space (planar position, meters).
pub type Point = Vector2<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("order must be at least 1 and at most {max}, got {order}")]
    BadOrder { order: usize, max: usize },
    #[error("knot vector is not non-decreasing at index {0}")]
    Decreasing(usize),
    #[error("knot vector is not clamped with multiplicity {0} at both ends")]
    NotClamped(usize),
    #[error("interior knot {value} has multiplicity {mult} >= order {order}")]
    InteriorMultiplicity { value: f64, mult: usize, order: usize },
    #[error("knot vector too short: {len} knots for order {order}")]
    TooShort { len: usize, order: usize },
    #[error("t = {t} outside knot range [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },
    #[error("derivative order {r} not supported for order {order} (need 1 <= r <= order - 2)")]
    DerivativeOrder { r: usize, order: usize },
    #[error("control polygon has {got} points, knot vector expects {expected}")]
    PolygonSize { got: usize, expected: usize },
    #[error("need n >= d - 1 (n = {n}, d = {d}) and t0 < tN")]
    BadUniform { n: usize, d: usize },
}

/// Clamped knot vector `tau_0 <= ... <= tau_m` of order `d`, with `n = m - d`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    order: usize,
}

impl KnotVector {
    /// Validates a clamped knot vector.
    pub fn new(knots: Vec<f64>, order: usize) -> Result<Self, SplineError> {
        if order < 1 {
            return Err(SplineError::BadOrder { order, max: usize::MAX });
        }
        if knots.len() < 2 * order {
            return Err(SplineError::TooShort { len: knots.len(), order });
        }
        if let Some(i) = knots.windows(2).position(|w| !(w[0] <= w[1])) {
            return Err(SplineError::Decreasing(i));
        }
        let m = knots.len() - 1;
        let (lo, hi) = (knots[0], knots[m]);
        if !(lo < hi)
            || knots[..order].iter().any(|&k| k != lo)
            || knots[m + 1 - order..].iter().any(|&k| k != hi)
        {
            return Err(SplineError::NotClamped(order));
        }
        let interior = &knots[order..=m - order];
        let mut i = 0;
        while i < interior.len() {
            let v = interior[i];
            let mult = interior[i..].iter().take_while(|&&k| k == v).count();
            if mult >= order {
                return Err(SplineError::InteriorMultiplicity { value: v, mult, order });
            }
            i += mult;
        }
        Ok(Self { knots, order })
    }

    /// Clamped knots on `[t0, tn]` with `n + 1` basis functions of order `d`
    /// and equally spaced interior knots.
    pub fn clamped_uniform(t0: f64, tn: f64, n: usize, d: usize) -> Result<Self, SplineError> {
        if d < 1 || n + 1 < d || !(t0 < tn) {
            return Err(SplineError::BadUniform { n, d });
        }
        let spans = n + 2 - d;
        let mut knots = Vec::with_capacity(n + d + 1);
        knots.extend(std::iter::repeat_n(t0, d));
        for j in 1..spans {
            knots.push(t0 + (tn - t0) * j as f64 / spans as f64);
        }
        knots.extend(std::iter::repeat_n(tn, d));
        Self::new(knots, d)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Index `n` of the last basis function.
    pub fn n(&self) -> usize {
        self.knots.len() - 1 - self.order
    }

    pub fn num_basis(&self) -> usize {
        self.n() + 1
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Knot span `[tau_i, tau_{i+1}]` governing region `i`.
    pub fn span(&self, i: usize) -> (f64, f64) {
        (self.knots[i], self.knots[i + 1])
    }

    /// Region indices `d-1 ..= n`, one per non-degenerate span.
    pub fn regions(&self) -> std::ops::RangeInclusive<usize> {
        self.order - 1..=self.n()
    }

    /// The clamped knot vector of order `d - r` obtained by dropping `r`
    /// knots from each end. Its basis spans the `r`-th derivative.
    pub fn reduced(&self, r: usize) -> Result<Self, SplineError> {
        if r + 1 > self.order {
            return Err(SplineError::DerivativeOrder { r, order: self.order });
        }
        let m = self.knots.len();
        Ok(Self { knots: self.knots[r..m - r].to_vec(), order: self.order - r })
    }

    pub fn check_domain(&self, t: f64) -> Result<(), SplineError> {
        let (lo, hi) = (self.start(), self.end());
        if !(t >= lo && t <= hi) {
            return Err(SplineError::Domain { t, lo, hi });
        }
        Ok(())
    }

    /// Region (span index) containing `t`, with the final knot assigned to
    /// the last non-degenerate span.
    pub fn region_of(&self, t: f64) -> Result<usize, SplineError> {
        self.check_domain(t)?;
        Ok(active_span(&self.knots, t))
    }
}

/// Index `i` with `tau_i <= t < tau_{i+1}`; at the right end, the last span
/// of positive length.
fn active_span(knots: &[f64], t: f64) -> usize {
    let m = knots.len() - 1;
    if t >= knots[m] {
        return (0..m).rev().find(|&i| knots[i] < knots[i + 1]).unwrap_or(0);
    }
    // first index with knots[idx] > t, minus one
    knots.partition_point(|&k| k <= t) - 1
}

/// All Cox-de Boor values `B_{i,k}(t)` for `i = 0 ..= m - k` on a raw knot
/// list. A `0/0` coefficient is taken as zero, and `t` equal to the last
/// knot activates the last non-degenerate span.
pub fn basis_values(knots: &[f64], k: usize, t: f64) -> Vec<f64> {
    let m = knots.len() - 1;
    debug_assert!(k >= 1 && k <= m);
    let span = active_span(knots, t);
    // order-1 indicators
    let mut b = vec![0.0; m];
    b[span] = 1.0;
    for ord in 2..=k {
        let cnt = m + 1 - ord;
        for i in 0..cnt {
            let mut v = 0.0;
            let den_l = knots[i + ord - 1] - knots[i];
            if den_l != 0.0 && b[i] != 0.0 {
                v += (t - knots[i]) / den_l * b[i];
            }
            let den_r = knots[i + ord] - knots[i + 1];
            if den_r != 0.0 && b[i + 1] != 0.0 {
                v += (knots[i + ord] - t) / den_r * b[i + 1];
            }
            b[i] = v;
        }
        b.truncate(cnt);
    }
    b
}

/// Basis values of order `k` on the given knot vector, checked against its
/// domain.
pub fn basis_eval(knots: &KnotVector, k: usize, t: f64) -> Result<Vec<f64>, SplineError> {
    if k < 1 || k > knots.order() {
        return Err(SplineError::BadOrder { order: k, max: knots.order() });
    }
    knots.check_domain(t)?;
    Ok(basis_values(knots.knots(), k, t))
}

/// Ordered control points `p_0 ..= p_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPolygon {
    pub points: Vec<Point>,
}

impl ControlPolygon {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `d` control points `p_{i-d+1} ..= p_i` of region `i`.
    pub fn region(&self, i: usize, d: usize) -> &[Point] {
        &self.points[i + 1 - d..=i]
    }

    /// Points stacked point-major: `[x0, y0, x1, y1, ...]`.
    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.points.len(), self.points.iter().flat_map(|p| [p.x, p.y]))
    }

    pub fn from_flat(x: &[f64]) -> Self {
        Self { points: x.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.amax()).fold(0.0, f64::max)
    }
}

/// Clamped B-spline curve `z(t) = sum_i B_{i,d}(t) p_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCurve {
    knots: KnotVector,
    polygon: ControlPolygon,
    derivatives: Vec<(KnotVector, ControlPolygon)>,
}

impl SplineCurve {
    pub fn new(knots: KnotVector, polygon: ControlPolygon) -> Result<Self, SplineError> {
        if polygon.len() != knots.num_basis() {
            return Err(SplineError::PolygonSize { got: polygon.len(), expected: knots.num_basis() });
        }
        // derivative polygons P * M_r for r = 1 ..= d - 1 (the last one is
        // piecewise constant)
        let mut derivatives = Vec::new();
        let mut current = polygon.points.clone();
        for r in 1..knots.order() {
            let step_knots = knots.reduced(r - 1)?;
            let m = first_derivative_matrix(&step_knots);
            let pts: Vec<Point> = (0..m.ncols())
                .map(|c| current.iter().enumerate().fold(Point::zeros(), |acc, (row, p)| acc + p * m[(row, c)]))
                .collect();
            derivatives.push((knots.reduced(r)?, ControlPolygon::new(pts.clone())));
            current = pts;
        }
        Ok(Self { knots, polygon, derivatives })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn polygon(&self) -> &ControlPolygon {
        &self.polygon
    }

    pub fn order(&self) -> usize {
        self.knots.order()
    }

    pub fn eval(&self, t: f64) -> Result<Point, SplineError> {
        let b = basis_eval(&self.knots, self.knots.order(), t)?;
        Ok(combine(&self.polygon.points, &b))
    }

    /// `r`-th derivative `P M_r B_{d-r}(t)`, for `r <= d - 1`.
    pub fn derivative(&self, r: usize, t: f64) -> Result<Point, SplineError> {
        if r == 0 {
            return self.eval(t);
        }
        let (kv, poly) = self
            .derivatives
            .get(r - 1)
            .ok_or(SplineError::DerivativeOrder { r, order: self.order() })?;
        self.knots.check_domain(t)?;
        let b = basis_values(kv.knots(), kv.order(), t);
        Ok(combine(&poly.points, &b))
    }

    /// Arc length by per-span Gauss-Legendre quadrature of `|z'(t)|`.
    pub fn length(&self) -> f64 {
        let (nodes, weights) = gauss_legendre(16);
        let knots = self.knots.knots();
        let mut total = 0.0;
        for i in self.knots.regions() {
            let (a, b) = (knots[i], knots[i + 1]);
            if b <= a {
                continue;
            }
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let v = self.derivative(1, t).map(|v| v.norm()).unwrap_or(0.0);
                total += w * half * v;
            }
        }
        total
    }
}

fn combine(points: &[Point], b: &[f64]) -> Point {
    points.iter().zip(b).fold(Point::zeros(), |acc, (p, w)| acc + p * *w)
}

/// `M_r` with `B_d^{(r)}(t) = M_r B_{d-r}(t)`, the lower-order basis living on
/// the knots reduced by `r` at each end.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeMatrix {
    pub order: usize,
    pub matrix: DMatrix<f64>,
}

/// Single-step matrix `(n+1) x n` mapping the order `d-1` basis on the
/// reduced knots to derivatives of the order `d` basis.
pub fn first_derivative_matrix(knots: &KnotVector) -> DMatrix<f64> {
    let d = knots.order();
    let n = knots.n();
    let tau = knots.knots();
    let coef = |i: usize| {
        let den = tau[i + d - 1] - tau[i];
        if den == 0.0 { 0.0 } else { (d - 1) as f64 / den }
    };
    let mut m = DMatrix::zeros(n + 1, n);
    for i in 0..=n {
        if i >= 1 {
            m[(i, i - 1)] = coef(i);
        }
        if i < n {
            m[(i, i)] = -coef(i + 1);
        }
    }
    m
}

pub fn derivative_matrix(knots: &KnotVector, r: usize) -> Result<DerivativeMatrix, SplineError> {
    let d = knots.order();
    if r == 0 || r + 2 > d {
        return Err(SplineError::DerivativeOrder { r, order: d });
    }
    let mut acc = first_derivative_matrix(knots);
    // the product changes shape, so no `*=`
    #[allow(clippy::assign_op_pattern)]
    for s in 1..r {
        acc = acc * first_derivative_matrix(&knots.reduced(s)?);
    }
    Ok(DerivativeMatrix { order: r, matrix: acc })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre polynomial.
pub fn gauss_legendre(points: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `G_ij = integral of B_{i,k} B_{j,k}` over the knot range.
///
/// The product is a polynomial of degree `2(k-1)` on each span, so `k`
/// Gauss-Legendre nodes per span integrate it exactly.
pub fn gram_matrix(knots: &[f64], k: usize) -> DMatrix<f64> {
    let m = knots.len() - 1;
    let count = m + 1 - k;
    let (nodes, weights) = gauss_legendre(k);
    let mut g = DMatrix::zeros(count, count);
    for s in 0..m {
        let (a, b) = (knots[s], knots[s + 1]);
        if b <= a {
            continue;
        }
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in nodes.iter().zip(&weights) {
            let vals = basis_values(knots, k, mid + half * x);
            // only k functions are non-zero on a span
            let lo = s + 1 - k.min(s + 1);
            let hi = s.min(count - 1);
            for i in lo..=hi {
                for j in lo..=hi {
                    g[(i, j)] += w * half * vals[i] * vals[j];
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, d: usize) -> KnotVector {
        KnotVector::clamped_uniform(0.0, 1.0, n, d).unwrap()
    }

    #[test]
    fn clamped_uniform_layout() {
        let kv = uniform(5, 4);
        let third = 1.0 / 3.0;
        let expected = [0.0, 0.0, 0.0, 0.0, third, 2.0 * third, 1.0, 1.0, 1.0, 1.0];
        for (a, b) in kv.knots().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(kv.n(), 5);
        assert_eq!(kv.regions(), 3..=5);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(matches!(
            KnotVector::new(vec![0.0, 0.0, 1.0, 0.5, 1.0, 1.0], 2),
            Err(SplineError::Decreasing(2))
        ));
        assert!(matches!(
            KnotVector::new(vec![0.0, 0.1, 0.5, 1.0, 1.0], 2),
            Err(SplineError::NotClamped(2))
        ));
        assert!(matches!(
            KnotVector::new(vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0], 2),
            Err(SplineError::InteriorMultiplicity { .. })
        ));
    }

    #[test]
    fn order_one_is_indicator() {
        let knots = [0.0, 0.0, 0.25, 0.5, 1.0, 1.0];
        for &t in &[0.0, 0.1, 0.25, 0.3, 0.5, 0.99] {
            let b = basis_values(&knots, 1, t);
            for (i, v) in b.iter().enumerate() {
                let inside = knots[i] <= t && t < knots[i + 1];
                assert_eq!(*v, if inside { 1.0 } else { 0.0 }, "t={t} i={i}");
            }
        }
        // right end closes the last non-degenerate span
        let b = basis_values(&knots, 1, 1.0);
        assert_eq!(b, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn domain_error() {
        let kv = uniform(5, 4);
        assert!(matches!(basis_eval(&kv, 4, 1.5), Err(SplineError::Domain { .. })));
        assert!(matches!(basis_eval(&kv, 4, -1e-9), Err(SplineError::Domain { .. })));
        assert!(matches!(basis_eval(&kv, 4, f64::NAN), Err(SplineError::Domain { .. })));
    }

    #[test]
    fn endpoints_interpolate() {
        let kv = uniform(6, 4);
        let pts: Vec<Point> = (0..7).map(|i| Point::new(i as f64, (i * i) as f64)).collect();
        let c = SplineCurve::new(kv, ControlPolygon::new(pts.clone())).unwrap();
        assert!((c.eval(0.0).unwrap() - pts[0]).norm() < 1e-14);
        assert!((c.eval(1.0).unwrap() - pts[6]).norm() < 1e-14);
    }

    #[test]
    fn constant_polygon() {
        let kv = uniform(7, 5);
        let q = Point::new(1.5, -2.0);
        let c = SplineCurve::new(kv, ControlPolygon::new(vec![q; 8])).unwrap();
        for j in 0..=50 {
            let t = j as f64 / 50.0;
            assert!((c.eval(t).unwrap() - q).norm() < 1e-14);
            assert!(c.derivative(1, t).unwrap().norm() < 1e-12);
            assert!(c.derivative(2, t).unwrap().norm() < 1e-10);
        }
    }

    #[test]
    fn derivative_order_guard() {
        let kv = uniform(5, 4);
        assert!(derivative_matrix(&kv, 0).is_err());
        assert!(derivative_matrix(&kv, 3).is_err());
        let m2 = derivative_matrix(&kv, 2).unwrap();
        assert_eq!(m2.matrix.shape(), (6, 4));
    }

    #[test]
    fn gram_indicator() {
        let g = gram_matrix(&[0.0, 1.0, 2.0], 1);
        assert_eq!(g, DMatrix::identity(2, 2));
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn straight_line_length() {
        let kv = KnotVector::clamped_uniform(0.0, 4.0, 6, 4).unwrap();
        let pts = (0..7).map(|i| Point::new(3.0 * i as f64 / 6.0, 4.0 * i as f64 / 6.0)).collect();
        let c = SplineCurve::new(kv, ControlPolygon::new(pts)).unwrap();
        assert!((c.length() - 5.0).abs() < 1e-12);
    }
}
