//! Planar primitives: points, axis-aligned rectangles, segment clipping and
//! convex polygon splitting.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

pub type Vector = Point;

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point::new(self.x / n, self.y / n)
    }

    /// Rotate clockwise by 90 degrees (right-hand normal of a direction).
    pub fn perp_right(self) -> Point {
        Point::new(self.y, -self.x)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect {
            min: Point::new(x0, y0),
            max: Point::new(x1, y1),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        self.min.lerp(self.max, 0.5)
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.min.x - tol && p.x <= self.max.x + tol && p.y >= self.min.y - tol && p.y <= self.max.y + tol
    }

    /// Corners in counterclockwise order starting at the lower left.
    pub fn corners(&self) -> [Point; 4] {
        [
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ]
    }

    pub fn expanded(&self, d: f64) -> Rect {
        Rect::new(self.min.x - d, self.max.x + d, self.min.y - d, self.max.y + d)
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    pub fn to_polygon(&self) -> Vec<Point> {
        self.corners().to_vec()
    }
}

/// Liang-Barsky clipping of the segment `a + t (b - a)`, `t in [0,1]`, against
/// a rectangle. Returns the parameter interval of the part inside the closed box.
pub fn clip_segment(a: Point, b: Point, rect: &Rect) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    let checks = [
        (-d.x, a.x - rect.min.x),
        (d.x, rect.max.x - a.x),
        (-d.y, a.y - rect.min.y),
        (d.y, rect.max.y - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

/// Distance between a segment and a closed rectangle (zero if they touch).
pub fn segment_rect_distance(a: Point, b: Point, rect: &Rect) -> f64 {
    if clip_segment(a, b, rect).is_some() {
        return 0.0;
    }
    let c = rect.corners();
    let mut d = f64::INFINITY;
    for i in 0..4 {
        let (p, q) = (c[i], c[(i + 1) % 4]);
        d = d
            .min(point_segment_distance(p, a, b))
            .min(point_segment_distance(a, p, q))
            .min(point_segment_distance(b, p, q));
    }
    d
}

/// Intersection parameters `(s, t)` of segments `a0 + s (a1 - a0)` and
/// `b0 + t (b1 - b0)`, for non-parallel segments that meet within `tol`
/// (in parameter units scaled by segment length).
pub fn segment_intersection(a0: Point, a1: Point, b0: Point, b1: Point, tol: f64) -> Option<(f64, f64)> {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = r.cross(s);
    let scale = r.norm() * s.norm();
    if denom.abs() <= 1e-12 * scale {
        return None;
    }
    let qp = b0 - a0;
    let u = qp.cross(s) / denom;
    let v = qp.cross(r) / denom;
    let tu = tol / r.norm();
    let tv = tol / s.norm();
    if u >= -tu && u <= 1.0 + tu && v >= -tv && v <= 1.0 + tv {
        Some((u.clamp(0.0, 1.0), v.clamp(0.0, 1.0)))
    } else {
        None
    }
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut a = 0.0;
    for i in 0..n {
        a += poly[i].cross(poly[(i + 1) % n]);
    }
    0.5 * a
}

pub fn polygon_centroid(poly: &[Point]) -> Point {
    let n = poly.len();
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut a = 0.0;
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let c = p.cross(q);
        a += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    if a.abs() < 1e-300 {
        let s = poly.iter().fold(Point::default(), |acc, &p| acc + p);
        return s * (1.0 / n as f64);
    }
    Point::new(cx / (3.0 * a), cy / (3.0 * a))
}

pub fn point_on_polygon_boundary(p: Point, poly: &[Point], tol: f64) -> bool {
    let n = poly.len();
    (0..n).any(|i| point_segment_distance(p, poly[i], poly[(i + 1) % n]) <= tol)
}

/// Clip a segment against a convex polygon (counterclockwise). Returns the
/// parameter interval inside the polygon.
pub fn clip_segment_convex(a: Point, b: Point, poly: &[Point]) -> Option<(f64, f64)> {
    let d = b - a;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    let n = poly.len();
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let edge = q - p;
        // inside: cross(edge, x - p) >= 0
        let num = edge.cross(a - p);
        let den = edge.cross(d);
        if den == 0.0 {
            if num < 0.0 {
                return None;
            }
        } else {
            let t = -num / den;
            if den > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

/// Split a convex polygon by the infinite line through `a` and `b`. Returns
/// `None` if the line does not cut the polygon into two parts of positive area.
pub fn split_convex(poly: &[Point], a: Point, b: Point, tol: f64) -> Option<(Vec<Point>, Vec<Point>)> {
    let dir = (b - a).normalized();
    let side = |p: Point| dir.cross(p - a);
    let n = poly.len();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let sp = side(p);
        let sq = side(q);
        let sp_c = if sp.abs() <= tol { 0.0 } else { sp };
        let sq_c = if sq.abs() <= tol { 0.0 } else { sq };
        if sp_c >= 0.0 {
            left.push(p);
        }
        if sp_c <= 0.0 {
            right.push(p);
        }
        if (sp_c > 0.0 && sq_c < 0.0) || (sp_c < 0.0 && sq_c > 0.0) {
            let t = sp / (sp - sq);
            let x = p.lerp(q, t);
            left.push(x);
            right.push(x);
        }
    }
    let min_area = tol * tol;
    if left.len() >= 3 && right.len() >= 3 && polygon_area(&left) > min_area && polygon_area(&right) > min_area {
        Some((left, right))
    } else {
        None
    }
}

pub const GAUSS2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

pub const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_diagonal_through_unit_square() {
        let r = Rect::new(0.0, 1.0, 0.0, 1.0);
        let (t0, t1) = clip_segment(Point::new(-1.0, -1.0), Point::new(2.0, 2.0), &r).unwrap();
        assert!((t0 - 1.0 / 3.0).abs() < 1e-15);
        assert!((t1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn clip_miss_returns_none() {
        let r = Rect::new(0.0, 1.0, 0.0, 1.0);
        assert!(clip_segment(Point::new(2.0, 0.0), Point::new(3.0, 1.0), &r).is_none());
        assert!(clip_segment(Point::new(0.0, 1.5), Point::new(1.0, 1.5), &r).is_none());
    }

    #[test]
    fn split_square_horizontally() {
        let sq = Rect::new(0.0, 1.0, 0.0, 1.0).to_polygon();
        let (l, r) = split_convex(&sq, Point::new(0.0, 0.25), Point::new(1.0, 0.25), 1e-12).unwrap();
        let (al, ar) = (polygon_area(&l), polygon_area(&r));
        assert!((al + ar - 1.0).abs() < 1e-14);
        assert!((al.min(ar) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn split_along_edge_is_rejected() {
        let sq = Rect::new(0.0, 1.0, 0.0, 1.0).to_polygon();
        assert!(split_convex(&sq, Point::new(0.0, 0.0), Point::new(1.0, 0.0), 1e-12).is_none());
    }

    #[test]
    fn crossing_segments() {
        let (s, t) = segment_intersection(
            Point::new(0.0, 0.5),
            Point::new(1.0, 0.5),
            Point::new(0.25, 0.0),
            Point::new(0.25, 1.0),
            1e-12,
        )
        .unwrap();
        assert!((s - 0.25).abs() < 1e-15 && (t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rect_distance_touching_and_apart() {
        let r = Rect::new(0.0, 1.0, 0.0, 1.0);
        assert_eq!(segment_rect_distance(Point::new(1.0, 0.2), Point::new(2.0, 0.2), &r), 0.0);
        let d = segment_rect_distance(Point::new(1.5, 0.2), Point::new(2.0, 0.2), &r);
        assert!((d - 0.5).abs() < 1e-15);
    }
}
