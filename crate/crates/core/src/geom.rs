//! Planar geometry primitives shared by every stage of the pipeline.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane, in meters unless stated otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Rotates counter-clockwise by `angle` radians about the origin.
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, o: Point, t: f64) -> Point {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
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
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// A rigid transform from world coordinates into a rotated, re-centered frame:
/// `local = R(-angle) * (world - origin)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Frame {
    pub origin: Point,
    pub angle: f64,
}

impl Frame {
    pub fn new(origin: Point, angle: f64) -> Self {
        Frame { origin, angle }
    }

    pub fn identity() -> Self {
        Frame::default()
    }

    pub fn to_local(&self, p: Point) -> Point {
        (p - self.origin).rotate(-self.angle)
    }

    pub fn to_world(&self, p: Point) -> Point {
        p.rotate(self.angle) + self.origin
    }

    pub fn segment_to_local(&self, s: &Segment) -> Segment {
        Segment::new(self.to_local(s.a), self.to_local(s.b))
    }
}

/// A closed line segment from `a` to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Segment::new(Point::new(v[0], v[1]), Point::new(v[2], v[3]))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.a.x, self.a.y, self.b.x, self.b.y]
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn direction(&self) -> Point {
        self.b - self.a
    }

    pub fn midpoint(&self) -> Point {
        self.a.lerp(self.b, 0.5)
    }

    pub fn at(&self, t: f64) -> Point {
        self.a.lerp(self.b, t)
    }

    pub fn reversed(&self) -> Segment {
        Segment::new(self.b, self.a)
    }

    /// Parameter in `[0, 1]` of the point on the segment closest to `p`.
    pub fn closest_param(&self, p: Point) -> f64 {
        let d = self.direction();
        let len2 = d.dot(d);
        if len2 == 0.0 {
            return 0.0;
        }
        ((p - self.a).dot(d) / len2).clamp(0.0, 1.0)
    }

    pub fn distance_to_point(&self, p: Point) -> f64 {
        self.at(self.closest_param(p)).dist(p)
    }

    /// Distance from `p` to the infinite line through the segment.
    pub fn line_distance(&self, p: Point) -> f64 {
        let d = self.direction();
        let len = d.norm();
        if len == 0.0 {
            return self.a.dist(p);
        }
        (d.cross(p - self.a) / len).abs()
    }

    /// Ray parameter `t ≥ 0` (in units of `dir`) at which the ray from
    /// `origin` along `dir` meets this segment, if it does.
    pub fn ray_hit(&self, origin: Point, dir: Point) -> Option<f64> {
        let e = self.direction();
        let denom = dir.cross(e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = self.a - origin;
        let t = w.cross(e) / denom;
        let u = w.cross(dir) / denom;
        const EPS: f64 = 1e-12;
        if t >= 0.0 && (-EPS..=1.0 + EPS).contains(&u) {
            Some(t)
        } else {
            None
        }
    }

    /// Parameters `(t, u)` of a proper crossing between `self` and `other`
    /// (non-parallel segments only).
    pub fn intersection_params(&self, other: &Segment) -> Option<(f64, f64)> {
        let r = self.direction();
        let s = other.direction();
        let denom = r.cross(s);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = other.a - self.a;
        let t = w.cross(s) / denom;
        let u = w.cross(r) / denom;
        const EPS: f64 = 1e-12;
        if (-EPS..=1.0 + EPS).contains(&t) && (-EPS..=1.0 + EPS).contains(&u) {
            Some((t.clamp(0.0, 1.0), u.clamp(0.0, 1.0)))
        } else {
            None
        }
    }

    /// Orders the endpoints lexicographically: `(x < x') ∨ (x = x' ∧ y ≤ y')`.
    pub fn lex_ordered(&self) -> Segment {
        let (a, b) = (self.a, self.b);
        if a.x < b.x || (a.x == b.x && a.y <= b.y) {
            *self
        } else {
            self.reversed()
        }
    }
}

/// Distance from `p` to the nearest point on a polyline.
pub fn polyline_distance(poly: &[Point], p: Point) -> f64 {
    match poly.len() {
        0 => f64::INFINITY,
        1 => poly[0].dist(p),
        _ => poly
            .windows(2)
            .map(|w| Segment::new(w[0], w[1]).distance_to_point(p))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Even-odd point-in-polygon test. The ring may or may not repeat its first vertex.
pub fn point_in_polygon(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (ring[i], ring[j]);
        if (pi.y > p.y) != (pj.y > p.y) {
            let x = pj.x + (p.y - pj.y) * (pi.x - pj.x) / (pi.y - pj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let (p, q) = (ring[i], ring[(i + 1) % n]);
        acc += p.cross(q);
    }
    acc * 0.5
}

/// Wraps an angle in degrees into `[0, period)`.
pub fn wrap_deg(angle: f64, period: f64) -> f64 {
    let r = angle.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Smallest absolute difference between two angles under a period (degrees).
pub fn circular_diff_deg(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ray_hits_axis_aligned_wall() {
        let wall = Segment::new(Point::new(2.0, -1.0), Point::new(2.0, 1.0));
        let t = wall.ray_hit(Point::new(0.0, 0.0), Point::new(1.0, 0.0)).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(wall.ray_hit(Point::new(0.0, 0.0), Point::new(-1.0, 0.0)).is_none());
        assert!(wall.ray_hit(Point::new(0.0, 0.0), Point::new(0.0, 1.0)).is_none());
    }

    #[test]
    fn lexicographic_vertex_order() {
        let s = Segment::new(Point::new(2.0, 5.0), Point::new(1.0, 4.0)).lex_ordered();
        assert_eq!(s.to_array(), [1.0, 4.0, 2.0, 5.0]);
        let v = Segment::new(Point::new(1.0, 9.0), Point::new(1.0, 2.0)).lex_ordered();
        assert_eq!(v.to_array(), [1.0, 2.0, 1.0, 9.0]);
    }

    #[test]
    fn frame_round_trip() {
        let f = Frame::new(Point::new(3.0, -2.0), 0.7);
        let p = Point::new(1.25, 8.5);
        let q = f.to_world(f.to_local(p));
        assert!(p.dist(q) < 1e-12);
    }

    #[test]
    fn polygon_helpers() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(2.0, 2.0),
            Point::new(0.0, 2.0),
        ];
        assert!(point_in_polygon(&sq, Point::new(1.0, 1.0)));
        assert!(!point_in_polygon(&sq, Point::new(3.0, 1.0)));
        assert!((signed_area(&sq) - 4.0).abs() < 1e-12);
        assert!((circular_diff_deg(89.5, 0.3, 90.0) - 0.8).abs() < 1e-12);
    }
}
