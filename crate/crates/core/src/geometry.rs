//! Planar geometry for regular hexagons.
//!
//! The container is always the flat-topped regular hexagon centred at the
//! origin: vertices at 0°, 60°, …, 300°, edge normals at 30°, 90° and 150°.
//! A point `p` lies in the container of side `L` iff `|p·n| ≤ L·√3/2` for the
//! three normals.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{cos, sin_cos, sqrt, PI, SQRT3};

/// Overlap is reported only when the penetration depth exceeds this.
pub const OVERLAP_TOLERANCE: f64 = 1e-9;

/// Unit normals of the container edges (30°, 90°, 150°).
pub const CONTAINER_NORMALS: [(f64, f64); 3] = [(SQRT3 / 2.0, 0.5), (0.0, 1.0), (-SQRT3 / 2.0, 0.5)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// A regular hexagon. Angles are used as given; nothing is wrapped to
/// `[0, 2π)` until a solution is written out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hexagon {
    pub center: Point2,
    pub angle: f64,
    pub circumradius: f64,
}

impl Hexagon {
    pub const fn unit(center: Point2, angle: f64) -> Self {
        Self { center, angle, circumradius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("enclosure of an empty point set is undefined")]
    EmptyPointSet,
}

/// Vertices in counterclockwise order, the first at `h.angle`.
pub fn hex_vertices(h: &Hexagon) -> [Point2; 6] {
    let mut out = [Point2::ORIGIN; 6];
    for (k, v) in out.iter_mut().enumerate() {
        let (s, c) = sin_cos(h.angle + k as f64 * PI / 3.0);
        *v = Point2::new(h.center.x + h.circumradius * c, h.center.y + h.circumradius * s);
    }
    out
}

/// Side length of the smallest origin-centred flat-topped hexagon that
/// contains every point.
pub fn min_enclosing_side(points: &[Point2]) -> Result<f64, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyPointSet);
    }
    let mut support: f64 = 0.0;
    for p in points {
        for &(nx, ny) in &CONTAINER_NORMALS {
            support = support.max((p.x * nx + p.y * ny).abs());
        }
    }
    Ok(support / (SQRT3 / 2.0))
}

fn project(vertices: &[Point2; 6], axis: Point2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vertices {
        let d = v.dot(axis);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// Edge normals of a hexagon, one per parallel edge pair.
fn edge_axes(h: &Hexagon) -> [Point2; 3] {
    let mut axes = [Point2::ORIGIN; 3];
    for (k, a) in axes.iter_mut().enumerate() {
        let (s, c) = sin_cos(h.angle + PI / 6.0 + k as f64 * PI / 3.0);
        *a = Point2::new(c, s);
    }
    axes
}

/// Separating-axis depth: the smallest projection-interval overlap over the
/// edge normals of both hexagons. Positive iff the interiors intersect;
/// otherwise minus the gap along the best separating axis.
pub fn penetration_depth(a: &Hexagon, b: &Hexagon) -> f64 {
    let va = hex_vertices(a);
    let vb = hex_vertices(b);
    penetration_depth_with_vertices(a, b, &va, &vb)
}

pub(crate) fn penetration_depth_with_vertices(
    a: &Hexagon,
    b: &Hexagon,
    va: &[Point2; 6],
    vb: &[Point2; 6],
) -> f64 {
    let mut depth = f64::INFINITY;
    for axis in edge_axes(a).into_iter().chain(edge_axes(b)) {
        let (a_lo, a_hi) = project(va, axis);
        let (b_lo, b_hi) = project(vb, axis);
        let overlap = a_hi.min(b_hi) - a_lo.max(b_lo);
        depth = depth.min(overlap);
    }
    depth
}

/// Convex polygon area by the shoelace formula (counterclockwise positive).
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        twice += p.x * q.y - q.x * p.y;
    }
    0.5 * twice
}

/// Sutherland–Hodgman clip of `subject` against the convex counterclockwise
/// polygon `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output: Vec<Point2> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let inside = |p: Point2| (e1.x - e0.x) * (p.y - e0.y) - (e1.y - e0.y) * (p.x - e0.x) >= 0.0;
        let intersect = |p: Point2, q: Point2| {
            let dx = q.x - p.x;
            let dy = q.y - p.y;
            let ex = e1.x - e0.x;
            let ey = e1.y - e0.y;
            let denom = ex * dy - ey * dx;
            if denom == 0.0 {
                return p;
            }
            let t = (ey * (p.x - e0.x) - ex * (p.y - e0.y)) / denom;
            Point2::new(p.x + t * dx, p.y + t * dy)
        };
        let input = core::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            match (inside(prev), inside(cur)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(intersect(prev, cur)),
                (false, true) => {
                    output.push(intersect(prev, cur));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}

/// Area of `a ∩ b` by convex polygon clipping.
pub fn intersection_area(a: &Hexagon, b: &Hexagon) -> f64 {
    let pa = hex_vertices(a);
    let pb = hex_vertices(b);
    polygon_area(&clip_convex(&pa, &pb)).max(0.0)
}

/// Area of a regular hexagon.
pub fn hexagon_area(circumradius: f64) -> f64 {
    1.5 * SQRT3 * circumradius * circumradius
}

/// Support of a unit hexagon with rotation `angle` along the unit direction
/// at angle `direction`: `max_k cos(angle + k·60° − direction)`.
pub fn unit_hex_support(angle: f64, direction: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for k in 0..6 {
        best = best.max(cos(angle + k as f64 * PI / 3.0 - direction));
    }
    best
}

/// Point-in-container test for a flat-topped hexagon of side `side`.
pub fn in_container(p: Point2, side: f64) -> bool {
    let apothem = side * SQRT3 / 2.0;
    CONTAINER_NORMALS.iter().all(|&(nx, ny)| (p.x * nx + p.y * ny).abs() <= apothem)
}

pub(crate) fn distance(a: Point2, b: Point2) -> f64 {
    sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y))
}
