//! Point-triangle and edge-edge distances.
//!
//! Classification (which sub-primitive is closest) uses the exact closest
//! point computations; each region then has a closed-form squared distance
//! written over [`Real`] so that the same expression yields values and, on
//! [`Dual2`], exact gradients and Hessians for the barrier.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::autodiff::{cross3, dot3, seed_points, sub3, Dual2, Real, V3};
use crate::mesh::MIN_TRIANGLE_AREA;
use crate::{Error, Result};

/// Shortest admissible edge length (m).
pub const MIN_EDGE_LENGTH: f64 = 1e-12;

/// Below this `sin^2` of the angle between two edges, the line-line branch is
/// replaced by the nearest endpoint branch.
const PARALLEL_SIN2: f64 = 1e-10;

/// Closest feature of a triangle `(t0, t1, t2)` to a point. `Edge(k)` is the
/// edge from `t_k` to `t_{(k+1)%3}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTriangleRegion {
    Vertex(u8),
    Edge(u8),
    Interior,
}

/// Closest feature pair of two segments `(ea0, ea1)` and `(eb0, eb1)`.
/// Points are numbered 0..4 in that order; `edge` 0 is `ea`, 1 is `eb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeEdgeRegion {
    Interior,
    PointEdge { point: u8, edge: u8 },
    PointPoint { a: u8, b: u8 },
}

fn pp_sq<T: Real>(p: V3<T>, q: V3<T>) -> T {
    let d = sub3(p, q);
    dot3(d, d)
}

fn pe_sq<T: Real>(p: V3<T>, a: V3<T>, b: V3<T>) -> T {
    let c = cross3(sub3(a, p), sub3(b, p));
    let e = sub3(b, a);
    dot3(c, c) / dot3(e, e)
}

fn plane_sq<T: Real>(p: V3<T>, o: V3<T>, u: V3<T>, v: V3<T>) -> T {
    let n = cross3(u, v);
    let h = dot3(sub3(p, o), n);
    h * h / dot3(n, n)
}

/// Squared distance of `v = [p, t0, t1, t2]` for a fixed region.
pub fn point_triangle_distance_sq<T: Real>(v: &[V3<T>; 4], region: PointTriangleRegion) -> T {
    match region {
        PointTriangleRegion::Vertex(k) => pp_sq(v[0], v[1 + k as usize]),
        PointTriangleRegion::Edge(k) => {
            let k = k as usize;
            pe_sq(v[0], v[1 + k], v[1 + (k + 1) % 3])
        }
        PointTriangleRegion::Interior => plane_sq(v[0], v[1], sub3(v[2], v[1]), sub3(v[3], v[1])),
    }
}

/// Squared distance of `v = [ea0, ea1, eb0, eb1]` for a fixed region.
pub fn edge_edge_distance_sq<T: Real>(v: &[V3<T>; 4], region: EdgeEdgeRegion) -> T {
    match region {
        EdgeEdgeRegion::Interior => plane_sq(v[0], v[2], sub3(v[1], v[0]), sub3(v[3], v[2])),
        EdgeEdgeRegion::PointEdge { point, edge } => {
            let (a, b) = if edge == 0 {
                (v[0], v[1])
            } else {
                (v[2], v[3])
            };
            pe_sq(v[point as usize], a, b)
        }
        EdgeEdgeRegion::PointPoint { a, b } => pp_sq(v[a as usize], v[b as usize]),
    }
}

fn arr(v: &Vector3<f64>) -> V3<f64> {
    [v.x, v.y, v.z]
}

/// Closest point on triangle `(a, b, c)` to `p`: squared distance, region and
/// barycentric weights of the closest point.
pub(crate) fn closest_point_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> (f64, PointTriangleRegion, [f64; 3]) {
    use PointTriangleRegion::*;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    let finish = |region, w: [f64; 3]| {
        let q = a * w[0] + b * w[1] + c * w[2];
        ((p - q).norm_squared(), region, w)
    };
    if d1 <= 0.0 && d2 <= 0.0 {
        return finish(Vertex(0), [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return finish(Vertex(1), [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return finish(Edge(0), [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return finish(Vertex(2), [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return finish(Edge(2), [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish(Edge(1), [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    // exact plane distance is better conditioned than |p - q|
    let d2 = point_triangle_distance_sq(&[arr(p), arr(a), arr(b), arr(c)], Interior);
    (d2, Interior, [1.0 - v - w, v, w])
}

fn segment_param(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let e = b - a;
    ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0)
}

/// Closest points of two segments: squared distance, region and the
/// parameters `(s, t)` of the closest points on `ea` and `eb`.
pub(crate) fn closest_segment_segment(
    ea0: &Vector3<f64>,
    ea1: &Vector3<f64>,
    eb0: &Vector3<f64>,
    eb1: &Vector3<f64>,
) -> (f64, EdgeEdgeRegion, f64, f64) {
    let d1 = ea1 - ea0;
    let d2 = eb1 - eb0;
    let r = ea0 - eb0;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let parallel = denom <= PARALLEL_SIN2 * a * e;

    if !parallel {
        let mut s = ((b * f - c * e) / denom).clamp(0.0, 1.0);
        let mut t = (b * s + f) / e;
        if t < 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else if t > 1.0 {
            t = 1.0;
            s = ((b - c) / a).clamp(0.0, 1.0);
        }
        if s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0 {
            let v = [arr(ea0), arr(ea1), arr(eb0), arr(eb1)];
            let d2 = edge_edge_distance_sq(&v, EdgeEdgeRegion::Interior);
            return (d2, EdgeEdgeRegion::Interior, s, t);
        }
    }

    // an endpoint of one segment realizes the minimum
    let pts = [ea0, ea1, eb0, eb1];
    let mut best: Option<(f64, EdgeEdgeRegion, f64, f64)> = None;
    for point in 0..4u8 {
        let p = pts[point as usize];
        let (edge, a0, a1) = if point < 2 {
            (1u8, eb0, eb1)
        } else {
            (0u8, ea0, ea1)
        };
        let u = segment_param(p, a0, a1);
        let q = a0 + (a1 - a0) * u;
        let d2 = (p - q).norm_squared();
        let region = if u <= 0.0 || u >= 1.0 {
            let other = if edge == 1 { 2 } else { 0 } + if u >= 1.0 { 1 } else { 0 };
            let (x, y) = if point < other {
                (point, other)
            } else {
                (other, point)
            };
            EdgeEdgeRegion::PointPoint { a: x, b: y }
        } else {
            EdgeEdgeRegion::PointEdge { point, edge }
        };
        let (s, t) = match point {
            0 => (0.0, u),
            1 => (1.0, u),
            2 => (u, 0.0),
            _ => (u, 1.0),
        };
        if best.is_none_or(|b| d2 < b.0) {
            best = Some((d2, region, s, t));
        }
    }
    let (d2, region, s, t) = best.expect("four candidates");
    // recompute with the region formula so value and derivatives agree
    let v = [arr(ea0), arr(ea1), arr(eb0), arr(eb1)];
    let d2r = edge_edge_distance_sq(&v, region);
    (d2r.min(d2).max(0.0), region, s, t)
}

fn check_triangle(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Result<()> {
    let area = 0.5 * (b - a).cross(&(c - a)).norm();
    if !(area > MIN_TRIANGLE_AREA) {
        return Err(Error::Degenerate(format!("triangle area {area:e} m^2")));
    }
    Ok(())
}

fn check_edge(a: &Vector3<f64>, b: &Vector3<f64>) -> Result<()> {
    let len = (b - a).norm();
    if !(len > MIN_EDGE_LENGTH) {
        return Err(Error::Degenerate(format!("edge length {len:e} m")));
    }
    Ok(())
}

/// Euclidean distance from `p` to the closed triangle `tri`.
pub fn point_triangle_distance(
    p: &Vector3<f64>,
    tri: [&Vector3<f64>; 3],
) -> Result<(f64, PointTriangleRegion)> {
    check_triangle(tri[0], tri[1], tri[2])?;
    let (d2, region, _) = closest_point_triangle(p, tri[0], tri[1], tri[2]);
    Ok((d2.max(0.0).sqrt(), region))
}

/// Minimal distance between the closed segments `e1` and `e2`.
pub fn edge_edge_distance(
    e1: [&Vector3<f64>; 2],
    e2: [&Vector3<f64>; 2],
) -> Result<(f64, EdgeEdgeRegion)> {
    check_edge(e1[0], e1[1])?;
    check_edge(e2[0], e2[1])?;
    let (d2, region, _, _) = closest_segment_segment(e1[0], e1[1], e2[0], e2[1]);
    Ok((d2.sqrt(), region))
}

/// Distance (not squared) with gradient and Hessian over the 12 coordinates
/// of the four points, for a fixed region.
pub(crate) fn distance_derivatives(
    points: &[Vector3<f64>; 4],
    region: PairRegion,
) -> (f64, SVector<f64, 12>, SMatrix<f64, 12, 12>) {
    let v = seed_points(points);
    let d2: Dual2<12> = match region {
        PairRegion::PointTriangle(r) => point_triangle_distance_sq(&v, r),
        PairRegion::EdgeEdge(r) => edge_edge_distance_sq(&v, r),
    };
    let d = d2.sqrt();
    (d.v, d.g, d.h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRegion {
    PointTriangle(PointTriangleRegion),
    EdgeEdge(EdgeEdgeRegion),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn point_above_centroid() {
        let (a, b, c) = (v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0));
        let centroid = (a + b + c) / 3.0;
        let (d, r) = point_triangle_distance(&(centroid + v(0.0, 0.0, 0.3)), [&a, &b, &c]).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
        assert_eq!(r, PointTriangleRegion::Interior);
    }

    #[test]
    fn point_at_vertex_is_zero() {
        let (a, b, c) = (v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0));
        let (d, r) = point_triangle_distance(&b, [&a, &b, &c]).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(r, PointTriangleRegion::Vertex(1));
    }

    #[test]
    fn regions_of_outside_points() {
        let (a, b, c) = (v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0));
        let (d, r) = point_triangle_distance(&v(0.5, -0.2, 0.1), [&a, &b, &c]).unwrap();
        assert_eq!(r, PointTriangleRegion::Edge(0));
        assert!((d - (0.04f64 + 0.01).sqrt()).abs() < 1e-15);
        let (_, r) = point_triangle_distance(&v(0.6, 0.6, 0.0), [&a, &b, &c]).unwrap();
        assert_eq!(r, PointTriangleRegion::Edge(1));
        let (_, r) = point_triangle_distance(&v(-0.3, 0.5, 0.0), [&a, &b, &c]).unwrap();
        assert_eq!(r, PointTriangleRegion::Edge(2));
        let (_, r) = point_triangle_distance(&v(-1.0, -1.0, 0.0), [&a, &b, &c]).unwrap();
        assert_eq!(r, PointTriangleRegion::Vertex(0));
        let (_, r) = point_triangle_distance(&v(-0.1, 2.0, 0.0), [&a, &b, &c]).unwrap();
        assert_eq!(r, PointTriangleRegion::Vertex(2));
    }

    #[test]
    fn degenerate_inputs_error() {
        let a = v(0.0, 0.0, 0.0);
        let b = v(1.0, 0.0, 0.0);
        assert!(point_triangle_distance(&a, [&a, &b, &(b * 2.0)]).is_err());
        assert!(edge_edge_distance([&a, &a], [&a, &b]).is_err());
    }

    #[test]
    fn perpendicular_and_parallel_edges() {
        let h = 0.37;
        let (d, r) = edge_edge_distance(
            [&v(-1.0, 0.0, 0.0), &v(1.0, 0.0, 0.0)],
            [&v(0.0, -1.0, h), &v(0.0, 1.0, h)],
        )
        .unwrap();
        assert!((d - h).abs() < 1e-15);
        assert_eq!(r, EdgeEdgeRegion::Interior);
        let (d, _) = edge_edge_distance(
            [&v(0.0, 0.0, 0.0), &v(1.0, 0.0, 0.0)],
            [&v(0.0, h, 0.0), &v(1.0, h, 0.0)],
        )
        .unwrap();
        assert!((d - h).abs() < 1e-15);
    }

    #[test]
    fn region_derivatives_match_value() {
        let pts = [
            v(0.2, 0.3, 0.4),
            v(0.0, 0.0, 0.0),
            v(1.0, 0.0, 0.1),
            v(0.0, 1.0, -0.1),
        ];
        let (d2, region, _) = closest_point_triangle(&pts[0], &pts[1], &pts[2], &pts[3]);
        let (d, g, _) = distance_derivatives(&pts, PairRegion::PointTriangle(region));
        assert!((d - d2.sqrt()).abs() < 1e-14);
        // unit gradient w.r.t. the point
        let gp = Vector3::new(g[0], g[1], g[2]);
        assert!((gp.norm() - 1.0).abs() < 1e-12);
    }
}
