//! Continuous collision detection by additive conservative advancement
//! along linear per-vertex trajectories.

use nalgebra::Vector3;

use super::broad_phase::{Aabb, BroadPhaseGrid};
use super::distance::{closest_point_triangle, closest_segment_segment};
use super::{CollisionMesh, PairKind};

/// Fraction of the initial distance a pair may close to before stopping.
pub const MIN_SEPARATION_RATIO: f64 = 0.1;
const MAX_ITERATIONS: usize = 100_000;

/// Four collision vertices forming a point-triangle or edge-edge primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PrimitivePair {
    pub kind: PairKind,
    pub vertices: [usize; 4],
}

fn distance(kind: PairKind, p: &[Vector3<f64>; 4]) -> f64 {
    let d2 = match kind {
        PairKind::PointTriangle => closest_point_triangle(&p[0], &p[1], &p[2], &p[3]).0,
        PairKind::EdgeEdge => closest_segment_segment(&p[0], &p[1], &p[2], &p[3]).0,
    };
    d2.max(0.0).sqrt()
}

/// Largest `t` in `[0, t_max]` such that moving the four points from `x` by
/// `t * dx` keeps them separated; stops once the distance drops below
/// `MIN_SEPARATION_RATIO` of its initial value.
pub fn additive_ccd(
    kind: PairKind,
    x: &[Vector3<f64>; 4],
    dx: &[Vector3<f64>; 4],
    t_max: f64,
) -> f64 {
    let mean = (dx[0] + dx[1] + dx[2] + dx[3]) / 4.0;
    let p = dx.map(|d| d - mean);
    let n = p.map(|d| d.norm());
    let l_p = match kind {
        PairKind::PointTriangle => n[0] + n[1].max(n[2]).max(n[3]),
        PairKind::EdgeEdge => n[0].max(n[1]) + n[2].max(n[3]),
    };
    let d0 = distance(kind, x);
    if !(d0 > 0.0) {
        return 0.0;
    }
    if l_p == 0.0 {
        return t_max;
    }
    let gap = MIN_SEPARATION_RATIO * d0;
    let mut t = 0.0;
    let mut t_l = (1.0 - MIN_SEPARATION_RATIO) * d0 / l_p;
    for _ in 0..MAX_ITERATIONS {
        let s = t + t_l;
        let xs = [0, 1, 2, 3].map(|i| x[i] + p[i] * s);
        let d = distance(kind, &xs);
        if t > 0.0 && d < gap {
            return t;
        }
        t = s;
        if t >= t_max {
            return t_max;
        }
        t_l = 0.9 * d / l_p;
    }
    t
}

/// Admissible primitive pairs whose swept boxes (inflated by `inflation`)
/// overlap over the motion `x -> x + dx`.
pub fn ccd_candidates(
    mesh: &CollisionMesh,
    x: &[Vector3<f64>],
    dx: &[Vector3<f64>],
    inflation: f64,
) -> Vec<PrimitivePair> {
    let end: Vec<Vector3<f64>> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
    let swept = |ids: &[usize]| Aabb::from_points(ids.iter().flat_map(|&v| [&x[v], &end[v]]));
    let cell = mesh.broad_phase_cell(inflation);
    let cull = mesh.body_cull(x, Some(&end), inflation);
    let mut out = Vec::new();
    let mut hits = Vec::new();

    let face_boxes: Vec<Aabb> = mesh
        .faces
        .iter()
        .map(|f| swept(f).inflated(inflation))
        .collect();
    let active = (0..mesh.faces.len()).filter(|&f| cull.keeps(mesh.face_body[f], &face_boxes[f]));
    let grid = BroadPhaseGrid::build_subset(cell, &face_boxes, active);
    for v in 0..mesh.num_vertices() {
        let b = swept(&[v]);
        if !cull.keeps(mesh.vertex_body[v], &b) {
            continue;
        }
        grid.query(&b, &mut hits);
        for &f in &hits {
            if face_boxes[f].overlaps(&b) && mesh.pt_admissible(v, f) {
                out.push(PrimitivePair {
                    kind: PairKind::PointTriangle,
                    vertices: mesh.pair_vertices(PairKind::PointTriangle, [v, f]),
                });
            }
        }
    }

    let edge_boxes: Vec<Aabb> = mesh
        .edges
        .iter()
        .map(|e| swept(e).inflated(0.5 * inflation))
        .collect();
    let active: Vec<usize> = (0..mesh.edges.len())
        .filter(|&e| cull.keeps(mesh.edge_body[e], &edge_boxes[e]))
        .collect();
    let grid = BroadPhaseGrid::build_subset(cell, &edge_boxes, active.iter().copied());
    for &ea in &active {
        grid.query(&edge_boxes[ea], &mut hits);
        for &eb in &hits {
            if eb > ea && edge_boxes[ea].overlaps(&edge_boxes[eb]) && mesh.ee_admissible(ea, eb) {
                out.push(PrimitivePair {
                    kind: PairKind::EdgeEdge,
                    vertices: mesh.pair_vertices(PairKind::EdgeEdge, [ea, eb]),
                });
            }
        }
    }
    out
}

/// Step scale in `[0, 1]` keeping every listed pair separated along `dx`.
pub fn ccd_max_step(x: &[Vector3<f64>], dx: &[Vector3<f64>], pairs: &[PrimitivePair]) -> f64 {
    let mut alpha: f64 = 1.0;
    for pair in pairs {
        let xs = pair.vertices.map(|v| x[v]);
        let ds = pair.vertices.map(|v| dx[v]);
        alpha = alpha.min(additive_ccd(pair.kind, &xs, &ds, alpha));
        if alpha == 0.0 {
            break;
        }
    }
    alpha
}
