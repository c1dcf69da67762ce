//! Contact primitives, candidate generation and continuous collision
//! detection over the merged surface of every body in a scene.

pub mod broad_phase;
pub mod ccd;
pub mod distance;

use std::collections::BTreeSet;

use nalgebra::{Matrix3x2, Vector2, Vector3};

use crate::math::tangent_basis;
use crate::mesh::TriMesh;
use crate::Result;

pub use broad_phase::{Aabb, BroadPhaseGrid};
pub use ccd::{additive_ccd, ccd_candidates, ccd_max_step, PrimitivePair};
pub use distance::{
    edge_edge_distance, edge_edge_distance_sq, point_triangle_distance, point_triangle_distance_sq,
    EdgeEdgeRegion, PairRegion, PointTriangleRegion,
};

use distance::{closest_point_triangle, closest_segment_segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PairKind {
    PointTriangle,
    EdgeEdge,
}

/// One body's surface as seen by the contact layer.
#[derive(Debug, Clone)]
pub struct BodySurface {
    /// Topology, with rest geometry used for area weights.
    pub mesh: TriMesh,
    /// Bodies that never move; pairs between two static bodies are skipped.
    pub is_static: bool,
    /// Whether non-adjacent primitives of this body may contact each other.
    pub self_contact: bool,
}

/// Merged surface of all bodies with global vertex, edge and face numbering.
#[derive(Debug, Clone)]
pub struct CollisionMesh {
    pub vertex_body: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    pub faces: Vec<[usize; 3]>,
    pub edge_body: Vec<usize>,
    pub face_body: Vec<usize>,
    /// One third of the incident face area per vertex (m^2).
    pub vertex_area: Vec<f64>,
    /// Half the mean adjacent face area per edge (m^2).
    pub edge_area: Vec<f64>,
    /// `body_offsets[b]..body_offsets[b + 1]` are the vertices of body `b`.
    pub body_offsets: Vec<usize>,
    body_static: Vec<bool>,
    body_self_contact: Vec<bool>,
    excluded: BTreeSet<(usize, usize)>,
    median_edge_length: f64,
}

impl CollisionMesh {
    pub fn new(bodies: &[BodySurface]) -> Self {
        let mut m = Self {
            vertex_body: Vec::new(),
            edges: Vec::new(),
            faces: Vec::new(),
            edge_body: Vec::new(),
            face_body: Vec::new(),
            vertex_area: Vec::new(),
            edge_area: Vec::new(),
            body_offsets: vec![0],
            body_static: Vec::new(),
            body_self_contact: Vec::new(),
            excluded: BTreeSet::new(),
            median_edge_length: 0.0,
        };
        let mut lengths = Vec::new();
        for (b, body) in bodies.iter().enumerate() {
            let off = m.vertex_body.len();
            let mesh = &body.mesh;
            m.vertex_body
                .extend(std::iter::repeat_n(b, mesh.vertices.len()));
            m.vertex_area.extend(mesh.vertex_areas());
            m.edges
                .extend(mesh.edges.iter().map(|e| e.map(|v| v + off)));
            m.edge_body.extend(std::iter::repeat_n(b, mesh.edges.len()));
            m.edge_area.extend(mesh.edge_areas());
            m.faces
                .extend(mesh.triangles.iter().map(|t| t.map(|v| v + off)));
            m.face_body
                .extend(std::iter::repeat_n(b, mesh.triangles.len()));
            m.body_offsets.push(m.vertex_body.len());
            m.body_static.push(body.is_static);
            m.body_self_contact.push(body.self_contact);
            lengths.extend(mesh.edge_lengths());
        }
        lengths.sort_by(f64::total_cmp);
        m.median_edge_length = lengths.get(lengths.len() / 2).copied().unwrap_or(0.0);
        m
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_body.len()
    }

    pub fn num_bodies(&self) -> usize {
        self.body_static.len()
    }

    pub fn median_edge_length(&self) -> f64 {
        self.median_edge_length
    }

    /// Never generate contacts between bodies `a` and `b`.
    pub fn exclude_body_pair(&mut self, a: usize, b: usize) {
        self.excluded.insert((a.min(b), a.max(b)));
    }

    pub fn bodies_interact(&self, a: usize, b: usize) -> bool {
        if a == b {
            self.body_self_contact[a]
        } else {
            !(self.body_static[a] && self.body_static[b])
                && !self.excluded.contains(&(a.min(b), a.max(b)))
        }
    }

    pub fn pt_admissible(&self, v: usize, f: usize) -> bool {
        let face = &self.faces[f];
        !face.contains(&v) && self.bodies_interact(self.vertex_body[v], self.face_body[f])
    }

    pub fn ee_admissible(&self, ea: usize, eb: usize) -> bool {
        let (a, b) = (&self.edges[ea], &self.edges[eb]);
        ea != eb
            && !a.iter().any(|v| b.contains(v))
            && self.bodies_interact(self.edge_body[ea], self.edge_body[eb])
    }

    /// Collision-vertex indices of a pair in distance-argument order.
    pub fn pair_vertices(&self, kind: PairKind, indices: [usize; 2]) -> [usize; 4] {
        match kind {
            PairKind::PointTriangle => {
                let f = self.faces[indices[1]];
                [indices[0], f[0], f[1], f[2]]
            }
            PairKind::EdgeEdge => {
                let (a, b) = (self.edges[indices[0]], self.edges[indices[1]]);
                [a[0], a[1], b[0], b[1]]
            }
        }
    }

    /// Per-body boxes over `x` (and `end`, for swept motion) inflated by
    /// `inflation`, with the interacting bodies each box overlaps.
    pub(crate) fn body_cull(
        &self,
        x: &[Vector3<f64>],
        end: Option<&[Vector3<f64>]>,
        inflation: f64,
    ) -> BodyCull {
        let nb = self.num_bodies();
        let boxes: Vec<Aabb> = (0..nb)
            .map(|b| {
                let r = self.body_offsets[b]..self.body_offsets[b + 1];
                let swept = end.map_or(&[][..], |e| &e[r.clone()]);
                Aabb::from_points(x[r].iter().chain(swept)).inflated(inflation)
            })
            .collect();
        let partners = (0..nb)
            .map(|a| {
                (0..nb)
                    .filter(|&b| self.bodies_interact(a, b) && boxes[a].overlaps(&boxes[b]))
                    .collect()
            })
            .collect();
        BodyCull { boxes, partners }
    }

    pub(crate) fn broad_phase_cell(&self, dhat: f64) -> f64 {
        self.median_edge_length.max(dhat).max(1e-9)
    }
}

/// Body-level culling: a primitive of body `a` can only pair with bodies in
/// `partners[a]`, and only if its box overlaps theirs.
pub(crate) struct BodyCull {
    boxes: Vec<Aabb>,
    partners: Vec<Vec<usize>>,
}

impl BodyCull {
    pub fn keeps(&self, body: usize, b: &Aabb) -> bool {
        self.partners[body]
            .iter()
            .any(|&o| self.boxes[o].overlaps(b))
    }
}

/// A point-triangle or edge-edge pair closer than the activation distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPair {
    pub kind: PairKind,
    /// `(vertex, face)` or `(edge, edge)` indices into the collision mesh.
    pub indices: [usize; 2],
    /// The four collision vertices, in distance-argument order.
    pub vertices: [usize; 4],
    pub region: PairRegion,
    /// Unsquared distance (m).
    pub distance: f64,
    /// Area weight A_k (m^2).
    pub area_weight: f64,
    /// Normal force magnitude frozen for friction (N).
    pub lagged_normal_force: f64,
    /// Orthonormal tangent frame at the contact.
    pub tangent_basis: Matrix3x2<f64>,
    /// Tangential relative displacement over the current step (m).
    pub lagged_rel_disp: Vector2<f64>,
    /// Weights `w` with `sum_i w_i x_i` the relative position of the two
    /// closest points.
    pub closest_weights: [f64; 4],
}

impl ContactPair {
    /// Evaluate the pair geometry at positions `x`.
    pub fn new(
        mesh: &CollisionMesh,
        x: &[Vector3<f64>],
        kind: PairKind,
        indices: [usize; 2],
    ) -> Self {
        let vertices = mesh.pair_vertices(kind, indices);
        let p = vertices.map(|v| x[v]);
        let (d2, region, closest_weights) = match kind {
            PairKind::PointTriangle => {
                let (d2, r, w) = closest_point_triangle(&p[0], &p[1], &p[2], &p[3]);
                (d2, PairRegion::PointTriangle(r), [1.0, -w[0], -w[1], -w[2]])
            }
            PairKind::EdgeEdge => {
                let (d2, r, s, t) = closest_segment_segment(&p[0], &p[1], &p[2], &p[3]);
                (d2, PairRegion::EdgeEdge(r), [1.0 - s, s, t - 1.0, -t])
            }
        };
        let area_weight = match kind {
            PairKind::PointTriangle => mesh.vertex_area[indices[0]],
            PairKind::EdgeEdge => 0.5 * (mesh.edge_area[indices[0]] + mesh.edge_area[indices[1]]),
        };
        let rel: Vector3<f64> = (0..4).map(|i| p[i] * closest_weights[i]).sum();
        let normal = if rel.norm() > 0.0 {
            rel.normalize()
        } else {
            match kind {
                PairKind::PointTriangle => (p[2] - p[1]).cross(&(p[3] - p[1])).normalize(),
                PairKind::EdgeEdge => (p[1] - p[0]).cross(&(p[3] - p[2])).normalize(),
            }
        };
        Self {
            kind,
            indices,
            vertices,
            region,
            distance: d2.max(0.0).sqrt(),
            area_weight,
            lagged_normal_force: 0.0,
            tangent_basis: tangent_basis(&normal),
            lagged_rel_disp: Vector2::zeros(),
            closest_weights,
        }
    }

    pub fn primitive(&self) -> PrimitivePair {
        PrimitivePair {
            kind: self.kind,
            vertices: self.vertices,
        }
    }

    pub fn points(&self, x: &[Vector3<f64>]) -> [Vector3<f64>; 4] {
        self.vertices.map(|v| x[v])
    }
}

fn face_box(mesh: &CollisionMesh, x: &[Vector3<f64>], f: usize) -> Aabb {
    Aabb::from_points(mesh.faces[f].iter().map(|&v| &x[v]))
}

fn edge_box(mesh: &CollisionMesh, x: &[Vector3<f64>], e: usize) -> Aabb {
    Aabb::from_points(mesh.edges[e].iter().map(|&v| &x[v]))
}

/// All admissible pairs within distance `dhat` at positions `x`, point-
/// triangle pairs first, each group sorted by index.
pub fn build_candidates(
    mesh: &CollisionMesh,
    x: &[Vector3<f64>],
    dhat: f64,
) -> Result<Vec<ContactPair>> {
    if !(dhat > 0.0) {
        return Err(crate::Error::InvalidParameter(format!(
            "dhat must be positive, got {dhat}"
        )));
    }
    if x.len() != mesh.num_vertices() {
        return Err(crate::Error::InvalidState(format!(
            "{} positions for {} collision vertices",
            x.len(),
            mesh.num_vertices()
        )));
    }
    let cell = mesh.broad_phase_cell(dhat);
    let cull = mesh.body_cull(x, None, dhat);
    let mut pairs = Vec::new();
    let mut hits = Vec::new();

    let face_boxes: Vec<Aabb> = (0..mesh.faces.len())
        .map(|f| face_box(mesh, x, f).inflated(dhat))
        .collect();
    let active = (0..mesh.faces.len()).filter(|&f| cull.keeps(mesh.face_body[f], &face_boxes[f]));
    let grid = BroadPhaseGrid::build_subset(cell, &face_boxes, active);
    for v in 0..mesh.num_vertices() {
        let b = Aabb::from_points([&x[v]]);
        if !cull.keeps(mesh.vertex_body[v], &b) {
            continue;
        }
        grid.query(&b, &mut hits);
        for &f in &hits {
            if !face_boxes[f].overlaps(&b) || !mesh.pt_admissible(v, f) {
                continue;
            }
            let [a, bb, c] = mesh.faces[f].map(|i| x[i]);
            let (d2, _, _) = closest_point_triangle(&x[v], &a, &bb, &c);
            if d2 < dhat * dhat {
                pairs.push(ContactPair::new(mesh, x, PairKind::PointTriangle, [v, f]));
            }
        }
    }

    let edge_boxes: Vec<Aabb> = (0..mesh.edges.len())
        .map(|e| edge_box(mesh, x, e).inflated(0.5 * dhat))
        .collect();
    let active: Vec<usize> = (0..mesh.edges.len())
        .filter(|&e| cull.keeps(mesh.edge_body[e], &edge_boxes[e]))
        .collect();
    let grid = BroadPhaseGrid::build_subset(cell, &edge_boxes, active.iter().copied());
    for &ea in &active {
        grid.query(&edge_boxes[ea], &mut hits);
        for &eb in &hits {
            if eb <= ea || !edge_boxes[ea].overlaps(&edge_boxes[eb]) || !mesh.ee_admissible(ea, eb)
            {
                continue;
            }
            let [p0, p1] = mesh.edges[ea].map(|i| x[i]);
            let [q0, q1] = mesh.edges[eb].map(|i| x[i]);
            let (d2, _, _, _) = closest_segment_segment(&p0, &p1, &q0, &q1);
            if d2 < dhat * dhat {
                pairs.push(ContactPair::new(mesh, x, PairKind::EdgeEdge, [ea, eb]));
            }
        }
    }
    pairs.sort_by_key(|a| (a.kind, a.indices));
    Ok(pairs)
}

/// Smallest distance among admissible pairs closer than `radius`, or `None`
/// when every pair is farther apart.
pub fn min_distance(mesh: &CollisionMesh, x: &[Vector3<f64>], radius: f64) -> Result<Option<f64>> {
    Ok(build_candidates(mesh, x, radius)?
        .iter()
        .map(|p| p.distance)
        .min_by(f64::total_cmp))
}

/// Whether segment `p0 p1` crosses or touches triangle `a b c`.
pub fn segment_intersects_triangle(
    p0: &Vector3<f64>,
    p1: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> bool {
    let dir = p1 - p0;
    let e1 = b - a;
    let e2 = c - a;
    let h = dir.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() <= 1e-30 {
        // coplanar or parallel: fall back to the exact distance
        let (d2, _, _, _) = closest_segment_segment(p0, p1, a, b);
        let (d3, _, _, _) = closest_segment_segment(p0, p1, b, c);
        let (d4, _, _, _) = closest_segment_segment(p0, p1, c, a);
        let (d5, _, _) = closest_point_triangle(p0, a, b, c);
        return d2.min(d3).min(d4).min(d5) == 0.0;
    }
    let inv = 1.0 / det;
    let s = p0 - a;
    let u = inv * s.dot(&h);
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = inv * dir.dot(&q);
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = inv * e2.dot(&q);
    (0.0..=1.0).contains(&t)
}

/// Admissible `(edge, face)` pairs whose segment and triangle intersect.
pub fn find_intersections(mesh: &CollisionMesh, x: &[Vector3<f64>]) -> Vec<(usize, usize)> {
    let face_boxes: Vec<Aabb> = (0..mesh.faces.len())
        .map(|f| face_box(mesh, x, f))
        .collect();
    let grid = BroadPhaseGrid::build(mesh.broad_phase_cell(0.0), &face_boxes);
    let mut hits = Vec::new();
    let mut out = Vec::new();
    for e in 0..mesh.edges.len() {
        let eb = edge_box(mesh, x, e);
        grid.query(&eb, &mut hits);
        let [v0, v1] = mesh.edges[e];
        for &f in &hits {
            let face = mesh.faces[f];
            if !eb.overlaps(&face_boxes[f])
                || face.contains(&v0)
                || face.contains(&v1)
                || !mesh.bodies_interact(mesh.edge_body[e], mesh.face_body[f])
            {
                continue;
            }
            let [a, b, c] = face.map(|i| x[i]);
            if segment_intersects_triangle(&x[v0], &x[v1], &a, &b, &c) {
                out.push((e, f));
            }
        }
    }
    out
}
