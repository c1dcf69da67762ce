//! Tetrahedral and triangle meshes: validation, rest-shape precomputation,
//! boundary extraction and mass lumping.

mod io;
pub mod primitives;

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

pub use io::{
    load_face_set, load_index_set, load_obj, load_tet_mesh, parse_face_set, parse_index_set,
    parse_obj, parse_tet_mesh, write_face_set, write_index_set, write_obj, write_tet_mesh,
};

/// Smallest admissible tetrahedron volume (m^3).
pub const MIN_TET_VOLUME: f64 = 1e-15;
/// Smallest admissible triangle area (m^2).
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Triangle surface mesh with a derived unique edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    /// Each undirected edge exactly once, as `[lo, hi]`, sorted.
    pub edges: Vec<[usize; 2]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} references vertex out of range ({t:?}, {n} vertices)"
                )));
            }
        }
        let mut mesh = Self {
            vertices,
            triangles,
            edges: Vec::new(),
        };
        for i in 0..mesh.triangles.len() {
            let area = mesh.triangle_area(i);
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { index: i, area });
            }
        }
        mesh.edges = unique_edges(&mesh.triangles);
        Ok(mesh)
    }

    pub fn triangle_normal_raw(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangles[i];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_normal(&self, i: usize) -> Vector3<f64> {
        self.triangle_normal_raw(i).normalize()
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        0.5 * self.triangle_normal_raw(i).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| self.triangle_area(i))
            .sum()
    }

    /// Signed enclosed volume by the divergence theorem (positive for outward
    /// oriented closed surfaces).
    pub fn enclosed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Lumped vertex areas: one third of every incident triangle's area.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (i, t) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(i) / 3.0;
            for &v in t {
                areas[v] += a;
            }
        }
        areas
    }

    /// Per-edge area weight: half the mean area of the faces adjacent to it.
    pub fn edge_areas(&self) -> Vec<f64> {
        let index: BTreeMap<[usize; 2], usize> = self
            .edges
            .iter()
            .enumerate()
            .map(|(i, e)| (*e, i))
            .collect();
        let mut sum = vec![0.0; self.edges.len()];
        let mut count = vec![0usize; self.edges.len()];
        for (i, t) in self.triangles.iter().enumerate() {
            let a = self.triangle_area(i);
            for k in 0..3 {
                let e = sorted_edge(t[k], t[(k + 1) % 3]);
                let ei = index[&e];
                sum[ei] += a;
                count[ei] += 1;
            }
        }
        sum.iter()
            .zip(&count)
            .map(|(s, &c)| 0.5 * s / c.max(1) as f64)
            .collect()
    }

    /// Mean length of the edges (used to size the broad-phase grid).
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&[a, b]| (self.vertices[a] - self.vertices[b]).norm())
            .collect()
    }

    /// Apply a rigid transform to every vertex.
    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> Self {
        Self {
            vertices: self
                .vertices
                .iter()
                .map(|v| iso.transform_point(&(*v).into()).coords)
                .collect(),
            triangles: self.triangles.clone(),
            edges: self.edges.clone(),
        }
    }
}

fn sorted_edge(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn unique_edges(triangles: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut edges: Vec<[usize; 2]> = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |k| sorted_edge(t[k], t[(k + 1) % 3])))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Tetrahedral volume mesh with precomputed rest quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub tets: Vec<[usize; 4]>,
    pub rest_volumes: Vec<f64>,
    /// Inverse of the rest edge matrix `[x1-x0, x2-x0, x3-x0]` per tet.
    pub inv_rest_shape: Vec<Matrix3<f64>>,
}

pub fn edge_matrix(v: &[Vector3<f64>], t: &[usize; 4]) -> Matrix3<f64> {
    let x0 = v[t[0]];
    Matrix3::from_columns(&[v[t[1]] - x0, v[t[2]] - x0, v[t[3]] - x0])
}

impl TetMesh {
    /// Validates indices, rejects slivers and flips negatively oriented tets
    /// (swapping their last two indices).
    pub fn new(vertices: Vec<Vector3<f64>>, mut tets: Vec<[usize; 4]>) -> Result<Self> {
        let n = vertices.len();
        let mut rest_volumes = Vec::with_capacity(tets.len());
        let mut inv_rest_shape = Vec::with_capacity(tets.len());
        for (i, t) in tets.iter_mut().enumerate() {
            if t.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "tet {i} references vertex out of range ({t:?}, {n} vertices)"
                )));
            }
            let mut dm = edge_matrix(&vertices, t);
            let mut vol = dm.determinant() / 6.0;
            if !(vol.abs() >= MIN_TET_VOLUME) {
                return Err(Error::DegenerateTet {
                    index: i,
                    volume: vol,
                });
            }
            if vol < 0.0 {
                t.swap(2, 3);
                dm = edge_matrix(&vertices, t);
                vol = dm.determinant() / 6.0;
            }
            rest_volumes.push(vol);
            inv_rest_shape.push(dm.try_inverse().ok_or(Error::DegenerateTet {
                index: i,
                volume: vol,
            })?);
        }
        Ok(Self {
            vertices,
            tets,
            rest_volumes,
            inv_rest_shape,
        })
    }

    pub fn total_volume(&self) -> f64 {
        self.rest_volumes.iter().sum()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
}

/// Boundary of a tet mesh as a compact triangle mesh plus the map from
/// surface vertex index back to the volume vertex index.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub mesh: TriMesh,
    pub volume_index: Vec<usize>,
}

impl SurfaceMesh {
    /// Boundary triangles expressed in volume vertex indices.
    pub fn volume_triangles(&self) -> Vec<[usize; 3]> {
        self.mesh
            .triangles
            .iter()
            .map(|t| t.map(|v| self.volume_index[v]))
            .collect()
    }
}

/// Faces appearing in exactly one tet, oriented away from that tet.
pub fn surface_of(tet: &TetMesh) -> SurfaceMesh {
    // sorted face key -> (oriented face, count)
    let mut faces: BTreeMap<[usize; 3], ([usize; 3], usize)> = BTreeMap::new();
    for t in &tet.tets {
        for k in 0..4 {
            let opp = t[k];
            let mut f = [t[(k + 1) % 4], t[(k + 2) % 4], t[(k + 3) % 4]];
            let (a, b, c) = (tet.vertices[f[0]], tet.vertices[f[1]], tet.vertices[f[2]]);
            let n = (b - a).cross(&(c - a));
            if n.dot(&(tet.vertices[opp] - a)) > 0.0 {
                f.swap(1, 2);
            }
            let mut key = f;
            key.sort_unstable();
            faces.entry(key).and_modify(|e| e.1 += 1).or_insert((f, 1));
        }
    }
    let boundary: Vec<[usize; 3]> = faces
        .into_values()
        .filter(|(_, c)| *c == 1)
        .map(|(f, _)| f)
        .collect();

    let mut used: Vec<usize> = boundary.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut local = vec![usize::MAX; tet.vertices.len()];
    for (i, &v) in used.iter().enumerate() {
        local[v] = i;
    }
    let triangles = boundary.iter().map(|f| f.map(|v| local[v])).collect();
    let vertices = used.iter().map(|&v| tet.vertices[v]).collect();
    let mesh = TriMesh {
        vertices,
        edges: Vec::new(),
        triangles,
    };
    let edges = unique_edges(&mesh.triangles);
    SurfaceMesh {
        mesh: TriMesh { edges, ..mesh },
        volume_index: used,
    }
}

/// Diagonal (lumped) vertex masses.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedMass {
    pub masses: Vec<f64>,
}

impl LumpedMass {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Each tet hands a quarter of `density * volume` to each of its vertices.
pub fn lump_masses(tet: &TetMesh, density: f64) -> Result<LumpedMass> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "density must be positive, got {density}"
        )));
    }
    let mut masses = vec![0.0; tet.vertices.len()];
    for (t, vol) in tet.tets.iter().zip(&tet.rest_volumes) {
        let share = density * vol / 4.0;
        for &v in t {
            masses[v] += share;
        }
    }
    if let Some(v) = masses.iter().position(|&m| m <= 0.0) {
        return Err(Error::InvalidMesh(format!(
            "vertex {v} belongs to no tetrahedron"
        )));
    }
    Ok(LumpedMass { masses })
}
