//! Procedural meshes used for bundled assets and tests.

use std::collections::BTreeMap;

use nalgebra::{UnitQuaternion, Vector3};

use super::{TetMesh, TriMesh};
use crate::{Error, Result};

/// Axis-aligned box centered at the origin, `divisions` cells per axis, each
/// cell split into six tets around its main diagonal (conforming across cells).
pub fn box_tet_mesh(extent: Vector3<f64>, divisions: [usize; 3]) -> Result<TetMesh> {
    let [nx, ny, nz] = divisions;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidParameter("box divisions must be >= 1".into()));
    }
    let idx = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vector3::new(
                    extent.x * (i as f64 / nx as f64 - 0.5),
                    extent.y * (j as f64 / ny as f64 - 0.5),
                    extent.z * (k as f64 / nz as f64 - 0.5),
                ));
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for p in PERMS {
                    let mut c = [i, j, k];
                    let mut t = [idx(c[0], c[1], c[2]); 4];
                    for (s, &axis) in p.iter().enumerate() {
                        c[axis] += 1;
                        t[s + 1] = idx(c[0], c[1], c[2]);
                    }
                    tets.push(t);
                }
            }
        }
    }
    TetMesh::new(vertices, tets)
}

/// Unit-style cube `[0, s]^3` split into five tets (four corners and a
/// central one).
pub fn five_tet_cube(s: f64) -> Result<TetMesh> {
    let mut v = Vec::new();
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..2 {
                v.push(Vector3::new(i as f64, j as f64, k as f64) * s);
            }
        }
    }
    // corner ids: bit0 = x, bit1 = y, bit2 = z
    let tets = vec![
        [0, 1, 2, 4],
        [3, 1, 2, 7],
        [5, 1, 4, 7],
        [6, 2, 4, 7],
        [1, 2, 4, 7],
    ];
    TetMesh::new(v, tets)
}

/// Closed box surface centered at the origin. Every face is split into four
/// triangles around its center, which keeps the triangulation invariant under
/// the box's symmetry group.
pub fn box_tri_mesh(extent: Vector3<f64>) -> Result<TriMesh> {
    let h = extent * 0.5;
    let mut vertices = Vec::new();
    for k in 0..2 {
        for j in 0..2 {
            for i in 0..2 {
                vertices.push(Vector3::new(
                    if i == 0 { -h.x } else { h.x },
                    if j == 0 { -h.y } else { h.y },
                    if k == 0 { -h.z } else { h.z },
                ));
            }
        }
    }
    let corner = |i: usize, j: usize, k: usize| i + 2 * j + 4 * k;
    // faces as counter-clockwise corner loops seen from outside
    let faces = [
        [
            corner(0, 0, 0),
            corner(0, 1, 0),
            corner(1, 1, 0),
            corner(1, 0, 0),
        ], // -z
        [
            corner(0, 0, 1),
            corner(1, 0, 1),
            corner(1, 1, 1),
            corner(0, 1, 1),
        ], // +z
        [
            corner(0, 0, 0),
            corner(1, 0, 0),
            corner(1, 0, 1),
            corner(0, 0, 1),
        ], // -y
        [
            corner(0, 1, 0),
            corner(0, 1, 1),
            corner(1, 1, 1),
            corner(1, 1, 0),
        ], // +y
        [
            corner(0, 0, 0),
            corner(0, 0, 1),
            corner(0, 1, 1),
            corner(0, 1, 0),
        ], // -x
        [
            corner(1, 0, 0),
            corner(1, 1, 0),
            corner(1, 1, 1),
            corner(1, 0, 1),
        ], // +x
    ];
    let mut triangles = Vec::new();
    for f in faces {
        let c = f.iter().map(|&i| vertices[i]).sum::<Vector3<f64>>() / 4.0;
        let ci = vertices.len();
        vertices.push(c);
        for e in 0..4 {
            triangles.push([f[e], f[(e + 1) % 4], ci]);
        }
    }
    TriMesh::new(vertices, triangles)
}

/// Geodesic sphere centered at the origin with one vertex exactly at the
/// south pole `(0, 0, -radius)`.
pub fn icosphere(radius: f64, subdivisions: usize) -> Result<TriMesh> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vector3<f64>> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for [a, b, c] in tris {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    // put vertex 6 (an original icosahedron vertex) on the south pole
    let rot = UnitQuaternion::rotation_between(&verts[6], &-Vector3::z())
        .unwrap_or_else(UnitQuaternion::identity);
    let mut vertices: Vec<Vector3<f64>> = verts.iter().map(|v| rot * v * radius).collect();
    vertices[6] = Vector3::new(0.0, 0.0, -radius);
    TriMesh::new(vertices, tris)
}
