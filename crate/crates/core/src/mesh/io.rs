//! Text formats.
//!
//! Tet meshes: a header line `tet <nv> <nt>`, then `nv` lines `x y z`, then
//! `nt` lines `i j k l` with 0-based indices. Blank lines and lines starting
//! with `#` are ignored. Triangle meshes use the `v`/`f` subset of OBJ.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{TetMesh, TriMesh};
use crate::{Error, Result};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_fields<T: std::str::FromStr, const K: usize>(line: usize, s: &str) -> Result<[T; K]> {
    let fields: Vec<&str> = s.split_whitespace().collect();
    if fields.len() != K {
        return Err(parse_err(
            line,
            format!("expected {K} fields, found {}", fields.len()),
        ));
    }
    let mut out = Vec::with_capacity(K);
    for f in fields {
        out.push(
            f.parse::<T>()
                .map_err(|_| parse_err(line, format!("cannot parse '{f}'")))?,
        );
    }
    out.try_into()
        .map_err(|_| parse_err(line, "field count mismatch"))
}

pub fn parse_tet_mesh(text: &str) -> Result<TetMesh> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "tet" {
        return Err(parse_err(hl, "expected header 'tet <nv> <nt>'"));
    }
    let nv: usize = parts[1]
        .parse()
        .map_err(|_| parse_err(hl, "bad vertex count"))?;
    let nt: usize = parts[2]
        .parse()
        .map_err(|_| parse_err(hl, "bad tet count"))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(hl, format!("expected {nv} vertex lines")))?;
        let [x, y, z] = parse_fields::<f64, 3>(ln, l)?;
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(parse_err(ln, "non-finite coordinate"));
        }
        vertices.push(Vector3::new(x, y, z));
    }
    let mut tets = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(hl, format!("expected {nt} tet lines")))?;
        let t = parse_fields::<usize, 4>(ln, l)?;
        if t.iter().any(|&i| i >= nv) {
            return Err(parse_err(ln, format!("index out of range (nv = {nv})")));
        }
        tets.push(t);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content after tet list"));
    }
    TetMesh::new(vertices, tets)
}

pub fn load_tet_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    parse_tet_mesh(&read(path.as_ref())?)
}

pub fn write_tet_mesh(mesh: &TetMesh) -> String {
    let mut s = format!("tet {} {}\n", mesh.vertices.len(), mesh.tets.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.tets {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    s
}

/// OBJ subset: `v x y z` and `f a b c ...` (polygons are fan-triangulated,
/// `a/b/c` index forms keep the position index). Face indices are 1-based
/// unless the smallest index in the file is 0.
pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (ln, l) in content_lines(text) {
        let mut it = l.split_whitespace();
        match it.next() {
            Some("v") => {
                let rest: Vec<&str> = it.collect();
                if rest.len() < 3 {
                    return Err(parse_err(ln, "vertex needs 3 coordinates"));
                }
                let [x, y, z] = parse_fields::<f64, 3>(ln, &rest[..3].join(" "))?;
                vertices.push(Vector3::new(x, y, z));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    let first = tok.split('/').next().unwrap_or("");
                    idx.push(
                        first
                            .parse::<i64>()
                            .map_err(|_| parse_err(ln, format!("bad face index '{tok}'")))?,
                    );
                }
                if idx.len() < 3 {
                    return Err(parse_err(ln, "face needs at least 3 vertices"));
                }
                faces.push((ln, idx));
            }
            _ => {}
        }
    }
    let min = faces.iter().flat_map(|(_, f)| f.iter()).copied().min();
    let base = if min == Some(0) { 0 } else { 1 };
    let mut triangles = Vec::new();
    for (ln, f) in faces {
        let mut idx = Vec::with_capacity(f.len());
        for i in f {
            let j = i - base;
            if j < 0 || j as usize >= vertices.len() {
                return Err(parse_err(ln, format!("face index {i} out of range")));
            }
            idx.push(j as usize);
        }
        for k in 1..idx.len() - 1 {
            triangles.push([idx[0], idx[k], idx[k + 1]]);
        }
    }
    TriMesh::new(vertices, triangles)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    parse_obj(&read(path.as_ref())?)
}

/// Writes 1-based OBJ.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Whitespace separated vertex indices.
pub fn parse_index_set(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (ln, l) in content_lines(text) {
        for tok in l.split_whitespace() {
            out.push(
                tok.parse()
                    .map_err(|_| parse_err(ln, format!("bad index '{tok}'")))?,
            );
        }
    }
    Ok(out)
}

pub fn load_index_set(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_index_set(&read(path.as_ref())?)
}

pub fn write_index_set(indices: &[usize]) -> String {
    let mut s = String::new();
    for i in indices {
        let _ = writeln!(s, "{i}");
    }
    s
}

/// One face per line, three vertex indices.
pub fn parse_face_set(text: &str) -> Result<Vec<[usize; 3]>> {
    content_lines(text)
        .map(|(ln, l)| parse_fields::<usize, 3>(ln, l))
        .collect()
}

pub fn load_face_set(path: impl AsRef<Path>) -> Result<Vec<[usize; 3]>> {
    parse_face_set(&read(path.as_ref())?)
}

pub fn write_face_set(faces: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for f in faces {
        let _ = writeln!(s, "{} {} {}", f[0], f[1], f[2]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT_TET: &str = "tet 4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 3\n";

    #[test]
    fn parses_unit_tet() {
        let m = parse_tet_mesh(UNIT_TET).unwrap();
        assert!((m.rest_volumes[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn inverted_index_order_gives_identical_mesh() {
        let a = parse_tet_mesh(UNIT_TET).unwrap();
        let b = parse_tet_mesh("tet 4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 3 2\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_tet_mesh("tet 4 1\n0 0 0\n1 0 0\n0 1 x\n0 0 1\n0 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_tet_mesh("tet 4 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 1 2 9\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
        let err = parse_tet_mesh("mesh 4 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn degenerate_tet_in_file() {
        let err = parse_tet_mesh("tet 4 1\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::DegenerateTet { index: 0, .. }));
    }

    #[test]
    fn round_trips_through_text() {
        let m = parse_tet_mesh(UNIT_TET).unwrap();
        assert_eq!(parse_tet_mesh(&write_tet_mesh(&m)).unwrap(), m);
    }

    #[test]
    fn obj_index_base_autodetect() {
        let one = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let zero = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n").unwrap();
        assert_eq!(one, zero);
        let quad = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n").unwrap();
        assert_eq!(quad.triangles.len(), 2);
        assert!((quad.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn index_and_face_sets() {
        assert_eq!(parse_index_set("1 2\n# c\n3\n").unwrap(), vec![1, 2, 3]);
        let f = parse_face_set("0 1 2\n3 4 5\n").unwrap();
        assert_eq!(parse_face_set(&write_face_set(&f)).unwrap(), f);
        assert!(parse_face_set("0 1\n").is_err());
    }
}
