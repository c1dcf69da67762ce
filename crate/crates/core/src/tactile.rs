//! Tactile signals from a deformed gel pad: depth and normal maps from an
//! orthographic camera behind the gel, barycentric marker tracking, and
//! point clouds. Geometry is expressed in the gel (sensor) frame, whose +z
//! axis points out of the coated surface; the camera looks along +z.

use std::fmt::Write as _;

use nalgebra::{Isometry3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::robot::MarkerSpec;
use crate::{Error, Result};

/// Pixels whose candidate heights differ by less than this share normals.
const SHARED_PIXEL_TOL: f64 = 1e-10;
const INSIDE_TOL: f64 = 1e-9;

/// Orthographic camera over the sensor-frame xy plane. Pixel `(u, v)` has
/// its center at `center + ((u + 0.5 - width/2) s, (v + 0.5 - height/2) s)`;
/// row `v = 0` has the smallest y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub width: usize,
    pub height: usize,
    /// m/px
    pub pixel_size: f64,
    pub center: [f64; 2],
}

impl CameraSpec {
    /// Smallest square-pixel camera of the given resolution covering the xy
    /// footprint of `faces`.
    pub fn fit(
        vertices: &[Vector3<f64>],
        faces: &[[usize; 3]],
        width: usize,
        height: usize,
    ) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &v in faces.iter().flatten() {
            for k in 0..2 {
                lo[k] = lo[k].min(vertices[v][k]);
                hi[k] = hi[k].max(vertices[v][k]);
            }
        }
        let pixel_size = ((hi[0] - lo[0]) / width as f64).max((hi[1] - lo[1]) / height as f64);
        Self {
            width,
            height,
            pixel_size,
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
        }
    }

    pub fn pixel_center(&self, u: usize, v: usize) -> [f64; 2] {
        [
            self.center[0] + (u as f64 + 0.5 - 0.5 * self.width as f64) * self.pixel_size,
            self.center[1] + (v as f64 + 0.5 - 0.5 * self.height as f64) * self.pixel_size,
        ]
    }

    /// Continuous pixel coordinates of a sensor-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> [f64; 2] {
        [
            (p.x - self.center[0]) / self.pixel_size + 0.5 * self.width as f64 - 0.5,
            (p.y - self.center[1]) / self.pixel_size + 0.5 * self.height as f64 - 0.5,
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !(self.pixel_size > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid camera {self:?}")));
        }
        Ok(())
    }
}

/// Per-pixel indentation depth (m, positive into the gel) and unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub camera: CameraSpec,
    pub depth: Vec<f64>,
    pub normals: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
    /// Sensor-frame height of the visible deformed surface.
    pub surface_z: Vec<f64>,
}

impl DepthMap {
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.camera.width + u
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        let i = self.index(u, v);
        self.valid[i].then_some(self.depth[i])
    }

    pub fn max_depth(&self) -> f64 {
        self.depth
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(0.0, |m, (d, _)| m.max(*d))
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

struct Raster {
    z: Vec<f64>,
    normal: Vec<Vector3<f64>>,
}

/// Nearest-to-camera (smallest z) surface per pixel; normals of faces tied
/// at a pixel are averaged with area weights.
fn rasterize(cam: &CameraSpec, vertices: &[Vector3<f64>], faces: &[[usize; 3]]) -> Raster {
    let n = cam.width * cam.height;
    let mut r = Raster {
        z: vec![f64::INFINITY; n],
        normal: vec![Vector3::zeros(); n],
    };
    for f in faces {
        let [a, b, c] = f.map(|i| vertices[i]);
        let raw = (b - a).cross(&(c - a));
        let area = 0.5 * raw.norm();
        if !(area > 0.0) {
            continue;
        }
        let weighted = raw * 0.5;
        let pa = cam.project(&a);
        let pb = cam.project(&b);
        let pc = cam.project(&c);
        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        if det.abs() < 1e-14 {
            continue; // edge-on to the camera
        }
        let umin = pa[0].min(pb[0]).min(pc[0]).floor().max(0.0) as usize;
        let vmin = pa[1].min(pb[1]).min(pc[1]).floor().max(0.0) as usize;
        let umax = (pa[0].max(pb[0]).max(pc[0]).ceil() as i64).min(cam.width as i64 - 1);
        let vmax = (pa[1].max(pb[1]).max(pc[1]).ceil() as i64).min(cam.height as i64 - 1);
        if umax < 0 || vmax < 0 {
            continue;
        }
        for v in vmin..=vmax as usize {
            for u in umin..=umax as usize {
                let (x, y) = (u as f64, v as f64);
                let l1 = ((x - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (y - pa[1])) / det;
                let l2 = ((pb[0] - pa[0]) * (y - pa[1]) - (x - pa[0]) * (pb[1] - pa[1])) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 < -INSIDE_TOL || l1 < -INSIDE_TOL || l2 < -INSIDE_TOL {
                    continue;
                }
                let z = l0 * a.z + l1 * b.z + l2 * c.z;
                let i = v * cam.width + u;
                if z < r.z[i] - SHARED_PIXEL_TOL {
                    r.z[i] = z;
                    r.normal[i] = weighted;
                } else if z <= r.z[i] + SHARED_PIXEL_TOL {
                    r.z[i] = r.z[i].min(z);
                    r.normal[i] += weighted;
                }
            }
        }
    }
    for nrm in &mut r.normal {
        if nrm.norm() > 0.0 {
            *nrm = nrm.normalize();
        }
    }
    r
}

/// Depth and normal maps of the coated faces. `rest` and `deformed` are
/// sensor-frame positions indexed like the face vertex indices.
pub fn render_depth(
    coated: &[[usize; 3]],
    rest: &[Vector3<f64>],
    deformed: &[Vector3<f64>],
    camera: &CameraSpec,
) -> Result<DepthMap> {
    camera.validate()?;
    let base = rasterize(camera, rest, coated);
    let cur = rasterize(camera, deformed, coated);
    let n = camera.width * camera.height;
    let mut map = DepthMap {
        camera: *camera,
        depth: vec![0.0; n],
        normals: vec![Vector3::zeros(); n],
        valid: vec![false; n],
        surface_z: vec![f64::NAN; n],
    };
    for i in 0..n {
        if base.z[i].is_finite() && cur.z[i].is_finite() {
            map.valid[i] = true;
            map.depth[i] = base.z[i] - cur.z[i];
            map.normals[i] = cur.normal[i];
            map.surface_z[i] = cur.z[i];
        }
    }
    if map.num_valid() == 0 {
        log::warn!("coated surface does not cover any camera pixel");
    }
    Ok(map)
}

/// Marker `p = sum_u bary[u] x_u` on coated face `face`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    /// Index into the coated face list.
    pub face: usize,
    pub bary: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSet {
    pub markers: Vec<Marker>,
    pub rest_positions: Vec<Vector3<f64>>,
    pub rest_pixels: Vec<[f64; 2]>,
}

fn interpolate(m: &Marker, coated: &[[usize; 3]], vertices: &[Vector3<f64>]) -> Vector3<f64> {
    let f = coated[m.face];
    vertices[f[0]] * m.bary[0] + vertices[f[1]] * m.bary[1] + vertices[f[2]] * m.bary[2]
}

/// Markers from explicit face/barycentric pairs.
pub fn marker_set(
    markers: Vec<Marker>,
    coated: &[[usize; 3]],
    rest: &[Vector3<f64>],
    camera: &CameraSpec,
) -> Result<MarkerSet> {
    for m in &markers {
        let sum: f64 = m.bary.iter().sum();
        if m.face >= coated.len()
            || m.bary.iter().any(|a| !(0.0..=1.0).contains(a))
            || (sum - 1.0).abs() > 1e-12
        {
            return Err(Error::InvalidParameter(format!("invalid marker {m:?}")));
        }
    }
    let rest_positions: Vec<_> = markers
        .iter()
        .map(|m| interpolate(m, coated, rest))
        .collect();
    let rest_pixels = rest_positions.iter().map(|p| camera.project(p)).collect();
    Ok(MarkerSet {
        markers,
        rest_positions,
        rest_pixels,
    })
}

/// Grid of markers over the xy footprint of the coated faces, optionally
/// jittered by a fraction of the spacing. Grid points outside every face
/// are dropped.
pub fn place_markers(
    coated: &[[usize; 3]],
    rest: &[Vector3<f64>],
    camera: &CameraSpec,
    spec: &MarkerSpec,
) -> Result<MarkerSet> {
    let [nu, nv] = spec.grid;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &v in coated.iter().flatten() {
        for k in 0..2 {
            lo[k] = lo[k].min(rest[v][k]);
            hi[k] = hi[k].max(rest[v][k]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let du = (hi[0] - lo[0]) / nu.max(1) as f64;
    let dv = (hi[1] - lo[1]) / nv.max(1) as f64;
    let mut markers = Vec::new();
    for j in 0..nv {
        for i in 0..nu {
            let mut x = lo[0] + (i as f64 + 0.5) * du;
            let mut y = lo[1] + (j as f64 + 0.5) * dv;
            if spec.jitter > 0.0 {
                x += rng.gen_range(-0.5..0.5) * spec.jitter * du;
                y += rng.gen_range(-0.5..0.5) * spec.jitter * dv;
            }
            if let Some(m) = locate(coated, rest, x, y) {
                markers.push(m);
            }
        }
    }
    marker_set(markers, coated, rest, camera)
}

/// Face (highest along z) whose xy projection contains `(x, y)`.
fn locate(coated: &[[usize; 3]], v: &[Vector3<f64>], x: f64, y: f64) -> Option<Marker> {
    let mut best: Option<(f64, Marker)> = None;
    for (fi, f) in coated.iter().enumerate() {
        let [a, b, c] = f.map(|i| v[i]);
        let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        if det.abs() < 1e-18 {
            continue;
        }
        let l1 = ((x - a.x) * (c.y - a.y) - (c.x - a.x) * (y - a.y)) / det;
        let l2 = ((b.x - a.x) * (y - a.y) - (x - a.x) * (b.y - a.y)) / det;
        let l0 = 1.0 - l1 - l2;
        if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
            continue;
        }
        let z = l0 * a.z + l1 * b.z + l2 * c.z;
        if best.is_none_or(|(bz, _)| z > bz) {
            best = Some((
                z,
                Marker {
                    face: fi,
                    bary: [l0, l1, l2],
                },
            ));
        }
    }
    best.map(|b| b.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFlow {
    pub rest: Vec<Vector3<f64>>,
    pub deformed: Vec<Vector3<f64>>,
    /// `deformed - rest`.
    pub displacement: Vec<Vector3<f64>>,
    /// Image-plane projection of the deformed markers.
    pub pixels: Vec<[f64; 2]>,
}

/// Deformed marker positions by barycentric interpolation of `vertices`.
pub fn track_markers(
    set: &MarkerSet,
    coated: &[[usize; 3]],
    vertices: &[Vector3<f64>],
    camera: &CameraSpec,
) -> MarkerFlow {
    let deformed: Vec<_> = set
        .markers
        .iter()
        .map(|m| interpolate(m, coated, vertices))
        .collect();
    let displacement = deformed
        .iter()
        .zip(&set.rest_positions)
        .map(|(q, p)| q - p)
        .collect();
    let pixels = deformed.iter().map(|q| camera.project(q)).collect();
    MarkerFlow {
        rest: set.rest_positions.clone(),
        deformed,
        displacement,
        pixels,
    }
}

/// World points of every valid pixel of the deformed surface.
pub fn depth_pointcloud(map: &DepthMap, sensor_to_world: &Isometry3<f64>) -> Vec<Vector3<f64>> {
    let cam = &map.camera;
    let mut pts = Vec::new();
    for v in 0..cam.height {
        for u in 0..cam.width {
            let i = map.index(u, v);
            if map.valid[i] {
                let [x, y] = cam.pixel_center(u, v);
                let p = nalgebra::Point3::new(x, y, map.surface_z[i]);
                pts.push(sensor_to_world.transform_point(&p).coords);
            }
        }
    }
    pts
}

/// World positions of the deformed markers.
pub fn marker_pointcloud(flow: &MarkerFlow, sensor_to_world: &Isometry3<f64>) -> Vec<Vector3<f64>> {
    flow.deformed
        .iter()
        .map(|p| sensor_to_world.transform_point(&(*p).into()).coords)
        .collect()
}

/// Dense tactile point cloud in the world frame from the link pose and the
/// sensor mount transform.
pub fn tactile_pointcloud(
    map: &DepthMap,
    link_pose: &Isometry3<f64>,
    mount: &Isometry3<f64>,
) -> Vec<Vector3<f64>> {
    depth_pointcloud(map, &(link_pose * mount))
}

fn pfm(width: usize, height: usize, channels: usize, data: impl Iterator<Item = f32>) -> Vec<u8> {
    let tag = if channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{width} {height}\n-1.0\n").into_bytes();
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Depth as a single-channel little-endian PFM; invalid pixels are NaN.
pub fn write_depth_pfm(map: &DepthMap) -> Vec<u8> {
    let data = (0..map.depth.len()).map(|i| {
        if map.valid[i] {
            map.depth[i] as f32
        } else {
            f32::NAN
        }
    });
    pfm(map.camera.width, map.camera.height, 1, data)
}

/// Normals as a three-channel PFM; invalid pixels are zero.
pub fn write_normal_pfm(map: &DepthMap) -> Vec<u8> {
    let data = map
        .normals
        .iter()
        .flat_map(|n| [n.x as f32, n.y as f32, n.z as f32]);
    pfm(map.camera.width, map.camera.height, 3, data)
}

/// Decode a PFM written by this module into `(width, height, channels, data)`.
pub fn read_pfm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>)> {
    let bad = |m: &str| Error::Parse {
        line: 0,
        message: format!("PFM: {m}"),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        let end = bytes[pos..]
            .iter()
            .position(|b| b.is_ascii_whitespace())
            .ok_or_else(|| bad("truncated header"))?;
        if end > 0 {
            fields.push(String::from_utf8_lossy(&bytes[pos..pos + end]).to_string());
        }
        pos += end + 1;
    }
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("unknown tag")),
    };
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad("scale"))?;
    if scale >= 0.0 {
        return Err(bad("only little-endian files are supported"));
    }
    let body = &bytes[pos..];
    if body.len() != 4 * w * h * channels {
        return Err(bad("size mismatch"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((w, h, channels, data))
}

/// Sidecar document describing the camera of a depth map.
pub fn depth_sidecar(map: &DepthMap) -> serde_json::Value {
    serde_json::json!({
        "camera": map.camera,
        "projection": "orthographic",
        "frame": "sensor",
        "row_order": "row 0 has the smallest sensor-frame y",
        "units": "m",
        "depth_sign": "positive into the gel",
        "valid_pixels": map.num_valid(),
        "max_depth": map.max_depth(),
    })
}

/// Single-light Lambertian shading of the normal map as a binary PGM. Not a
/// calibrated tactile image.
pub fn lambertian_preview(map: &DepthMap, light: &Vector3<f64>) -> Vec<u8> {
    let l = light.normalize();
    let (w, h) = (map.camera.width, map.camera.height);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for v in (0..h).rev() {
        for u in 0..w {
            let i = map.index(u, v);
            let s = if map.valid[i] {
                map.normals[i].dot(&l).max(0.0)
            } else {
                0.0
            };
            out.push((s * 255.0).round() as u8);
        }
    }
    out
}

/// CSV with one row per marker.
pub fn write_marker_csv(set: &MarkerSet, flow: &MarkerFlow) -> String {
    let mut s = String::from("marker_id,tri_index,a1,a2,a3,px,py,pz,qx,qy,qz,dx,dy,dz\n");
    for (i, m) in set.markers.iter().enumerate() {
        let (p, q, d) = (flow.rest[i], flow.deformed[i], flow.displacement[i]);
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.face, m.bary[0], m.bary[1], m.bary[2], p.x, p.y, p.z, q.x, q.y, q.z, d.x, d.y, d.z
        );
    }
    s
}

/// ASCII PLY point cloud.
pub fn write_ply(points: &[Vector3<f64>]) -> String {
    let mut s = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}
