//! Analytic indentation profiles for the tactile pipeline.

use nalgebra::Vector3;
use rand::Rng;

use tacsim_core::tactile::{marker_set, render_depth, track_markers, CameraSpec, Marker};

use super::{random_vector, rng};

/// Flat coated sheet at `z = 0`: an `n x n` vertex grid of spacing `h`
/// centered on the origin, two triangles per cell.
pub fn flat_sheet(n: usize, h: f64) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let off = 0.5 * (n - 1) as f64 * h;
    let mut v = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            v.push(Vector3::new(i as f64 * h - off, j as f64 * h - off, 0.0));
        }
    }
    let mut f = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = j * n + i;
            f.push([a, a + 1, a + n + 1]);
            f.push([a, a + n + 1, a + n]);
        }
    }
    (v, f)
}

/// Indentation of a rigid sphere of radius `r` pressed `delta` into the
/// sheet at the origin: `max(0, delta - r + sqrt(r^2 - rho^2))`.
pub fn cap_depth(rho: f64, r: f64, delta: f64) -> f64 {
    if rho >= r {
        return 0.0;
    }
    (delta - r + (r * r - rho * rho).sqrt()).max(0.0)
}

#[derive(Debug, Clone, Copy)]
pub struct CapReport {
    /// Largest depth error over pixels outside the rim band (m).
    pub max_error: f64,
    /// Pixels compared and pixels exempted near the contact rim.
    pub compared: usize,
    pub exempt: usize,
    pub pixel_size: f64,
}

/// Render a sheet conforming to a sphere cap and compare each pixel with
/// the analytic profile, skipping pixels within `band_px` of the rim.
pub fn sphere_cap(band_px: f64) -> CapReport {
    let (r, delta) = (0.01, 1e-3);
    let (rest, faces) = flat_sheet(121, 2e-4);
    let deformed: Vec<_> = rest
        .iter()
        .map(|p| Vector3::new(p.x, p.y, p.z - cap_depth(p.xy().norm(), r, delta)))
        .collect();
    let camera = CameraSpec::fit(&rest, &faces, 160, 160);
    let map = render_depth(&faces, &rest, &deformed, &camera).unwrap();
    let rim = (2.0 * r * delta - delta * delta).sqrt();
    let mut report = CapReport {
        max_error: 0.0,
        compared: 0,
        exempt: 0,
        pixel_size: camera.pixel_size,
    };
    for v in 0..camera.height {
        for u in 0..camera.width {
            let Some(d) = map.get(u, v) else { continue };
            let [x, y] = camera.pixel_center(u, v);
            let rho = x.hypot(y);
            if (rho - rim).abs() <= band_px * camera.pixel_size {
                report.exempt += 1;
                continue;
            }
            report.compared += 1;
            report.max_error = report.max_error.max((d - cap_depth(rho, r, delta)).abs());
        }
    }
    report
}

/// Largest depth and marker displacement of an undeformed sheet (both
/// should vanish), and the largest deviation of tracked marker
/// displacements from the barycentric combination of vertex displacements
/// under a random deformation.
pub fn markers_and_rest() -> (f64, f64, f64) {
    let mut rng = rng(21);
    let (rest, faces) = flat_sheet(31, 5e-4);
    let camera = CameraSpec::fit(&rest, &faces, 64, 64);
    let markers: Vec<Marker> = (0..400)
        .map(|_| {
            let (a, b) = (rng.gen_range(0.0..1.0f64), rng.gen_range(0.0..1.0f64));
            let (a, b) = if a + b > 1.0 {
                (1.0 - a, 1.0 - b)
            } else {
                (a, b)
            };
            Marker {
                face: rng.gen_range(0..faces.len()),
                bary: [1.0 - a - b, a, b],
            }
        })
        .filter(|m| {
            (m.bary.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && m.bary.iter().all(|&w| w >= 0.0)
        })
        .collect();
    let set = marker_set(markers, &faces, &rest, &camera).unwrap();

    let still = render_depth(&faces, &rest, &rest, &camera).unwrap();
    let still_depth = still.depth.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let still_flow = track_markers(&set, &faces, &rest, &camera)
        .displacement
        .iter()
        .fold(0.0f64, |m, d| m.max(d.amax()));

    let deformed: Vec<_> = rest
        .iter()
        .map(|p| p + random_vector(&mut rng, 2e-4))
        .collect();
    let flow = track_markers(&set, &faces, &deformed, &camera);
    let mut worst = 0.0f64;
    for (m, d) in set.markers.iter().zip(&flow.displacement) {
        let f = faces[m.face];
        let expect: Vector3<f64> = (0..3)
            .map(|k| (deformed[f[k]] - rest[f[k]]) * m.bary[k])
            .sum();
        worst = worst.max((d - expect).amax());
    }
    (still_depth, still_flow, worst)
}
