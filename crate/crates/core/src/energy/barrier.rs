//! Log barrier on primitive distances.

use nalgebra::{SMatrix, SVector, Vector3};

use super::{project_psd, vertex_dofs, EnergyReport};
use crate::contact::distance::{
    closest_point_triangle, closest_segment_segment, distance_derivatives,
};
use crate::contact::{
    edge_edge_distance_sq, point_triangle_distance_sq, ContactPair, PairKind, PairRegion,
};
use crate::{Error, Result};

/// `b(d) = -(d - dhat)^2 ln(d / dhat)` on `(0, dhat)`, zero beyond, with its
/// first and second derivatives in `d`.
pub fn barrier(d: f64, dhat: f64) -> Result<(f64, f64, f64)> {
    if !(dhat > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dhat must be positive, got {dhat}"
        )));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidState(format!(
            "contact distance {d:e} is not positive"
        )));
    }
    if d >= dhat {
        return Ok((0.0, 0.0, 0.0));
    }
    let r = d - dhat;
    let l = (d / dhat).ln();
    let b = -r * r * l;
    let b1 = -2.0 * r * l - r * r / d;
    let b2 = -2.0 * l - 4.0 * r / d + r * r / (d * d);
    Ok((b, b1, b2))
}

/// Current region of a pair at positions `points`.
pub(crate) fn region_at(kind: PairKind, p: &[Vector3<f64>; 4]) -> PairRegion {
    match kind {
        PairKind::PointTriangle => {
            PairRegion::PointTriangle(closest_point_triangle(&p[0], &p[1], &p[2], &p[3]).1)
        }
        PairKind::EdgeEdge => {
            PairRegion::EdgeEdge(closest_segment_segment(&p[0], &p[1], &p[2], &p[3]).1)
        }
    }
}

/// `kappa A b(d)` of one pair over its 12 vertex coordinates, Hessian
/// optionally projected to PSD.
pub fn barrier_pair(
    pair: &ContactPair,
    x: &[Vector3<f64>],
    dhat: f64,
    kappa: f64,
    project: bool,
) -> Result<(f64, SVector<f64, 12>, SMatrix<f64, 12, 12>)> {
    let p = pair.points(x);
    let region = region_at(pair.kind, &p);
    let (d, gd, hd) = distance_derivatives(&p, region);
    let (b, b1, b2) = barrier(d, dhat)?;
    if b1 == 0.0 && b2 == 0.0 {
        return Ok((0.0, SVector::zeros(), SMatrix::zeros()));
    }
    let w = kappa * pair.area_weight;
    let g = gd * (w * b1);
    let h = (gd * gd.transpose() * b2 + hd * b1) * w;
    Ok((w * b, g, if project { project_psd(&h) } else { h }))
}

/// Value of [`barrier_pair`] without derivatives (bitwise equal).
pub fn barrier_pair_value(
    pair: &ContactPair,
    x: &[Vector3<f64>],
    dhat: f64,
    kappa: f64,
) -> Result<f64> {
    let p = pair.points(x);
    let v = p.map(|q| [q.x, q.y, q.z]);
    let d2 = match region_at(pair.kind, &p) {
        PairRegion::PointTriangle(r) => point_triangle_distance_sq(&v, r),
        PairRegion::EdgeEdge(r) => edge_edge_distance_sq(&v, r),
    };
    let (b, _, _) = barrier(d2.sqrt(), dhat)?;
    Ok(kappa * pair.area_weight * b)
}

/// `kappa sum_k A_k b(d_k)` over the collision-vertex coordinates.
pub fn barrier_total(
    pairs: &[ContactPair],
    x: &[Vector3<f64>],
    dhat: f64,
    kappa: f64,
    project: bool,
) -> Result<EnergyReport> {
    let mut r = EnergyReport::zero(3 * x.len());
    for pair in pairs {
        let (e, g, h) = barrier_pair(pair, x, dhat, kappa, project)?;
        r.add_local(&vertex_dofs(&pair.vertices), e, &g, &h);
    }
    Ok(r)
}
