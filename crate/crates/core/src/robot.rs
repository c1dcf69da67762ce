//! Kinematic robots: serial/tree chains of fixed, revolute and prismatic
//! joints whose links are affine bodies, with gel pads mounted on links.
//! Joint-space targets compile into kinematic constraint targets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::abd::{AffineBody, AffineState, MassSpec, DEFAULT_ARAP_STIFFNESS};
use crate::energy::MaterialParams;
use crate::math::Pose;
use crate::mesh::{
    load_face_set, load_index_set, load_obj, load_tet_mesh, primitives, surface_of, TetMesh,
    TriMesh,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointType {
    Fixed,
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDesc {
    pub name: String,
    /// OBJ surface in the link frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    /// Box extents centered on the link frame, instead of `mesh`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_size: Option<[f64; 3]>,
    /// kg
    #[serde(default = "default_link_mass")]
    pub mass: f64,
}

fn default_link_mass() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDesc {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "type")]
    pub kind: JointType,
    pub parent: String,
    pub child: String,
    #[serde(default)]
    pub origin: Pose,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    /// `[lower, upper]` in rad or m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    /// Grid columns and rows over the coated region.
    pub grid: [usize; 2],
    /// Jitter as a fraction of the grid spacing.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        Self {
            grid: [7, 9],
            jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorDesc {
    #[serde(default)]
    pub name: String,
    pub link: String,
    /// Gel frame expressed in the link frame.
    #[serde(default)]
    pub transform: Pose,
    pub tet_mesh: String,
    pub attached_vertex_set: String,
    pub coated_face_set: String,
    pub material: MaterialParams,
    #[serde(default)]
    pub markers: MarkerSpec,
    /// Image size `[width, height]` in pixels.
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
}

fn default_resolution() -> [usize; 2] {
    [320, 240]
}

/// Robot description document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDesc {
    #[serde(default)]
    pub name: String,
    pub links: Vec<LinkDesc>,
    #[serde(default)]
    pub joints: Vec<JointDesc>,
    #[serde(default)]
    pub sensors: Vec<SensorDesc>,
}

#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    /// `None` for links without geometry.
    pub surface: Option<TriMesh>,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct Joint {
    pub name: String,
    pub kind: JointType,
    pub parent: usize,
    pub child: usize,
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
    pub limits: Option<(f64, f64)>,
}

impl Joint {
    fn motion(&self, q: f64) -> Isometry3<f64> {
        match self.kind {
            JointType::Fixed => Isometry3::identity(),
            JointType::Revolute => Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&self.axis, q),
            ),
            JointType::Prismatic => {
                Isometry3::translation(self.axis.x * q, self.axis.y * q, self.axis.z * q)
            }
        }
    }
}

/// Gel pad mounted on a link.
#[derive(Debug, Clone)]
pub struct SensorMount {
    pub name: String,
    pub link: usize,
    /// Gel frame in the link frame.
    pub transform: Isometry3<f64>,
    /// Rest mesh in the gel frame.
    pub tet: TetMesh,
    /// Volume vertex indices rigidly attached to the link.
    pub attached: Vec<usize>,
    /// Coated boundary faces (volume vertex indices, outward oriented).
    pub coated: Vec<[usize; 3]>,
    pub material: MaterialParams,
    pub markers: MarkerSpec,
    pub resolution: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    pub sensors: Vec<SensorMount>,
    pub root: usize,
    /// Joint indices in root-to-leaf order.
    order: Vec<usize>,
    /// Revolute and prismatic joints, in description order; `q` follows it.
    actuated: Vec<usize>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl RobotModel {
    /// Load a robot document; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: RobotDesc = serde_json::from_str(&text)?;
        Self::from_desc(&desc, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_desc(desc: &RobotDesc, base_dir: &Path) -> Result<Self> {
        let bad = |m: String| Error::Robot(m);
        let mut links = Vec::new();
        let mut names = Vec::new();
        for l in &desc.links {
            if names.contains(&l.name) {
                return Err(bad(format!("duplicate link name {:?}", l.name)));
            }
            names.push(l.name.clone());
            let surface = match (&l.mesh, l.box_size) {
                (Some(m), None) => Some(load_obj(resolve(base_dir, m))?),
                (None, Some(b)) => Some(primitives::box_tri_mesh(Vector3::from(b))?),
                (None, None) => None,
                (Some(_), Some(_)) => {
                    return Err(bad(format!("link {:?} has both mesh and box_size", l.name)))
                }
            };
            if !(l.mass > 0.0) {
                return Err(bad(format!("link {:?} mass must be positive", l.name)));
            }
            links.push(Link {
                name: l.name.clone(),
                surface,
                mass: l.mass,
            });
        }
        let find = |n: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Robot(format!("unknown link {n:?}")))
        };
        let mut joints = Vec::new();
        let mut has_parent = vec![false; links.len()];
        for (i, j) in desc.joints.iter().enumerate() {
            let parent = find(&j.parent)?;
            let child = find(&j.child)?;
            if has_parent[child] {
                return Err(bad(format!("link {:?} has two parent joints", j.child)));
            }
            has_parent[child] = true;
            let axis = Vector3::from(j.axis);
            if !(axis.norm() > 1e-12) {
                return Err(bad(format!("joint {i} has a zero axis")));
            }
            let limits = match j.limits {
                Some([lo, hi]) if lo <= hi => Some((lo, hi)),
                Some(l) => return Err(bad(format!("joint {i} limits {l:?} are reversed"))),
                None => None,
            };
            joints.push(Joint {
                name: if j.name.is_empty() {
                    format!("joint{i}")
                } else {
                    j.name.clone()
                },
                kind: j.kind,
                parent,
                child,
                origin: j.origin.to_isometry(),
                axis: Unit::new_normalize(axis),
                limits,
            });
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&l| !has_parent[l]).collect();
        if roots.len() != 1 {
            return Err(bad(format!(
                "expected one root link, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        // breadth-first order from the root; unreachable joints mean a cycle
        let mut order = Vec::new();
        let mut reached = BTreeSet::from([root]);
        let mut frontier = vec![root];
        while let Some(l) = frontier.pop() {
            for (ji, j) in joints.iter().enumerate() {
                if j.parent == l && reached.insert(j.child) {
                    order.push(ji);
                    frontier.push(j.child);
                }
            }
        }
        if order.len() != joints.len() {
            return Err(bad("joint graph is not a tree".into()));
        }
        let actuated = (0..joints.len())
            .filter(|&j| joints[j].kind != JointType::Fixed)
            .collect();

        let mut sensors = Vec::new();
        for (i, s) in desc.sensors.iter().enumerate() {
            let tet = load_tet_mesh(resolve(base_dir, &s.tet_mesh))?;
            let attached = load_index_set(resolve(base_dir, &s.attached_vertex_set))?;
            let coated = load_face_set(resolve(base_dir, &s.coated_face_set))?;
            let mount = SensorMount {
                name: if s.name.is_empty() {
                    format!("sensor{i}")
                } else {
                    s.name.clone()
                },
                link: find(&s.link)?,
                transform: s.transform.to_isometry(),
                tet,
                attached,
                coated,
                material: s.material,
                markers: s.markers,
                resolution: s.resolution,
            };
            mount.validate()?;
            sensors.push(mount);
        }
        Ok(Self {
            name: desc.name.clone(),
            links,
            joints,
            sensors,
            root,
            order,
            actuated,
        })
    }

    pub fn num_actuated(&self) -> usize {
        self.actuated.len()
    }

    pub fn actuated_joints(&self) -> &[usize] {
        &self.actuated
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// Clamp `q` into the joint limits, warning about violations.
    pub fn clamp(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(&self.actuated)
            .map(|(&v, &j)| match self.joints[j].limits {
                Some((lo, hi)) if v < lo || v > hi => {
                    log::warn!(
                        "joint {} value {v} outside [{lo}, {hi}], clamped",
                        self.joints[j].name
                    );
                    v.clamp(lo, hi)
                }
                _ => v,
            })
            .collect()
    }

    /// Affine body for every link with geometry, in the link frame.
    pub fn link_body(&self, link: usize) -> Result<Option<AffineBody>> {
        let l = &self.links[link];
        l.surface
            .as_ref()
            .map(|s| AffineBody::new(s.clone(), MassSpec::Mass(l.mass), DEFAULT_ARAP_STIFFNESS))
            .transpose()
    }
}

impl SensorMount {
    pub fn validate(&self) -> Result<()> {
        let n = self.tet.num_vertices();
        let surface = surface_of(&self.tet);
        let on_surface: BTreeSet<usize> = surface.volume_index.iter().copied().collect();
        let boundary: BTreeSet<[usize; 3]> = surface
            .volume_triangles()
            .into_iter()
            .map(|mut f| {
                f.sort_unstable();
                f
            })
            .collect();
        for &v in &self.attached {
            if v >= n || !on_surface.contains(&v) {
                return Err(Error::Robot(format!(
                    "{}: attached vertex {v} is not on the surface",
                    self.name
                )));
            }
        }
        let attached: BTreeSet<usize> = self.attached.iter().copied().collect();
        if attached.len() != self.attached.len() {
            return Err(Error::Robot(format!(
                "{}: duplicate attached vertex",
                self.name
            )));
        }
        for f in &self.coated {
            let mut key = *f;
            key.sort_unstable();
            if !boundary.contains(&key) {
                return Err(Error::Robot(format!(
                    "{}: coated face {f:?} is not a boundary face",
                    self.name
                )));
            }
            if f.iter().any(|v| attached.contains(v)) {
                return Err(Error::Robot(format!(
                    "{}: coated and attached regions overlap at {f:?}",
                    self.name
                )));
            }
        }
        if self.coated.is_empty() || self.attached.is_empty() {
            return Err(Error::Robot(format!(
                "{}: empty coated or attached region",
                self.name
            )));
        }
        Ok(())
    }

    /// World pose of the gel frame given its link's world pose.
    pub fn world_pose(&self, link_pose: &Isometry3<f64>) -> Isometry3<f64> {
        link_pose * self.transform
    }
}

/// World transform of every link: `T_child = T_parent * origin * motion(q)`,
/// with the root at `base`. Out-of-limit values are clamped.
pub fn forward_kinematics(
    model: &RobotModel,
    base: &Isometry3<f64>,
    q: &[f64],
) -> Result<Vec<Isometry3<f64>>> {
    if q.len() != model.actuated.len() {
        return Err(Error::Robot(format!(
            "expected {} joint values, got {}",
            model.actuated.len(),
            q.len()
        )));
    }
    let q = model.clamp(q);
    let mut joint_q = vec![0.0; model.joints.len()];
    for (v, &j) in q.iter().zip(&model.actuated) {
        joint_q[j] = *v;
    }
    let mut poses = vec![Isometry3::identity(); model.links.len()];
    poses[model.root] = *base;
    for &ji in &model.order {
        let j = &model.joints[ji];
        poses[j.child] = poses[j.parent] * j.origin * j.motion(joint_q[ji]);
    }
    Ok(poses)
}

/// Constraint targets for one joint-space configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionTargets {
    /// Affine state of every link with geometry: `(link, state)`.
    pub links: Vec<(usize, AffineState)>,
    /// World targets of the attached vertices of each sensor, in the order of
    /// `SensorMount::attached`.
    pub attached: Vec<Vec<Vector3<f64>>>,
}

pub fn compile_action(
    model: &RobotModel,
    base: &Isometry3<f64>,
    q_target: &[f64],
) -> Result<ActionTargets> {
    let poses = forward_kinematics(model, base, q_target)?;
    let links = (0..model.links.len())
        .filter(|&l| model.links[l].surface.is_some())
        .map(|l| (l, AffineState::from_isometry(&poses[l])))
        .collect();
    let attached = model
        .sensors
        .iter()
        .map(|s| {
            let t = s.world_pose(&poses[s.link]);
            s.attached
                .iter()
                .map(|&v| t.transform_point(&s.tet.vertices[v].into()).coords)
                .collect()
        })
        .collect();
    Ok(ActionTargets { links, attached })
}

/// Boundary faces of `tet` whose outward normal is within the cone
/// `n . direction >= cos_threshold`, in volume vertex indices.
pub fn select_faces_by_normal(
    tet: &TetMesh,
    direction: &Vector3<f64>,
    cos_threshold: f64,
) -> Vec<[usize; 3]> {
    let dir = direction.normalize();
    surface_of(tet)
        .volume_triangles()
        .into_iter()
        .filter(|f| {
            let (a, b, c) = (tet.vertices[f[0]], tet.vertices[f[1]], tet.vertices[f[2]]);
            (b - a).cross(&(c - a)).normalize().dot(&dir) >= cos_threshold
        })
        .collect()
}

/// Vertices of the faces selected by [`select_faces_by_normal`].
pub fn select_vertices_by_normal(
    tet: &TetMesh,
    direction: &Vector3<f64>,
    cos_threshold: f64,
) -> Vec<usize> {
    let mut v: Vec<usize> = select_faces_by_normal(tet, direction, cos_threshold)
        .into_iter()
        .flatten()
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn one_joint() -> RobotModel {
        let desc = RobotDesc {
            name: "arm".into(),
            links: vec![
                LinkDesc {
                    name: "base".into(),
                    mesh: None,
                    box_size: None,
                    mass: 1.0,
                },
                LinkDesc {
                    name: "tip".into(),
                    mesh: None,
                    box_size: Some([0.1, 0.1, 0.1]),
                    mass: 1.0,
                },
            ],
            joints: vec![JointDesc {
                name: "j".into(),
                kind: JointType::Revolute,
                parent: "base".into(),
                child: "tip".into(),
                origin: Pose::default(),
                axis: [0.0, 0.0, 1.0],
                limits: Some([-3.0, 3.0]),
            }],
            sensors: vec![],
        };
        RobotModel::from_desc(&desc, Path::new(".")).unwrap()
    }

    #[test]
    fn revolute_quarter_turn_maps_x_to_y() {
        let m = one_joint();
        let poses = forward_kinematics(&m, &Isometry3::identity(), &[FRAC_PI_2]).unwrap();
        let x = poses[1].rotation * Vector3::x();
        assert!((x - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn limits_clamp() {
        let m = one_joint();
        let a = forward_kinematics(&m, &Isometry3::identity(), &[10.0]).unwrap();
        let b = forward_kinematics(&m, &Isometry3::identity(), &[3.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cycles_and_multiple_roots_are_rejected() {
        let mut desc = RobotDesc {
            name: String::new(),
            links: vec![
                LinkDesc {
                    name: "a".into(),
                    mesh: None,
                    box_size: None,
                    mass: 1.0,
                },
                LinkDesc {
                    name: "b".into(),
                    mesh: None,
                    box_size: None,
                    mass: 1.0,
                },
            ],
            joints: vec![],
            sensors: vec![],
        };
        assert!(RobotModel::from_desc(&desc, Path::new(".")).is_err());
        let j = |p: &str, c: &str| JointDesc {
            name: String::new(),
            kind: JointType::Fixed,
            parent: p.into(),
            child: c.into(),
            origin: Pose::default(),
            axis: [0.0, 0.0, 1.0],
            limits: None,
        };
        desc.joints = vec![j("a", "b"), j("b", "a")];
        assert!(RobotModel::from_desc(&desc, Path::new(".")).is_err());
    }

    #[test]
    fn base_translation_moves_every_target() {
        let m = one_joint();
        let a = compile_action(&m, &Isometry3::identity(), &[0.4]).unwrap();
        let b = compile_action(&m, &Isometry3::translation(1.0, 2.0, 3.0), &[0.4]).unwrap();
        let d = b.links[0].1.t - a.links[0].1.t;
        assert!((d - Vector3::new(1.0, 2.0, 3.0)).norm() < 1e-12);
        assert_eq!(a.links[0].1.a, b.links[0].1.a);
    }
}
