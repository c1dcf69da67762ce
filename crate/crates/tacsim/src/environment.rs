//! A scene config turned into solver bodies, constraint bookkeeping and
//! tactile sensor state.

use std::path::Path;

use nalgebra::{Isometry3, Vector3};
use tacsim_core::abd::{AffineBody, AffineState, MassSpec};
use tacsim_core::mesh::{load_obj, load_tet_mesh};
use tacsim_core::robot::{compile_action, forward_kinematics, MarkerSpec, RobotModel};
use tacsim_core::solver::{AffineEntry, KinematicConstraints, Scene, SoftBody, SystemState};
use tacsim_core::tactile::{self, CameraSpec, DepthMap, MarkerFlow, MarkerSet};

use crate::config::{resolve, ObjectKind, SceneConfig, Waypoint};
use crate::{AppError, AppResult};

fn invalid(e: impl std::fmt::Display) -> AppError {
    AppError::Validation(e.to_string())
}

#[derive(Debug, Clone)]
pub struct RobotInstance {
    pub name: String,
    pub model: RobotModel,
    pub base: Isometry3<f64>,
    pub q0: Vec<f64>,
    pub waypoints: Vec<Waypoint>,
    /// Affine body index of every link, `None` for links without geometry.
    pub link_affine: Vec<Option<usize>>,
    /// Soft body index of every sensor pad.
    pub sensor_soft: Vec<usize>,
}

impl RobotInstance {
    /// Joint values at `time`, linear between waypoints and held after the
    /// last one.
    pub fn q_at(&self, time: f64) -> Vec<f64> {
        let mut t0 = 0.0;
        let mut q0 = &self.q0;
        for w in &self.waypoints {
            if time <= w.time {
                let s = ((time - t0) / (w.time - t0)).clamp(0.0, 1.0);
                return q0.iter().zip(&w.q).map(|(a, b)| a + s * (b - a)).collect();
            }
            t0 = w.time;
            q0 = &w.q;
        }
        q0.clone()
    }
}

/// Runtime data of one gel pad.
#[derive(Debug, Clone)]
pub struct SensorRuntime {
    /// `robot_sensor`, used for artifact paths.
    pub label: String,
    pub robot: usize,
    pub sensor: usize,
    pub soft: usize,
    pub camera: CameraSpec,
    pub markers: MarkerSet,
}

/// Tactile observation of one pad.
#[derive(Debug, Clone)]
pub struct Observation {
    pub depth: DepthMap,
    pub flow: MarkerFlow,
    /// World-frame points of pixels indented beyond the contact threshold.
    pub contact_cloud: Vec<Vector3<f64>>,
    pub gel_to_world: Isometry3<f64>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub config: SceneConfig,
    pub scene: Scene,
    pub robots: Vec<RobotInstance>,
    pub sensors: Vec<SensorRuntime>,
    pub initial: SystemState,
    /// Constrained DoFs in the order produced by [`Environment::targets_at`].
    pub constraint_dofs: Vec<usize>,
}

fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Environment {
    pub fn build(config: &SceneConfig, base_dir: &Path) -> AppResult<Self> {
        config.validate()?;
        for f in config.referenced_files(base_dir) {
            if !f.is_file() {
                return Err(invalid(format!(
                    "referenced file {} does not exist",
                    f.display()
                )));
            }
        }
        let mut affine = Vec::new();
        let mut soft = Vec::new();
        let mut robots = Vec::new();
        for rc in &config.robots {
            let model = RobotModel::load(resolve(base_dir, &rc.file))
                .map_err(|e| invalid(format!("robot {}: {e}", rc.name)))?;
            if rc.q0.len() != model.num_actuated() {
                return Err(invalid(format!(
                    "robot {}: q0 has {} values, the robot has {} actuated joints",
                    rc.name,
                    rc.q0.len(),
                    model.num_actuated()
                )));
            }
            let mut link_affine = Vec::new();
            for l in 0..model.links.len() {
                match model.link_body(l).map_err(invalid)? {
                    Some(body) => {
                        link_affine.push(Some(affine.len()));
                        affine.push(AffineEntry {
                            name: format!("{}/{}", rc.name, model.links[l].name),
                            body,
                            fixed: false,
                        });
                    }
                    None => link_affine.push(None),
                }
            }
            robots.push(RobotInstance {
                name: rc.name.clone(),
                base: rc.base.to_isometry(),
                q0: rc.q0.clone(),
                waypoints: rc.waypoints.clone(),
                link_affine,
                sensor_soft: Vec::new(),
                model,
            });
        }
        let mut object_slots = Vec::new();
        for o in &config.objects {
            if o.kind == ObjectKind::Affine {
                let mesh = load_obj(resolve(base_dir, o.mesh.as_deref().unwrap_or_default()))
                    .map_err(|e| invalid(format!("object {}: {e}", o.name)))?;
                let mass = match (o.mass, o.density) {
                    (Some(m), _) => MassSpec::Mass(m),
                    (None, Some(d)) => MassSpec::Density(d),
                    (None, None) => unreachable!("validated"),
                };
                let body = AffineBody::new(mesh, mass, o.arap_stiffness)
                    .map_err(|e| invalid(format!("object {}: {e}", o.name)))?;
                object_slots.push(affine.len());
                affine.push(AffineEntry {
                    name: o.name.clone(),
                    body,
                    fixed: o.fixed,
                });
            } else {
                object_slots.push(usize::MAX);
            }
        }
        for r in &mut robots {
            for s in &r.model.sensors {
                r.sensor_soft.push(soft.len());
                let body =
                    SoftBody::new(format!("{}/{}", r.name, s.name), s.tet.clone(), s.material)
                        .map_err(invalid)?;
                soft.push(body);
            }
        }
        for (i, o) in config.objects.iter().enumerate() {
            if o.kind == ObjectKind::Soft {
                let tet =
                    load_tet_mesh(resolve(base_dir, o.tet_mesh.as_deref().unwrap_or_default()))
                        .map_err(|e| invalid(format!("object {}: {e}", o.name)))?;
                let mut body = SoftBody::new(o.name.clone(), tet, o.material.expect("validated"))
                    .map_err(invalid)?;
                body.self_contact = o.self_contact;
                object_slots[i] = soft.len();
                soft.push(body);
            }
        }
        let na = affine.len();
        let mut scene = Scene::new(affine, soft, Vector3::from(config.gravity_at(0.0)));

        // collision filtering: links of one robot never collide with each
        // other, and a pad never collides with the link it is glued to
        for r in &robots {
            let links: Vec<usize> = r.link_affine.iter().flatten().copied().collect();
            for (i, &a) in links.iter().enumerate() {
                for &b in &links[i + 1..] {
                    scene.collision.exclude_body_pair(a, b);
                }
            }
            for (s, mount) in r.model.sensors.iter().enumerate() {
                if let Some(link) = r.link_affine[mount.link] {
                    scene
                        .collision
                        .exclude_body_pair(link, na + r.sensor_soft[s]);
                }
            }
        }
        let body_id = |name: &str| -> Option<usize> {
            if let Some(i) = scene.affine.iter().position(|a| a.name == name) {
                return Some(i);
            }
            scene
                .soft
                .iter()
                .position(|s| s.name == name)
                .map(|j| na + j)
        };
        for [a, b] in &config.exclude {
            let (Some(ia), Some(ib)) = (body_id(a), body_id(b)) else {
                return Err(invalid(format!(
                    "exclude pair [{a}, {b}] names an unknown body"
                )));
            };
            scene.collision.exclude_body_pair(ia, ib);
        }

        // initial state
        let mut y0 = vec![AffineState::identity(); na];
        let mut x0: Vec<Vec<Vector3<f64>>> =
            scene.soft.iter().map(|s| s.tet.vertices.clone()).collect();
        for r in &robots {
            let poses = forward_kinematics(&r.model, &r.base, &r.q0).map_err(invalid)?;
            for (l, slot) in r.link_affine.iter().enumerate() {
                if let Some(b) = slot {
                    y0[*b] = AffineState::from_isometry(&poses[l]);
                }
            }
            for (s, mount) in r.model.sensors.iter().enumerate() {
                let t = mount.world_pose(&poses[mount.link]);
                for p in &mut x0[r.sensor_soft[s]] {
                    *p = t.transform_point(&(*p).into()).coords;
                }
            }
        }
        for (o, &slot) in config.objects.iter().zip(&object_slots) {
            let iso = o.pose.to_isometry();
            match o.kind {
                ObjectKind::Affine => y0[slot] = AffineState::from_isometry(&iso),
                ObjectKind::Soft => {
                    for p in &mut x0[slot] {
                        *p = iso.transform_point(&(*p).into()).coords;
                    }
                }
            }
        }
        let mut initial = scene.initial_state(&y0, &x0).map_err(invalid)?;
        for (o, &slot) in config.objects.iter().zip(&object_slots) {
            let v = Vector3::from(o.velocity);
            match o.kind {
                ObjectKind::Affine if !o.fixed => {
                    initial.v_y[12 * slot..12 * slot + 3].copy_from_slice(v.as_slice())
                }
                ObjectKind::Affine => {}
                ObjectKind::Soft => {
                    for i in scene.soft_vertex_range(slot) {
                        initial.v_x[i] = v;
                    }
                }
            }
        }
        scene
            .check_intersection_free(&initial, config.solver.dhat)
            .map_err(|e| invalid(format!("initial state: {e}")))?;

        // constrained DoFs, matching the layout of targets_at
        let mut constraint_dofs = Vec::new();
        for r in &robots {
            for b in r.link_affine.iter().flatten() {
                constraint_dofs.extend((0..12).map(|k| scene.affine_dof(*b, k)));
            }
            for (s, mount) in r.model.sensors.iter().enumerate() {
                for &v in &mount.attached {
                    constraint_dofs.extend((0..3).map(|k| scene.soft_dof(r.sensor_soft[s], v, k)));
                }
            }
        }

        let mut sensors = Vec::new();
        for (ri, r) in robots.iter().enumerate() {
            for (si, mount) in r.model.sensors.iter().enumerate() {
                let camera = CameraSpec::fit(
                    &mount.tet.vertices,
                    &mount.coated,
                    mount.resolution[0],
                    mount.resolution[1],
                );
                let spec = MarkerSpec {
                    seed: mix_seed(
                        config.seed,
                        mount.markers.seed ^ ((ri as u64) << 32 | si as u64),
                    ),
                    ..mount.markers
                };
                let markers =
                    tactile::place_markers(&mount.coated, &mount.tet.vertices, &camera, &spec)
                        .map_err(invalid)?;
                sensors.push(SensorRuntime {
                    label: format!("{}_{}", r.name, mount.name),
                    robot: ri,
                    sensor: si,
                    soft: r.sensor_soft[si],
                    camera,
                    markers,
                });
            }
        }

        Ok(Self {
            config: config.clone(),
            scene,
            robots,
            sensors,
            initial,
            constraint_dofs,
        })
    }

    /// Constraint targets at `time`, aligned with `constraint_dofs`.
    pub fn targets_at(&self, time: f64) -> AppResult<Vec<f64>> {
        let mut t = Vec::with_capacity(self.constraint_dofs.len());
        for r in &self.robots {
            let action = compile_action(&r.model, &r.base, &r.q_at(time)).map_err(invalid)?;
            for (_, state) in &action.links {
                t.extend_from_slice(state.to_vec().as_slice());
            }
            for pts in &action.attached {
                t.extend(pts.iter().flat_map(|p| [p.x, p.y, p.z]));
            }
        }
        Ok(t)
    }

    pub fn constraints_at(&self, time: f64) -> AppResult<KinematicConstraints> {
        KinematicConstraints::new(self.constraint_dofs.clone(), self.targets_at(time)?)
            .map_err(invalid)
    }

    pub fn gravity_at(&self, time: f64) -> Vector3<f64> {
        Vector3::from(self.config.gravity_at(time))
    }

    /// Commanded gel frame of a sensor at `time`.
    pub fn gel_pose(&self, sensor: usize, time: f64) -> AppResult<Isometry3<f64>> {
        let s = &self.sensors[sensor];
        let r = &self.robots[s.robot];
        let poses = forward_kinematics(&r.model, &r.base, &r.q_at(time)).map_err(invalid)?;
        let mount = &r.model.sensors[s.sensor];
        Ok(mount.world_pose(&poses[mount.link]))
    }

    pub fn observe(&self, sensor: usize, state: &SystemState) -> AppResult<Observation> {
        let s = &self.sensors[sensor];
        let mount = &self.robots[s.robot].model.sensors[s.sensor];
        let gel_to_world = self.gel_pose(sensor, state.time)?;
        // displacement from the rest pad carried by the commanded frame, so
        // an undeformed pad reads exactly zero
        let rest = &self.scene.soft[s.soft].tet.vertices;
        let local: Vec<Vector3<f64>> = self
            .scene
            .soft_positions(state, s.soft)
            .iter()
            .zip(rest)
            .map(|(p, r)| {
                let placed = gel_to_world.transform_point(&(*r).into()).coords;
                r + gel_to_world
                    .rotation
                    .inverse_transform_vector(&(p - placed))
            })
            .collect();
        let depth = tactile::render_depth(&mount.coated, &mount.tet.vertices, &local, &s.camera)
            .map_err(invalid)?;
        let flow = tactile::track_markers(&s.markers, &mount.coated, &local, &s.camera);
        let threshold = self.config.output.contact_threshold;
        let mut masked = depth.clone();
        for i in 0..masked.valid.len() {
            masked.valid[i] &= masked.depth[i] > threshold;
        }
        let contact_cloud = tactile::depth_pointcloud(&masked, &gel_to_world);
        Ok(Observation {
            depth,
            flow,
            contact_cloud,
            gel_to_world,
        })
    }

    /// Every tactile artifact of one frame as `(relative path, bytes)`.
    pub fn render_frame(&self, state: &SystemState) -> AppResult<Vec<(String, Vec<u8>)>> {
        let out = &self.config.output;
        let step = state.step;
        let mut files = Vec::new();
        for (i, s) in self.sensors.iter().enumerate() {
            let obs = self.observe(i, state)?;
            let dir = format!("frames/{}", s.label);
            if out.depth {
                files.push((
                    format!("{dir}/depth_{step:05}.pfm"),
                    tactile::write_depth_pfm(&obs.depth),
                ));
                let mut side = tactile::depth_sidecar(&obs.depth);
                side["step"] = step.into();
                side["time"] = state.time.into();
                files.push((format!("{dir}/depth_{step:05}.json"), to_pretty(&side)));
            }
            if out.normals {
                files.push((
                    format!("{dir}/normal_{step:05}.pfm"),
                    tactile::write_normal_pfm(&obs.depth),
                ));
            }
            if out.markers {
                let csv = tactile::write_marker_csv(&s.markers, &obs.flow);
                files.push((format!("{dir}/markers_{step:05}.csv"), csv.into_bytes()));
            }
            if out.pointcloud {
                files.push((
                    format!("{dir}/contact_{step:05}.ply"),
                    tactile::write_ply(&obs.contact_cloud).into_bytes(),
                ));
            }
            if out.preview {
                let img = tactile::lambertian_preview(&obs.depth, &Vector3::new(0.5, 0.5, 1.0));
                files.push((format!("{dir}/preview_{step:05}.pgm"), img));
            }
        }
        Ok(files)
    }
}

pub(crate) fn to_pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}
