//! Closed-form references for affine bodies and serial chains.

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Matrix4, Translation3, UnitQuaternion, Vector3};
use rand::Rng;

use tacsim_core::abd::{embed, AffineBody, AffineState, MassSpec, DEFAULT_ARAP_STIFFNESS};
use tacsim_core::energy::MaterialParams;
use tacsim_core::math::Pose;
use tacsim_core::mesh::primitives::{box_tet_mesh, box_tri_mesh};
use tacsim_core::robot::{
    forward_kinematics, JointDesc, JointType, LinkDesc, RobotDesc, RobotModel,
};
use tacsim_core::solver::{
    contact_forces, step, AffineEntry, KinematicConstraints, Scene, SoftBody, SolverConfig,
};

use super::{random_vector, rng};

/// Largest per-step deviation of a free affine body under gravity from the
/// closed-form backward Euler recurrence `v += dt g, t += dt v`, together
/// with the largest drift of its linear map.
pub fn free_fall(steps: usize) -> (f64, f64) {
    let mut rng = rng(11);
    let g = Vector3::new(0.3, -0.2, -9.81);
    let body = AffineBody::new(
        box_tri_mesh(Vector3::new(0.04, 0.02, 0.03)).unwrap(),
        MassSpec::Density(800.0),
        1e8,
    )
    .unwrap();
    let scene = Scene::new(
        vec![AffineEntry {
            name: "box".into(),
            body,
            fixed: false,
        }],
        vec![],
        g,
    );
    let rot = UnitQuaternion::from_scaled_axis(random_vector(&mut rng, 1.0));
    let start = AffineState::from_isometry(&Isometry3::from_parts(
        Translation3::from(random_vector(&mut rng, 0.1)),
        rot,
    ));
    let mut state = scene.initial_state(&[start], &[]).unwrap();
    let v0 = random_vector(&mut rng, 0.5);
    state.v_y[..3].copy_from_slice(v0.as_slice());
    let config = SolverConfig {
        dt: 0.01,
        newton_tol: 1e-10,
        ..Default::default()
    };
    let mut c = KinematicConstraints::default();
    let (mut t, mut v) = (start.t, v0);
    let (mut worst_t, mut worst_a) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        state = step(&scene, &state, &mut c, &config).unwrap().0;
        v += g * config.dt;
        t += v * config.dt;
        let s = state.affine_state(0);
        worst_t = worst_t.max((s.t - t).amax());
        worst_a = worst_a.max((s.a - start.a).amax());
    }
    (worst_t, worst_a)
}

/// Relative mismatch between the reduced inertia `1/2 dy^T M dy` (and its
/// gradient) and the full-space lumped inertia of the embedded vertices, over
/// random affine states.
pub fn reduced_inertia(trials: usize) -> f64 {
    let mut rng = rng(12);
    let body = AffineBody::new(
        box_tri_mesh(Vector3::new(0.05, 0.03, 0.02)).unwrap(),
        MassSpec::Mass(0.3),
        1e8,
    )
    .unwrap();
    let rest = body.rest_vertices();
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let y: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y_hat: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dy =
            nalgebra::SVector::<f64, 12>::from_iterator(y.iter().zip(&y_hat).map(|(a, b)| a - b));
        let reduced = 0.5 * dy.dot(&(body.reduced_mass * dy));
        let reduced_grad = body.reduced_mass * dy;
        let x = embed(&AffineState::from_slice(&y), rest);
        let x_hat = embed(&AffineState::from_slice(&y_hat), rest);
        let mut full = 0.0;
        let mut grad = nalgebra::SVector::<f64, 12>::zeros();
        for ((p, m), (a, b)) in rest
            .iter()
            .zip(&body.vertex_masses)
            .zip(x.iter().zip(&x_hat))
        {
            let d = a - b;
            full += 0.5 * m * d.norm_squared();
            // J_i^T m d with J_i = [I | I (x) p^T]
            for k in 0..3 {
                grad[k] += m * d[k];
                for l in 0..3 {
                    grad[3 + 3 * k + l] += m * d[k] * p[l];
                }
            }
        }
        worst = worst.max((reduced - full).abs() / full.abs());
        worst = worst.max((reduced_grad - grad).amax() / grad.amax());
    }
    worst
}

fn homogeneous(r: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    h.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    h
}

fn axis_rotation(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// `Rz(yaw) Ry(pitch) Rx(roll)` written out element by element.
fn rpy_matrix(rpy: [f64; 3]) -> Matrix3<f64> {
    let [r, p, y] = rpy;
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, r.cos(), -r.sin(), 0.0, r.sin(), r.cos());
    let ry = Matrix3::new(p.cos(), 0.0, p.sin(), 0.0, 1.0, 0.0, -p.sin(), 0.0, p.cos());
    let rz = Matrix3::new(y.cos(), -y.sin(), 0.0, y.sin(), y.cos(), 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Largest entry-wise deviation of 3-joint (revolute, prismatic, revolute)
/// forward kinematics from the product of homogeneous transforms.
pub fn fk_chain(trials: usize) -> f64 {
    let mut rng = rng(13);
    let kinds = [
        JointType::Revolute,
        JointType::Prismatic,
        JointType::Revolute,
    ];
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let names = ["base", "l1", "l2", "l3"];
        let links = names
            .iter()
            .map(|n| LinkDesc {
                name: n.to_string(),
                mesh: None,
                box_size: None,
                mass: 0.1,
            })
            .collect();
        let mut joints = Vec::new();
        let mut specs = Vec::new();
        for (i, kind) in kinds.iter().enumerate() {
            let xyz = random_vector(&mut rng, 0.2);
            let rpy = random_vector(&mut rng, 1.5);
            let axis = random_vector(&mut rng, 1.0);
            let origin = Pose::new([xyz.x, xyz.y, xyz.z], [rpy.x, rpy.y, rpy.z]);
            joints.push(JointDesc {
                name: format!("j{i}"),
                kind: *kind,
                parent: names[i].into(),
                child: names[i + 1].into(),
                origin,
                axis: [axis.x, axis.y, axis.z],
                limits: None,
            });
            specs.push((xyz, [rpy.x, rpy.y, rpy.z], axis));
        }
        let desc = RobotDesc {
            name: "chain".into(),
            links,
            joints,
            sensors: vec![],
        };
        let model = RobotModel::from_desc(&desc, Path::new(".")).unwrap();
        let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base_t = random_vector(&mut rng, 0.5);
        let base_rpy = random_vector(&mut rng, 1.0);
        let base = Pose::new(
            [base_t.x, base_t.y, base_t.z],
            [base_rpy.x, base_rpy.y, base_rpy.z],
        )
        .to_isometry();
        let poses = forward_kinematics(&model, &base, &q).unwrap();

        let mut h = homogeneous(&rpy_matrix([base_rpy.x, base_rpy.y, base_rpy.z]), &base_t);
        for (i, (xyz, rpy, axis)) in specs.iter().enumerate() {
            h *= homogeneous(&rpy_matrix(*rpy), xyz);
            h *= match kinds[i] {
                JointType::Revolute => homogeneous(&axis_rotation(axis, q[i]), &Vector3::zeros()),
                JointType::Prismatic => {
                    homogeneous(&Matrix3::identity(), &(axis.normalize() * q[i]))
                }
                JointType::Fixed => Matrix4::identity(),
            };
            let link = model.link_index(names[i + 1]).unwrap();
            worst = worst.max((poses[link].to_homogeneous() - h).amax());
        }
    }
    worst
}

/// Settle a soft cube on a fixed plate and return the summed upward contact
/// force on the cube and its weight (N).
pub fn cube_on_plate(steps: usize) -> (f64, f64) {
    let side = 0.02;
    let dhat = 1e-4;
    let tet = box_tet_mesh(Vector3::repeat(side), [3, 3, 3]).unwrap();
    let material = MaterialParams {
        youngs_modulus: 1e5,
        poisson_ratio: 0.3,
        density: 1000.0,
    };
    let cube = SoftBody::new("cube", tet, material).unwrap();
    let weight = cube.masses.iter().sum::<f64>() * 9.81;
    let plate = AffineEntry {
        name: "plate".into(),
        body: AffineBody::new(
            box_tri_mesh(Vector3::new(0.1, 0.1, 0.01)).unwrap(),
            MassSpec::Mass(1.0),
            DEFAULT_ARAP_STIFFNESS,
        )
        .unwrap(),
        fixed: true,
    };
    let scene = Scene::new(
        vec![plate],
        vec![cube.clone()],
        Vector3::new(0.0, 0.0, -9.81),
    );
    let lift = 0.005 + 0.5 * side + 0.5 * dhat;
    let x0: Vec<_> = cube
        .tet
        .vertices
        .iter()
        .map(|p| p + Vector3::new(0.0, 0.0, lift))
        .collect();
    let mut state = scene
        .initial_state(&[AffineState::identity()], &[x0])
        .unwrap();
    let config = SolverConfig {
        dt: 0.01,
        dhat,
        kappa: 1e6,
        ..Default::default()
    };
    let mut c = KinematicConstraints::default();
    for _ in 0..steps {
        state = step(&scene, &state, &mut c, &config).unwrap().0;
    }
    let f = contact_forces(&scene, &state, &config).unwrap();
    let first_cube_vertex = scene.collision_vertices.len() - cube.surface.mesh.vertices.len();
    let up = f[first_cube_vertex..].iter().map(|v| v.z).sum();
    (up, weight)
}
