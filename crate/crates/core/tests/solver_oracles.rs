mod support;

use nalgebra::Vector3;

use tacsim_core::energy::MaterialParams;
use tacsim_core::mesh::primitives::{box_tet_mesh, five_tet_cube};
use tacsim_core::solver::{
    step, KinematicConstraints, LinearSolver, Scene, SoftBody, SolverConfig,
};

#[test]
fn free_affine_body_follows_backward_euler() {
    let (dt_err, a_err) = support::kinematics::free_fall(50);
    assert!(dt_err < 1e-10, "translation error {dt_err:e}");
    assert!(a_err < 1e-10, "linear map drift {a_err:e}");
}

#[test]
fn reduced_inertia_equals_embedded_inertia() {
    let err = support::kinematics::reduced_inertia(100);
    assert!(err < 1e-9, "relative mismatch {err:e}");
}

fn gel() -> MaterialParams {
    MaterialParams {
        youngs_modulus: 1e5,
        poisson_ratio: 0.4,
        density: 1000.0,
    }
}

#[test]
fn constrained_vertex_tracks_moving_target() {
    let tet = five_tet_cube(0.01).unwrap();
    let body = SoftBody::new("tet", tet.clone(), gel()).unwrap();
    let scene = Scene::new(vec![], vec![body], Vector3::zeros());
    let mut state = scene
        .initial_state(&[], std::slice::from_ref(&tet.vertices))
        .unwrap();
    let config = SolverConfig {
        dt: 0.01,
        newton_tol: 1e-8,
        ..Default::default()
    };
    let dofs: Vec<usize> = (0..3).map(|k| scene.soft_dof(0, 0, k)).collect();
    let mut c = KinematicConstraints::new(dofs.clone(), vec![0.0; 3]).unwrap();
    for i in 1..=20 {
        let target = tet.vertices[0] + Vector3::new(1e-4, -2e-4, 1.5e-4) * i as f64;
        c.set_targets(target.as_slice().to_vec()).unwrap();
        let (next, stats) = step(&scene, &state, &mut c, &config).unwrap();
        assert!(
            stats.constraint_residual < 1e-6,
            "step {i}: residual {:e}",
            stats.constraint_residual
        );
        assert!((next.x[0] - target).amax() < 1e-6);
        state = next;
    }
    // the rest of the tet follows the dragged vertex
    let drag = Vector3::new(1.0, -2.0, 1.5);
    let moved: f64 = state
        .x
        .iter()
        .zip(&tet.vertices)
        .skip(1)
        .map(|(a, b)| (a - b).dot(&drag))
        .sum();
    assert!(moved > 0.0);
}

/// A gel cube hanging from its top face, released from rest so that it
/// sags and swings under gravity.
fn hanging_cube(solver: LinearSolver) -> Vec<Vector3<f64>> {
    let side = 0.02;
    let tet = box_tet_mesh(Vector3::repeat(side), [3, 3, 3]).unwrap();
    let cube = SoftBody::new("cube", tet.clone(), gel()).unwrap();
    let scene = Scene::new(vec![], vec![cube], Vector3::new(2.0, 0.0, -9.81));
    let mut state = scene
        .initial_state(&[], std::slice::from_ref(&tet.vertices))
        .unwrap();
    let top: Vec<usize> = (0..tet.vertices.len())
        .filter(|&v| tet.vertices[v].z > 0.5 * side - 1e-9)
        .collect();
    let dofs: Vec<usize> = top
        .iter()
        .flat_map(|&v| (0..3).map(move |k| (v, k)))
        .map(|(v, k)| scene.soft_dof(0, v, k))
        .collect();
    let targets: Vec<f64> = top
        .iter()
        .flat_map(|&v| tet.vertices[v].iter().copied().collect::<Vec<_>>())
        .collect();
    let mut c = KinematicConstraints::new(dofs, targets).unwrap();
    let config = SolverConfig {
        dt: 0.005,
        newton_tol: 1e-6,
        linear_solver: solver,
        ..Default::default()
    };
    for i in 0..30 {
        let (next, _) = step(&scene, &state, &mut c, &config)
            .unwrap_or_else(|e| panic!("{solver:?} step {i}: {e}"));
        state = next;
    }
    state.x
}

#[test]
fn pcg_and_direct_solves_agree() {
    let direct = hanging_cube(LinearSolver::Direct);
    let pcg = hanging_cube(LinearSolver::Pcg {
        tol: 1e-10,
        max_iters: 2000,
    });
    let diff = direct
        .iter()
        .zip(&pcg)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).amax()));
    assert!(diff < 1e-7, "solvers differ by {diff:e} m");
    // the free bottom face sagged
    let low = direct.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    assert!(low < -0.01, "lowest vertex at {low}");
}
