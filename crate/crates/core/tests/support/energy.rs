//! Central finite-difference checks of the energy terms over random states.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use tacsim_core::abd::{affine_inertia, arap_energy, AffineBody, AffineState, MassSpec};
use tacsim_core::contact::{build_candidates, BodySurface, CollisionMesh, ContactPair};
use tacsim_core::energy::{
    barrier_total, friction_total, gravity, inertia_ip, lag_friction, neo_hookean, EnergyReport,
    MaterialParams,
};
use tacsim_core::mesh::primitives::{box_tri_mesh, five_tet_cube};
use tacsim_core::mesh::TriMesh;

use super::{flatten, random_vector, rel_err, rng, unflatten};

pub const STATES: usize = 20;

/// Worst relative errors of the analytic gradient and Hessian-vector product
/// against central differences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FdErrors {
    pub gradient: f64,
    pub hessian_vector: f64,
}

impl FdErrors {
    fn worst(self, o: FdErrors) -> FdErrors {
        FdErrors {
            gradient: self.gradient.max(o.gradient),
            hessian_vector: self.hessian_vector.max(o.hessian_vector),
        }
    }
}

type Eval<'a> = dyn Fn(&[f64]) -> (f64, Vec<f64>, DMatrix<f64>) + 'a;

fn shifted(z: &[f64], dir: &[f64], s: f64) -> Vec<f64> {
    z.iter().zip(dir).map(|(a, b)| a + s * b).collect()
}

/// Compare `eval` at `z` against central differences with step `h` along
/// every coordinate (gradient) and along `dir` (Hessian-vector product).
pub fn fd_check(eval: &Eval, z: &[f64], dir: &[f64], h: f64) -> FdErrors {
    let (_, g, hess) = eval(z);
    let mut g_fd = vec![0.0; z.len()];
    let mut e = vec![0.0; z.len()];
    for i in 0..z.len() {
        e[i] = 1.0;
        g_fd[i] = (eval(&shifted(z, &e, h)).0 - eval(&shifted(z, &e, -h)).0) / (2.0 * h);
        e[i] = 0.0;
    }
    let hv = (&hess * DVector::from_column_slice(dir))
        .as_slice()
        .to_vec();
    let gp = eval(&shifted(z, dir, h)).1;
    let gm = eval(&shifted(z, dir, -h)).1;
    let hv_fd: Vec<f64> = gp
        .iter()
        .zip(&gm)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect();
    FdErrors {
        gradient: rel_err(&g, &g_fd),
        hessian_vector: rel_err(&hv, &hv_fd),
    }
}

fn report(r: EnergyReport) -> (f64, Vec<f64>, DMatrix<f64>) {
    let h = r.hessian.to_dense();
    (r.value, r.gradient, h)
}

fn direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    Rotation3::new(random_vector(rng, std::f64::consts::PI))
}

/// Lumped inertia of soft vertices and reduced inertia of an affine body.
pub fn inertia(seed: u64) -> FdErrors {
    let mut rng = rng(seed);
    let body = AffineBody::new(
        box_tri_mesh(Vector3::new(0.02, 0.03, 0.01)).unwrap(),
        MassSpec::Mass(0.2),
        1e5,
    )
    .unwrap();
    let mut worst = FdErrors::default();
    for _ in 0..STATES {
        let n = 6;
        let x_prev: Vec<_> = (0..n).map(|_| random_vector(&mut rng, 1e-2)).collect();
        let v_prev: Vec<_> = (0..n).map(|_| random_vector(&mut rng, 0.1)).collect();
        let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1e-2)).collect();
        let dt = rng.gen_range(1e-3..1e-2);
        let x: Vec<_> = x_prev
            .iter()
            .map(|p| p + random_vector(&mut rng, 1e-3))
            .collect();
        let eval =
            |z: &[f64]| report(inertia_ip(&unflatten(z), &x_prev, &v_prev, &masses, dt).unwrap());
        let dir = direction(&mut rng, 3 * n);
        worst = worst.worst(fd_check(&eval, &flatten(&x), &dir, 1e-6));

        let y_hat = nalgebra::SVector::<f64, 12>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let y0: Vec<f64> = (0..12)
            .map(|i| y_hat[i] + rng.gen_range(-0.1..0.1))
            .collect();
        let eval = |z: &[f64]| {
            let (v, g, h) = affine_inertia(
                &nalgebra::SVector::from_column_slice(z),
                &y_hat,
                &body.reduced_mass,
            );
            (
                v,
                g.as_slice().to_vec(),
                DMatrix::from_column_slice(12, 12, h.as_slice()),
            )
        };
        let dir = direction(&mut rng, 12);
        worst = worst.worst(fd_check(&eval, &y0, &dir, 1e-6));
    }
    worst
}

/// Stable Neo-Hookean energy of a randomly deformed five-tet cube.
pub fn neo_hookean_energy(seed: u64) -> FdErrors {
    let mut rng = rng(seed);
    let side = 0.01;
    let tet = five_tet_cube(side).unwrap();
    let mut worst = FdErrors::default();
    let mut done = 0;
    while done < STATES {
        let material = MaterialParams {
            youngs_modulus: rng.gen_range(1e4..1e6),
            poisson_ratio: rng.gen_range(0.1..0.48),
            density: 1000.0,
        };
        let rot = random_rotation(&mut rng);
        let x: Vec<_> = tet
            .vertices
            .iter()
            .map(|p| rot * (p + random_vector(&mut rng, 0.2 * side)))
            .collect();
        let inverted = tet.tets.iter().any(|t| {
            let e = tacsim_core::mesh::edge_matrix(&x, t);
            e.determinant() <= 0.05 * side.powi(3)
        });
        if inverted {
            continue;
        }
        let eval = |z: &[f64]| report(neo_hookean(&tet, &unflatten(z), &material, false).unwrap());
        let dir = direction(&mut rng, x.len() * 3);
        worst = worst.worst(fd_check(&eval, &flatten(&x), &dir, 1e-7));
        done += 1;
    }
    worst
}

/// ARAP orthogonality energy of a random affine state.
pub fn arap(seed: u64) -> FdErrors {
    let mut rng = rng(seed);
    let mut worst = FdErrors::default();
    for _ in 0..STATES {
        let kappa = 10f64.powf(rng.gen_range(4.0..8.0));
        let volume = rng.gen_range(1e-7..1e-5);
        let y0: Vec<f64> = (0..12)
            .map(|i| {
                let id = if i >= 3 && (i - 3) % 4 == 0 { 1.0 } else { 0.0 };
                id + rng.gen_range(-0.3..0.3)
            })
            .collect();
        let eval = |z: &[f64]| {
            let (v, g, h) = arap_energy(&AffineState::from_slice(z), kappa, volume, false);
            (
                v,
                g.as_slice().to_vec(),
                DMatrix::from_column_slice(12, 12, h.as_slice()),
            )
        };
        let dir = direction(&mut rng, 12);
        worst = worst.worst(fd_check(&eval, &y0, &dir, 1e-6));
    }
    worst
}

/// Gravity potential of soft vertices and of an affine body.
pub fn gravity_energy(seed: u64) -> FdErrors {
    let mut rng = rng(seed);
    let body = AffineBody::new(
        box_tri_mesh(Vector3::new(0.02, 0.03, 0.01)).unwrap(),
        MassSpec::Mass(0.2),
        1e5,
    )
    .unwrap();
    let mut worst = FdErrors::default();
    for _ in 0..STATES {
        let g = random_vector(&mut rng, 10.0);
        let n = 5;
        let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1e-2)).collect();
        let x: Vec<_> = (0..n).map(|_| random_vector(&mut rng, 1e-2)).collect();
        let eval = |z: &[f64]| report(gravity(&unflatten(z), &masses, &g));
        let dir = direction(&mut rng, 3 * n);
        worst = worst.worst(fd_check(&eval, &flatten(&x), &dir, 1e-6));

        let f = body.gravity_force(&g);
        let y0: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eval = |z: &[f64]| {
            let v: f64 = -z.iter().zip(f.iter()).map(|(a, b)| a * b).sum::<f64>();
            (v, f.iter().map(|c| -c).collect(), DMatrix::zeros(12, 12))
        };
        let dir = direction(&mut rng, 12);
        worst = worst.worst(fd_check(&eval, &y0, &dir, 1e-6));
    }
    worst
}

/// A static triangle and a small tetrahedron hovering within `dhat` of it,
/// both randomly rotated as a whole. Returns the mesh, positions and the
/// active pairs.
pub fn contact_state(
    rng: &mut ChaCha8Rng,
    dhat: f64,
) -> (CollisionMesh, Vec<Vector3<f64>>, Vec<ContactPair>) {
    let s = 10.0 * dhat;
    let tri = vec![
        Vector3::new(-s, -0.6 * s, 0.0),
        Vector3::new(s, -0.6 * s, 0.0),
        Vector3::new(0.0, s, 0.0),
    ];
    let r = 1.5 * dhat;
    let tet = vec![
        Vector3::new(r, r, r),
        Vector3::new(r, -r, -r),
        Vector3::new(-r, r, -r),
        Vector3::new(-r, -r, r),
    ];
    let tet_faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    let bodies = [
        BodySurface {
            mesh: TriMesh::new(tri.clone(), vec![[0, 1, 2]]).unwrap(),
            is_static: true,
            self_contact: false,
        },
        BodySurface {
            mesh: TriMesh::new(tet.clone(), tet_faces).unwrap(),
            is_static: false,
            self_contact: false,
        },
    ];
    let mesh = CollisionMesh::new(&bodies);
    loop {
        let rot = random_rotation(rng);
        let mut moved: Vec<_> = tet.iter().map(|p| rot * p).collect();
        let low = moved.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let offset = Vector3::new(
            rng.gen_range(-0.9..0.9) * s,
            rng.gen_range(-0.8..0.9) * s,
            rng.gen_range(0.2..0.8) * dhat - low,
        );
        for p in &mut moved {
            *p += offset;
        }
        let world = random_rotation(rng);
        let x: Vec<_> = tri.iter().chain(&moved).map(|p| world * p).collect();
        let pairs = build_candidates(&mesh, &x, dhat).unwrap();
        // skip states with nothing in range or a pair hugging dhat
        if pairs.is_empty()
            || pairs
                .iter()
                .any(|p| p.distance < 0.05 * dhat || p.distance > 0.98 * dhat)
        {
            continue;
        }
        return (mesh, x, pairs);
    }
}

/// Log-barrier total over random near-contact states.
pub fn barrier_energy(seed: u64) -> FdErrors {
    let mut rng = rng(seed);
    let dhat = 1e-3;
    let mut worst = FdErrors::default();
    for _ in 0..STATES {
        let kappa = 10f64.powf(rng.gen_range(3.0..9.0));
        let (_, x, pairs) = contact_state(&mut rng, dhat);
        let eval =
            |z: &[f64]| report(barrier_total(&pairs, &unflatten(z), dhat, kappa, false).unwrap());
        let dir = direction(&mut rng, 3 * x.len());
        worst = worst.worst(fd_check(&eval, &flatten(&x), &dir, 1e-9));
    }
    worst
}

/// Lagged friction total with tangential slips both inside and beyond the
/// smoothing radius.
pub fn friction_energy(seed: u64) -> FdErrors {
    let mut rng = rng(seed);
    let dhat = 1e-3;
    let (mu, eps_v, dt) = (0.5, 1e-3, 0.01);
    let eps = eps_v * dt;
    let mut worst = FdErrors::default();
    for _ in 0..STATES {
        let kappa = 10f64.powf(rng.gen_range(3.0..9.0));
        let (_, x_prev, mut pairs) = contact_state(&mut rng, dhat);
        lag_friction(&mut pairs, dhat, kappa).unwrap();
        let slip = random_vector(&mut rng, 1.0).normalize() * rng.gen_range(0.1..3.0) * eps;
        let x: Vec<_> = x_prev
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i < 3 {
                    *p
                } else {
                    p + slip + random_vector(&mut rng, 0.05 * eps)
                }
            })
            .collect();
        let eval = |z: &[f64]| {
            report(friction_total(
                &pairs,
                &unflatten(z),
                &x_prev,
                mu,
                eps_v,
                dt,
            ))
        };
        let dir = direction(&mut rng, 3 * x.len());
        worst = worst.worst(fd_check(&eval, &flatten(&x), &dir, 1e-10));
    }
    worst
}

/// Every term with its own seed, in report order.
pub fn all_terms() -> Vec<(&'static str, FdErrors)> {
    vec![
        ("inertia", inertia(1)),
        ("neo_hookean", neo_hookean_energy(2)),
        ("arap", arap(3)),
        ("barrier", barrier_energy(4)),
        ("friction", friction_energy(5)),
        ("gravity", gravity_energy(6)),
    ]
}
