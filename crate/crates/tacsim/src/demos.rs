//! Built-in scenarios. Each demo writes its assets (robot description, pad
//! meshes and index sets, object meshes) and scene configs into an output
//! directory, runs them, and evaluates pass/fail self-checks.
//!
//! Gripper pads use 7 x 7 x 3 nodes (147 per pad), the press pad 13 x 11 x 3.
//! `peg_insert_mini` renders at reduced resolution.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::Serialize;
use serde_json::json;
use tacsim_core::energy::MaterialParams;
use tacsim_core::math::Pose;
use tacsim_core::mesh::primitives::{box_tet_mesh, box_tri_mesh, icosphere};
use tacsim_core::mesh::{
    write_face_set, write_index_set, write_obj, write_tet_mesh, TetMesh, TriMesh,
};
use tacsim_core::robot::{
    select_faces_by_normal, select_vertices_by_normal, JointDesc, JointType, LinkDesc, MarkerSpec,
    RobotDesc, SensorDesc,
};
use tacsim_core::solver::SystemState;

use crate::config::SceneConfig;
use crate::environment::{to_pretty, Environment};
use crate::run::{run_environment, RunOptions, RunResult};
use crate::{AppError, AppResult};

pub const DEMOS: [&str; 4] = [
    "press_test",
    "gripper_squeeze",
    "incline_friction",
    "peg_insert_mini",
];

/// Commanded indentation of the press demo beyond first contact (m).
pub const PRESS_DEPTH: f64 = 1.5e-3;
/// Initial gap between pad and sphere apex in the press demo (m).
pub const PRESS_GAP: f64 = 5e-4;
/// Fraction of the commanded depth allowed as error at the pad center.
pub const PRESS_TOLERANCE: f64 = 0.05;
/// Largest difference between mirrored pad depth maps (m).
pub const MIRROR_TOLERANCE: f64 = 1e-5;
/// Largest deviation of a singular value of an affine map from 1.
pub const SINGULAR_VALUE_TOLERANCE: f64 = 5e-3;
pub const INCLINE_MUS: [f64; 2] = [0.2, 0.5];
/// `tan(theta) / mu` for the stick and slip variants.
pub const INCLINE_RATIOS: [f64; 2] = [0.9, 1.1];
const INCLINE_SETTLE_STEPS: usize = 10;

const PAD_EXTENT: [f64; 3] = [0.024, 0.018, 0.004];
const PAD_DIVISIONS: [usize; 3] = [6, 6, 2];
/// Finer pad for the press: the sphere cap needs elements well below its
/// radius for the center depth to track the commanded depth.
const PRESS_PAD_DIVISIONS: [usize; 3] = [12, 10, 2];

fn gel() -> MaterialParams {
    MaterialParams {
        youngs_modulus: 2e5,
        poisson_ratio: 0.4,
        density: 1100.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `|measured - expected| <= tolerance`.
    fn near(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            expected,
            tolerance,
            passed: (measured - expected).abs() <= tolerance,
        }
    }

    /// Passes when `measured < bound`.
    fn below(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            expected: bound,
            tolerance: 0.0,
            passed: measured < bound,
        }
    }

    /// Passes when `measured > bound`.
    fn above(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            expected: bound,
            tolerance: 0.0,
            passed: measured > bound,
        }
    }
}

/// One run of a demo.
#[derive(Debug)]
pub struct DemoRun {
    pub name: String,
    pub dir: PathBuf,
    pub env: Environment,
    pub result: RunResult,
}

#[derive(Debug)]
pub struct DemoOutcome {
    pub demo: String,
    pub runs: Vec<DemoRun>,
    pub checks: Vec<Check>,
}

impl DemoOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "demo": self.demo, "passed": self.passed(), "checks": self.checks })
    }
}

/// A scene config written to disk plus the directory its paths resolve from.
#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub name: String,
    pub config: SceneConfig,
    pub path: PathBuf,
}

impl DemoConfig {
    pub fn base_dir(&self) -> &Path {
        self.path
            .parent()
            .expect("config files live in a directory")
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> AppResult<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p).map_err(|e| AppError::io(p, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

fn core_err(e: tacsim_core::Error) -> AppError {
    AppError::Validation(e.to_string())
}

fn pose_of(r: Matrix3<f64>, xyz: [f64; 3]) -> Pose {
    let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(r).euler_angles();
    Pose::new(xyz, [roll, pitch, yaw])
}

/// Pad mesh in the gel frame (centered box, coated face at +z, attached face
/// at -z), optionally mirrored across the gel yz plane.
fn pad_mesh(
    divisions: [usize; 3],
    mirror: bool,
) -> AppResult<(TetMesh, Vec<usize>, Vec<[usize; 3]>)> {
    let mut tet = box_tet_mesh(Vector3::from(PAD_EXTENT), divisions).map_err(core_err)?;
    if mirror {
        let vertices = tet
            .vertices
            .iter()
            .map(|p| Vector3::new(-p.x, p.y, p.z))
            .collect();
        let tets = tet.tets.iter().map(|t| [t[0], t[2], t[1], t[3]]).collect();
        tet = TetMesh::new(vertices, tets).map_err(core_err)?;
    }
    let attached = select_vertices_by_normal(&tet, &-Vector3::z(), 0.99);
    let coated = select_faces_by_normal(&tet, &Vector3::z(), 0.99);
    Ok((tet, attached, coated))
}

fn write_pad(dir: &Path, name: &str, divisions: [usize; 3], mirror: bool) -> AppResult<()> {
    let (tet, attached, coated) = pad_mesh(divisions, mirror)?;
    write(&dir.join(format!("{name}.tet")), write_tet_mesh(&tet))?;
    write(
        &dir.join(format!("{name}_attached.txt")),
        write_index_set(&attached),
    )?;
    write(
        &dir.join(format!("{name}_coated.txt")),
        write_face_set(&coated),
    )
}

fn write_mesh(dir: &Path, name: &str, mesh: &TriMesh) -> AppResult<String> {
    let file = format!("{name}.obj");
    write(&dir.join(&file), write_obj(mesh))?;
    Ok(file)
}

fn box_mesh(x: f64, y: f64, z: f64) -> AppResult<TriMesh> {
    box_tri_mesh(Vector3::new(x, y, z)).map_err(core_err)
}

fn sensor(
    name: &str,
    link: &str,
    pad: &str,
    transform: Pose,
    resolution: [usize; 2],
) -> SensorDesc {
    SensorDesc {
        name: name.into(),
        link: link.into(),
        transform,
        tet_mesh: format!("{pad}.tet"),
        attached_vertex_set: format!("{pad}_attached.txt"),
        coated_face_set: format!("{pad}_coated.txt"),
        material: gel(),
        markers: MarkerSpec::default(),
        resolution,
    }
}

fn link(name: &str, box_size: Option<[f64; 3]>, mass: f64) -> LinkDesc {
    LinkDesc {
        name: name.into(),
        mesh: None,
        box_size,
        mass,
    }
}

fn prismatic(name: &str, parent: &str, child: &str, origin: [f64; 3], axis: [f64; 3]) -> JointDesc {
    JointDesc {
        name: name.into(),
        kind: JointType::Prismatic,
        parent: parent.into(),
        child: child.into(),
        origin: Pose::translation(origin),
        axis,
        limits: Some([-0.05, 0.05]),
    }
}

fn write_config(dir: &Path, name: &str, doc: serde_json::Value) -> AppResult<DemoConfig> {
    let config = SceneConfig::from_value(doc)?;
    let path = dir.join(format!("{name}.json"));
    write(
        &path,
        to_pretty(&serde_json::to_value(&config).expect("serializable")),
    )?;
    Ok(DemoConfig {
        name: name.into(),
        config,
        path,
    })
}

const FINGER: [f64; 3] = [0.006, 0.026, 0.036];

/// Parallel gripper: `palm` carries two fingers closing along world x, each
/// with an inward-facing pad. With `lift`, a geometry-free root moves the
/// palm along z. The right pad is the mirror image of the left one.
fn gripper(dir: &Path, opening: f64, lift: bool, resolution: [usize; 2]) -> AppResult<()> {
    write_pad(dir, "pad_left", PAD_DIVISIONS, false)?;
    write_pad(dir, "pad_right", PAD_DIVISIONS, true)?;
    let finger_x = opening + PAD_EXTENT[2] + 0.5 * FINGER[0];
    let finger_z = -(0.005 + 0.001 + 0.5 * FINGER[2]);
    // gel axes (x, y, z) in the finger frame: left pad faces +x, right -x
    let left = Matrix3::from_columns(&[Vector3::y(), Vector3::z(), Vector3::x()]);
    let right = Matrix3::from_columns(&[-Vector3::y(), Vector3::z(), -Vector3::x()]);
    let pad_x = 0.5 * FINGER[0] + 0.5 * PAD_EXTENT[2];
    let mut links = vec![
        link("palm", Some([2.0 * finger_x + 0.02, 0.03, 0.01]), 0.2),
        link("finger_left", Some(FINGER), 0.05),
        link("finger_right", Some(FINGER), 0.05),
    ];
    let mut joints = vec![
        prismatic(
            "left",
            "palm",
            "finger_left",
            [-finger_x, 0.0, finger_z],
            [1.0, 0.0, 0.0],
        ),
        prismatic(
            "right",
            "palm",
            "finger_right",
            [finger_x, 0.0, finger_z],
            [-1.0, 0.0, 0.0],
        ),
    ];
    if lift {
        links.insert(0, link("mount", None, 1.0));
        joints.insert(
            0,
            prismatic("lift", "mount", "palm", [0.0; 3], [0.0, 0.0, 1.0]),
        );
    }
    let desc = RobotDesc {
        name: "gripper".into(),
        links,
        joints,
        sensors: vec![
            sensor(
                "left",
                "finger_left",
                "pad_left",
                pose_of(left, [pad_x, 0.0, 0.0]),
                resolution,
            ),
            sensor(
                "right",
                "finger_right",
                "pad_right",
                pose_of(right, [-pad_x, 0.0, 0.0]),
                resolution,
            ),
        ],
    };
    write(
        &dir.join("gripper.json"),
        to_pretty(&serde_json::to_value(&desc).expect("serializable")),
    )
}

/// Height of the palm frame above the pad centers.
fn palm_above_pads() -> f64 {
    0.005 + 0.001 + 0.5 * FINGER[2]
}

fn output(maps_every: usize) -> serde_json::Value {
    json!({ "log_every": 1, "maps_every": maps_every })
}

pub fn press_test_config(dir: &Path) -> AppResult<Vec<DemoConfig>> {
    let assets = dir.join("assets");
    write_pad(&assets, "pad", PRESS_PAD_DIVISIONS, false)?;
    // the pad hangs under a finger that slides along world z; the gel +z
    // axis points down
    let finger = [0.03, 0.024, 0.006];
    let flip = Matrix3::from_columns(&[Vector3::x(), -Vector3::y(), -Vector3::z()]);
    let pad_z = -0.5 * finger[2] - 0.5 * PAD_EXTENT[2];
    let desc = RobotDesc {
        name: "press".into(),
        links: vec![link("mount", None, 1.0), link("finger", Some(finger), 0.1)],
        joints: vec![prismatic("z", "mount", "finger", [0.0; 3], [0.0, 0.0, 1.0])],
        sensors: vec![sensor(
            "pad",
            "finger",
            "pad",
            pose_of(flip, [0.0, 0.0, pad_z]),
            [160, 120],
        )],
    };
    write(
        &assets.join("press.json"),
        to_pretty(&serde_json::to_value(&desc).expect("serializable")),
    )?;
    let radius = 0.03;
    // one icosphere vertex sits exactly at the south pole; flipping the
    // sphere puts it at the apex under the pad center
    let sphere = write_mesh(&assets, "sphere", &icosphere(radius, 4).map_err(core_err)?)?;
    let coated_z = -pad_z + 0.5 * PAD_EXTENT[2];
    let base_z = radius + PRESS_GAP + coated_z;
    let doc = json!({
        "name": "press_test",
        "steps": 200,
        "solver": { "dt": 0.01, "dhat": 2e-5, "kappa": 1e9, "mu": 0.5, "eps_v": 1e-3 },
        "robots": [{
            "name": "press", "file": "assets/press.json",
            "base": { "xyz": [0.0, 0.0, base_z] },
            "q0": [0.0],
            "waypoints": [{ "time": 1.5, "q": [-(PRESS_GAP + PRESS_DEPTH)] }]
        }],
        "objects": [{
            "name": "sphere", "kind": "affine", "mesh": format!("assets/{sphere}"),
            "mass": 0.05, "fixed": true,
            "pose": { "rpy": [std::f64::consts::PI, 0.0, 0.0] }
        }],
        "output": output(5)
    });
    Ok(vec![write_config(dir, "press_test", doc)?])
}

const SQUEEZE_GAP: f64 = 1e-3;
const SQUEEZE: f64 = 5e-4;
const BAR: [f64; 3] = [0.012, 0.03, 0.03];
/// Pad centers sit this far above the bar center so the fingers clear the
/// table and the palm clears the bar top.
const PAD_RAISE: f64 = 0.004;

pub fn gripper_squeeze_config(dir: &Path) -> AppResult<Vec<DemoConfig>> {
    let assets = dir.join("assets");
    gripper(&assets, 0.5 * BAR[0] + SQUEEZE_GAP, false, [160, 120])?;
    let bar = write_mesh(&assets, "bar", &box_mesh(BAR[0], BAR[1], BAR[2])?)?;
    let table = write_mesh(&assets, "table", &box_mesh(0.1, 0.1, 0.01)?)?;
    let bar_z = 0.5 * BAR[2] + 5e-5;
    let doc = json!({
        "name": "gripper_squeeze",
        "steps": 200,
        "solver": { "dt": 0.01, "dhat": 1e-4, "kappa": 1e9 },
        "robots": [{
            "name": "gripper", "file": "assets/gripper.json",
            "base": { "xyz": [0.0, 0.0, bar_z + PAD_RAISE + palm_above_pads()] },
            "q0": [0.0, 0.0],
            "waypoints": [{ "time": 1.0, "q": [SQUEEZE_GAP + SQUEEZE, SQUEEZE_GAP + SQUEEZE] }]
        }],
        "objects": [
            { "name": "table", "kind": "affine", "mesh": format!("assets/{table}"), "mass": 1.0, "fixed": true,
              "pose": { "xyz": [0.0, 0.0, -0.005] } },
            { "name": "bar", "kind": "affine", "mesh": format!("assets/{bar}"), "density": 1000.0,
              "pose": { "xyz": [0.0, 0.0, bar_z] } }
        ],
        "output": output(5)
    });
    Ok(vec![write_config(dir, "gripper_squeeze", doc)?])
}

pub fn incline_friction_config(dir: &Path) -> AppResult<Vec<DemoConfig>> {
    let assets = dir.join("assets");
    let block = write_mesh(&assets, "block", &box_mesh(0.02, 0.02, 0.01)?)?;
    let plane = write_mesh(&assets, "plane", &box_mesh(0.2, 0.1, 0.01)?)?;
    let mut out = Vec::new();
    for mu in INCLINE_MUS {
        for ratio in INCLINE_RATIOS {
            let theta = (ratio * mu).atan();
            let g = 9.81;
            let name = format!("incline_mu{mu}_ratio{ratio}");
            // the plane stays horizontal and gravity tilts by theta about y
            let doc = json!({
                "name": name,
                "steps": 60,
                "gravity": [0.0, 0.0, -g],
                "gravity_schedule": [{ "time": INCLINE_SETTLE_STEPS as f64 * 0.01,
                                        "gravity": [g * theta.sin(), 0.0, -g * theta.cos()] }],
                "solver": { "dt": 0.01, "dhat": 1e-4, "kappa": 1e6, "mu": mu, "eps_v": 1e-3 },
                "objects": [
                    { "name": "plane", "kind": "affine", "mesh": format!("assets/{plane}"), "mass": 1.0, "fixed": true,
                      "pose": { "xyz": [0.0, 0.0, -0.005] } },
                    { "name": "block", "kind": "affine", "mesh": format!("assets/{block}"), "density": 1000.0,
                      "pose": { "xyz": [0.0, 0.0, 0.005 + 5e-5] } }
                ],
                "output": output(0)
            });
            out.push(write_config(dir, &name, doc)?);
        }
    }
    Ok(out)
}

const PEG: [f64; 3] = [0.01, 0.01, 0.05];
const HOLE: f64 = 0.012;
const HOLE_DEPTH: f64 = 0.02;
const PEG_START: f64 = 0.005;
const INSERT_TRAVEL: f64 = 0.02;

pub fn peg_insert_mini_config(dir: &Path) -> AppResult<Vec<DemoConfig>> {
    let assets = dir.join("assets");
    gripper(&assets, 0.5 * PEG[0] + SQUEEZE_GAP, true, [80, 60])?;
    let peg = write_mesh(&assets, "peg", &box_mesh(PEG[0], PEG[1], PEG[2])?)?;
    let w = 0.06;
    let side = 0.5 * (w - HOLE);
    let wall_x = write_mesh(&assets, "wall_x", &box_mesh(side, w, HOLE_DEPTH)?)?;
    let wall_y = write_mesh(&assets, "wall_y", &box_mesh(HOLE, side, HOLE_DEPTH)?)?;
    let floor = write_mesh(&assets, "floor", &box_mesh(w, w, 0.01)?)?;
    let peg_z = PEG_START + 0.5 * PEG[2];
    let pad_z = PEG_START + PEG[2] - 0.5 * PAD_EXTENT[1] - 0.002;
    let off = 0.5 * HOLE + 0.5 * side;
    let fixed = |name: &str, mesh: &str, xyz: [f64; 3]| {
        json!({ "name": name, "kind": "affine", "mesh": format!("assets/{mesh}"), "mass": 1.0, "fixed": true,
                "pose": { "xyz": xyz } })
    };
    let q_grip = SQUEEZE_GAP + SQUEEZE;
    let doc = json!({
        "name": "peg_insert_mini",
        "steps": 200,
        "gravity": [0.0, 0.0, 0.0],
        "gravity_schedule": [{ "time": 0.6, "gravity": [0.0, 0.0, -9.81] }],
        "solver": { "dt": 0.01, "dhat": 1e-4, "kappa": 1e9, "mu": 0.5, "eps_v": 1e-3 },
        "robots": [{
            "name": "gripper", "file": "assets/gripper.json",
            "base": { "xyz": [0.0, 0.0, pad_z + palm_above_pads()] },
            "q0": [0.0, 0.0, 0.0],
            "waypoints": [
                { "time": 0.5, "q": [0.0, q_grip, q_grip] },
                { "time": 0.6, "q": [0.0, q_grip, q_grip] },
                { "time": 1.8, "q": [-INSERT_TRAVEL, q_grip, q_grip] }
            ]
        }],
        "objects": [
            { "name": "peg", "kind": "affine", "mesh": format!("assets/{peg}"), "density": 1000.0,
              "pose": { "xyz": [0.0, 0.0, peg_z] } },
            fixed("wall_px", &wall_x, [off, 0.0, -0.5 * HOLE_DEPTH]),
            fixed("wall_nx", &wall_x, [-off, 0.0, -0.5 * HOLE_DEPTH]),
            fixed("wall_py", &wall_y, [0.0, off, -0.5 * HOLE_DEPTH]),
            fixed("wall_ny", &wall_y, [0.0, -off, -0.5 * HOLE_DEPTH]),
            fixed("floor", &floor, [0.0, 0.0, -HOLE_DEPTH - 0.005])
        ],
        "output": output(5)
    });
    Ok(vec![write_config(dir, "peg_insert_mini", doc)?])
}

/// Write the assets and configs of a demo into `dir`.
pub fn demo_configs(name: &str, dir: &Path) -> AppResult<Vec<DemoConfig>> {
    match name {
        "press_test" => press_test_config(dir),
        "gripper_squeeze" => gripper_squeeze_config(dir),
        "incline_friction" => incline_friction_config(dir),
        "peg_insert_mini" => peg_insert_mini_config(dir),
        other => Err(AppError::Validation(format!(
            "unknown demo {other:?}; expected one of {}",
            DEMOS.join(", ")
        ))),
    }
}

/// Run a demo end to end: assets and configs go to `dir`, each run writes
/// into `dir/<run name>`.
pub fn run_demo(name: &str, dir: &Path) -> AppResult<DemoOutcome> {
    let configs = demo_configs(name, dir)?;
    let mut runs = Vec::new();
    for c in configs {
        let mut env = Environment::build(&c.config, c.base_dir())?;
        let out = dir.join(format!("run_{}", c.name));
        let opts = RunOptions {
            out_dir: Some(out.clone()),
            keep_states: true,
        };
        let result = run_environment(&mut env, &opts)?;
        runs.push(DemoRun {
            name: c.name,
            dir: out,
            env,
            result,
        });
    }
    let checks = evaluate(name, &runs)?;
    let outcome = DemoOutcome {
        demo: name.into(),
        runs,
        checks,
    };
    write(&dir.join("checks.json"), to_pretty(&outcome.to_json()))?;
    Ok(outcome)
}

/// Checks every demo shares: no touching pairs and converged constraints.
pub fn common_checks(run: &DemoRun) -> Vec<Check> {
    let min = run
        .result
        .stats
        .iter()
        .map(|s| {
            s.min_distance
                .unwrap_or(f64::INFINITY)
                .min(s.min_iterate_distance.unwrap_or(f64::INFINITY))
        })
        .fold(f64::INFINITY, f64::min);
    let residual = run
        .result
        .stats
        .iter()
        .map(|s| s.constraint_residual)
        .fold(0.0, f64::max);
    vec![
        Check::above(format!("{}: min contact distance (m)", run.name), min, 0.0),
        Check::below(
            format!("{}: max constrained-DoF residual", run.name),
            residual,
            run.env.config.solver.constraint_tol,
        ),
    ]
}

fn evaluate(name: &str, runs: &[DemoRun]) -> AppResult<Vec<Check>> {
    let mut checks: Vec<Check> = runs.iter().flat_map(common_checks).collect();
    match name {
        "press_test" => checks.extend(press_checks(&runs[0])?),
        "gripper_squeeze" => checks.extend(squeeze_checks(&runs[0])?),
        "incline_friction" => {
            for r in runs {
                checks.extend(incline_checks(r));
            }
        }
        "peg_insert_mini" => checks.extend(peg_checks(&runs[0])),
        _ => {}
    }
    Ok(checks)
}

/// Largest depth over the 2 x 2 pixel block around the image center.
pub fn center_depth(map: &tacsim_core::tactile::DepthMap) -> f64 {
    let (w, h) = (map.camera.width, map.camera.height);
    let mut d = f64::NEG_INFINITY;
    for v in [h / 2 - 1, h / 2] {
        for u in [w / 2 - 1, w / 2] {
            d = d.max(map.get(u, v).unwrap_or(f64::NEG_INFINITY));
        }
    }
    d
}

fn press_checks(run: &DemoRun) -> AppResult<Vec<Check>> {
    let obs = run.env.observe(0, &run.result.final_state)?;
    let depth = center_depth(&obs.depth);
    Ok(vec![Check::near(
        "press_test: indentation depth at pad center (m)",
        depth,
        PRESS_DEPTH,
        PRESS_TOLERANCE * PRESS_DEPTH,
    )])
}

/// Largest `|left(u, v) - right(W - 1 - u, v)|` over pixels valid in both.
pub fn mirror_difference(env: &Environment, state: &SystemState) -> AppResult<f64> {
    let l = env.observe(0, state)?.depth;
    let r = env.observe(1, state)?.depth;
    let (w, h) = (l.camera.width, l.camera.height);
    let mut worst: f64 = 0.0;
    for v in 0..h {
        for u in 0..w {
            match (l.get(u, v), r.get(w - 1 - u, v)) {
                (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                (None, None) => {}
                _ => return Ok(f64::INFINITY),
            }
        }
    }
    Ok(worst)
}

/// Largest `|sigma_i(A) - 1|` over the free affine bodies and all states.
pub fn max_singular_deviation(env: &Environment, states: &[SystemState]) -> f64 {
    let mut worst: f64 = 0.0;
    for s in states {
        for (b, a) in env.scene.affine.iter().enumerate() {
            if a.fixed {
                continue;
            }
            let sv = s.affine_state(b).a.singular_values();
            worst = sv.iter().fold(worst, |m, x| m.max((x - 1.0).abs()));
        }
    }
    worst
}

fn squeeze_checks(run: &DemoRun) -> AppResult<Vec<Check>> {
    let r = &run.result;
    let mut mirror: f64 = 0.0;
    for s in r
        .states
        .iter()
        .step_by(run.env.config.output.maps_every.max(1))
    {
        mirror = mirror.max(mirror_difference(&run.env, s)?);
    }
    let max_depth = run.env.observe(0, &r.final_state)?.depth.max_depth();
    Ok(vec![
        Check::below(
            "gripper_squeeze: mirrored depth map difference (m)",
            mirror,
            MIRROR_TOLERANCE,
        ),
        Check::above("gripper_squeeze: final indentation (m)", max_depth, 1e-4),
        Check::below(
            "gripper_squeeze: max |singular value - 1| of free affine maps",
            max_singular_deviation(&run.env, &r.states),
            SINGULAR_VALUE_TOLERANCE,
        ),
    ])
}

fn body_index(env: &Environment, name: &str) -> usize {
    env.scene
        .affine
        .iter()
        .position(|a| a.name == name)
        .expect("demo body exists")
}

/// Per-step displacement of the block along the slope after the tilt.
pub fn incline_displacements(run: &DemoRun) -> Vec<f64> {
    let b = body_index(&run.env, "block");
    let xs: Vec<f64> = run
        .result
        .states
        .iter()
        .map(|s| s.affine_state(b).t.x)
        .collect();
    xs.windows(2)
        .skip(INCLINE_SETTLE_STEPS)
        .map(|w| w[1] - w[0])
        .collect()
}

fn incline_checks(run: &DemoRun) -> Vec<Check> {
    let cfg = &run.env.config.solver;
    let bound = 10.0 * cfg.eps_v * cfg.dt;
    let d = incline_displacements(run);
    if run.name.ends_with("ratio0.9") {
        let worst = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        vec![Check::below(
            format!("{}: max per-step displacement (m)", run.name),
            worst,
            bound,
        )]
    } else {
        // sliding must speed up (never slow down beyond roundoff) and leave
        // the stick band
        let decrease = d
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::NEG_INFINITY, f64::max);
        vec![
            Check::below(
                format!("{}: largest per-step slowdown (m)", run.name),
                decrease,
                1e-12,
            ),
            Check::above(
                format!("{}: final per-step displacement (m)", run.name),
                *d.last().unwrap_or(&0.0),
                bound,
            ),
        ]
    }
}

fn peg_checks(run: &DemoRun) -> Vec<Check> {
    let b = body_index(&run.env, "peg");
    let s0 = &run.result.states[0];
    let s1 = &run.result.final_state;
    let drop = s0.affine_state(b).t.z - s1.affine_state(b).t.z;
    let bottom = s1.affine_state(b).t.z - 0.5 * PEG[2];
    vec![
        Check::near("peg_insert_mini: peg travel (m)", drop, INSERT_TRAVEL, 2e-3),
        Check::below(
            "peg_insert_mini: peg bottom below hole top (m)",
            bottom,
            PEG_START - INSERT_TRAVEL + 2e-3,
        ),
    ]
}
