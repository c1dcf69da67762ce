//! Scenario and batch documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tacsim_core::abd::DEFAULT_ARAP_STIFFNESS;
use tacsim_core::energy::MaterialParams;
use tacsim_core::math::Pose;
use tacsim_core::solver::SolverConfig;

use crate::{AppError, AppResult};

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_maps_every() -> usize {
    5
}

fn default_contact_threshold() -> f64 {
    1e-6
}

fn default_arap() -> f64 {
    DEFAULT_ARAP_STIFFNESS
}

/// Joint-space waypoint reached at `time` (s); motion between waypoints is
/// linear in joint space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub name: String,
    /// Robot description JSON.
    pub file: String,
    #[serde(default)]
    pub base: Pose,
    #[serde(default)]
    pub q0: Vec<f64>,
    #[serde(default)]
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Affine,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub name: String,
    pub kind: ObjectKind,
    /// OBJ surface (affine objects).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
    /// Tetrahedral mesh (soft objects).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tet_mesh: Option<String>,
    /// kg, affine objects; exclusive with `density`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// kg/m^3, affine objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
    /// Soft objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaterialParams>,
    #[serde(default = "default_arap")]
    pub arap_stiffness: f64,
    #[serde(default)]
    pub pose: Pose,
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default)]
    pub fixed: bool,
    #[serde(default)]
    pub self_contact: bool,
}

/// Gravity switched to `gravity` from `time` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GravityPhase {
    pub time: f64,
    pub gravity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Run-log record cadence in steps.
    #[serde(default = "default_one")]
    pub log_every: usize,
    /// Tactile artifact cadence in steps; 0 disables them.
    #[serde(default = "default_maps_every")]
    pub maps_every: usize,
    #[serde(default = "default_true")]
    pub depth: bool,
    #[serde(default = "default_true")]
    pub normals: bool,
    #[serde(default = "default_true")]
    pub markers: bool,
    #[serde(default = "default_true")]
    pub pointcloud: bool,
    /// Shaded preview image (not a calibrated tactile image).
    #[serde(default)]
    pub preview: bool,
    /// State snapshot next to every artifact frame, for replay.
    #[serde(default = "default_true")]
    pub snapshots: bool,
    /// Depth (m) above which a pixel enters the contact point cloud.
    #[serde(default = "default_contact_threshold")]
    pub contact_threshold: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        serde_json::from_value(serde_json::json!({})).expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gravity_schedule: Vec<GravityPhase>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub steps: usize,
    #[serde(default)]
    pub robots: Vec<RobotConfig>,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    /// Body pairs that never collide, by name (`object`, `robot/link` or
    /// `robot/sensor`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<[String; 2]>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

fn invalid(msg: impl Into<String>) -> AppError {
    AppError::Validation(msg.into())
}

impl SceneConfig {
    pub fn from_value(v: Value) -> AppResult<Self> {
        serde_json::from_value(v).map_err(|e| invalid(format!("scene config: {e}")))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        Self::from_value(read_json(path)?)
    }

    /// Structural checks that do not need the referenced files.
    pub fn validate(&self) -> AppResult<()> {
        self.solver.validate().map_err(|e| invalid(e.to_string()))?;
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(invalid("gravity must be finite"));
        }
        let mut last = f64::NEG_INFINITY;
        for p in &self.gravity_schedule {
            if !(p.time > last) || p.gravity.iter().any(|g| !g.is_finite()) {
                return Err(invalid(
                    "gravity schedule must have increasing times and finite values",
                ));
            }
            last = p.time;
        }
        let mut names = Vec::new();
        for r in &self.robots {
            let mut t = 0.0;
            for w in &r.waypoints {
                if !(w.time > t) {
                    return Err(invalid(format!(
                        "robot {}: waypoint times must increase from 0",
                        r.name
                    )));
                }
                if w.q.len() != r.q0.len() {
                    return Err(invalid(format!(
                        "robot {}: waypoint size differs from q0",
                        r.name
                    )));
                }
                t = w.time;
            }
            names.push(r.name.clone());
        }
        for o in &self.objects {
            match o.kind {
                ObjectKind::Affine => {
                    if o.mesh.is_none() || o.tet_mesh.is_some() || o.material.is_some() {
                        return Err(invalid(format!(
                            "affine object {}: needs `mesh` only",
                            o.name
                        )));
                    }
                    if o.mass.is_some() == o.density.is_some() {
                        return Err(invalid(format!(
                            "affine object {}: give exactly one of mass, density",
                            o.name
                        )));
                    }
                    if !(o.arap_stiffness > 0.0) {
                        return Err(invalid(format!(
                            "affine object {}: ARAP stiffness must be positive",
                            o.name
                        )));
                    }
                }
                ObjectKind::Soft => {
                    if o.tet_mesh.is_none() || o.mesh.is_some() || o.material.is_none() {
                        return Err(invalid(format!(
                            "soft object {}: needs `tet_mesh` and `material`",
                            o.name
                        )));
                    }
                    if o.fixed || o.mass.is_some() || o.density.is_some() {
                        return Err(invalid(format!(
                            "soft object {}: mass comes from the material density",
                            o.name
                        )));
                    }
                }
            }
            if o.pose
                .xyz
                .iter()
                .chain(&o.pose.rpy)
                .chain(&o.velocity)
                .any(|v| !v.is_finite())
            {
                return Err(invalid(format!(
                    "object {}: non-finite pose or velocity",
                    o.name
                )));
            }
            names.push(o.name.clone());
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(invalid("robot and object names must be unique"));
        }
        if self.output.log_every == 0 {
            return Err(invalid("output.log_every must be >= 1"));
        }
        Ok(())
    }

    /// Every file the config refers to, resolved against `base_dir`.
    pub fn referenced_files(&self, base_dir: &Path) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = self
            .robots
            .iter()
            .map(|r| resolve(base_dir, &r.file))
            .collect();
        for o in &self.objects {
            files.extend(
                o.mesh
                    .iter()
                    .chain(&o.tet_mesh)
                    .map(|m| resolve(base_dir, m)),
            );
        }
        files
    }

    /// Gravity in effect at `time`.
    pub fn gravity_at(&self, time: f64) -> [f64; 3] {
        // a small slack keeps step times computed as n * dt on the right side
        self.gravity_schedule
            .iter()
            .rev()
            .find(|p| p.time <= time + 1e-9)
            .map_or(self.gravity, |p| p.gravity)
    }
}

pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn read_json(path: &Path) -> AppResult<Value> {
    let text =
        std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// JSON merge patch: objects merge recursively, `null` deletes, anything
/// else replaces.
pub fn merge(target: &mut Value, patch: &Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    t.remove(k);
                } else {
                    merge(t.entry(k.clone()).or_insert(Value::Null), v);
                }
            }
        }
        (t, p) => *t = p.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    #[serde(default)]
    pub name: String,
    /// Merge patch applied to the base scene.
    #[serde(default)]
    pub overrides: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSpec {
    /// Inline scene document or a path to one.
    pub base: Value,
    pub environments: Vec<EnvironmentSpec>,
    #[serde(default = "default_one")]
    pub workers: usize,
}

/// One fully resolved environment of a batch.
#[derive(Debug, Clone)]
pub struct ResolvedEnvironment {
    pub name: String,
    pub config: SceneConfig,
    pub base_dir: PathBuf,
}

impl BatchSpec {
    pub fn load(path: &Path) -> AppResult<Self> {
        serde_json::from_value(read_json(path)?).map_err(|e| invalid(format!("batch spec: {e}")))
    }

    /// Apply every environment's overrides to the base scene. Paths in the
    /// base resolve against its own directory.
    pub fn resolve(&self, batch_dir: &Path) -> AppResult<Vec<ResolvedEnvironment>> {
        if self.environments.is_empty() {
            return Err(invalid("batch needs at least one environment"));
        }
        if self.workers == 0 {
            return Err(invalid("batch workers must be >= 1"));
        }
        let (base, base_dir) = match &self.base {
            Value::String(p) => {
                let path = resolve(batch_dir, p);
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
                (read_json(&path)?, dir)
            }
            Value::Object(_) => (self.base.clone(), batch_dir.to_path_buf()),
            _ => return Err(invalid("batch base must be a scene object or a path")),
        };
        let mut out = Vec::new();
        for (i, env) in self.environments.iter().enumerate() {
            if !(env.overrides.is_null() || env.overrides.is_object()) {
                return Err(invalid(format!(
                    "environment {i}: overrides must be an object"
                )));
            }
            let mut doc = base.clone();
            if !env.overrides.is_null() {
                merge(&mut doc, &env.overrides);
            }
            let mut config = SceneConfig::from_value(doc)
                .map_err(|e| invalid(format!("environment {i}: {e}")))?;
            if let Some(s) = env.seed {
                config.seed = s;
            }
            config.validate()?;
            let name = if env.name.is_empty() {
                format!("env_{i:03}")
            } else {
                env.name.clone()
            };
            out.push(ResolvedEnvironment {
                name,
                config,
                base_dir: base_dir.clone(),
            });
        }
        let mut names: Vec<_> = out.iter().map(|e| e.name.clone()).collect();
        names.sort();
        names.dedup();
        if names.len() != out.len() {
            return Err(invalid("environment names must be unique"));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_patch_semantics() {
        let mut a = json!({"a": 1, "b": {"c": 2, "d": 3}, "e": [1, 2]});
        merge(
            &mut a,
            &json!({"b": {"c": null, "x": 5}, "e": [3], "f": true}),
        );
        assert_eq!(
            a,
            json!({"a": 1, "b": {"d": 3, "x": 5}, "e": [3], "f": true})
        );
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = SceneConfig::from_value(json!({"steps": 3})).unwrap();
        c.validate().unwrap();
        assert_eq!(c.output.maps_every, 5);
        assert_eq!(c.output.log_every, 1);
        assert_eq!(c.gravity, [0.0, 0.0, -9.81]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(SceneConfig::from_value(json!({"steps": 3, "gravty": [0, 0, 0]})).is_err());
    }

    #[test]
    fn waypoints_must_increase() {
        let c = SceneConfig::from_value(json!({
            "steps": 3,
            "robots": [{"name": "r", "file": "r.json", "q0": [0.0],
                        "waypoints": [{"time": 0.2, "q": [1.0]}, {"time": 0.1, "q": [0.0]}]}]
        }))
        .unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn gravity_schedule_switches() {
        let c = SceneConfig::from_value(json!({
            "steps": 1, "gravity": [0, 0, 0],
            "gravity_schedule": [{"time": 0.1, "gravity": [0, 0, -1]}]
        }))
        .unwrap();
        assert_eq!(c.gravity_at(0.05), [0.0, 0.0, 0.0]);
        assert_eq!(c.gravity_at(0.1), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn batch_overrides_apply() {
        let spec = BatchSpec {
            base: json!({"steps": 4}),
            environments: vec![
                EnvironmentSpec {
                    name: String::new(),
                    overrides: json!({"steps": 7}),
                    seed: Some(3),
                },
                EnvironmentSpec {
                    name: String::new(),
                    overrides: Value::Null,
                    seed: None,
                },
            ],
            workers: 2,
        };
        let envs = spec.resolve(Path::new(".")).unwrap();
        assert_eq!(envs[0].config.steps, 7);
        assert_eq!(envs[0].config.seed, 3);
        assert_eq!(envs[1].config.steps, 4);
        assert_eq!(envs[1].name, "env_001");
    }

    #[test]
    fn bad_override_field_is_rejected() {
        let spec = BatchSpec {
            base: json!({"steps": 4}),
            environments: vec![EnvironmentSpec {
                name: String::new(),
                overrides: json!({"stepz": 7}),
                seed: None,
            }],
            workers: 1,
        };
        assert!(spec.resolve(Path::new(".")).is_err());
    }
}
