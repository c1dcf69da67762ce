//! Stepping an environment, streaming the run log and tactile artifacts, and
//! running many environments on a worker pool.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tacsim_core::solver::{step, StepStats, SystemState};

use crate::config::{ResolvedEnvironment, SceneConfig};
use crate::environment::{to_pretty, Environment};
use crate::{AppError, AppResult};

/// One run-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub e_total: f64,
    pub e_barrier: f64,
    pub newton_iters: usize,
    /// Smallest pair distance within the barrier range; `null` when no pair
    /// is that close.
    pub min_dist: Option<f64>,
    pub constraint_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for the log, artifacts and snapshots; nothing is written
    /// when `None`.
    pub out_dir: Option<PathBuf>,
    /// Keep every accepted state in the result.
    pub keep_states: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub stats: Vec<StepStats>,
    /// Initial state followed by every accepted state, if requested.
    pub states: Vec<SystemState>,
    pub final_state: SystemState,
    /// Relative paths of the written artifacts.
    pub artifacts: Vec<String>,
    pub wall_time: f64,
}

struct Writer {
    dir: PathBuf,
    log: BufWriter<fs::File>,
}

impl Writer {
    fn new(dir: &Path) -> AppResult<Self> {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
        let path = dir.join("log.jsonl");
        let file = fs::File::create(&path).map_err(|e| AppError::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            log: BufWriter::new(file),
        })
    }

    fn record(&mut self, r: &StepRecord) -> AppResult<()> {
        let line = serde_json::to_string(r).expect("serializable");
        writeln!(self.log, "{line}")
            .and_then(|_| self.log.flush())
            .map_err(|e| AppError::io(&self.dir.join("log.jsonl"), e))
    }

    fn file(&self, rel: &str, bytes: &[u8]) -> AppResult<()> {
        write_file(&self.dir.join(rel), bytes)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

fn snapshot_path(step: usize) -> String {
    format!("states/state_{step:05}.json")
}

fn emit_frame(
    env: &Environment,
    state: &SystemState,
    writer: Option<&Writer>,
    artifacts: &mut Vec<String>,
) -> AppResult<()> {
    let files = env.render_frame(state)?;
    if files.is_empty() {
        return Ok(());
    }
    if let Some(w) = writer {
        for (rel, bytes) in &files {
            w.file(rel, bytes)?;
        }
        if env.config.output.snapshots {
            let snap = serde_json::to_vec(state).expect("serializable");
            w.file(&snapshot_path(state.step), &snap)?;
        }
    }
    artifacts.extend(files.into_iter().map(|f| f.0));
    Ok(())
}

/// Build and run a scene.
pub fn run_scenario(
    config: &SceneConfig,
    base_dir: &Path,
    opts: &RunOptions,
) -> AppResult<RunResult> {
    let mut env = Environment::build(config, base_dir)?;
    run_environment(&mut env, opts)
}

/// Step `env` through `config.steps` steps. Solver failures abort the run;
/// the failing step, the error and the last accepted state are persisted
/// when an output directory is set.
pub fn run_environment(env: &mut Environment, opts: &RunOptions) -> AppResult<RunResult> {
    let start = Instant::now();
    let cfg = env.config.solver;
    let out = env.config.output.clone();
    let mut writer = opts.out_dir.as_deref().map(Writer::new).transpose()?;
    let mut state = env.initial.clone();
    let mut constraints = env.constraints_at(0.0)?;
    let mut result = RunResult {
        records: Vec::new(),
        stats: Vec::new(),
        states: Vec::new(),
        final_state: state.clone(),
        artifacts: Vec::new(),
        wall_time: 0.0,
    };
    if opts.keep_states {
        result.states.push(state.clone());
    }
    if out.maps_every > 0 {
        emit_frame(env, &state, writer.as_ref(), &mut result.artifacts)?;
    }
    for n in 1..=env.config.steps {
        let time = state.time + cfg.dt;
        env.scene.gravity = env.gravity_at(time);
        constraints
            .set_targets(env.targets_at(time)?)
            .map_err(|e| AppError::Validation(e.to_string()))?;
        let (next, stats) = match step(&env.scene, &state, &mut constraints, &cfg) {
            Ok(r) => r,
            Err(source) => {
                if let Some(w) = &writer {
                    let doc = serde_json::json!({
                        "step": n,
                        "error": source.to_string(),
                        "details": format!("{source:?}"),
                        "last_state": snapshot_path(state.step),
                    });
                    w.file("failure.json", &to_pretty(&doc))?;
                    w.file(
                        &snapshot_path(state.step),
                        &serde_json::to_vec(&state).expect("serializable"),
                    )?;
                }
                log::error!("step {n}: {source}");
                return Err(AppError::Solver { step: n, source });
            }
        };
        state = next;
        let record = StepRecord {
            step: n,
            time: state.time,
            e_total: stats.energy,
            e_barrier: stats.barrier_energy,
            newton_iters: stats.newton_iters,
            min_dist: stats.min_distance,
            constraint_residual: stats.constraint_residual,
        };
        if n % out.log_every == 0 {
            if let Some(w) = writer.as_mut() {
                w.record(&record)?;
            }
            result.records.push(record);
        }
        result.stats.push(stats);
        if out.maps_every > 0 && n % out.maps_every == 0 {
            emit_frame(env, &state, writer.as_ref(), &mut result.artifacts)?;
        }
        if opts.keep_states {
            result.states.push(state.clone());
        }
    }
    if let Some(w) = &writer {
        let summary = serde_json::json!({
            "name": env.config.name,
            "steps": env.config.steps,
            "newton_iters": result.stats.iter().map(|s| s.newton_iters).sum::<usize>(),
            "min_dist": result.stats.iter().filter_map(|s| s.min_distance).min_by(f64::total_cmp),
            "max_constraint_residual": result.stats.iter().map(|s| s.constraint_residual).fold(0.0, f64::max),
            "artifacts": result.artifacts.len(),
        });
        w.file("summary.json", &to_pretty(&summary))?;
    }
    result.final_state = state;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Re-render every snapshot in `dir` and list the artifacts whose bytes
/// differ from the files on disk.
pub fn replay_mismatches(env: &Environment, dir: &Path) -> AppResult<Vec<String>> {
    let states = dir.join("states");
    let mut entries: Vec<PathBuf> = fs::read_dir(&states)
        .map_err(|e| AppError::io(&states, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .is_some_and(|n| n.to_string_lossy().starts_with("state_"))
        })
        .collect();
    entries.sort();
    let mut bad = Vec::new();
    for path in entries {
        let bytes = fs::read(&path).map_err(|e| AppError::io(&path, e))?;
        let state: SystemState = serde_json::from_slice(&bytes)
            .map_err(|e| AppError::Validation(format!("{}: {e}", path.display())))?;
        for (rel, data) in env.render_frame(&state)? {
            if fs::read(dir.join(&rel)).ok().as_deref() != Some(&data[..]) {
                bad.push(rel);
            }
        }
    }
    Ok(bad)
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvironmentReport {
    pub name: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatchReport {
    pub workers: usize,
    pub environments: Vec<EnvironmentReport>,
    pub total_steps: usize,
    pub wall_time_s: f64,
    pub steps_per_second: f64,
}

impl BatchReport {
    pub fn failures(&self) -> usize {
        self.environments.iter().filter(|e| !e.ok).count()
    }
}

/// Run every environment on `workers` threads. Each environment writes to
/// `out_dir/<name>`; a failing environment does not stop the others.
pub fn run_batch(
    envs: &[ResolvedEnvironment],
    workers: usize,
    out_dir: Option<&Path>,
    keep_states: bool,
) -> (Vec<AppResult<RunResult>>, BatchReport) {
    let start = Instant::now();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<AppResult<RunResult>>>> =
        Mutex::new((0..envs.len()).map(|_| None).collect());
    let workers = workers.clamp(1, envs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= envs.len() {
                    break;
                }
                let env = &envs[i];
                let opts = RunOptions {
                    out_dir: out_dir.map(|d| d.join(&env.name)),
                    keep_states,
                };
                let r = run_scenario(&env.config, &env.base_dir, &opts);
                if let Err(e) = &r {
                    log::warn!("environment {} failed: {e}", env.name);
                }
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let results: Vec<AppResult<RunResult>> = slots
        .into_inner()
        .expect("no panics while holding the lock")
        .into_iter()
        .map(|r| r.expect("every environment ran"))
        .collect();
    let wall = start.elapsed().as_secs_f64();
    let environments: Vec<EnvironmentReport> = envs
        .iter()
        .zip(&results)
        .map(|(env, r)| match r {
            Ok(res) => EnvironmentReport {
                name: env.name.clone(),
                ok: true,
                error: None,
                steps: res.stats.len(),
                wall_time_s: res.wall_time,
            },
            Err(e) => EnvironmentReport {
                name: env.name.clone(),
                ok: false,
                error: Some(e.to_string()),
                steps: 0,
                wall_time_s: 0.0,
            },
        })
        .collect();
    let total_steps = environments.iter().map(|e| e.steps).sum();
    let report = BatchReport {
        workers,
        environments,
        total_steps,
        wall_time_s: wall,
        steps_per_second: total_steps as f64 / wall.max(1e-9),
    };
    (results, report)
}
