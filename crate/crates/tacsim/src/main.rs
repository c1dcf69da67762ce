use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tacsim::config::{BatchSpec, SceneConfig};
use tacsim::demos::{run_demo, DEMOS};
use tacsim::run::{run_batch, run_scenario, RunOptions};
use tacsim::{AppError, AppResult, Environment};

#[derive(Parser)]
#[command(name = "tacsim", version, about = "Tactile robot simulation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scene config.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "tacsim_out")]
        out: PathBuf,
        /// Override the number of steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Accepted for symmetry with `batch`; a single scene runs on one thread.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a batch of environments on a worker pool.
    Batch {
        batch: PathBuf,
        #[arg(long, default_value = "tacsim_batch")]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Override the worker count of the batch file.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scene config and its referenced files without stepping.
    Validate { config: PathBuf },
    /// Run a built-in scenario with its self-checks.
    Demo {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(DEMOS))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parent(p: &Path) -> PathBuf {
    p.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(cmd: Command) -> AppResult<()> {
    match cmd {
        Command::Run {
            config,
            out,
            steps,
            workers: _,
            seed,
        } => {
            let mut c = SceneConfig::load(&config)?;
            if let Some(n) = steps {
                c.steps = n;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            let opts = RunOptions {
                out_dir: Some(out.clone()),
                keep_states: false,
            };
            let r = run_scenario(&c, &parent(&config), &opts)?;
            println!(
                "{} steps in {:.2} s ({:.1} steps/s), output in {}",
                r.stats.len(),
                r.wall_time,
                r.stats.len() as f64 / r.wall_time.max(1e-9),
                out.display()
            );
            Ok(())
        }
        Command::Batch {
            batch,
            out,
            steps,
            workers,
            seed,
        } => {
            let spec = BatchSpec::load(&batch)?;
            let mut envs = spec.resolve(&parent(&batch))?;
            for e in &mut envs {
                if let Some(n) = steps {
                    e.config.steps = n;
                }
                if let Some(s) = seed {
                    e.config.seed = s;
                }
            }
            let (results, report) =
                run_batch(&envs, workers.unwrap_or(spec.workers), Some(&out), false);
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            let path = out.join("report.json");
            std::fs::create_dir_all(&out)
                .map_err(|e| AppError::Io(format!("{}: {e}", out.display())))?;
            std::fs::write(&path, format!("{text}\n"))
                .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
            println!(
                "{} environments, {} failed, {:.1} steps/s",
                report.environments.len(),
                report.failures(),
                report.steps_per_second
            );
            // the first failure decides the exit code
            match results.into_iter().find_map(Result::err) {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Validate { config } => {
            let c = SceneConfig::load(&config)?;
            let env = Environment::build(&c, &parent(&config))?;
            println!(
                "ok: {} affine bodies, {} soft bodies, {} DoFs, {} constrained",
                env.scene.affine.len(),
                env.scene.soft.len(),
                env.scene.num_dofs(),
                env.constraint_dofs.len()
            );
            Ok(())
        }
        Command::Demo { name, out } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("tacsim_demo").join(&name));
            let outcome = run_demo(&name, &dir)?;
            for c in &outcome.checks {
                println!(
                    "[{}] {}: measured {:e}, expected {:e} (tolerance {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.measured,
                    c.expected,
                    c.tolerance
                );
            }
            if outcome.passed() {
                Ok(())
            } else {
                Err(AppError::Assertion(format!(
                    "{name}: see {}",
                    dir.join("checks.json").display()
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
