mod common;

use std::path::Path;

use tacsim::config::SceneConfig;
use tacsim::run::{replay_mismatches, run_batch, run_scenario, RunOptions};
use tacsim::Environment;

fn run_to(path: &Path, out: &Path) {
    let config = SceneConfig::load(path).unwrap();
    let opts = RunOptions {
        out_dir: Some(out.to_path_buf()),
        keep_states: false,
    };
    run_scenario(&config, path.parent().unwrap(), &opts).unwrap();
}

#[test]
fn repeated_runs_are_bitwise_identical_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::short_squeeze(dir.path(), 12, 0.1);
    run_to(&config, &dir.path().join("a"));
    run_to(&config, &dir.path().join("b"));
    let a = common::tree(&dir.path().join("a"));
    let b = common::tree(&dir.path().join("b"));
    assert!(a.keys().any(|k| k.ends_with(".pfm")));
    assert!(a.keys().any(|k| k.ends_with(".csv")));
    assert!(
        common::tree_diff(&a, &b).is_empty(),
        "{:?}",
        common::tree_diff(&a, &b)
    );

    let c = SceneConfig::load(&config).unwrap();
    let env = Environment::build(&c, dir.path()).unwrap();
    assert_eq!(
        replay_mismatches(&env, &dir.path().join("a")).unwrap(),
        Vec::<String>::new()
    );
}

#[test]
fn batch_of_one_matches_a_solo_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::short_squeeze(dir.path(), 10, 0.1);
    let envs = common::resolve(&common::squeeze_batch(&config, 1));
    let (results, _) = run_batch(&envs, 1, Some(&dir.path().join("batch")), false);
    assert!(results[0].is_ok());
    let solo = RunOptions {
        out_dir: Some(dir.path().join("solo")),
        keep_states: false,
    };
    run_scenario(&envs[0].config, &envs[0].base_dir, &solo).unwrap();
    let a = common::tree(&dir.path().join("batch").join(&envs[0].name));
    let b = common::tree(&dir.path().join("solo"));
    assert!(!a.is_empty());
    assert!(
        common::tree_diff(&a, &b).is_empty(),
        "{:?}",
        common::tree_diff(&a, &b)
    );
}

#[test]
fn batch_results_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = common::short_squeeze(dir.path(), 8, 0.1);
    let envs = common::resolve(&common::squeeze_batch(&config, 3));
    let (_, one) = run_batch(&envs, 1, Some(&dir.path().join("w1")), false);
    let (_, three) = run_batch(&envs, 3, Some(&dir.path().join("w3")), false);
    assert_eq!(one.failures() + three.failures(), 0);
    let a = common::tree(&dir.path().join("w1"));
    let b = common::tree(&dir.path().join("w3"));
    assert!(
        common::tree_diff(&a, &b).is_empty(),
        "{:?}",
        common::tree_diff(&a, &b)
    );
    // with one core the pool cannot speed up, but threads must not collapse
    // throughput either
    eprintln!(
        "steps/s: 1 worker {:.1}, 3 workers {:.1}",
        one.steps_per_second, three.steps_per_second
    );
    assert!(three.steps_per_second > 0.5 * one.steps_per_second);
}
