//! End-to-end tests of the `fairgrid` binary: exit codes, stdout, and the
//! files a run leaves behind.

use std::path::Path;
use std::process::{Command, Output};

fn fairgrid(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fairgrid"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn fairgrid")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path.to_str().unwrap().to_owned()
}

const PD: &str = "\
agent.i.R = 4
agent.i.T = 5
agent.i.S = -3
agent.i.P = -2
agent.j.R = 12
agent.j.T = 15
agent.j.S = -9
agent.j.P = -6
";

// No greed (T < R) and no fear (S > P): not a dilemma at all.
const HARMONY: &str = "\
agent.i.R = 3
agent.i.T = 2
agent.i.S = 1
agent.i.P = 0
agent.j.R = 3
agent.j.T = 2
agent.j.S = 1
agent.j.P = 0
";

#[test]
fn classify_exit_code_tracks_dilemma_status() {
    let dir = tempfile::tempdir().unwrap();

    let out = fairgrid(&["classify", &write(dir.path(), "pd.txt", PD)], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("classification: prisoners_dilemma"), "{text}");
    assert!(text.contains("asymmetric: true"), "{text}");

    let out = fairgrid(&["classify", &write(dir.path(), "harmony.txt", HARMONY)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("classification: not_a_social_dilemma"));

    let out = fairgrid(&["classify", "does-not-exist.txt"], &[]);
    assert_eq!(out.status.code(), Some(2));

    let out = fairgrid(&["classify", &write(dir.path(), "bad.txt", "agent.i.R 1\n")], &[]);
    assert_eq!(out.status.code(), Some(1), "parse errors are validation failures");
}

#[test]
fn normalize_round_trips_through_classify() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairgrid(&["normalize", &write(dir.path(), "pd.txt", PD)], &[]);
    assert_eq!(out.status.code(), Some(0));
    let normalized = write(dir.path(), "pd_norm.txt", &stdout(&out));
    // Normalization preserves the strict orderings, hence the class.
    let out = fairgrid(&["classify", &normalized], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("classification: prisoners_dilemma"));
}

#[test]
fn trace_rejects_malformed_steps_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "[trace]\nagents = 2\n\n[step.1]\nrewards = 1\n";
    let out = fairgrid(&["trace", &write(dir.path(), "bad.ini", bad)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("step.1"));
}

#[test]
fn trace_emits_dump_rows_and_average_age() {
    let dir = tempfile::tempdir().unwrap();
    let trace = "\
[trace]
agents = 2
gamma = 0.9
lambda = 1.0

[step.1]
rewards = 2, 0
";
    let out = fairgrid(&["trace", &write(dir.path(), "t.ini", trace)], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("t,owner,subject,estimate,tau\n"));
    // Nobody saw anybody: both entries keep the 0.5 prior at age 1.
    assert!(text.contains("1,0,1,0.5,0"), "{text}");
    assert!(text.contains("1,1,0,0.5,0"), "{text}");
    assert!(text.trim_end().ends_with("# average_age = 1"), "{text}");
}

#[test]
fn train_then_report_under_an_output_root_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
[env]
kind = coins
episode_len = 30

[learner]
train_steps = 60
eval_period = 30
eval_episodes = 1
epsilon_decay_steps = 12

[experiment]
seeds = 11,12
output_dir = run_a
";
    let cfg_path = write(dir.path(), "exp.ini", config);
    let root = dir.path().to_str().unwrap();
    let out = fairgrid(&["train", &cfg_path], &[("FAIRGRID_OUTPUT_ROOT", root)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = dir.path().join("run_a");
    for name in ["config.ini", "manifest.txt", "train_11.csv", "metrics_12.csv", "metrics.csv"] {
        assert!(run_dir.join(name).exists(), "missing {name}");
    }

    let out = fairgrid(&["report", run_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("final evaluation (step 60)"));
    let report = std::fs::read_to_string(run_dir.join("report.csv")).unwrap();
    assert!(report.starts_with("scope,name,eval_step,mean,n_seeds\n"));
    assert!(report.lines().any(|l| l.starts_with("global,return,0,") && l.ends_with(",2")));
}

#[test]
fn schelling_writes_sweep_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = "\
[env]
kind = coins
episode_len = 60

[learner]
eval_episodes = 1

[experiment]
seeds = 3
output_dir = sweep
";
    let cfg_path = write(dir.path(), "sweep.ini", config);
    let root = dir.path().to_str().unwrap();
    let out = fairgrid(&["schelling", &cfg_path], &[("FAIRGRID_OUTPUT_ROOT", root)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("all_pass"));
    assert!(dir.path().join("sweep/schelling.csv").exists());
    assert!(dir.path().join("sweep/schelling_verdict.txt").exists());
}

#[test]
fn invalid_config_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = fairgrid(&["train", &write(dir.path(), "bad.ini", "[env]\nwdith = 9\n")], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("wdith"));
}
