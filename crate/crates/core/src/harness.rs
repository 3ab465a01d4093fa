//! Command implementations behind the CLI.
//!
//! Every command reads its inputs from disk, returns the text it wants on
//! stdout, and writes any run artifacts under the experiment's output
//! directory (overridable via the `FAIRGRID_OUTPUT_ROOT` environment
//! variable). Errors split into validation problems (exit 1) and runtime
//! failures (exit 2); `classify` additionally exits 1 when the game is
//! simply not a social dilemma.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Ini};
use crate::dilemma::{classify, PayoffMatrix, SchellingDiagram};
use crate::estimates::{average_age, initial_tables, propagate, dump_rows, DUMP_HEADER};
use crate::gridworld::scripted::{schelling_sweep, PolicyConfig};
use crate::learning::{train, LearnError, TrainOutput};
use crate::metrics::{metrics_to_csv, MetricRow, METRICS_HEADER};
use crate::shaping::SmoothedTracker;

pub const OUTPUT_ROOT_ENV: &str = "FAIRGRID_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}

fn validation<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Validation(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Runtime(e.to_string())
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, content: &str) -> Result<(), HarnessError> {
    std::fs::write(path, content)
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

fn learn_err(e: LearnError) -> HarnessError {
    match e {
        LearnError::InvalidConfig(_) | LearnError::Parse { .. } => validation(e),
        other => runtime(other),
    }
}

fn config_err(e: ConfigError) -> HarnessError {
    match e {
        ConfigError::Io(e) => runtime(e),
        other => validation(other),
    }
}

/// Joins the configured output directory under the env-var root when the
/// override is set.
pub fn resolve_output_dir(configured: &Path, root_override: Option<&Path>) -> PathBuf {
    match root_override {
        Some(root) => root.join(configured),
        None => configured.to_path_buf(),
    }
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    resolve_output_dir(&cfg.output_dir, root.as_deref())
}

#[derive(Debug)]
pub struct ClassifyOutput {
    pub report: String,
    pub is_dilemma: bool,
}

/// Classifies a matrix-game file: per-agent condition flags, the dilemma
/// kind, and asymmetry, with a trailing machine-readable CSV line.
pub fn cmd_classify(path: &Path) -> Result<ClassifyOutput, HarnessError> {
    let matrix = PayoffMatrix::parse_str(&read(path)?).map_err(validation)?;
    let report = classify(&matrix).map_err(validation)?;
    let mut out = String::new();
    for (agent, c) in &report.conditions {
        let _ = writeln!(
            out,
            "agent {agent}: c1={} c2={} c3={} greed={} fear={}",
            c.c1, c.c2, c.c3, c.greed, c.fear
        );
    }
    let _ = writeln!(out, "classification: {}", report.kind.as_str());
    let _ = writeln!(out, "asymmetric: {}", report.asymmetric);
    let _ = writeln!(out, "csv: kind,asymmetric");
    let _ = writeln!(out, "csv: {},{}", report.kind.as_str(), report.asymmetric);
    Ok(ClassifyOutput { report: out, is_dilemma: report.is_social_dilemma() })
}

/// Rescales every agent's payoffs onto [0, 1] and prints the matrix back
/// in the input file format.
pub fn cmd_normalize(path: &Path) -> Result<String, HarnessError> {
    let matrix = PayoffMatrix::parse_str(&read(path)?).map_err(validation)?;
    let normalized = matrix.normalized().map_err(validation)?;
    Ok(normalized.to_file_string())
}

/// Scripted cooperate/defect sweep: every role assignment x every seed,
/// `eval_episodes` episodes each. Writes the diagram CSV and verdict.
pub fn cmd_schelling(config_path: &Path) -> Result<String, HarnessError> {
    let cfg = ExperimentConfig::load(config_path).map_err(config_err)?;
    let policy = PolicyConfig { beam_length: cfg.env.beam_length, ..PolicyConfig::default() };
    let episodes = cfg.learner.eval_episodes as usize;
    let mut samples = Vec::new();
    for &seed in &cfg.seeds {
        samples.extend(schelling_sweep(&cfg.env, &policy, episodes, seed).map_err(runtime)?);
    }
    let diagram = SchellingDiagram::from_samples(samples);
    let verdict = diagram.verify();
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    write(&dir.join("schelling.csv"), &diagram.to_csv())?;

    let mut out = String::new();
    let _ = writeln!(out, "all_pass = {}", verdict.all_pass);
    for v in &verdict.per_type {
        let _ = write!(out, "type {}: {}", v.agent_type, v.outcome);
        if !v.failing_k.is_empty() {
            let _ = write!(out, " failing_k={:?}", v.failing_k);
        }
        if !v.inconclusive_k.is_empty() {
            let _ = write!(out, " inconclusive_k={:?}", v.inconclusive_k);
        }
        out.push('\n');
    }
    write(&dir.join("schelling_verdict.txt"), &out)?;
    let _ = writeln!(out, "wrote {}", dir.join("schelling.csv").display());
    Ok(out)
}

/// Trains one independent-Q run per seed (in parallel), writing per-seed
/// logs, metrics, checkpoints, a merged metrics CSV, and a manifest.
pub fn cmd_train(config_path: &Path) -> Result<String, HarnessError> {
    let config_text = read(config_path)?;
    let cfg = ExperimentConfig::parse_str(&config_text).map_err(config_err)?;
    let canonical = cfg.to_file_string();
    let config_hash: String =
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let dir = output_dir(&cfg);
    std::fs::create_dir_all(&dir).map_err(runtime)?;

    let results: Vec<(u64, TrainOutput)> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let (env, shaping, learner) = (&cfg.env, &cfg.shaping, &cfg.learner);
                (seed, scope.spawn(move || train(env, shaping, learner, seed)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(seed, handle)| {
                let out = handle
                    .join()
                    .map_err(|_| HarnessError::Runtime("training thread panicked".into()))?
                    .map_err(learn_err)?;
                Ok((seed, out))
            })
            .collect::<Result<_, HarnessError>>()
    })?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_sha256 = {config_hash}");
    let _ = writeln!(manifest, "package = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(manifest, "seeds = {}", seeds.join(","));
    write(&dir.join("config.ini"), &canonical)?;

    let mut merged: Vec<MetricRow> = Vec::new();
    for (seed, out) in &results {
        let log_name = format!("train_{seed}.csv");
        let metrics_name = format!("metrics_{seed}.csv");
        let ckpt_name = format!("qtable_{seed}.txt");
        write(&dir.join(&log_name), &out.log.to_csv())?;
        write(&dir.join(&metrics_name), &out.log.metrics_csv())?;
        write(&dir.join(&ckpt_name), &crate::learning::checkpoint_to_string(&out.q_tables))?;
        for name in [&log_name, &metrics_name, &ckpt_name] {
            let _ = writeln!(manifest, "file {name} seed {seed} config {config_hash}");
        }
        merged.extend(out.log.metrics.iter().cloned());
    }
    write(&dir.join("metrics.csv"), &metrics_to_csv(&merged))?;
    let _ = writeln!(manifest, "file metrics.csv seed merged config {config_hash}");
    write(&dir.join("manifest.txt"), &manifest)?;

    Ok(format!(
        "trained {} seed(s), wrote {}\nconfig_sha256 = {config_hash}\n",
        results.len(),
        dir.display()
    ))
}

/// Runs smoothing and estimate propagation over a scripted trace file and
/// dumps every table at every step, plus the average estimate age.
pub fn cmd_trace(path: &Path) -> Result<String, HarnessError> {
    trace_str(&read(path)?)
}

/// String-level core of [`cmd_trace`].
///
/// Trace format: a `[trace]` section (`agents`, optional `gamma`/`lambda`)
/// followed by `[step.1]`, `[step.2]`, ... sections each holding
/// `rewards = r0, r1, ...` and optional `vis.<i> = j, k` visibility lists.
pub fn trace_str(text: &str) -> Result<String, HarnessError> {
    let ini = Ini::parse(text).map_err(config_err)?;
    let (n, gamma, lambda) = match ini.section("trace") {
        None => (0usize, 0.99, 0.9),
        Some(sec) => {
            let n = sec
                .get("agents")
                .ok_or_else(|| HarnessError::Validation("trace.agents is required".into()))?
                .parse::<usize>()
                .map_err(|_| HarnessError::Validation("trace.agents must be an integer".into()))?;
            let parse_f64 = |key: &str, default: f64| -> Result<f64, HarnessError> {
                match sec.get(key) {
                    None => Ok(default),
                    Some(raw) => raw.parse().map_err(|_| {
                        HarnessError::Validation(format!("trace.{key}: cannot parse `{raw}`"))
                    }),
                }
            };
            (n, parse_f64("gamma", 0.99)?, parse_f64("lambda", 0.9)?)
        }
    };

    let mut trackers = vec![SmoothedTracker::new(); n];
    let mut tables = initial_tables(n);
    let mut snapshots = vec![tables.clone()];
    let mut out = String::from(DUMP_HEADER);
    out.push('\n');
    out.push_str(&dump_rows(0, &tables));

    for t in 1u64.. {
        let Some(sec) = ini.section(&format!("step.{t}")) else { break };
        let rewards: Vec<f64> = sec
            .get("rewards")
            .ok_or_else(|| HarnessError::Validation(format!("step.{t}: missing rewards")))?
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    HarnessError::Validation(format!("step.{t}: bad reward `{}`", s.trim()))
                })
            })
            .collect::<Result<_, _>>()?;
        if rewards.len() != n {
            return Err(HarnessError::Validation(format!(
                "step.{t}: {} rewards for {n} agents",
                rewards.len()
            )));
        }
        let mut visible = vec![Vec::new(); n];
        for (slot, vis) in visible.iter_mut().enumerate() {
            if let Some(raw) = sec.get(&format!("vis.{slot}")) {
                if !raw.trim().is_empty() {
                    *vis = raw
                        .split(',')
                        .map(|s| {
                            s.trim().parse().map_err(|_| {
                                HarnessError::Validation(format!(
                                    "step.{t}: bad visibility id `{}`",
                                    s.trim()
                                ))
                            })
                        })
                        .collect::<Result<_, _>>()?;
                }
            }
        }
        for (tracker, &r) in trackers.iter_mut().zip(&rewards) {
            tracker.update(r, gamma, lambda).map_err(validation)?;
        }
        let own: Vec<f64> = trackers
            .iter()
            .map(|tr| tr.normalized())
            .collect::<Result<_, _>>()
            .map_err(validation)?;
        tables = propagate(&tables, &visible, &own, t).map_err(validation)?;
        snapshots.push(tables.clone());
        out.push_str(&dump_rows(t, &tables));
    }

    if snapshots.len() > 1 {
        let age = average_age(&snapshots).map_err(validation)?;
        let _ = writeln!(out, "# average_age = {age}");
    }
    Ok(out)
}

/// Aggregates a run directory's merged metrics across seeds: mean per
/// (scope, name, eval_step). Writes report.csv and returns a summary of
/// the final evaluation.
pub fn cmd_report(run_dir: &Path) -> Result<String, HarnessError> {
    let metrics_path = run_dir.join("metrics.csv");
    let text = read(&metrics_path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(HarnessError::Validation(format!(
            "{}: expected header `{METRICS_HEADER}`",
            metrics_path.display()
        )));
    }
    let mut cells: BTreeMap<(String, String, u64), (f64, u64)> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed = (|| -> Option<(u64, String, String, f64)> {
            let [step, _seed, scope, name, value] = fields.as_slice() else { return None };
            Some((step.parse().ok()?, scope.to_string(), name.to_string(), value.parse().ok()?))
        })();
        let Some((step, scope, name, value)) = parsed else {
            return Err(HarnessError::Validation(format!(
                "{} line {}: malformed metrics row",
                metrics_path.display(),
                idx + 2
            )));
        };
        let cell = cells.entry((scope, name, step)).or_insert((0.0, 0));
        cell.0 += value;
        cell.1 += 1;
    }

    let mut report = String::from("scope,name,eval_step,mean,n_seeds\n");
    for ((scope, name, step), (sum, count)) in &cells {
        let mean = sum / *count as f64;
        let _ = writeln!(report, "{scope},{name},{step},{mean},{count}");
    }
    write(&run_dir.join("report.csv"), &report)?;

    let last_step = cells.keys().map(|(_, _, s)| *s).max();
    let mut summary = String::new();
    if let Some(last) = last_step {
        let _ = writeln!(summary, "final evaluation (step {last}):");
        for ((scope, name, step), (sum, count)) in &cells {
            if *step == last && scope == "global" {
                let _ = writeln!(summary, "  {name} = {}", sum / *count as f64);
            }
        }
    }
    let _ = writeln!(summary, "wrote {}", run_dir.join("report.csv").display());
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::TRAINING_HEADER;

    fn write_tmp(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    const ASYMMETRIC_PD: &str = "\
agent.i.R = 4
agent.i.T = 5
agent.i.S = -3
agent.i.P = -2
agent.j.R = 12
agent.j.T = 15
agent.j.S = -9
agent.j.P = -6
";

    #[test]
    fn classify_reports_kind_and_asymmetry() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(dir.path(), "game.txt", ASYMMETRIC_PD);
        let out = cmd_classify(&path).unwrap();
        assert!(out.is_dilemma);
        assert!(out.report.contains("classification: prisoners_dilemma"));
        assert!(out.report.contains("asymmetric: true"));
        assert!(out.report.contains("csv: prisoners_dilemma,true"));
    }

    #[test]
    fn classify_flags_parse_errors_as_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(dir.path(), "bad.txt", "agent.i.R = 1\n");
        let err = cmd_classify(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let missing = cmd_classify(&dir.path().join("nope.txt")).unwrap_err();
        assert_eq!(missing.exit_code(), 2);
    }

    #[test]
    fn normalize_emits_unit_interval_payoffs() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(dir.path(), "game.txt", ASYMMETRIC_PD);
        let out = cmd_normalize(&path).unwrap();
        let matrix = PayoffMatrix::parse_str(&out).unwrap();
        let o = matrix.outcomes("i").unwrap();
        assert!((o.reward - 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(o.temptation, 1.0);
        assert_eq!(o.sucker, 0.0);
    }

    #[test]
    fn trace_on_full_visibility_keeps_all_ages_zero() {
        let dir = tempfile::tempdir().unwrap();
        let trace = "\
[trace]
agents = 2

[step.1]
rewards = 1, 0
vis.0 = 1
vis.1 = 0

[step.2]
rewards = 0, 1
vis.0 = 1
vis.1 = 0
";
        let path = write_tmp(dir.path(), "trace.ini", trace);
        let out = cmd_trace(&path).unwrap();
        for line in out.lines().skip(1) {
            if line.starts_with('#') {
                continue;
            }
            let tau: u64 = line.rsplit(',').next().unwrap().parse().unwrap();
            let t: u64 = line.split(',').next().unwrap().parse().unwrap();
            assert_eq!(tau, t, "stale entry in {line}");
        }
        assert!(out.contains("# average_age = 0"));
    }

    #[test]
    fn empty_trace_dumps_nothing_but_the_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(dir.path(), "empty.ini", "");
        let out = cmd_trace(&path).unwrap();
        assert_eq!(out, format!("{DUMP_HEADER}\n"));
    }

    #[test]
    fn train_writes_per_seed_files_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("out");
        let config = format!(
            "\
[env]
kind = coins
episode_len = 40

[learner]
train_steps = 80
eval_period = 40
eval_episodes = 1
epsilon_decay_steps = 16

[experiment]
seeds = 1,2
output_dir = {}
",
            out_dir.display()
        );
        let path = write_tmp(dir.path(), "exp.ini", &config);
        let summary = cmd_train(&path).unwrap();
        assert!(summary.contains("trained 2 seed(s)"));
        for name in
            ["config.ini", "manifest.txt", "train_1.csv", "train_2.csv", "metrics.csv", "qtable_1.txt"]
        {
            assert!(out_dir.join(name).exists(), "missing {name}");
        }
        let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
        assert!(manifest.contains("config_sha256 = "));
        assert!(manifest.contains("file train_1.csv seed 1"));
        let log = std::fs::read_to_string(out_dir.join("train_1.csv")).unwrap();
        assert!(log.starts_with(TRAINING_HEADER));

        // Report over the merged metrics aggregates across both seeds.
        let report = cmd_report(&out_dir).unwrap();
        assert!(report.contains("final evaluation"));
        let report_csv = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
        assert!(report_csv.lines().any(|l| l.starts_with("global,return,80,") && l.ends_with(",2")));
    }

    #[test]
    fn schelling_writes_diagram_and_verdict() {
        let dir = tempfile::tempdir().unwrap();
        let out_dir = dir.path().join("sweep");
        let config = format!(
            "\
[env]
kind = coins
episode_len = 80

[learner]
eval_episodes = 1

[experiment]
seeds = 5
output_dir = {}
",
            out_dir.display()
        );
        let path = write_tmp(dir.path(), "sweep.ini", &config);
        let summary = cmd_schelling(&path).unwrap();
        assert!(summary.contains("all_pass"));
        let csv = std::fs::read_to_string(out_dir.join("schelling.csv")).unwrap();
        assert!(csv.starts_with("agent_type,k,strategy,mean_return,n_samples"));
        assert!(out_dir.join("schelling_verdict.txt").exists());
    }

    #[test]
    fn output_root_override_reparents_relative_dirs() {
        let resolved = resolve_output_dir(Path::new("runs/a"), Some(Path::new("/tmp/root")));
        assert_eq!(resolved, PathBuf::from("/tmp/root/runs/a"));
        assert_eq!(resolve_output_dir(Path::new("runs/a"), None), PathBuf::from("runs/a"));
    }

    #[test]
    fn report_rejects_malformed_metrics() {
        let dir = tempfile::tempdir().unwrap();
        write_tmp(dir.path(), "metrics.csv", "bogus header\n");
        assert_eq!(cmd_report(dir.path()).unwrap_err().exit_code(), 1);
    }
}
