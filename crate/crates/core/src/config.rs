//! Plain-text experiment configuration.
//!
//! The file format is INI-style: `[section]` headers, `key = value` pairs,
//! blank lines and `#` comments ignored. Sections:
//!
//! * `[env]` and one `[agent.<i>]` per agent (contiguous from 0),
//! * `[shaping]` with optional per-type `phi.<type>` keys,
//! * `[learner]`,
//! * `[experiment]` carrying the seed list and output directory.
//!
//! Parsing is strict: unknown sections, unknown keys, and duplicate keys
//! are errors, so typos fail loudly instead of silently using defaults.
//! `parse -> serialize -> parse` returns an identical configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use thiserror::Error;

use crate::gridworld::{AgentSpec, AgentType, EnvConfig, EnvKind, Variant};
use crate::learning::LearnerConfig;
use crate::shaping::{Method, ShapingConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("section [{section}] is missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("section [{section}] has unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub(crate) struct Pair {
    key: String,
    value: String,
}

#[derive(Debug, Clone)]
pub(crate) struct Section {
    pub(crate) name: String,
    pairs: Vec<Pair>,
}

impl Section {
    pub(crate) fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|p| p.key == key).map(|p| p.value.as_str())
    }

    pub(crate) fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            section: self.name.clone(),
            key: key.to_owned(),
        })
    }

    /// Parses an optional key, reporting the section-qualified key name on
    /// failure.
    fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| ConfigError::Invalid {
                key: format!("{}.{key}", self.name),
                reason: format!("cannot parse `{raw}`"),
            }),
        }
    }

    fn parse_into<T: std::str::FromStr>(&self, key: &str, slot: &mut T) -> Result<(), ConfigError> {
        if let Some(v) = self.parse_opt(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn check_keys(&self, allowed: &[&str], prefix_ok: &[&str]) -> Result<(), ConfigError> {
        for p in &self.pairs {
            let known = allowed.contains(&p.key.as_str())
                || prefix_ok.iter().any(|pre| p.key.starts_with(pre));
            if !known {
                return Err(ConfigError::UnknownKey {
                    section: self.name.clone(),
                    key: p.key.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Ini {
    sections: Vec<Section>,
}

impl Ini {
    pub(crate) fn parse(text: &str) -> Result<Ini, ConfigError> {
        let mut ini = Ini::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Parse {
                    line,
                    reason: "unterminated section header".into(),
                })?;
                if ini.sections.iter().any(|s| s.name == name) {
                    return Err(ConfigError::Parse {
                        line,
                        reason: format!("duplicate section [{name}]"),
                    });
                }
                ini.sections.push(Section { name: name.trim().to_owned(), pairs: Vec::new() });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse { line, reason: "expected `key = value`".into() });
            };
            let (key, value) = (key.trim().to_owned(), value.trim().to_owned());
            if key.is_empty() {
                return Err(ConfigError::Parse { line, reason: "empty key".into() });
            }
            let section = ini.sections.last_mut().ok_or_else(|| ConfigError::Parse {
                line,
                reason: "key before any [section]".into(),
            })?;
            if section.pairs.iter().any(|p| p.key == key) {
                return Err(ConfigError::Parse {
                    line,
                    reason: format!("duplicate key `{key}` in [{}]", section.name),
                });
            }
            section.pairs.push(Pair { key, value });
        }
        Ok(ini)
    }

    pub(crate) fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    fn agent_sections(&self) -> Result<Vec<&Section>, ConfigError> {
        let mut indexed: Vec<(usize, &Section)> = Vec::new();
        for s in &self.sections {
            if let Some(idx) = s.name.strip_prefix("agent.") {
                let idx: usize = idx.parse().map_err(|_| ConfigError::UnknownSection(s.name.clone()))?;
                indexed.push((idx, s));
            }
        }
        indexed.sort_by_key(|&(i, _)| i);
        for (want, &(got, _)) in indexed.iter().enumerate() {
            if want != got {
                return Err(ConfigError::Invalid {
                    key: format!("agent.{got}"),
                    reason: format!("agent sections must be contiguous from 0, expected agent.{want}"),
                });
            }
        }
        Ok(indexed.into_iter().map(|(_, s)| s).collect())
    }
}

const ENV_KEYS: &[&str] = &[
    "kind",
    "variant",
    "width",
    "height",
    "episode_len",
    "n_agents",
    "observation_radius",
    "coin_spawn_prob",
    "coin_lifetime",
    "beam_length",
    "zap_timeout",
    "spawn_bias_on_victim",
    "seed",
    "regrowth_zero",
    "regrowth_one",
    "regrowth_two",
    "regrowth_many",
];

const AGENT_KEYS: &[&str] =
    &["type", "reward_multiplier", "mismatch_penalty", "zap_width", "spawn_bias_steps", "phi"];

pub(crate) fn env_from_ini(ini: &Ini) -> Result<EnvConfig, ConfigError> {
    let sec = ini.section("env").ok_or_else(|| ConfigError::MissingSection("env".into()))?;
    sec.check_keys(ENV_KEYS, &[])?;
    let kind_raw = sec.require("kind")?;
    let kind = EnvKind::parse(kind_raw).ok_or_else(|| ConfigError::Invalid {
        key: "env.kind".into(),
        reason: format!("unknown environment `{kind_raw}`"),
    })?;
    let variant = match sec.get("variant") {
        None => Variant::Symmetric,
        Some(raw) => Variant::parse(raw).ok_or_else(|| ConfigError::Invalid {
            key: "env.variant".into(),
            reason: format!("unknown variant `{raw}`"),
        })?,
    };
    let mut cfg = match kind {
        EnvKind::Coins => EnvConfig::coins(variant),
        EnvKind::Harvest => {
            let n = sec.parse_opt("n_agents")?.unwrap_or(4);
            EnvConfig::harvest(variant, n)
        }
    };
    sec.parse_into("width", &mut cfg.width)?;
    sec.parse_into("height", &mut cfg.height)?;
    sec.parse_into("episode_len", &mut cfg.episode_len)?;
    if let Some(r) = sec.parse_opt("observation_radius")? {
        cfg.observation_radius = Some(r);
    }
    sec.parse_into("coin_spawn_prob", &mut cfg.coin_spawn_prob)?;
    sec.parse_into("coin_lifetime", &mut cfg.coin_lifetime)?;
    sec.parse_into("beam_length", &mut cfg.beam_length)?;
    sec.parse_into("zap_timeout", &mut cfg.zap_timeout)?;
    sec.parse_into("spawn_bias_on_victim", &mut cfg.spawn_bias_on_victim)?;
    sec.parse_into("seed", &mut cfg.seed)?;
    sec.parse_into("regrowth_zero", &mut cfg.regrowth.zero)?;
    sec.parse_into("regrowth_one", &mut cfg.regrowth.one)?;
    sec.parse_into("regrowth_two", &mut cfg.regrowth.two)?;
    sec.parse_into("regrowth_many", &mut cfg.regrowth.many)?;

    let agent_secs = ini.agent_sections()?;
    if !agent_secs.is_empty() {
        let mut agents = Vec::with_capacity(agent_secs.len());
        for sec in agent_secs {
            sec.check_keys(AGENT_KEYS, &[])?;
            let ty_raw = sec.require("type")?;
            let ty = AgentType::parse(ty_raw).ok_or_else(|| ConfigError::Invalid {
                key: format!("{}.type", sec.name),
                reason: format!("unknown agent type `{ty_raw}`"),
            })?;
            let mut spec = AgentSpec::of_type(ty);
            sec.parse_into("reward_multiplier", &mut spec.reward_multiplier)?;
            sec.parse_into("mismatch_penalty", &mut spec.mismatch_penalty)?;
            sec.parse_into("zap_width", &mut spec.zap_width)?;
            sec.parse_into("spawn_bias_steps", &mut spec.spawn_bias_steps)?;
            sec.parse_into("phi", &mut spec.phi)?;
            agents.push(spec);
        }
        cfg.agents = agents;
    }
    Ok(cfg)
}

pub fn env_to_ini_string(cfg: &EnvConfig) -> String {
    let mut out = String::from("[env]\n");
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    kv("kind", cfg.kind.to_string());
    kv("variant", cfg.variant.to_string());
    kv("width", cfg.width.to_string());
    kv("height", cfg.height.to_string());
    kv("episode_len", cfg.episode_len.to_string());
    if let Some(r) = cfg.observation_radius {
        kv("observation_radius", r.to_string());
    }
    kv("coin_spawn_prob", cfg.coin_spawn_prob.to_string());
    kv("coin_lifetime", cfg.coin_lifetime.to_string());
    kv("beam_length", cfg.beam_length.to_string());
    kv("zap_timeout", cfg.zap_timeout.to_string());
    kv("spawn_bias_on_victim", cfg.spawn_bias_on_victim.to_string());
    kv("seed", cfg.seed.to_string());
    kv("regrowth_zero", cfg.regrowth.zero.to_string());
    kv("regrowth_one", cfg.regrowth.one.to_string());
    kv("regrowth_two", cfg.regrowth.two.to_string());
    kv("regrowth_many", cfg.regrowth.many.to_string());
    for (i, spec) in cfg.agents.iter().enumerate() {
        out.push_str(&format!("\n[agent.{i}]\n"));
        out.push_str(&format!("type = {}\n", spec.agent_type));
        out.push_str(&format!("reward_multiplier = {}\n", spec.reward_multiplier));
        out.push_str(&format!("mismatch_penalty = {}\n", spec.mismatch_penalty));
        out.push_str(&format!("zap_width = {}\n", spec.zap_width));
        out.push_str(&format!("spawn_bias_steps = {}\n", spec.spawn_bias_steps));
        out.push_str(&format!("phi = {}\n", spec.phi));
    }
    out
}

const SHAPING_KEYS: &[&str] =
    &["method", "gamma", "lambda", "alpha", "beta", "w", "theta_svo", "normalized", "local"];

fn shaping_from_ini(ini: &Ini) -> Result<ShapingConfig, ConfigError> {
    let Some(sec) = ini.section("shaping") else { return Ok(ShapingConfig::default()) };
    sec.check_keys(SHAPING_KEYS, &["phi."])?;
    let mut cfg = ShapingConfig::default();
    if let Some(raw) = sec.get("method") {
        cfg.method = Method::parse(raw).ok_or_else(|| ConfigError::Invalid {
            key: "shaping.method".into(),
            reason: format!("unknown method `{raw}`"),
        })?;
    }
    sec.parse_into("gamma", &mut cfg.gamma)?;
    sec.parse_into("lambda", &mut cfg.lambda)?;
    sec.parse_into("alpha", &mut cfg.alpha)?;
    sec.parse_into("beta", &mut cfg.beta)?;
    sec.parse_into("w", &mut cfg.w)?;
    sec.parse_into("theta_svo", &mut cfg.theta_svo_deg)?;
    sec.parse_into("normalized", &mut cfg.normalized)?;
    sec.parse_into("local", &mut cfg.local)?;
    let mut phi = BTreeMap::new();
    for p in &sec.pairs {
        if let Some(ty) = p.key.strip_prefix("phi.") {
            let value: f64 = p.value.parse().map_err(|_| ConfigError::Invalid {
                key: format!("shaping.{}", p.key),
                reason: format!("cannot parse `{}`", p.value),
            })?;
            phi.insert(ty.to_owned(), value);
        }
    }
    cfg.phi = phi;
    Ok(cfg)
}

fn shaping_to_string(cfg: &ShapingConfig) -> String {
    let mut out = String::from("[shaping]\n");
    out.push_str(&format!("method = {}\n", cfg.method.as_str()));
    out.push_str(&format!("gamma = {}\n", cfg.gamma));
    out.push_str(&format!("lambda = {}\n", cfg.lambda));
    out.push_str(&format!("alpha = {}\n", cfg.alpha));
    out.push_str(&format!("beta = {}\n", cfg.beta));
    out.push_str(&format!("w = {}\n", cfg.w));
    out.push_str(&format!("theta_svo = {}\n", cfg.theta_svo_deg));
    out.push_str(&format!("normalized = {}\n", cfg.normalized));
    out.push_str(&format!("local = {}\n", cfg.local));
    for (ty, phi) in &cfg.phi {
        out.push_str(&format!("phi.{ty} = {phi}\n"));
    }
    out
}

const LEARNER_KEYS: &[&str] = &[
    "learning_rate",
    "discount",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay_steps",
    "train_steps",
    "eval_period",
    "eval_episodes",
    "eval_epsilon",
    "seed",
];

fn learner_from_ini(ini: &Ini) -> Result<LearnerConfig, ConfigError> {
    let Some(sec) = ini.section("learner") else { return Ok(LearnerConfig::default()) };
    sec.check_keys(LEARNER_KEYS, &[])?;
    let mut cfg = LearnerConfig::default();
    sec.parse_into("learning_rate", &mut cfg.learning_rate)?;
    sec.parse_into("discount", &mut cfg.discount)?;
    sec.parse_into("epsilon_start", &mut cfg.epsilon_start)?;
    sec.parse_into("epsilon_end", &mut cfg.epsilon_end)?;
    sec.parse_into("epsilon_decay_steps", &mut cfg.epsilon_decay_steps)?;
    sec.parse_into("train_steps", &mut cfg.train_steps)?;
    sec.parse_into("eval_period", &mut cfg.eval_period)?;
    sec.parse_into("eval_episodes", &mut cfg.eval_episodes)?;
    sec.parse_into("eval_epsilon", &mut cfg.eval_epsilon)?;
    sec.parse_into("seed", &mut cfg.seed)?;
    Ok(cfg)
}

fn learner_to_string(cfg: &LearnerConfig) -> String {
    let mut out = String::from("[learner]\n");
    out.push_str(&format!("learning_rate = {}\n", cfg.learning_rate));
    out.push_str(&format!("discount = {}\n", cfg.discount));
    out.push_str(&format!("epsilon_start = {}\n", cfg.epsilon_start));
    out.push_str(&format!("epsilon_end = {}\n", cfg.epsilon_end));
    out.push_str(&format!("epsilon_decay_steps = {}\n", cfg.epsilon_decay_steps));
    out.push_str(&format!("train_steps = {}\n", cfg.train_steps));
    out.push_str(&format!("eval_period = {}\n", cfg.eval_period));
    out.push_str(&format!("eval_episodes = {}\n", cfg.eval_episodes));
    out.push_str(&format!("eval_epsilon = {}\n", cfg.eval_epsilon));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out
}

/// Everything a training or sweep run needs, parsed from one file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub shaping: ShapingConfig,
    pub learner: LearnerConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

const EXPERIMENT_KEYS: &[&str] = &["seeds", "output_dir"];

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let ini = Ini::parse(text)?;
        for sec in &ini.sections {
            let known = matches!(sec.name.as_str(), "env" | "shaping" | "learner" | "experiment")
                || sec.name.starts_with("agent.");
            if !known {
                return Err(ConfigError::UnknownSection(sec.name.clone()));
            }
        }
        let env = env_from_ini(&ini)?;
        let shaping = shaping_from_ini(&ini)?;
        let learner = learner_from_ini(&ini)?;
        let mut seeds = vec![learner.seed];
        let mut output_dir = PathBuf::from("runs");
        if let Some(sec) = ini.section("experiment") {
            sec.check_keys(EXPERIMENT_KEYS, &[])?;
            if let Some(raw) = sec.get("seeds") {
                seeds = raw
                    .split(',')
                    .map(|s| {
                        s.trim().parse().map_err(|_| ConfigError::Invalid {
                            key: "experiment.seeds".into(),
                            reason: format!("cannot parse `{}`", s.trim()),
                        })
                    })
                    .collect::<Result<_, _>>()?;
            }
            if let Some(dir) = sec.get("output_dir") {
                output_dir = PathBuf::from(dir);
            }
        }
        let cfg = ExperimentConfig { env, shaping, learner, seeds, output_dir };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |key: &str, reason: String| ConfigError::Invalid { key: key.into(), reason };
        self.env.validate().map_err(|e| wrap("env", e.to_string()))?;
        self.shaping.validate().map_err(|e| wrap("shaping", e.to_string()))?;
        self.learner.validate().map_err(|e| wrap("learner", e.to_string()))?;
        if self.seeds.is_empty() {
            return Err(wrap("experiment.seeds", "must be nonempty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return Err(wrap("experiment.seeds", format!("duplicate seed {s}")));
            }
        }
        for ty in self.shaping.phi.keys() {
            if !self.env.agents.iter().any(|a| a.agent_type.config_name() == ty) {
                return Err(wrap(
                    "shaping.phi",
                    format!("phi.{ty} refers to a type absent from [env]"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = env_to_ini_string(&self.env);
        out.push('\n');
        out.push_str(&shaping_to_string(&self.shaping));
        out.push('\n');
        out.push_str(&learner_to_string(&self.learner));
        out.push_str("\n[experiment]\n");
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        out.push_str(&format!("seeds = {}\n", seeds.join(",")));
        out.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# Coins fairness run
[env]
kind = coins
variant = asymmetric_rewards
episode_len = 200
coin_spawn_prob = 0.25

[shaping]
method = fair_local_ia
alpha = 0.05
beta = 0.1
phi.low_reward = 4
phi.high_reward = 12

[learner]
train_steps = 5000
eval_period = 1000
seed = 3

[experiment]
seeds = 1, 2, 3
output_dir = runs/coins_ia
";

    #[test]
    fn parses_a_full_experiment_file() {
        let cfg = ExperimentConfig::parse_str(FULL).unwrap();
        assert_eq!(cfg.env.kind, EnvKind::Coins);
        assert_eq!(cfg.env.variant, Variant::AsymmetricRewards);
        assert_eq!(cfg.env.episode_len, 200);
        assert_eq!(cfg.env.coin_spawn_prob, 0.25);
        assert_eq!(cfg.env.agents[0].agent_type, AgentType::LowReward);
        assert_eq!(cfg.shaping.method, Method::FairLocalIa);
        assert_eq!(cfg.shaping.phi.get("low_reward"), Some(&4.0));
        assert_eq!(cfg.learner.train_steps, 5000);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.output_dir, PathBuf::from("runs/coins_ia"));
    }

    #[test]
    fn agent_sections_override_the_default_roster() {
        let text = "\
[env]
kind = harvest
episode_len = 100

[agent.0]
type = wide_zap
phi = 2.5

[agent.1]
type = standard
";
        let cfg = ExperimentConfig::parse_str(text).unwrap();
        assert_eq!(cfg.env.agents.len(), 2);
        assert_eq!(cfg.env.agents[0].agent_type, AgentType::WideZap);
        assert_eq!(cfg.env.agents[0].phi, 2.5);
        assert_eq!(cfg.env.agents[0].zap_width, 3);
    }

    #[test]
    fn round_trip_preserves_every_field() {
        for text in [
            FULL,
            "[env]\nkind = harvest\nn_agents = 6\nvariant = asymmetric_actions\nobservation_radius = 4\n",
        ] {
            let cfg = ExperimentConfig::parse_str(text).unwrap();
            let reparsed = ExperimentConfig::parse_str(&cfg.to_file_string()).unwrap();
            assert_eq!(cfg, reparsed);
        }
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse_str("[env]\nkind = coins\nwdith = 5\n"),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse_str("[env]\nkind = coins\n\n[oops]\nx = 1\n"),
            Err(ConfigError::UnknownSection(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse_str("[env]\nkind = coins\nkind = coins\n"),
            Err(ConfigError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse_str("kind = coins\n"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_env_section_is_an_error() {
        assert!(matches!(
            ExperimentConfig::parse_str("[learner]\nseed = 1\n"),
            Err(ConfigError::MissingSection(_))
        ));
    }

    #[test]
    fn agent_sections_must_be_contiguous() {
        let text = "[env]\nkind = coins\n\n[agent.0]\ntype = standard\n\n[agent.2]\ntype = standard\n";
        assert!(matches!(
            ExperimentConfig::parse_str(text),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn misplaced_agent_types_fail_validation() {
        let text = "[env]\nkind = coins\n\n[agent.0]\ntype = wide_zap\n\n[agent.1]\ntype = standard\n";
        let err = ExperimentConfig::parse_str(text).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "env"), "{err}");
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let text = "[env]\nkind = coins\n\n[experiment]\nseeds = 4,4\n";
        assert!(ExperimentConfig::parse_str(text).is_err());
    }

    #[test]
    fn phi_for_missing_type_is_rejected() {
        let text = "[env]\nkind = coins\n\n[shaping]\nmethod = ia\nalpha = 1\nphi.wide_zap = 2\n";
        assert!(ExperimentConfig::parse_str(text).is_err());
    }

    #[test]
    fn seeds_default_to_the_learner_seed() {
        let cfg = ExperimentConfig::parse_str("[env]\nkind = coins\n\n[learner]\nseed = 9\n").unwrap();
        assert_eq!(cfg.seeds, vec![9]);
    }
}
