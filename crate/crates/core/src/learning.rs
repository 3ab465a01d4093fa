//! Tabular independent Q-learning over symbolic observation keys.
//!
//! Each agent owns a private Q-table keyed by the byte encoding of its
//! observation; updates consume the *shaped* reward while all logged
//! metrics stay extrinsic. Every stochastic choice draws from a stream
//! derived from the master seed by a fixed offset, so a whole training
//! run is a pure function of (configs, seed).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::estimates::{
    average_age, average_range, initial_tables, propagate, EstimateError, EstimateTable,
};
use crate::gridworld::{
    derive_seed, Action, EnvConfig, EnvState, GridError, Observation, N_ACTIONS,
};
use crate::metrics::{metrics_to_csv, EpisodeMetrics, MetricRow, MetricsError};
use crate::shaping::{shape_rewards, ShapingConfig, ShapingError, SmoothedTracker};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error(transparent)]
    Estimates(#[from] EstimateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Injective byte encoding of the symbolic window, orientation, and
/// timeout flag; stable across runs and platforms.
pub fn encode_observation(obs: &Observation) -> Vec<u8> {
    let mut key = Vec::with_capacity(obs.cells.len() + 2);
    key.extend(obs.cells.iter().map(|c| c.code()));
    key.push(obs.orientation.code());
    key.push(obs.timed_out as u8);
    key
}

#[derive(Debug, Clone, PartialEq)]
struct TableEntry {
    q: [f64; N_ACTIONS],
    visits: u64,
}

impl Default for TableEntry {
    fn default() -> Self {
        TableEntry { q: [0.0; N_ACTIONS], visits: 0 }
    }
}

/// One agent's action-value table; unvisited entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: BTreeMap<Vec<u8>, TableEntry>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn q(&self, key: &[u8], action: Action) -> f64 {
        self.entries.get(key).map_or(0.0, |e| e.q[action.index()])
    }

    pub fn visits(&self, key: &[u8]) -> u64 {
        self.entries.get(key).map_or(0, |e| e.visits)
    }

    pub fn n_keys(&self) -> usize {
        self.entries.len()
    }

    pub fn max_q(&self, key: &[u8], legal: &[Action]) -> f64 {
        legal.iter().map(|&a| self.q(key, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// One-step Q-learning backup on the shaped reward.
    pub fn update(
        &mut self,
        key: &[u8],
        action: Action,
        reward: f64,
        next_key: &[u8],
        terminal: bool,
        lr: f64,
        discount: f64,
        legal: &[Action],
    ) -> Result<(), LearnError> {
        if !reward.is_finite() {
            return Err(LearnError::InvalidConfig(format!("non-finite update reward {reward}")));
        }
        let bootstrap = if terminal { 0.0 } else { self.max_q(next_key, legal) };
        let entry = self.entries.entry(key.to_vec()).or_default();
        let q = &mut entry.q[action.index()];
        *q += lr * (reward + discount * bootstrap - *q);
        entry.visits += 1;
        Ok(())
    }
}

/// ε-greedy selection: uniform over legal actions with probability ε,
/// else argmax Q with exact ties broken uniformly.
pub fn select_action(
    q: &QTable,
    key: &[u8],
    legal: &[Action],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Action {
    if rng.random::<f64>() < epsilon {
        return legal[rng.random_range(0..legal.len())];
    }
    let best = q.max_q(key, legal);
    let ties: Vec<Action> = legal.iter().copied().filter(|&a| q.q(key, a) == best).collect();
    ties[rng.random_range(0..ties.len())]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps of linear ε decay; ε stays at `epsilon_end` afterwards.
    pub epsilon_decay_steps: u64,
    /// Total environment steps of training (rounded up to whole episodes).
    pub train_steps: u64,
    /// Evaluate whenever cumulative training steps cross a multiple of
    /// this period (plus once before training).
    pub eval_period: u64,
    pub eval_episodes: u32,
    pub eval_epsilon: f64,
    /// Base seed used when the caller does not supply one.
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        // ε decays over the first 20% of the default training budget.
        LearnerConfig {
            learning_rate: 0.1,
            discount: 0.99,
            epsilon_start: 0.8,
            epsilon_end: 0.1,
            epsilon_decay_steps: 4_000,
            train_steps: 20_000,
            eval_period: 2_000,
            eval_episodes: 10,
            eval_epsilon: 0.05,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let fail = |msg: String| Err(LearnError::InvalidConfig(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail(format!("learning_rate = {} outside (0, 1]", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return fail(format!("discount = {} outside [0, 1]", self.discount));
        }
        for (name, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
            ("eval_epsilon", self.eval_epsilon),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return fail(format!("{name} = {eps} outside [0, 1]"));
            }
        }
        if self.epsilon_end > self.epsilon_start {
            return fail(format!(
                "epsilon schedule must be nonincreasing ({} -> {})",
                self.epsilon_start, self.epsilon_end
            ));
        }
        if self.eval_period == 0 {
            return fail("eval_period must be positive".into());
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes must be positive".into());
        }
        Ok(())
    }

    /// Linear ε over the first `epsilon_decay_steps`, flat afterwards.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if self.epsilon_decay_steps == 0 || step >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = step as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

pub const TRAINING_HEADER: &str = "eval_step,seed,agent,agent_type,metric,value";

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub eval_step: u64,
    pub seed: u64,
    pub agent: usize,
    pub agent_type: String,
    pub metric: String,
    pub value: f64,
}

/// Per-agent learning curves plus the scoped metric rows of every
/// evaluation point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub seed: u64,
    pub rows: Vec<LogRow>,
    pub metrics: Vec<MetricRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.eval_step, r.seed, r.agent, r.agent_type, r.metric, r.value
            ));
        }
        out
    }

    pub fn metrics_csv(&self) -> String {
        metrics_to_csv(&self.metrics)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub log: TrainingLog,
    pub q_tables: Vec<QTable>,
}

// Fixed stream offsets under the master seed. Evaluation uses disjoint
// streams so greedy rollouts never perturb training randomness.
const ENV_STREAM: u64 = 1 << 40;
const AGENT_STREAM: u64 = 2 << 40;
const EVAL_STREAM: u64 = 3 << 40;
const EVAL_SLOT: u64 = 4096;

struct Trainer<'c> {
    env_cfg: &'c EnvConfig,
    shaping: &'c ShapingConfig,
    learner: &'c LearnerConfig,
    seed: u64,
    legal: &'static [Action],
    q_tables: Vec<QTable>,
    log: TrainingLog,
}

/// Runs tabular independent Q-learning and returns the log and tables.
pub fn train(
    env_cfg: &EnvConfig,
    shaping: &ShapingConfig,
    learner: &LearnerConfig,
    seed: u64,
) -> Result<TrainOutput, LearnError> {
    env_cfg.validate()?;
    shaping.validate()?;
    learner.validate()?;
    for ty in shaping.phi.keys() {
        if !env_cfg.agents.iter().any(|a| a.agent_type.config_name() == ty) {
            return Err(LearnError::InvalidConfig(format!(
                "phi.{ty} refers to an agent type absent from the environment"
            )));
        }
    }
    let n = env_cfg.n_agents();
    let mut trainer = Trainer {
        env_cfg,
        shaping,
        learner,
        seed,
        legal: Action::legal(env_cfg.kind),
        q_tables: vec![QTable::new(); n],
        log: TrainingLog { seed, ..TrainingLog::default() },
    };

    let episode_len = env_cfg.episode_len;
    let n_episodes = learner.train_steps.div_ceil(episode_len);
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(derive_seed(seed, AGENT_STREAM + i as u64)))
        .collect();

    let mut eval_index = 0;
    let mut next_mark = learner.eval_period;
    trainer.evaluate(0, eval_index)?;
    eval_index += 1;

    for ep in 0..n_episodes {
        let steps_done = ep * episode_len;
        trainer.train_episode(ep, steps_done, &mut rngs)?;
        if steps_done + episode_len >= next_mark {
            trainer.evaluate(steps_done + episode_len, eval_index)?;
            eval_index += 1;
            next_mark = (steps_done + episode_len) / learner.eval_period * learner.eval_period
                + learner.eval_period;
        }
    }
    Ok(TrainOutput { log: trainer.log, q_tables: trainer.q_tables })
}

impl Trainer<'_> {
    fn observe_keys(&self, env: &EnvState) -> Result<Vec<Vec<u8>>, LearnError> {
        (0..self.env_cfg.n_agents())
            .map(|i| Ok(encode_observation(&env.observe(i)?)))
            .collect()
    }

    fn train_episode(
        &mut self,
        episode: u64,
        steps_done: u64,
        rngs: &mut [ChaCha8Rng],
    ) -> Result<(), LearnError> {
        let n = self.env_cfg.n_agents();
        let local = self.shaping.effective_local();
        let mut env = EnvState::reset(self.env_cfg, derive_seed(self.seed, ENV_STREAM + episode))?;
        let mut trackers = vec![SmoothedTracker::new(); n];
        let mut tables = initial_tables(n);
        let mut keys = self.observe_keys(&env)?;
        while !env.done() {
            let epsilon = self.learner.epsilon_at(steps_done + env.t());
            let mut actions = Vec::with_capacity(n);
            for i in 0..n {
                if env.agent(i)?.timeout > 0 {
                    actions.push(Action::Stay);
                } else {
                    actions.push(select_action(
                        &self.q_tables[i],
                        &keys[i],
                        self.legal,
                        epsilon,
                        &mut rngs[i],
                    ));
                }
            }
            let out = env.step(&actions)?;
            let shaped = self.shaped_step(&mut trackers, &mut tables, &env, &out.rewards, out.t, local)?;
            let next_keys = self.observe_keys(&env)?;
            for i in 0..n {
                self.q_tables[i].update(
                    &keys[i],
                    actions[i],
                    shaped[i],
                    &next_keys[i],
                    out.done,
                    self.learner.learning_rate,
                    self.learner.discount,
                    self.legal,
                )?;
            }
            keys = next_keys;
        }
        Ok(())
    }

    /// Shared per-step fairness plumbing: smooth, propagate when local,
    /// shape. Returns the per-agent learning signal.
    fn shaped_step(
        &self,
        trackers: &mut [SmoothedTracker],
        tables: &mut Vec<EstimateTable>,
        env: &EnvState,
        rewards: &[f64],
        t: u64,
        local: bool,
    ) -> Result<Vec<f64>, LearnError> {
        for (tracker, &r) in trackers.iter_mut().zip(rewards) {
            tracker.update(r, self.shaping.gamma, self.shaping.lambda)?;
        }
        if local {
            let visible: Vec<Vec<usize>> = (0..trackers.len())
                .map(|i| env.visible_agents(i))
                .collect::<Result<_, _>>()?;
            let own: Vec<f64> =
                trackers.iter().map(|tr| tr.normalized()).collect::<Result<_, _>>()?;
            *tables = propagate(tables, &visible, &own, t)?;
        }
        let shaped = shape_rewards(
            self.shaping,
            &self.env_cfg.agents,
            rewards,
            trackers,
            local.then_some(tables.as_slice()),
        )?;
        Ok(shaped.into_iter().map(|s| s.shaped).collect())
    }

    fn evaluate(&mut self, eval_step: u64, eval_index: u64) -> Result<(), LearnError> {
        let n = self.env_cfg.n_agents();
        let local = self.shaping.effective_local();
        let mut episodes = Vec::new();
        let mut extrinsic_sums = vec![0.0; n];
        let mut shaped_sums = vec![0.0; n];
        for ep in 0..self.learner.eval_episodes as u64 {
            let slot = EVAL_STREAM + eval_index * EVAL_SLOT;
            let mut env =
                EnvState::reset(self.env_cfg, derive_seed(self.seed, slot + 2 * ep))?;
            let mut rngs: Vec<ChaCha8Rng> = (0..n)
                .map(|i| {
                    let stream = slot + 2 * ep + 1 + (i as u64) * EVAL_SLOT * 64;
                    ChaCha8Rng::seed_from_u64(derive_seed(self.seed, stream))
                })
                .collect();
            let mut trackers = vec![SmoothedTracker::new(); n];
            let mut tables = initial_tables(n);
            let mut snapshots = vec![tables.clone()];
            let mut keys = self.observe_keys(&env)?;
            while !env.done() {
                let mut actions = Vec::with_capacity(n);
                for i in 0..n {
                    if env.agent(i)?.timeout > 0 {
                        actions.push(Action::Stay);
                    } else {
                        actions.push(select_action(
                            &self.q_tables[i],
                            &keys[i],
                            self.legal,
                            self.learner.eval_epsilon,
                            &mut rngs[i],
                        ));
                    }
                }
                let out = env.step(&actions)?;
                let shaped =
                    self.shaped_step(&mut trackers, &mut tables, &env, &out.rewards, out.t, local)?;
                if local {
                    snapshots.push(tables.clone());
                }
                for i in 0..n {
                    extrinsic_sums[i] += out.rewards[i];
                    shaped_sums[i] += shaped[i];
                }
                keys = self.observe_keys(&env)?;
            }
            let types: Vec<_> = self.env_cfg.agents.iter().map(|a| a.agent_type).collect();
            let mut m = EpisodeMetrics::compute(env.log(), &types)?;
            if local {
                m.estimate_age = Some(average_age(&snapshots)?);
            }
            m.smoothed_range = Some(average_range(&trackers)?);
            episodes.push(m);
        }
        let k = self.learner.eval_episodes as f64;
        let avg = EpisodeMetrics::average(&episodes)?;
        self.log.metrics.extend(avg.rows(eval_step, self.seed));
        for i in 0..n {
            let agent_type = self.env_cfg.agents[i].agent_type.config_name().to_owned();
            let mut push = |metric: &str, value: f64| {
                self.log.rows.push(LogRow {
                    eval_step,
                    seed: self.seed,
                    agent: i,
                    agent_type: agent_type.clone(),
                    metric: metric.to_owned(),
                    value,
                });
            };
            push("return", extrinsic_sums[i] / k);
            push("shaped_return", shaped_sums[i] / k);
            if let Some(p) = avg.own_coin_proportion[i] {
                push("own_coin_proportion", p);
            }
            if self.env_cfg.kind == crate::gridworld::EnvKind::Harvest {
                push("zaps", avg.zaps[i]);
            }
        }
        Ok(())
    }
}

/// Bit-exact text serialization of per-agent Q-tables: keys in hex,
/// Q-values as raw f64 bits.
pub fn checkpoint_to_string(tables: &[QTable]) -> String {
    let mut out = format!("qtables {}\n", tables.len());
    for (i, table) in tables.iter().enumerate() {
        out.push_str(&format!("agent {i} {}\n", table.entries.len()));
        for (key, entry) in &table.entries {
            let key_hex: String = key.iter().map(|b| format!("{b:02x}")).collect();
            out.push_str(&key_hex);
            out.push_str(&format!(" {}", entry.visits));
            for q in entry.q {
                out.push_str(&format!(" {:016x}", q.to_bits()));
            }
            out.push('\n');
        }
    }
    out
}

pub fn checkpoint_from_str(text: &str) -> Result<Vec<QTable>, LearnError> {
    let parse_err = |line: usize, reason: &str| LearnError::Parse {
        line,
        reason: reason.to_owned(),
    };
    let mut lines = text.lines().enumerate();
    let (line_no, header) = lines.next().ok_or_else(|| parse_err(1, "empty checkpoint"))?;
    let n: usize = header
        .strip_prefix("qtables ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(line_no + 1, "expected `qtables <n>`"))?;
    let mut tables = Vec::with_capacity(n);
    for expected_agent in 0..n {
        let (line_no, header) =
            lines.next().ok_or_else(|| parse_err(0, "truncated checkpoint"))?;
        let mut parts = header.split_whitespace();
        let ok = parts.next() == Some("agent")
            && parts.next() == Some(expected_agent.to_string().as_str());
        let n_keys: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|_| ok && parts.next().is_none())
            .ok_or_else(|| parse_err(line_no + 1, "expected `agent <i> <n_keys>`"))?;
        let mut table = QTable::new();
        for _ in 0..n_keys {
            let (line_no, row) =
                lines.next().ok_or_else(|| parse_err(0, "truncated checkpoint"))?;
            let mut parts = row.split_whitespace();
            let bad = || parse_err(line_no + 1, "expected `<key-hex> <visits> <q-bits>...`");
            let key_hex = parts.next().ok_or_else(bad)?;
            if key_hex.len() % 2 != 0 {
                return Err(bad());
            }
            let key: Vec<u8> = (0..key_hex.len() / 2)
                .map(|i| u8::from_str_radix(&key_hex[2 * i..2 * i + 2], 16))
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?;
            let visits: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let mut q = [0.0; N_ACTIONS];
            for slot in &mut q {
                let bits = parts
                    .next()
                    .and_then(|s| u64::from_str_radix(s, 16).ok())
                    .ok_or_else(bad)?;
                *slot = f64::from_bits(bits);
            }
            if parts.next().is_some() {
                return Err(bad());
            }
            table.entries.insert(key, TableEntry { q, visits });
        }
        tables.push(table);
    }
    if lines.next().is_some() {
        return Err(parse_err(0, "trailing data after last table"));
    }
    Ok(tables)
}
