//! Replay files: (config, seed, joint-action sequence).
//!
//! A replay pins everything the engine needs to re-simulate an episode
//! bit-exactly: the environment sections of the config format, the episode
//! seed, and one action row per step (a string of action letters, one per
//! agent). Re-running a replay reproduces the original event log byte for
//! byte.

use crate::config::{env_to_ini_string, ConfigError, Ini};
use crate::events::EventLog;

use super::{Action, EnvConfig, EnvState, GridError};

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub config: EnvConfig,
    pub seed: u64,
    /// `actions[t][i]` is agent i's action at step t+1.
    pub actions: Vec<Vec<Action>>,
}

fn config_err(e: ConfigError) -> GridError {
    match e {
        ConfigError::Parse { line, reason } => GridError::Parse { line, reason },
        other => GridError::Parse { line: 0, reason: other.to_string() },
    }
}

impl Replay {
    pub fn new(config: EnvConfig, seed: u64, actions: Vec<Vec<Action>>) -> Replay {
        Replay { config, seed, actions }
    }

    /// Serializes as env/agent sections plus `[replay]` (seed) and
    /// `[actions]` (`<step> = <letters>` rows).
    pub fn to_file_string(&self) -> String {
        let mut out = env_to_ini_string(&self.config);
        out.push_str(&format!("\n[replay]\nseed = {}\n\n[actions]\n", self.seed));
        for (t, row) in self.actions.iter().enumerate() {
            let letters: String = row.iter().map(|a| a.letter()).collect();
            out.push_str(&format!("{t} = {letters}\n"));
        }
        out
    }

    pub fn parse_str(text: &str) -> Result<Replay, GridError> {
        let ini = Ini::parse(text).map_err(config_err)?;
        let config = crate::config::env_from_ini(&ini).map_err(config_err)?;
        let replay_sec = ini
            .section("replay")
            .ok_or_else(|| config_err(ConfigError::MissingSection("replay".into())))?;
        let seed: u64 = replay_sec
            .get("seed")
            .ok_or_else(|| GridError::Parse { line: 0, reason: "missing replay.seed".into() })?
            .parse()
            .map_err(|_| GridError::Parse { line: 0, reason: "replay.seed must be a u64".into() })?;
        let actions_sec = ini
            .section("actions")
            .ok_or_else(|| config_err(ConfigError::MissingSection("actions".into())))?;
        let mut rows: Vec<(usize, Vec<Action>)> = Vec::new();
        for t in 0.. {
            let Some(letters) = actions_sec.get(&t.to_string()) else { break };
            let row = letters
                .chars()
                .map(|c| {
                    Action::from_letter(c).ok_or_else(|| GridError::Parse {
                        line: 0,
                        reason: format!("step {t}: unknown action letter `{c}`"),
                    })
                })
                .collect::<Result<Vec<Action>, GridError>>()?;
            if row.len() != config.n_agents() {
                return Err(GridError::Parse {
                    line: 0,
                    reason: format!(
                        "step {t}: {} action letters for {} agents",
                        row.len(),
                        config.n_agents()
                    ),
                });
            }
            rows.push((t, row));
        }
        if rows.len() != actions_sec.n_pairs() {
            return Err(GridError::Parse {
                line: 0,
                reason: "action steps must be numbered contiguously from 0".into(),
            });
        }
        Ok(Replay { config, seed, actions: rows.into_iter().map(|(_, r)| r).collect() })
    }

    /// Re-simulates the stored episode and returns its event log. A replay
    /// may cover a prefix of the episode; the log's metadata still carries
    /// the configured episode length.
    pub fn run(&self) -> Result<EventLog, GridError> {
        let mut env = EnvState::reset(&self.config, self.seed)?;
        for row in &self.actions {
            env.step(row)?;
        }
        Ok(env.into_log())
    }
}
