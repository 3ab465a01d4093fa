//! Evaluation metrics computed from event logs.
//!
//! Everything here is a pure fold over an [`EventLog`]: replaying an
//! episode and recomputing yields identical values. All reward-based
//! metrics use extrinsic rewards only; shaped rewards never enter a
//! metric. The two non-log metrics (average estimate age, average
//! smoothed range) are computed by their owning modules and carried
//! alongside.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::events::{EventKind, EventLog};
use crate::gridworld::{AgentType, EnvKind};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("metric requires a {expected} log, got {got}")]
    WrongEnv { expected: EnvKind, got: EnvKind },
    #[error("expected {expected} agent types, got {got}")]
    TypeCount { expected: usize, got: usize },
    #[error("cannot aggregate an empty metrics list")]
    Empty,
}

/// Per-agent extrinsic returns and their mean.
pub fn episode_returns(log: &EventLog) -> (Vec<f64>, f64) {
    let mut returns = vec![0.0; log.n_agents];
    for e in log.events() {
        if e.kind.carries_reward() {
            returns[e.agent] += e.value;
        }
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    (returns, mean)
}

/// Own-coin share per agent: own pickups / all pickups. Agents that
/// collected nothing report `None` and are excluded from the mean.
pub fn proportion_own_coins(log: &EventLog) -> Result<(Vec<Option<f64>>, Option<f64>), MetricsError> {
    if log.env != EnvKind::Coins {
        return Err(MetricsError::WrongEnv { expected: EnvKind::Coins, got: log.env });
    }
    let mut own = vec![0u64; log.n_agents];
    let mut total = vec![0u64; log.n_agents];
    for e in log.events() {
        match e.kind {
            EventKind::OwnCoin => {
                own[e.agent] += 1;
                total[e.agent] += 1;
            }
            EventKind::MismatchCoin => total[e.agent] += 1,
            _ => {}
        }
    }
    let per_agent: Vec<Option<f64>> = own
        .iter()
        .zip(&total)
        .map(|(&o, &n)| (n > 0).then(|| o as f64 / n as f64))
        .collect();
    Ok((per_agent.clone(), mean_defined(&per_agent)))
}

/// Mean step index of each agent's positive-reward steps; agents with no
/// positive reward contribute the full episode length. Returned per agent
/// plus the population mean.
pub fn sustainability(log: &EventLog) -> (Vec<f64>, f64) {
    let mut step_sums: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); log.n_agents];
    for e in log.events() {
        if e.kind.carries_reward() {
            *step_sums[e.agent].entry(e.t).or_insert(0.0) += e.value;
        }
    }
    let per_agent: Vec<f64> = step_sums
        .iter()
        .map(|sums| {
            let positive: Vec<u64> =
                sums.iter().filter(|&(_, &r)| r > 0.0).map(|(&t, _)| t).collect();
            if positive.is_empty() {
                log.episode_len as f64
            } else {
                positive.iter().sum::<u64>() as f64 / positive.len() as f64
            }
        })
        .collect();
    let mean = per_agent.iter().sum::<f64>() / per_agent.len() as f64;
    (per_agent, mean)
}

/// Peace: N minus the time-averaged count of timed-out agents.
pub fn peace(log: &EventLog) -> Result<f64, MetricsError> {
    if log.env != EnvKind::Harvest {
        return Err(MetricsError::WrongEnv { expected: EnvKind::Harvest, got: log.env });
    }
    let timed_out = log.events().iter().filter(|e| e.kind == EventKind::TimedOut).count();
    Ok(log.n_agents as f64 - timed_out as f64 / log.episode_len as f64)
}

/// Peace restricted to one agent subset (a type), normalized by the
/// subgroup size, or by global N when `subgroup_norm` is false.
fn peace_subset(log: &EventLog, members: &[usize], subgroup_norm: bool) -> f64 {
    let timed_out = log
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::TimedOut && members.contains(&e.agent))
        .count();
    let base = if subgroup_norm { members.len() } else { log.n_agents };
    base as f64 - timed_out as f64 / log.episode_len as f64
}

/// Successful zap counts per shooter and their mean.
pub fn zap_counts(log: &EventLog) -> (Vec<u64>, f64) {
    let mut counts = vec![0u64; log.n_agents];
    for e in log.events() {
        if e.kind == EventKind::Zap {
            counts[e.agent] += 1;
        }
    }
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    (counts, mean)
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn mean_of(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Groups agent indices by type name, preserving first-appearance order
/// of types in the agent list.
fn type_groups(types: &[AgentType]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, ty) in types.iter().enumerate() {
        let name = ty.config_name().to_owned();
        match groups.iter_mut().find(|(n, _)| *n == name) {
            Some((_, members)) => members.push(i),
            None => groups.push((name, vec![i])),
        }
    }
    groups
}

/// One evaluated episode, or the average of several.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub env: EnvKind,
    pub agent_types: Vec<AgentType>,
    pub returns: Vec<f64>,
    pub mean_return: f64,
    pub own_coin_proportion: Vec<Option<f64>>,
    pub mean_own_coin_proportion: Option<f64>,
    pub sustainability_per_agent: Vec<f64>,
    pub sustainability: f64,
    pub peace: Option<f64>,
    pub zaps: Vec<f64>,
    pub mean_zaps: f64,
    /// Average estimate age, supplied by the estimate layer when active.
    pub estimate_age: Option<f64>,
    /// Average smoothed-reward range, supplied by the shaping layer.
    pub smoothed_range: Option<f64>,
}

impl EpisodeMetrics {
    pub fn compute(log: &EventLog, types: &[AgentType]) -> Result<EpisodeMetrics, MetricsError> {
        if types.len() != log.n_agents {
            return Err(MetricsError::TypeCount { expected: log.n_agents, got: types.len() });
        }
        let (returns, mean_return) = episode_returns(log);
        let (own_coin_proportion, mean_own_coin_proportion) = match log.env {
            EnvKind::Coins => proportion_own_coins(log)?,
            EnvKind::Harvest => (vec![None; log.n_agents], None),
        };
        let (sustainability_per_agent, sustainability) = sustainability(log);
        let peace = match log.env {
            EnvKind::Harvest => Some(peace(log)?),
            EnvKind::Coins => None,
        };
        let (zap_raw, mean_zaps) = zap_counts(log);
        Ok(EpisodeMetrics {
            env: log.env,
            agent_types: types.to_vec(),
            returns,
            mean_return,
            own_coin_proportion,
            mean_own_coin_proportion,
            sustainability_per_agent,
            sustainability,
            peace,
            zaps: zap_raw.into_iter().map(|z| z as f64).collect(),
            mean_zaps,
            estimate_age: None,
            smoothed_range: None,
        })
    }

    /// Element-wise mean over several episodes of the same shape.
    /// Optional fields average over the episodes where they are defined.
    pub fn average(episodes: &[EpisodeMetrics]) -> Result<EpisodeMetrics, MetricsError> {
        let first = episodes.first().ok_or(MetricsError::Empty)?;
        let n_agents = first.returns.len();
        let k = episodes.len() as f64;
        let mean_vec = |f: &dyn Fn(&EpisodeMetrics) -> &Vec<f64>| -> Vec<f64> {
            (0..n_agents)
                .map(|i| episodes.iter().map(|m| f(m)[i]).sum::<f64>() / k)
                .collect()
        };
        let mean_opt = |f: &dyn Fn(&EpisodeMetrics) -> Option<f64>| -> Option<f64> {
            let defined: Vec<f64> = episodes.iter().filter_map(f).collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        };
        let returns = mean_vec(&|m| &m.returns);
        let own_coin_proportion: Vec<Option<f64>> = (0..n_agents)
            .map(|i| {
                let defined: Vec<f64> =
                    episodes.iter().filter_map(|m| m.own_coin_proportion[i]).collect();
                (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
            })
            .collect();
        Ok(EpisodeMetrics {
            env: first.env,
            agent_types: first.agent_types.clone(),
            mean_return: episodes.iter().map(|m| m.mean_return).sum::<f64>() / k,
            returns,
            mean_own_coin_proportion: mean_opt(&|m| m.mean_own_coin_proportion),
            own_coin_proportion,
            sustainability_per_agent: mean_vec(&|m| &m.sustainability_per_agent),
            sustainability: episodes.iter().map(|m| m.sustainability).sum::<f64>() / k,
            peace: mean_opt(&|m| m.peace),
            zaps: mean_vec(&|m| &m.zaps),
            mean_zaps: episodes.iter().map(|m| m.mean_zaps).sum::<f64>() / k,
            estimate_age: mean_opt(&|m| m.estimate_age),
            smoothed_range: mean_opt(&|m| m.smoothed_range),
        })
    }

    /// Flattens into CSV rows scoped global / per-agent / per-type.
    pub fn rows(&self, eval_step: u64, seed: u64) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        let mut push = |scope: Scope, name: &str, value: f64| {
            rows.push(MetricRow { eval_step, seed, scope, name: name.to_owned(), value });
        };
        let groups = type_groups(&self.agent_types);
        let per_type_mean = |values: &[f64]| -> Vec<(String, f64)> {
            groups
                .iter()
                .map(|(name, members)| {
                    let picked: Vec<f64> = members.iter().map(|&i| values[i]).collect();
                    (name.clone(), mean_of(&picked))
                })
                .collect()
        };

        push(Scope::Global, "return", self.mean_return);
        for (i, &g) in self.returns.iter().enumerate() {
            push(Scope::Agent(i), "return", g);
        }
        for (ty, v) in per_type_mean(&self.returns) {
            push(Scope::Type(ty), "return", v);
        }

        if let Some(mean) = self.mean_own_coin_proportion {
            push(Scope::Global, "own_coin_proportion", mean);
            for (i, p) in self.own_coin_proportion.iter().enumerate() {
                if let Some(p) = p {
                    push(Scope::Agent(i), "own_coin_proportion", *p);
                }
            }
        }

        push(Scope::Global, "sustainability", self.sustainability);
        for (i, &t) in self.sustainability_per_agent.iter().enumerate() {
            push(Scope::Agent(i), "sustainability", t);
        }

        if let Some(p) = self.peace {
            push(Scope::Global, "peace", p);
        }
        if self.env == EnvKind::Harvest {
            push(Scope::Global, "zaps", self.mean_zaps);
            for (i, &z) in self.zaps.iter().enumerate() {
                push(Scope::Agent(i), "zaps", z);
            }
            for (ty, v) in per_type_mean(&self.zaps) {
                push(Scope::Type(ty), "zaps", v);
            }
        }

        if let Some(age) = self.estimate_age {
            push(Scope::Global, "estimate_age", age);
        }
        if let Some(range) = self.smoothed_range {
            push(Scope::Global, "smoothed_range", range);
        }
        rows
    }

    /// Per-type peace values straight from a log (not stored on the
    /// struct because the subgroup-vs-global normalization is a choice).
    pub fn peace_per_type(
        log: &EventLog,
        types: &[AgentType],
        subgroup_norm: bool,
    ) -> Result<Vec<(String, f64)>, MetricsError> {
        if log.env != EnvKind::Harvest {
            return Err(MetricsError::WrongEnv { expected: EnvKind::Harvest, got: log.env });
        }
        if types.len() != log.n_agents {
            return Err(MetricsError::TypeCount { expected: log.n_agents, got: types.len() });
        }
        Ok(type_groups(types)
            .into_iter()
            .map(|(name, members)| (name, peace_subset(log, &members, subgroup_norm)))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Global,
    Agent(usize),
    Type(String),
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Global => f.write_str("global"),
            Scope::Agent(i) => write!(f, "agent:{i}"),
            Scope::Type(ty) => write!(f, "type:{ty}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub eval_step: u64,
    pub seed: u64,
    pub scope: Scope,
    pub name: String,
    pub value: f64,
}

pub const METRICS_HEADER: &str = "eval_step,seed,scope,name,value";

pub fn metrics_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.eval_step, r.seed, r.scope, r.name, r.value));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    fn coins_log(events: Vec<Event>) -> EventLog {
        let mut log = EventLog::new(EnvKind::Coins, 2, 500);
        for e in events {
            log.push(e);
        }
        log
    }

    fn harvest_log(n: usize, episode_len: u64, events: Vec<Event>) -> EventLog {
        let mut log = EventLog::new(EnvKind::Harvest, n, episode_len);
        for e in events {
            log.push(e);
        }
        log
    }

    fn ev(t: u64, agent: usize, kind: EventKind, value: f64) -> Event {
        Event { t, agent, kind, value, counterparty: None }
    }

    #[test]
    fn returns_sum_rewards_and_average() {
        let log = coins_log(vec![
            ev(1, 0, EventKind::OwnCoin, 1.0),
            ev(2, 0, EventKind::MismatchCoin, 1.0),
            ev(2, 1, EventKind::Penalty, -2.0),
            ev(3, 0, EventKind::OwnCoin, 2.0),
            ev(3, 1, EventKind::OwnCoin, 1.0),
        ]);
        let (per_agent, mean) = episode_returns(&log);
        assert_eq!(per_agent, vec![4.0, -1.0]);
        assert_eq!(mean, 1.5);
    }

    #[test]
    fn empty_log_yields_zero_returns() {
        let (per_agent, mean) = episode_returns(&coins_log(vec![]));
        assert_eq!(per_agent, vec![0.0, 0.0]);
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn own_coin_proportion_counts_events_not_values() {
        let log = coins_log(vec![
            ev(1, 0, EventKind::OwnCoin, 1.0),
            ev(2, 0, EventKind::OwnCoin, 1.0),
            ev(3, 0, EventKind::OwnCoin, 1.0),
            ev(4, 0, EventKind::MismatchCoin, 1.0),
        ]);
        let (per_agent, mean) = proportion_own_coins(&log).unwrap();
        assert_eq!(per_agent[0], Some(0.75));
        // Agent 1 never collected: excluded, so the mean is agent 0 alone.
        assert_eq!(per_agent[1], None);
        assert_eq!(mean, Some(0.75));
    }

    #[test]
    fn own_coin_proportion_rejects_harvest_logs() {
        let log = harvest_log(2, 100, vec![]);
        assert!(matches!(proportion_own_coins(&log), Err(MetricsError::WrongEnv { .. })));
    }

    #[test]
    fn sustainability_means_positive_steps_and_defaults_to_t() {
        let log = coins_log(vec![
            ev(10, 0, EventKind::OwnCoin, 1.0),
            ev(20, 0, EventKind::OwnCoin, 1.0),
        ]);
        let (per_agent, mean) = sustainability(&log);
        assert_eq!(per_agent, vec![15.0, 500.0]);
        assert_eq!(mean, 257.5);
    }

    #[test]
    fn sustainability_ignores_steps_with_net_negative_reward() {
        // +1 and -2 on the same step: the step sum is negative, so it does
        // not count as a positive-reward step.
        let log = coins_log(vec![
            ev(10, 0, EventKind::OwnCoin, 1.0),
            ev(10, 0, EventKind::Penalty, -2.0),
            ev(30, 0, EventKind::OwnCoin, 1.0),
        ]);
        let (per_agent, _) = sustainability(&log);
        assert_eq!(per_agent[0], 30.0);
    }

    #[test]
    fn peace_matches_hand_computed_value() {
        // One agent timed out for 25 of 1000 steps, N=10.
        let events = (100..125).map(|t| ev(t, 3, EventKind::TimedOut, 0.0)).collect();
        let log = harvest_log(10, 1000, events);
        assert_eq!(peace(&log).unwrap(), 9.975);
    }

    #[test]
    fn peace_bounds() {
        let log = harvest_log(3, 50, vec![]);
        assert_eq!(peace(&log).unwrap(), 3.0);
        let mut events = Vec::new();
        for t in 1..=50 {
            for agent in 0..3 {
                events.push(ev(t, agent, EventKind::TimedOut, 0.0));
            }
        }
        let log = harvest_log(3, 50, events);
        assert_eq!(peace(&log).unwrap(), 0.0);
        assert!(matches!(peace(&coins_log(vec![])), Err(MetricsError::WrongEnv { .. })));
    }

    #[test]
    fn zap_counts_only_successful_hits() {
        let log = harvest_log(
            3,
            100,
            vec![
                Event { t: 5, agent: 0, kind: EventKind::Zap, value: 0.0, counterparty: Some(1) },
                Event { t: 9, agent: 0, kind: EventKind::Zap, value: 0.0, counterparty: Some(2) },
            ],
        );
        let (counts, mean) = zap_counts(&log);
        assert_eq!(counts, vec![2, 0, 0]);
        assert!((mean - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn type_weighted_mean_recovers_global_mean() {
        let log = coins_log(vec![
            ev(1, 0, EventKind::OwnCoin, 3.0),
            ev(2, 1, EventKind::MismatchCoin, 0.5),
        ]);
        let types = [AgentType::LowReward, AgentType::HighReward];
        let m = EpisodeMetrics::compute(&log, &types).unwrap();
        let rows = m.rows(0, 0);
        let type_rows: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| matches!(r.scope, Scope::Type(_)) && r.name == "return")
            .collect();
        let weighted: f64 = type_rows.iter().map(|r| r.value).sum::<f64>() / type_rows.len() as f64;
        assert!((weighted - m.mean_return).abs() < 1e-12);
    }

    #[test]
    fn per_type_peace_normalization_modes() {
        let mut events = Vec::new();
        for t in 1..=10 {
            events.push(ev(t, 0, EventKind::TimedOut, 0.0));
        }
        let log = harvest_log(4, 100, events);
        let types =
            [AgentType::Standard, AgentType::Standard, AgentType::WideZap, AgentType::WideZap];
        let by_group = EpisodeMetrics::peace_per_type(&log, &types, true).unwrap();
        assert_eq!(by_group, vec![("standard".into(), 1.9), ("wide_zap".into(), 2.0)]);
        let by_global = EpisodeMetrics::peace_per_type(&log, &types, false).unwrap();
        assert_eq!(by_global, vec![("standard".into(), 3.9), ("wide_zap".into(), 4.0)]);
    }

    #[test]
    fn averaging_metrics_averages_each_field() {
        let log_a = coins_log(vec![ev(10, 0, EventKind::OwnCoin, 1.0)]);
        let log_b = coins_log(vec![
            ev(20, 0, EventKind::OwnCoin, 1.0),
            ev(20, 0, EventKind::OwnCoin, 1.0),
            ev(30, 1, EventKind::MismatchCoin, 1.0),
            ev(30, 0, EventKind::Penalty, -2.0),
        ]);
        let types = [AgentType::Standard, AgentType::Standard];
        let a = EpisodeMetrics::compute(&log_a, &types).unwrap();
        let b = EpisodeMetrics::compute(&log_b, &types).unwrap();
        let avg = EpisodeMetrics::average(&[a, b]).unwrap();
        assert_eq!(avg.returns, vec![0.5, 0.5]);
        // Agent 1 collected only in episode b; its proportion averages
        // over defined episodes only.
        assert_eq!(avg.own_coin_proportion[1], Some(0.0));
        assert_eq!(avg.own_coin_proportion[0], Some(1.0));
        assert!(EpisodeMetrics::average(&[]).is_err());
    }

    #[test]
    fn csv_rows_are_scoped_and_ordered() {
        let log = coins_log(vec![ev(1, 0, EventKind::OwnCoin, 1.0)]);
        let types = [AgentType::Standard, AgentType::Standard];
        let m = EpisodeMetrics::compute(&log, &types).unwrap();
        let csv = metrics_to_csv(&m.rows(100, 7));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER));
        assert_eq!(lines.next(), Some("100,7,global,return,0.5"));
        assert!(csv.contains("100,7,agent:0,return,1\n"));
        assert!(csv.contains("100,7,type:standard,return,0.5\n"));
        assert!(csv.contains("100,7,global,own_coin_proportion,1\n"));
    }
}
