//! Per-step event logs emitted by the gridworld engines.
//!
//! Every reward an agent receives is attributable to exactly one event, so
//! the metric layer can be a pure fold over a log. Zap hits and timed-out
//! steps are logged as zero-reward events to keep conflict statistics
//! derivable from the same stream.

use std::fmt;

use thiserror::Error;

use crate::gridworld::EnvKind;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Collector picked up a coin of its own color.
    OwnCoin,
    /// Collector picked up another agent's coin; counterparty is the owner.
    MismatchCoin,
    /// Owner's penalty after a mismatch pickup; counterparty is the collector.
    Penalty,
    /// An apple was harvested.
    Apple,
    /// A zap beam hit; the agent is the shooter, counterparty the victim.
    Zap,
    /// One step spent removed from the grid after being hit.
    TimedOut,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::OwnCoin,
        EventKind::MismatchCoin,
        EventKind::Penalty,
        EventKind::Apple,
        EventKind::Zap,
        EventKind::TimedOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::OwnCoin => "own_coin",
            EventKind::MismatchCoin => "mismatch_coin",
            EventKind::Penalty => "penalty",
            EventKind::Apple => "apple",
            EventKind::Zap => "zap",
            EventKind::TimedOut => "timed_out",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Whether the event's value contributes to the agent's extrinsic return.
    pub fn carries_reward(self) -> bool {
        matches!(
            self,
            EventKind::OwnCoin | EventKind::MismatchCoin | EventKind::Penalty | EventKind::Apple
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: u64,
    pub agent: usize,
    pub kind: EventKind,
    pub value: f64,
    pub counterparty: Option<usize>,
}

/// Episode event log with the metadata the metric formulas need.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub env: EnvKind,
    pub n_agents: usize,
    /// Episode length T; event steps run 1..=T.
    pub episode_len: u64,
    events: Vec<Event>,
}

pub const EVENT_HEADER: &str = "t,agent,event_kind,value,counterparty";

impl EventLog {
    pub fn new(env: EnvKind, n_agents: usize, episode_len: u64) -> Self {
        EventLog { env, n_agents, episode_len, events: Vec::new() }
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Extrinsic reward of one agent at one step (sum of its reward events).
    pub fn reward_at(&self, agent: usize, t: u64) -> f64 {
        self.events
            .iter()
            .filter(|e| e.agent == agent && e.t == t && e.kind.carries_reward())
            .map(|e| e.value)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVENT_HEADER);
        out.push('\n');
        for e in &self.events {
            let counterparty =
                e.counterparty.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{counterparty}\n", e.t, e.agent, e.kind, e.value));
        }
        out
    }

    /// Parses a CSV produced by [`EventLog::to_csv`]. Metadata is supplied
    /// by the caller since the row format carries none.
    pub fn parse_csv(
        env: EnvKind,
        n_agents: usize,
        episode_len: u64,
        text: &str,
    ) -> Result<Self, EventError> {
        let mut log = EventLog::new(env, n_agents, episode_len);
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            if idx == 0 {
                if line != EVENT_HEADER {
                    return Err(EventError::Parse { line: 1, reason: "missing event header".into() });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(EventError::Parse { line: lineno, reason: "expected 5 fields".into() });
            }
            let parse_err = |reason: String| EventError::Parse { line: lineno, reason };
            let t = fields[0].parse().map_err(|_| parse_err(format!("bad t `{}`", fields[0])))?;
            let agent =
                fields[1].parse().map_err(|_| parse_err(format!("bad agent `{}`", fields[1])))?;
            let kind = EventKind::parse(fields[2])
                .ok_or_else(|| parse_err(format!("unknown event kind `{}`", fields[2])))?;
            let value =
                fields[3].parse().map_err(|_| parse_err(format!("bad value `{}`", fields[3])))?;
            let counterparty = if fields[4].is_empty() {
                None
            } else {
                Some(fields[4].parse().map_err(|_| parse_err(format!("bad counterparty `{}`", fields[4])))?)
            };
            log.push(Event { t, agent, kind, value, counterparty });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_bit_exactly() {
        let mut log = EventLog::new(EnvKind::Coins, 2, 10);
        log.push(Event { t: 1, agent: 0, kind: EventKind::OwnCoin, value: 1.0, counterparty: None });
        log.push(Event {
            t: 3,
            agent: 1,
            kind: EventKind::MismatchCoin,
            value: 0.5,
            counterparty: Some(0),
        });
        log.push(Event { t: 3, agent: 0, kind: EventKind::Penalty, value: -2.0, counterparty: Some(1) });
        let csv = log.to_csv();
        let parsed = EventLog::parse_csv(EnvKind::Coins, 2, 10, &csv).unwrap();
        assert_eq!(parsed, log);
        assert_eq!(csv.lines().next(), Some(EVENT_HEADER));
    }

    #[test]
    fn reward_at_sums_reward_events_only() {
        let mut log = EventLog::new(EnvKind::Harvest, 2, 10);
        log.push(Event { t: 2, agent: 0, kind: EventKind::Apple, value: 1.5, counterparty: None });
        log.push(Event { t: 2, agent: 0, kind: EventKind::Zap, value: 0.0, counterparty: Some(1) });
        log.push(Event { t: 2, agent: 0, kind: EventKind::Apple, value: 1.5, counterparty: None });
        assert_eq!(log.reward_at(0, 2), 3.0);
        assert_eq!(log.reward_at(1, 2), 0.0);
    }
}
