//! Decentralized estimate tables and their gossip-style propagation.
//!
//! Every agent keeps one normalized-performance estimate and a freshness
//! stamp `tau` for every other agent. After each time step the tables are
//! rebuilt in three phases against an immutable snapshot of the previous
//! step:
//!
//! 1. for every agent the owner cannot currently see, adopt the entry of
//!    the freshest visible neighbor, but only when that entry is strictly
//!    fresher than the owner's own (ties between neighbors go to the
//!    lowest agent id);
//! 2. the owner's own smoothed, normalized value is refreshed externally;
//! 3. for every visible agent, store the true current value with `tau = t`.
//!
//! Tables are initialized to 0.5 with `tau = 0` before the first step, the
//! midpoint of the normalized range.

use thiserror::Error;

use crate::shaping::SmoothedTracker;

/// Initial estimate for every unseen agent.
pub const INITIAL_ESTIMATE: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("expected {expected} agents, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("agent {owner}: visibility set contains itself")]
    SelfVisibility { owner: usize },
    #[error("agent {owner}: visibility set references unknown agent {subject}")]
    UnknownAgent { owner: usize, subject: usize },
    #[error("agent {agent}: own normalized value is not finite")]
    NonFinite { agent: usize },
    #[error("estimate history needs at least two snapshots (t = 0 and one step)")]
    EmptyHistory,
    #[error("snapshot at t={t} holds tau={tau} from the future")]
    FutureStamp { t: u64, tau: u64 },
    #[error("tracker for agent {agent} was never updated")]
    UntrackedAgent { agent: usize },
}

/// One stored estimate: the believed normalized value and the step it was
/// last grounded in a direct observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub tau: u64,
}

/// Agent `owner`'s estimates of every other agent, indexed by agent id.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    owner: usize,
    entries: Vec<Option<Estimate>>,
}

impl EstimateTable {
    pub fn new(owner: usize, n_agents: usize) -> Self {
        let entries = (0..n_agents)
            .map(|j| (j != owner).then_some(Estimate { value: INITIAL_ESTIMATE, tau: 0 }))
            .collect();
        EstimateTable { owner, entries }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn n_agents(&self) -> usize {
        self.entries.len()
    }

    /// The stored estimate of `subject`, `None` for the owner's own slot.
    pub fn get(&self, subject: usize) -> Option<Estimate> {
        self.entries.get(subject).copied().flatten()
    }

    /// All entries in ascending subject order (the owner slot is skipped).
    pub fn others(&self) -> impl Iterator<Item = (usize, Estimate)> + '_ {
        self.entries.iter().enumerate().filter_map(|(j, e)| e.map(|e| (j, e)))
    }

    /// Estimated values of all other agents in ascending id order, the shape
    /// the reward-shaping operators consume.
    pub fn other_values(&self) -> Vec<f64> {
        self.others().map(|(_, e)| e.value).collect()
    }

    pub(crate) fn set(&mut self, subject: usize, estimate: Estimate) {
        debug_assert_ne!(subject, self.owner);
        self.entries[subject] = Some(estimate);
    }
}

/// Fresh tables for `n_agents`, the t = 0 state.
pub fn initial_tables(n_agents: usize) -> Vec<EstimateTable> {
    (0..n_agents).map(|i| EstimateTable::new(i, n_agents)).collect()
}

fn validate_visibility(visible: &[Vec<usize>], n: usize) -> Result<(), EstimateError> {
    for (owner, set) in visible.iter().enumerate() {
        for &j in set {
            if j == owner {
                return Err(EstimateError::SelfVisibility { owner });
            }
            if j >= n {
                return Err(EstimateError::UnknownAgent { owner, subject: j });
            }
        }
    }
    Ok(())
}

/// One propagation step at time `t`.
///
/// `visible[i]` lists the agents agent `i` can currently observe and
/// `own_normalized[j]` is agent `j`'s true normalized value at `t`. The
/// previous tables are read only as a snapshot; the result is a fresh set,
/// so the update is independent of agent ordering.
pub fn propagate(
    tables: &[EstimateTable],
    visible: &[Vec<usize>],
    own_normalized: &[f64],
    t: u64,
) -> Result<Vec<EstimateTable>, EstimateError> {
    let n = tables.len();
    if visible.len() != n {
        return Err(EstimateError::LengthMismatch { expected: n, got: visible.len() });
    }
    if own_normalized.len() != n {
        return Err(EstimateError::LengthMismatch { expected: n, got: own_normalized.len() });
    }
    validate_visibility(visible, n)?;
    for (agent, v) in own_normalized.iter().enumerate() {
        if !v.is_finite() {
            return Err(EstimateError::NonFinite { agent });
        }
    }

    let mut next = tables.to_vec();
    for (i, table) in next.iter_mut().enumerate() {
        // Ascending neighbor order makes the strict-max scan resolve ties
        // toward the lowest agent id.
        let mut neighbors: Vec<usize> = visible[i].clone();
        neighbors.sort_unstable();
        neighbors.dedup();
        for k in 0..n {
            if k == i {
                continue;
            }
            if neighbors.binary_search(&k).is_ok() {
                table.set(k, Estimate { value: own_normalized[k], tau: t });
                continue;
            }
            let own_tau = tables[i].get(k).map_or(0, |e| e.tau);
            let mut best: Option<Estimate> = None;
            for &j in &neighbors {
                let candidate = tables[j].get(k).expect("j != k, entry exists");
                if best.is_none_or(|b| candidate.tau > b.tau) {
                    best = Some(candidate);
                }
            }
            // Adoption never installs staler data than what is already held.
            if let Some(candidate) = best {
                if candidate.tau > own_tau {
                    table.set(k, candidate);
                }
            }
        }
    }
    Ok(next)
}

/// Mean estimate age over a whole episode.
///
/// `snapshots[t]` holds all tables after step `t`, with `snapshots[0]` the
/// initial state. The sum of `t - tau` over all entries and steps is
/// averaged over agents and over the number of steps `T = len - 1`.
pub fn average_age(snapshots: &[Vec<EstimateTable>]) -> Result<f64, EstimateError> {
    if snapshots.len() < 2 {
        return Err(EstimateError::EmptyHistory);
    }
    let n = snapshots[0].len();
    let steps = (snapshots.len() - 1) as f64;
    let mut total = 0.0;
    for (t, tables) in snapshots.iter().enumerate() {
        let t = t as u64;
        if tables.len() != n {
            return Err(EstimateError::LengthMismatch { expected: n, got: tables.len() });
        }
        for table in tables {
            for (_, e) in table.others() {
                if e.tau > t {
                    return Err(EstimateError::FutureStamp { t, tau: e.tau });
                }
                total += (t - e.tau) as f64;
            }
        }
    }
    Ok(total / n as f64 / steps)
}

/// Mean smoothed-reward range across agents, the spread statistic reported
/// alongside the age.
pub fn average_range(trackers: &[SmoothedTracker]) -> Result<f64, EstimateError> {
    if trackers.is_empty() {
        return Err(EstimateError::LengthMismatch { expected: 1, got: 0 });
    }
    let mut total = 0.0;
    for (agent, tracker) in trackers.iter().enumerate() {
        let range = tracker.range().ok_or(EstimateError::UntrackedAgent { agent })?;
        total += range;
    }
    Ok(total / trackers.len() as f64)
}

/// CSV rows `t,owner,subject,estimate,tau` for one snapshot, sorted by
/// (owner, subject). The caller prepends [`DUMP_HEADER`] once.
pub const DUMP_HEADER: &str = "t,owner,subject,estimate,tau";

pub fn dump_rows(t: u64, tables: &[EstimateTable]) -> String {
    let mut out = String::new();
    for table in tables {
        for (subject, e) in table.others() {
            out.push_str(&format!("{t},{},{subject},{},{}\n", table.owner(), e.value, e.tau));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Three agents, two steps: a chain 1-2-3 closes to just 1-2, so agent
    /// 1 learns about agent 3 only through agent 2's stored entry.
    #[test]
    fn relayed_entry_carries_source_stamp() {
        let t0 = initial_tables(3);
        // Step 1: 0 and 1 see each other, 1 and 2 see each other.
        let own1 = [0.5, 0.5, 0.5];
        let t1 = propagate(&t0, &[vec![1], vec![0, 2], vec![1]], &own1, 1).unwrap();
        assert_eq!(t1[0].get(1), Some(Estimate { value: 0.5, tau: 1 }));
        assert_eq!(t1[0].get(2), Some(Estimate { value: 0.5, tau: 0 }));
        assert_eq!(t1[1].get(2), Some(Estimate { value: 0.5, tau: 1 }));

        // Step 2: only 0 and 1 remain mutually visible.
        let own2 = [1.0, 1.0, 0.5];
        let t2 = propagate(&t1, &[vec![1], vec![0], vec![]], &own2, 2).unwrap();
        // Agent 0 adopts agent 1's stored entry for 2: value from step 1,
        // stamp tau=1, one step old at t=2.
        assert_eq!(t2[0].get(2), Some(Estimate { value: 0.5, tau: 1 }));
        assert_eq!(t2[0].get(1), Some(Estimate { value: 1.0, tau: 2 }));
        // Agent 1 must keep its fresher own entry rather than adopt agent
        // 0's stale one.
        assert_eq!(t2[1].get(2), Some(Estimate { value: 0.5, tau: 1 }));
        // Agent 2 saw nobody; both entries unchanged.
        assert_eq!(t2[2].get(0), Some(Estimate { value: 0.5, tau: 0 }));
        assert_eq!(t2[2].get(1), Some(Estimate { value: 0.5, tau: 1 }));
    }

    #[test]
    fn full_visibility_grounds_every_entry() {
        let t0 = initial_tables(3);
        let own = [0.1, 0.6, 0.9];
        let vis = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        let t1 = propagate(&t0, &vis, &own, 1).unwrap();
        for (i, table) in t1.iter().enumerate() {
            for (j, e) in table.others() {
                assert_eq!(e.value, own[j], "agent {i} entry {j}");
                assert_eq!(e.tau, 1);
            }
        }
    }

    #[test]
    fn tie_between_equally_fresh_sources_prefers_lowest_id() {
        let mut t0 = initial_tables(4);
        // Agents 1 and 2 both hold tau=3 entries for agent 3, with
        // different values; agent 0 sees both.
        t0[1].set(3, Estimate { value: 0.2, tau: 3 });
        t0[2].set(3, Estimate { value: 0.9, tau: 3 });
        let own = [0.5; 4];
        let t4 = propagate(&t0, &[vec![1, 2], vec![0], vec![0], vec![]], &own, 4).unwrap();
        assert_eq!(t4[0].get(3), Some(Estimate { value: 0.2, tau: 3 }));
    }

    #[test]
    fn empty_visibility_changes_nothing() {
        let mut t0 = initial_tables(2);
        t0[0].set(1, Estimate { value: 0.7, tau: 5 });
        let t6 = propagate(&t0, &[vec![], vec![]], &[0.3, 0.4], 6).unwrap();
        assert_eq!(t6[0].get(1), Some(Estimate { value: 0.7, tau: 5 }));
        assert_eq!(t6[1].get(0), Some(Estimate { value: 0.5, tau: 0 }));
    }

    #[test]
    fn rejects_self_visibility_and_unknown_agents() {
        let t0 = initial_tables(2);
        assert!(matches!(
            propagate(&t0, &[vec![0], vec![]], &[0.5, 0.5], 1),
            Err(EstimateError::SelfVisibility { owner: 0 })
        ));
        assert!(matches!(
            propagate(&t0, &[vec![7], vec![]], &[0.5, 0.5], 1),
            Err(EstimateError::UnknownAgent { owner: 0, subject: 7 })
        ));
    }

    #[test]
    fn average_age_of_isolated_pair() {
        // Two agents, never visible after t=0: ages grow 1, 1 then 2, 2.
        let t0 = initial_tables(2);
        let nobody = vec![vec![], vec![]];
        let own = [0.5, 0.5];
        let t1 = propagate(&t0, &nobody, &own, 1).unwrap();
        let t2 = propagate(&t1, &nobody, &own, 2).unwrap();
        let age = average_age(&[t0, t1, t2]).unwrap();
        assert_eq!(age, 1.5);
    }

    #[test]
    fn average_age_rejects_single_snapshot() {
        assert!(matches!(average_age(&[initial_tables(2)]), Err(EstimateError::EmptyHistory)));
    }

    #[test]
    fn dump_rows_are_ordered_and_complete() {
        let t0 = initial_tables(2);
        let rows = dump_rows(0, &t0);
        assert_eq!(rows, "0,0,1,0.5,0\n0,1,0,0.5,0\n");
    }

    proptest! {
        // Propagation freshness: no entry's stamp ever decreases, and ages
        // stay within [0, t].
        #[test]
        fn stamps_never_regress(
            stamps in proptest::collection::vec(0u8..4, 4),
            t in 1u64..10,
        ) {
            let n = 4;
            let mut tables = initial_tables(n);
            // Seed arbitrary history stamps below t.
            for (i, &s) in stamps.iter().enumerate() {
                for j in 0..n {
                    if i != j {
                        tables[i].set(j, Estimate { value: 0.5, tau: (s as u64).min(t - 1) });
                    }
                }
            }
            let vis: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i && (i + j) % 2 == 0).collect()).collect();
            let own = vec![0.5; n];
            let next = propagate(&tables, &vis, &own, t).unwrap();
            for i in 0..n {
                for (j, e) in next[i].others() {
                    let before = tables[i].get(j).unwrap().tau;
                    prop_assert!(e.tau >= before);
                    prop_assert!(e.tau <= t);
                }
            }
        }
    }
}
