//! Matrix-game analysis: social-dilemma classification, per-agent payoff
//! normalization, and empirical verification from Schelling-diagram sweeps.
//!
//! A game is described by the four canonical outcomes per agent: mutual
//! cooperation `R`, temptation `T` (defect against a cooperator), sucker
//! `S` (cooperate against a defector), and mutual defection `P`. The
//! social-dilemma conditions are all strict:
//!
//! * C1: `R > P`
//! * C2: `R > S`
//! * C3: `2R > T + S`
//! * greed: `T > R`, fear: `P > S` (at least one must hold)

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// One agent's payoff cell, named for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayoffCell {
    R,
    T,
    S,
    P,
}

impl PayoffCell {
    pub const ALL: [PayoffCell; 4] = [PayoffCell::R, PayoffCell::T, PayoffCell::S, PayoffCell::P];

    pub fn as_str(self) -> &'static str {
        match self {
            PayoffCell::R => "R",
            PayoffCell::T => "T",
            PayoffCell::S => "S",
            PayoffCell::P => "P",
        }
    }
}

impl fmt::Display for PayoffCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum DilemmaError {
    #[error("classification requires exactly two agents, found {0}")]
    AgentCount(usize),
    #[error("payoff matrix has no agents")]
    Empty,
    #[error("agent {agent}: cell {cell} is not finite")]
    NonFinite { agent: String, cell: PayoffCell },
    #[error("agent {agent}: missing cell {cell}")]
    MissingCell { agent: String, cell: PayoffCell },
    #[error("line {line}: duplicate cell {cell} for agent {agent}")]
    DuplicateCell { agent: String, cell: PayoffCell, line: usize },
    #[error("agent {agent}: all four payoffs equal, normalization undefined")]
    DegeneratePayoffs { agent: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// The four canonical outcomes for one agent of a 2x2 game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcomes {
    pub reward: f64,
    pub temptation: f64,
    pub sucker: f64,
    pub punishment: f64,
}

impl Outcomes {
    pub fn new(reward: f64, temptation: f64, sucker: f64, punishment: f64) -> Self {
        Outcomes { reward, temptation, sucker, punishment }
    }

    pub fn cell(&self, cell: PayoffCell) -> f64 {
        match cell {
            PayoffCell::R => self.reward,
            PayoffCell::T => self.temptation,
            PayoffCell::S => self.sucker,
            PayoffCell::P => self.punishment,
        }
    }

    fn is_finite(&self) -> Option<PayoffCell> {
        PayoffCell::ALL.into_iter().find(|&c| !self.cell(c).is_finite())
    }

    /// Min-max rescale of this agent's own four payoffs onto [0, 1].
    fn normalized(&self, agent: &str) -> Result<Outcomes, DilemmaError> {
        let vals = PayoffCell::ALL.map(|c| self.cell(c));
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return Err(DilemmaError::DegeneratePayoffs { agent: agent.to_owned() });
        }
        let scale = |v: f64| (v - lo) / (hi - lo);
        Ok(Outcomes {
            reward: scale(self.reward),
            temptation: scale(self.temptation),
            sucker: scale(self.sucker),
            punishment: scale(self.punishment),
        })
    }
}

/// Ordered collection of per-agent outcomes. Agent order is preserved from
/// construction (or first appearance in a parsed file).
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    agents: Vec<(String, Outcomes)>,
}

impl PayoffMatrix {
    pub fn new(agents: Vec<(String, Outcomes)>) -> Result<Self, DilemmaError> {
        if agents.is_empty() {
            return Err(DilemmaError::Empty);
        }
        for (id, outcomes) in &agents {
            if let Some(cell) = outcomes.is_finite() {
                return Err(DilemmaError::NonFinite { agent: id.clone(), cell });
            }
        }
        Ok(PayoffMatrix { agents })
    }

    pub fn agents(&self) -> impl Iterator<Item = (&str, &Outcomes)> {
        self.agents.iter().map(|(id, o)| (id.as_str(), o))
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn outcomes(&self, agent: &str) -> Option<&Outcomes> {
        self.agents.iter().find(|(id, _)| id == agent).map(|(_, o)| o)
    }

    /// True when any canonical cell differs exactly between any agent pair.
    pub fn is_asymmetric(&self) -> bool {
        self.agents.iter().enumerate().any(|(i, (_, a))| {
            self.agents[i + 1..].iter().any(|(_, b)| {
                PayoffCell::ALL.into_iter().any(|c| a.cell(c) != b.cell(c))
            })
        })
    }

    /// Per-agent min-max normalization onto [0, 1].
    pub fn normalized(&self) -> Result<PayoffMatrix, DilemmaError> {
        let agents = self
            .agents
            .iter()
            .map(|(id, o)| Ok((id.clone(), o.normalized(id)?)))
            .collect::<Result<Vec<_>, DilemmaError>>()?;
        Ok(PayoffMatrix { agents })
    }

    /// Parses the `agent.<id>.<R|T|S|P> = <number>` file format.
    /// Blank lines and `#` comments are ignored. Duplicate or missing cells
    /// are rejected.
    pub fn parse_str(text: &str) -> Result<Self, DilemmaError> {
        let mut order: Vec<String> = Vec::new();
        let mut cells: BTreeMap<String, [Option<f64>; 4]> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DilemmaError::Parse {
                line: lineno,
                reason: format!("expected `agent.<id>.<R|T|S|P> = <number>`, got `{raw}`"),
            })?;
            let key = key.trim();
            let mut parts = key.split('.');
            let (prefix, id, cell_name) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(p), Some(i), Some(c), None) if !i.is_empty() => (p, i, c),
                _ => {
                    return Err(DilemmaError::Parse {
                        line: lineno,
                        reason: format!("malformed key `{key}`"),
                    })
                }
            };
            if prefix != "agent" {
                return Err(DilemmaError::Parse {
                    line: lineno,
                    reason: format!("unknown key prefix `{prefix}`"),
                });
            }
            let cell = PayoffCell::ALL
                .into_iter()
                .find(|c| c.as_str() == cell_name)
                .ok_or_else(|| DilemmaError::Parse {
                    line: lineno,
                    reason: format!("unknown payoff cell `{cell_name}`"),
                })?;
            let number: f64 = value.trim().parse().map_err(|_| DilemmaError::Parse {
                line: lineno,
                reason: format!("invalid number `{}`", value.trim()),
            })?;
            if !cells.contains_key(id) {
                order.push(id.to_owned());
                cells.insert(id.to_owned(), [None; 4]);
            }
            let slot = &mut cells.get_mut(id).expect("inserted above")[cell as usize];
            if slot.is_some() {
                return Err(DilemmaError::DuplicateCell {
                    agent: id.to_owned(),
                    cell,
                    line: lineno,
                });
            }
            *slot = Some(number);
        }
        let mut agents = Vec::with_capacity(order.len());
        for id in order {
            let stored = &cells[&id];
            for cell in PayoffCell::ALL {
                if stored[cell as usize].is_none() {
                    return Err(DilemmaError::MissingCell { agent: id, cell });
                }
            }
            let o = Outcomes::new(
                stored[PayoffCell::R as usize].unwrap(),
                stored[PayoffCell::T as usize].unwrap(),
                stored[PayoffCell::S as usize].unwrap(),
                stored[PayoffCell::P as usize].unwrap(),
            );
            agents.push((id, o));
        }
        PayoffMatrix::new(agents)
    }

    /// Serializes back to the key-value file format (inverse of `parse_str`).
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (id, o) in &self.agents {
            for cell in PayoffCell::ALL {
                out.push_str(&format!("agent.{id}.{cell} = {}\n", o.cell(cell)));
            }
        }
        out
    }
}

/// Strict-inequality condition flags for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionFlags {
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub greed: bool,
    pub fear: bool,
}

impl ConditionFlags {
    pub fn from_outcomes(o: &Outcomes) -> Self {
        ConditionFlags {
            c1: o.reward > o.punishment,
            c2: o.reward > o.sucker,
            c3: 2.0 * o.reward > o.temptation + o.sucker,
            greed: o.temptation > o.reward,
            fear: o.punishment > o.sucker,
        }
    }

    pub fn core(self) -> bool {
        self.c1 && self.c2 && self.c3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DilemmaKind {
    PrisonersDilemma,
    Chicken,
    StagHunt,
    NotASocialDilemma,
}

impl DilemmaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DilemmaKind::PrisonersDilemma => "prisoners_dilemma",
            DilemmaKind::Chicken => "chicken",
            DilemmaKind::StagHunt => "stag_hunt",
            DilemmaKind::NotASocialDilemma => "not_a_social_dilemma",
        }
    }
}

impl fmt::Display for DilemmaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DilemmaReport {
    /// Condition flags per agent, in matrix order.
    pub conditions: Vec<(String, ConditionFlags)>,
    pub kind: DilemmaKind,
    pub asymmetric: bool,
}

impl DilemmaReport {
    pub fn is_social_dilemma(&self) -> bool {
        self.kind != DilemmaKind::NotASocialDilemma
    }
}

/// Classifies a two-agent matrix game.
///
/// The core conditions C1-C3 must hold for both agents; greed and fear are
/// then evaluated across both agents to pick the dilemma family.
pub fn classify(matrix: &PayoffMatrix) -> Result<DilemmaReport, DilemmaError> {
    if matrix.agent_count() != 2 {
        return Err(DilemmaError::AgentCount(matrix.agent_count()));
    }
    let conditions: Vec<(String, ConditionFlags)> = matrix
        .agents()
        .map(|(id, o)| (id.to_owned(), ConditionFlags::from_outcomes(o)))
        .collect();
    let core = conditions.iter().all(|(_, c)| c.core());
    let greed = conditions.iter().all(|(_, c)| c.greed);
    let fear = conditions.iter().all(|(_, c)| c.fear);
    let kind = match (core, greed, fear) {
        (true, true, true) => DilemmaKind::PrisonersDilemma,
        (true, true, false) => DilemmaKind::Chicken,
        (true, false, true) => DilemmaKind::StagHunt,
        _ => DilemmaKind::NotASocialDilemma,
    };
    Ok(DilemmaReport { conditions, kind, asymmetric: matrix.is_asymmetric() })
}

// ---------------------------------------------------------------------------
// Schelling diagrams: empirical dilemma verification from role sweeps.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Cooperate,
    Defect,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cooperate => "cooperate",
            Strategy::Defect => "defect",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One episode return observed for an agent playing a fixed role.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleSample {
    pub agent_type: String,
    pub strategy: Strategy,
    /// Number of *other* agents playing Cooperate in the episode.
    pub cooperating_others: u32,
    pub episode_return: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchellingCell {
    pub mean_return: f64,
    pub n_samples: u64,
}

/// Mean episode return per (agent type, cooperating-others count, strategy).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchellingDiagram {
    cells: BTreeMap<(String, u32, Strategy), (f64, u64)>,
}

impl SchellingDiagram {
    pub fn from_samples<I: IntoIterator<Item = RoleSample>>(samples: I) -> Self {
        let mut diagram = SchellingDiagram::default();
        for s in samples {
            let entry = diagram
                .cells
                .entry((s.agent_type, s.cooperating_others, s.strategy))
                .or_insert((0.0, 0));
            entry.0 += s.episode_return;
            entry.1 += 1;
        }
        diagram
    }

    pub fn cell(&self, agent_type: &str, k: u32, strategy: Strategy) -> Option<SchellingCell> {
        self.cells
            .get(&(agent_type.to_owned(), k, strategy))
            .map(|&(sum, n)| SchellingCell { mean_return: sum / n as f64, n_samples: n })
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// CSV with header `agent_type,k,strategy,mean_return,n_samples`,
    /// rows sorted by (agent_type, k, strategy).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent_type,k,strategy,mean_return,n_samples\n");
        for ((ty, k, strategy), &(sum, n)) in &self.cells {
            let mean = sum / n as f64;
            out.push_str(&format!("{ty},{k},{strategy},{mean},{n}\n"));
        }
        out
    }

    /// Checks defect-mean > cooperate-mean at every sampled k, per type.
    /// Cells where one strategy was never sampled are inconclusive, not
    /// failures.
    pub fn verify(&self) -> EmpiricalReport {
        let mut types: Vec<String> = Vec::new();
        for (ty, _, _) in self.cells.keys() {
            if types.last() != Some(ty) && !types.contains(ty) {
                types.push(ty.clone());
            }
        }
        let per_type: Vec<TypeVerdict> = types
            .into_iter()
            .map(|ty| {
                let ks: Vec<u32> = self
                    .cells
                    .keys()
                    .filter(|(t, _, _)| *t == ty)
                    .map(|(_, k, _)| *k)
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let mut failing = Vec::new();
                let mut inconclusive = Vec::new();
                for &k in &ks {
                    let coop = self.cell(&ty, k, Strategy::Cooperate);
                    let defect = self.cell(&ty, k, Strategy::Defect);
                    match (coop, defect) {
                        (Some(c), Some(d)) => {
                            if !(d.mean_return > c.mean_return) {
                                failing.push(k);
                            }
                        }
                        _ => inconclusive.push(k),
                    }
                }
                let outcome = if !failing.is_empty() {
                    VerdictKind::Fail
                } else if !inconclusive.is_empty() {
                    VerdictKind::Inconclusive
                } else {
                    VerdictKind::Pass
                };
                TypeVerdict { agent_type: ty, outcome, failing_k: failing, inconclusive_k: inconclusive }
            })
            .collect();
        let all_pass =
            !per_type.is_empty() && per_type.iter().all(|v| v.outcome == VerdictKind::Pass);
        EmpiricalReport { per_type, all_pass }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    Pass,
    Fail,
    Inconclusive,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::Pass => "pass",
            VerdictKind::Fail => "fail",
            VerdictKind::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeVerdict {
    pub agent_type: String,
    pub outcome: VerdictKind,
    pub failing_k: Vec<u32>,
    pub inconclusive_k: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalReport {
    pub per_type: Vec<TypeVerdict>,
    pub all_pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Explicit import wins over the proptest::Strategy trait from the glob;
    // the anonymous trait import keeps prop_map & co in scope.
    use super::Strategy;
    use proptest::strategy::Strategy as _;

    fn matrix(a: Outcomes, b: Outcomes) -> PayoffMatrix {
        PayoffMatrix::new(vec![("i".into(), a), ("j".into(), b)]).unwrap()
    }

    /// Classic asymmetric prisoner's-dilemma payoff sets from the
    /// experimental-economics literature, plus one negative-valued pair.
    fn asymmetric_pd_fixtures() -> Vec<PayoffMatrix> {
        vec![
            matrix(Outcomes::new(4.0, 5.0, -3.0, -2.0), Outcomes::new(12.0, 15.0, -9.0, -6.0)),
            matrix(Outcomes::new(12.0, 18.0, 0.0, 6.0), Outcomes::new(8.0, 12.0, 0.0, 4.0)),
            matrix(Outcomes::new(10.0, 13.0, 2.0, 7.0), Outcomes::new(13.0, 15.0, 2.0, 6.0)),
            matrix(Outcomes::new(6.0, 9.0, 0.0, 3.0), Outcomes::new(7.0, 11.0, 0.0, 4.0)),
            matrix(Outcomes::new(-1.0, 0.0, -3.0, -2.0), Outcomes::new(-6.0, -5.0, -8.0, -7.0)),
        ]
    }

    #[test]
    fn classic_asymmetric_games_are_prisoners_dilemmas() {
        for m in asymmetric_pd_fixtures() {
            let report = classify(&m).unwrap();
            assert_eq!(report.kind, DilemmaKind::PrisonersDilemma);
            assert!(report.asymmetric);
            for (_, c) in &report.conditions {
                assert!(c.c1 && c.c2 && c.c3 && c.greed && c.fear);
            }
        }
    }

    #[test]
    fn equal_temptation_boundary_is_stag_hunt() {
        // T = R kills greed under strict comparison; fear still holds.
        let m = matrix(Outcomes::new(3.0, 3.0, 1.0, 2.0), Outcomes::new(3.0, 3.0, 1.0, 2.0));
        let report = classify(&m).unwrap();
        assert_eq!(report.kind, DilemmaKind::StagHunt);
        assert!(!report.asymmetric);
        assert!(report.conditions.iter().all(|(_, c)| !c.greed && c.fear));
    }

    #[test]
    fn greed_without_fear_is_chicken() {
        let m = matrix(Outcomes::new(3.0, 4.0, 1.0, 0.0), Outcomes::new(3.0, 4.0, 1.0, 0.0));
        assert_eq!(classify(&m).unwrap().kind, DilemmaKind::Chicken);
    }

    #[test]
    fn failed_core_condition_is_not_a_dilemma() {
        // R < P breaks C1 even though greed and fear both hold.
        let m = matrix(Outcomes::new(1.0, 3.0, 0.0, 2.0), Outcomes::new(1.0, 3.0, 0.0, 2.0));
        let report = classify(&m).unwrap();
        assert_eq!(report.kind, DilemmaKind::NotASocialDilemma);
        assert!(!report.is_social_dilemma());
    }

    #[test]
    fn hairline_payoff_difference_counts_as_asymmetric() {
        let m = matrix(
            Outcomes::new(2.0, 3.0, 0.0, 1.0),
            Outcomes::new(2.0 + 1e-12, 3.0, 0.0, 1.0),
        );
        assert!(m.is_asymmetric());
    }

    #[test]
    fn normalization_matches_hand_scaled_values() {
        let m = matrix(
            Outcomes::new(-1.0, 0.0, -3.0, -2.0),
            Outcomes::new(-6.0, -5.0, -8.0, -7.0),
        );
        let normalized = m.normalized().unwrap();
        // Both agents land on the same rounded profile.
        for (_, o) in normalized.agents() {
            assert!((o.reward - 0.67).abs() <= 0.005);
            assert!((o.temptation - 1.0).abs() <= 0.005);
            assert!((o.sucker - 0.0).abs() <= 0.005);
            assert!((o.punishment - 0.33).abs() <= 0.005);
        }
        assert!(!normalized.is_asymmetric());
        assert_eq!(classify(&normalized).unwrap().kind, DilemmaKind::PrisonersDilemma);
    }

    #[test]
    fn normalization_rejects_constant_payoffs() {
        let m = matrix(Outcomes::new(2.0, 2.0, 2.0, 2.0), Outcomes::new(1.0, 2.0, 0.0, 3.0));
        assert!(matches!(
            m.normalized(),
            Err(DilemmaError::DegeneratePayoffs { agent }) if agent == "i"
        ));
    }

    #[test]
    fn parser_accepts_comments_and_reports_agent_order() {
        let text = "# a comment\nagent.b.R = 3\nagent.b.T = 4 # trailing\nagent.b.S = 1\nagent.b.P = 0\nagent.a.R = 3\nagent.a.T = 4\nagent.a.S = 1\nagent.a.P = 0\n";
        let m = PayoffMatrix::parse_str(text).unwrap();
        let ids: Vec<&str> = m.agents().map(|(id, _)| id).collect();
        assert_eq!(ids, vec!["b", "a"]);
    }

    #[test]
    fn parser_rejects_duplicate_and_missing_cells() {
        let dup = "agent.i.R = 1\nagent.i.R = 2\n";
        assert!(matches!(
            PayoffMatrix::parse_str(dup),
            Err(DilemmaError::DuplicateCell { cell: PayoffCell::R, line: 2, .. })
        ));
        let missing = "agent.i.R = 1\nagent.i.T = 2\nagent.i.S = 0\n";
        assert!(matches!(
            PayoffMatrix::parse_str(missing),
            Err(DilemmaError::MissingCell { cell: PayoffCell::P, .. })
        ));
        let garbled = "agent.i.R 1\n";
        assert!(matches!(PayoffMatrix::parse_str(garbled), Err(DilemmaError::Parse { line: 1, .. })));
    }

    #[test]
    fn file_format_round_trips() {
        for m in asymmetric_pd_fixtures() {
            let text = m.to_file_string();
            assert_eq!(PayoffMatrix::parse_str(&text).unwrap(), m);
        }
    }

    #[test]
    fn schelling_missing_strategy_side_is_inconclusive() {
        let diagram = SchellingDiagram::from_samples(vec![
            RoleSample {
                agent_type: "standard".into(),
                strategy: Strategy::Cooperate,
                cooperating_others: 0,
                episode_return: 1.0,
            },
            RoleSample {
                agent_type: "standard".into(),
                strategy: Strategy::Defect,
                cooperating_others: 1,
                episode_return: 2.0,
            },
            RoleSample {
                agent_type: "standard".into(),
                strategy: Strategy::Cooperate,
                cooperating_others: 1,
                episode_return: 1.0,
            },
        ]);
        let report = diagram.verify();
        assert!(!report.all_pass);
        assert_eq!(report.per_type.len(), 1);
        assert_eq!(report.per_type[0].outcome, VerdictKind::Inconclusive);
        assert_eq!(report.per_type[0].inconclusive_k, vec![0]);
    }

    #[test]
    fn schelling_defect_dominance_passes_and_serializes() {
        let mut samples = Vec::new();
        for k in 0..2 {
            for rep in 0..3 {
                samples.push(RoleSample {
                    agent_type: "standard".into(),
                    strategy: Strategy::Cooperate,
                    cooperating_others: k,
                    episode_return: 1.0 + rep as f64,
                });
                samples.push(RoleSample {
                    agent_type: "standard".into(),
                    strategy: Strategy::Defect,
                    cooperating_others: k,
                    episode_return: 4.0 + rep as f64,
                });
            }
        }
        let diagram = SchellingDiagram::from_samples(samples);
        let report = diagram.verify();
        assert!(report.all_pass);
        let csv = diagram.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("agent_type,k,strategy,mean_return,n_samples"));
        assert_eq!(lines.next(), Some("standard,0,cooperate,2,3"));
        assert_eq!(lines.next(), Some("standard,0,defect,5,3"));
    }

    #[test]
    fn empty_diagram_does_not_pass() {
        assert!(!SchellingDiagram::default().verify().all_pass);
    }

    fn int_outcomes() -> impl proptest::strategy::Strategy<Value = Outcomes> {
        (-40i32..40, -40i32..40, -40i32..40, -40i32..40).prop_map(|(r, t, s, p)| {
            Outcomes::new(r as f64, t as f64, s as f64, p as f64)
        })
    }

    proptest! {
        // Positive affine rescaling of one agent's payoffs never changes the
        // classification (integer grids keep the arithmetic exact).
        #[test]
        fn classification_is_affine_invariant(
            a in int_outcomes(),
            b in int_outcomes(),
            scale in 1u32..5,
            shift in -20i32..20,
        ) {
            let m = matrix(a, b);
            let before = classify(&m).unwrap().kind;
            let rescale = |o: &Outcomes| Outcomes::new(
                o.reward * scale as f64 + shift as f64,
                o.temptation * scale as f64 + shift as f64,
                o.sucker * scale as f64 + shift as f64,
                o.punishment * scale as f64 + shift as f64,
            );
            let after = classify(&matrix(rescale(&a), rescale(&b))).unwrap().kind;
            prop_assert_eq!(before, after);
        }

        #[test]
        fn normalized_payoffs_span_unit_interval(a in int_outcomes(), b in int_outcomes()) {
            let m = matrix(a, b);
            match m.normalized() {
                Ok(normalized) => {
                    for (_, o) in normalized.agents() {
                        let vals = PayoffCell::ALL.map(|c| o.cell(c));
                        for v in vals {
                            prop_assert!((0.0..=1.0).contains(&v));
                        }
                        prop_assert!(vals.iter().any(|&v| v == 0.0));
                        prop_assert!(vals.iter().any(|&v| v == 1.0));
                    }
                }
                Err(DilemmaError::DegeneratePayoffs { .. }) => {}
                Err(other) => return Err(TestCaseError::fail(other.to_string())),
            }
        }
    }
}
