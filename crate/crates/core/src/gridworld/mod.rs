//! Deterministic gridworld engines: Coins and Harvest.
//!
//! Both environments share the same skeleton: oriented agents on a small
//! rectangular grid, simultaneous action resolution, and a seeded RNG that
//! makes `(config, seed, action sequence)` fully determine every trajectory
//! and event log. They differ in the items on the ground and the conflict
//! channel:
//!
//! * Coins: two agents, colored coins; collecting the other agent's coin
//!   pays the collector but fines the owner.
//! * Harvest: N agents, regrowing apples whose regrowth rate depends on
//!   nearby apple density, plus a zap beam that removes victims from the
//!   grid for a fixed timeout.
//!
//! Heterogeneous agent types change reward multipliers, mismatch fines,
//! beam spread, or coin-spawn dynamics without touching the shared rules.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

mod engine;
mod replay;
pub mod scripted;

pub use engine::{EnvState, StepOutcome};
pub use replay::Replay;

/// Splitmix64 of `master + stream`, used to give every consumer of a run
/// seed (environment, per-agent policies, per-purpose learner streams) an
/// independent deterministic RNG stream.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("agent {agent} is timed out and must Stay")]
    ActionWhileTimedOut { agent: usize },
    #[error("agent {agent}: action {action} is not legal in {env}")]
    IllegalAction { agent: usize, action: Action, env: EnvKind },
    #[error("episode already finished after {0} steps")]
    EpisodeOver(u64),
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Coins,
    Harvest,
}

impl EnvKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvKind::Coins => "coins",
            EnvKind::Harvest => "harvest",
        }
    }

    pub fn parse(s: &str) -> Option<EnvKind> {
        match s {
            "coins" => Some(EnvKind::Coins),
            "harvest" => Some(EnvKind::Harvest),
            _ => None,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Symmetric,
    AsymmetricRewards,
    AsymmetricActions,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Symmetric => "symmetric",
            Variant::AsymmetricRewards => "asymmetric_rewards",
            Variant::AsymmetricActions => "asymmetric_actions",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        [Variant::Symmetric, Variant::AsymmetricRewards, Variant::AsymmetricActions]
            .into_iter()
            .find(|v| v.as_str() == s)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgentType {
    Standard,
    LowReward,
    HighReward,
    WideZap,
    SpawnBiased,
}

impl AgentType {
    pub const ALL: [AgentType; 5] = [
        AgentType::Standard,
        AgentType::LowReward,
        AgentType::HighReward,
        AgentType::WideZap,
        AgentType::SpawnBiased,
    ];

    pub fn config_name(self) -> &'static str {
        match self {
            AgentType::Standard => "standard",
            AgentType::LowReward => "low_reward",
            AgentType::HighReward => "high_reward",
            AgentType::WideZap => "wide_zap",
            AgentType::SpawnBiased => "spawn_biased",
        }
    }

    pub fn parse(s: &str) -> Option<AgentType> {
        AgentType::ALL.into_iter().find(|t| t.config_name() == s)
    }

    /// Stable code used in observation encodings.
    pub fn code(self) -> u8 {
        match self {
            AgentType::Standard => 0,
            AgentType::LowReward => 1,
            AgentType::HighReward => 2,
            AgentType::WideZap => 3,
            AgentType::SpawnBiased => 4,
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.config_name())
    }
}

/// Per-agent parameters. Collection rewards are `1.0 * reward_multiplier`;
/// `mismatch_penalty` is the fine *this* agent's mismatch pickups inflict
/// on the coin's owner.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub agent_type: AgentType,
    pub reward_multiplier: f64,
    pub mismatch_penalty: f64,
    /// Lateral spread of the zap beam: cells up to `zap_width - 1` to each
    /// side of the beam axis are covered.
    pub zap_width: u32,
    /// Length of the own-color-only coin spawn window this agent opens by
    /// collecting a mismatch coin; 0 disables the effect.
    pub spawn_bias_steps: u64,
    /// Social-drive multiplier consumed by reward shaping.
    pub phi: f64,
}

impl AgentSpec {
    pub fn of_type(agent_type: AgentType) -> Self {
        let (reward_multiplier, mismatch_penalty, zap_width, spawn_bias_steps) = match agent_type {
            AgentType::Standard => (1.0, 2.0, 1, 0),
            AgentType::LowReward => (0.5, 3.0, 1, 0),
            AgentType::HighReward => (1.5, 1.0, 1, 0),
            AgentType::WideZap => (1.0, 2.0, 3, 0),
            AgentType::SpawnBiased => (1.0, 2.0, 1, 25),
        };
        AgentSpec { agent_type, reward_multiplier, mismatch_penalty, zap_width, spawn_bias_steps, phi: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Stay,
    Forward,
    TurnLeft,
    TurnRight,
    Zap,
}

pub const N_ACTIONS: usize = 5;

impl Action {
    pub const ALL: [Action; N_ACTIONS] =
        [Action::Stay, Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Zap];

    pub fn index(self) -> usize {
        match self {
            Action::Stay => 0,
            Action::Forward => 1,
            Action::TurnLeft => 2,
            Action::TurnRight => 3,
            Action::Zap => 4,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Action::Stay => 'S',
            Action::Forward => 'F',
            Action::TurnLeft => 'L',
            Action::TurnRight => 'R',
            Action::Zap => 'Z',
        }
    }

    pub fn from_letter(c: char) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.letter() == c)
    }

    /// Actions an agent may submit in the given environment.
    pub fn legal(env: EnvKind) -> &'static [Action] {
        match env {
            EnvKind::Coins => &Action::ALL[..4],
            EnvKind::Harvest => &Action::ALL,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    North,
    East,
    South,
    West,
}

impl Orientation {
    pub fn code(self) -> u8 {
        match self {
            Orientation::North => 0,
            Orientation::East => 1,
            Orientation::South => 2,
            Orientation::West => 3,
        }
    }

    /// Unit step in grid coordinates; y grows southward.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Orientation::North => (0, -1),
            Orientation::East => (1, 0),
            Orientation::South => (0, 1),
            Orientation::West => (-1, 0),
        }
    }

    pub fn left(self) -> Orientation {
        match self {
            Orientation::North => Orientation::West,
            Orientation::West => Orientation::South,
            Orientation::South => Orientation::East,
            Orientation::East => Orientation::North,
        }
    }

    pub fn right(self) -> Orientation {
        self.left().left().left()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn step(self, orientation: Orientation) -> Pos {
        let (dx, dy) = orientation.delta();
        Pos { x: self.x + dx, y: self.y + dy }
    }
}

/// Cells of the beam fired from `origin` facing `orientation`, in absolute
/// coordinates and unclipped. The beam reaches `length` cells ahead and
/// spreads `width - 1` cells to each side of its axis.
pub fn beam_cells(origin: Pos, orientation: Orientation, length: u32, width: u32) -> Vec<Pos> {
    let (fx, fy) = orientation.delta();
    let (px, py) = (-fy, fx); // perpendicular
    let spread = width.saturating_sub(1) as i32;
    let mut cells = Vec::new();
    for ahead in 1..=length as i32 {
        for side in -spread..=spread {
            cells.push(Pos {
                x: origin.x + fx * ahead + px * side,
                y: origin.y + fy * ahead + py * side,
            });
        }
    }
    cells
}

/// Apple regrowth probability keyed by the number of live apples within
/// Euclidean distance 2 of the empty site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegrowthTable {
    pub zero: f64,
    pub one: f64,
    pub two: f64,
    pub many: f64,
}

impl Default for RegrowthTable {
    fn default() -> Self {
        RegrowthTable { zero: 0.0, one: 0.0025, two: 0.005, many: 0.025 }
    }
}

impl RegrowthTable {
    pub fn prob(&self, neighbors: usize) -> f64 {
        match neighbors {
            0 => self.zero,
            1 => self.one,
            2 => self.two,
            _ => self.many,
        }
    }

    fn validate(&self) -> Result<(), GridError> {
        for (name, p) in [("0", self.zero), ("1", self.one), ("2", self.two), ("3", self.many)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GridError::InvalidConfig(format!(
                    "regrowth.{name} = {p} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub variant: Variant,
    pub width: u32,
    pub height: u32,
    pub episode_len: u64,
    pub agents: Vec<AgentSpec>,
    /// Half-size of the square observation window; `None` picks the
    /// environment default (full grid for Coins, 5 for Harvest).
    pub observation_radius: Option<u32>,
    pub coin_spawn_prob: f64,
    pub coin_lifetime: u64,
    pub regrowth: RegrowthTable,
    pub beam_length: u32,
    pub zap_timeout: u64,
    /// Alternative spawn-bias trigger: open the window when someone else
    /// collects the biased agent's coin, instead of when the biased agent
    /// itself collects a mismatch.
    pub spawn_bias_on_victim: bool,
    pub seed: u64,
}

impl EnvConfig {
    /// Canonical two-agent Coins setup on a 5x5 grid, 500 steps.
    pub fn coins(variant: Variant) -> Self {
        let types = match variant {
            Variant::Symmetric => [AgentType::Standard, AgentType::Standard],
            Variant::AsymmetricRewards => [AgentType::LowReward, AgentType::HighReward],
            Variant::AsymmetricActions => [AgentType::Standard, AgentType::SpawnBiased],
        };
        EnvConfig {
            kind: EnvKind::Coins,
            variant,
            width: 5,
            height: 5,
            episode_len: 500,
            agents: types.into_iter().map(AgentSpec::of_type).collect(),
            observation_radius: None,
            coin_spawn_prob: 0.1,
            coin_lifetime: 50,
            regrowth: RegrowthTable::default(),
            beam_length: 5,
            zap_timeout: 25,
            spawn_bias_on_victim: false,
            seed: 0,
        }
    }

    /// Canonical Harvest setup on a 16x9 grid, 1000 steps. Asymmetric
    /// variants split the population half and half.
    pub fn harvest(variant: Variant, n_agents: usize) -> Self {
        let agents = (0..n_agents)
            .map(|i| {
                let ty = match variant {
                    Variant::Symmetric => AgentType::Standard,
                    Variant::AsymmetricRewards => {
                        if i < n_agents / 2 {
                            AgentType::LowReward
                        } else {
                            AgentType::HighReward
                        }
                    }
                    Variant::AsymmetricActions => {
                        if i < n_agents / 2 {
                            AgentType::Standard
                        } else {
                            AgentType::WideZap
                        }
                    }
                };
                AgentSpec::of_type(ty)
            })
            .collect();
        EnvConfig {
            kind: EnvKind::Harvest,
            variant,
            width: 16,
            height: 9,
            episode_len: 1000,
            agents,
            observation_radius: None,
            coin_spawn_prob: 0.1,
            coin_lifetime: 50,
            regrowth: RegrowthTable::default(),
            beam_length: 5,
            zap_timeout: 25,
            spawn_bias_on_victim: false,
            seed: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Effective observation radius.
    pub fn radius(&self) -> u32 {
        self.observation_radius.unwrap_or(match self.kind {
            EnvKind::Coins => self.width.max(self.height).saturating_sub(1),
            EnvKind::Harvest => 5,
        })
    }

    pub fn in_bounds(&self, pos: Pos) -> bool {
        pos.x >= 0 && pos.y >= 0 && pos.x < self.width as i32 && pos.y < self.height as i32
    }

    /// Static apple sites: three density patches spread along the midline.
    pub fn apple_sites(&self) -> BTreeSet<Pos> {
        let mut sites = BTreeSet::new();
        if self.kind != EnvKind::Harvest {
            return sites;
        }
        let cy = self.height as i32 / 2;
        let centers = [
            Pos::new(self.width as i32 / 4, cy),
            Pos::new(self.width as i32 / 2, cy),
            Pos::new(3 * self.width as i32 / 4, cy),
        ];
        for c in centers {
            for dx in -2i32..=2 {
                for dy in -2i32..=2 {
                    if dx.abs() + dy.abs() <= 2 {
                        let p = Pos::new(c.x + dx, c.y + dy);
                        if self.in_bounds(p) {
                            sites.insert(p);
                        }
                    }
                }
            }
        }
        sites
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let fail = |msg: String| Err(GridError::InvalidConfig(msg));
        if self.width < 2 || self.height < 2 {
            return fail(format!("grid {}x{} too small", self.width, self.height));
        }
        if self.episode_len == 0 {
            return fail("episode_len must be positive".into());
        }
        let n = self.n_agents();
        match self.kind {
            EnvKind::Coins => {
                if n != 2 {
                    return fail(format!("coins needs exactly 2 agents, got {n}"));
                }
            }
            EnvKind::Harvest => {
                if n < 2 {
                    return fail(format!("harvest needs at least 2 agents, got {n}"));
                }
            }
        }
        if ((self.width * self.height) as usize) < n {
            return fail(format!("{n} agents cannot fit a {}x{} grid", self.width, self.height));
        }
        if !(0.0..=1.0).contains(&self.coin_spawn_prob) {
            return fail(format!("coin_spawn_prob = {} outside [0, 1]", self.coin_spawn_prob));
        }
        self.regrowth.validate()?;
        for (i, spec) in self.agents.iter().enumerate() {
            if !spec.reward_multiplier.is_finite() || !spec.mismatch_penalty.is_finite() {
                return fail(format!("agent {i}: non-finite reward parameters"));
            }
            if !spec.phi.is_finite() || spec.phi < 0.0 {
                return fail(format!("agent {i}: phi = {} must be >= 0", spec.phi));
            }
            if spec.zap_width == 0 {
                return fail(format!("agent {i}: zap_width must be >= 1"));
            }
            match (self.kind, spec.agent_type) {
                (EnvKind::Coins, AgentType::WideZap) => {
                    return fail(format!("agent {i}: wide_zap type only exists in harvest"));
                }
                (EnvKind::Harvest, AgentType::SpawnBiased) => {
                    return fail(format!("agent {i}: spawn_biased type only exists in coins"));
                }
                _ => {}
            }
        }
        if self.kind == EnvKind::Harvest && self.apple_sites().is_empty() {
            return fail("harvest grid yields no apple sites".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Wall,
    Apple,
    CoinOwn,
    CoinOther,
    AgentSelf,
    AgentOther(AgentType),
}

impl Cell {
    /// Stable byte for observation encodings.
    pub fn code(self) -> u8 {
        match self {
            Cell::Empty => 0,
            Cell::Wall => 1,
            Cell::Apple => 2,
            Cell::CoinOwn => 3,
            Cell::CoinOther => 4,
            Cell::AgentSelf => 5,
            Cell::AgentOther(t) => 6 + t.code(),
        }
    }
}

/// Symbolic egocentric view: a `(2r+1)^2` window centered on the agent,
/// row-major from the north-west corner, plus own orientation and timeout
/// state. `visible` lists the other active agents inside the window.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub radius: u32,
    pub cells: Vec<Cell>,
    pub orientation: Orientation,
    pub timed_out: bool,
    pub visible: Vec<usize>,
}

impl Observation {
    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    /// Cell at a window offset (dx, dy) from the center; `None` outside
    /// the window.
    pub fn cell_at(&self, dx: i32, dy: i32) -> Option<Cell> {
        let r = self.radius as i32;
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        let col = (dx + r) as usize;
        let row = (dy + r) as usize;
        Some(self.cells[row * self.side() + col])
    }
}
