//! Scripted cooperate/defect policies and role-sweep rollouts.
//!
//! These policies exist to probe the payoff structure of an environment
//! without any learning: a cooperator masks off the antisocial options
//! (mismatch coins, low-density apples, the zap beam) and a defector
//! greedily takes everything. Sweeping all role assignments and averaging
//! returns per (agent type, cooperating-others count, strategy) yields the
//! empirical cells a dilemma classification can be checked against.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dilemma::{RoleSample, Strategy};
use crate::events::EventLog;

use super::{
    beam_cells, derive_seed, Action, Cell, EnvConfig, EnvKind, EnvState, GridError, Observation,
    Orientation, Pos,
};

/// Knobs shared by every scripted agent in a rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    /// Minimum count of other apples within Euclidean distance 2 for a
    /// cooperator to treat an apple as harvestable.
    pub density_threshold: usize,
    /// Probability of a random turn instead of the greedy action; breaks
    /// head-on movement deadlocks between two greedy agents.
    pub jitter: f64,
    pub beam_length: u32,
    pub zap_width: u32,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { density_threshold: 1, jitter: 0.1, beam_length: 5, zap_width: 1 }
    }
}

/// Greedy item-seeking policy with a role-dependent action mask.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    strategy: Strategy,
    env: EnvKind,
    config: PolicyConfig,
    rng: ChaCha8Rng,
}

impl ScriptedPolicy {
    pub fn new(strategy: Strategy, env: EnvKind, config: PolicyConfig, seed: u64) -> Self {
        ScriptedPolicy { strategy, env, config, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// Picks the next action for the agent owning `obs`.
    pub fn act(&mut self, obs: &Observation) -> Action {
        if obs.timed_out {
            return Action::Stay;
        }
        if self.env == EnvKind::Harvest
            && self.strategy == Strategy::Defect
            && self.victim_in_beam(obs)
        {
            return Action::Zap;
        }
        if self.rng.random::<f64>() < self.config.jitter {
            return self.random_turn();
        }
        match self.nearest_target(obs) {
            Some(delta) => self.steer_toward(delta, obs),
            None => self.wander(obs),
        }
    }

    fn victim_in_beam(&self, obs: &Observation) -> bool {
        beam_cells(Pos::new(0, 0), obs.orientation, self.config.beam_length, self.config.zap_width)
            .into_iter()
            .any(|p| matches!(obs.cell_at(p.x, p.y), Some(Cell::AgentOther(_))))
    }

    /// True when the policy is allowed to walk onto (and thus collect) the
    /// item in `cell`. Cooperators treat masked items as obstacles so a
    /// wander step cannot collect them either.
    fn may_enter(&self, cell: Cell, obs: &Observation, at: (i32, i32)) -> bool {
        match cell {
            Cell::Wall | Cell::AgentOther(_) => false,
            Cell::Empty | Cell::AgentSelf => true,
            Cell::CoinOwn => true,
            Cell::CoinOther => self.strategy == Strategy::Defect,
            Cell::Apple => {
                self.strategy == Strategy::Defect
                    || self.apple_density(obs, at) >= self.config.density_threshold
            }
        }
    }

    /// Count of other apples within Euclidean distance 2 of window offset
    /// `at`, judged from the observation alone.
    fn apple_density(&self, obs: &Observation, at: (i32, i32)) -> usize {
        let mut n = 0;
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                if (dx, dy) == (0, 0) || dx * dx + dy * dy > 4 {
                    continue;
                }
                if obs.cell_at(at.0 + dx, at.1 + dy) == Some(Cell::Apple) {
                    n += 1;
                }
            }
        }
        n
    }

    fn is_target(&self, cell: Cell, obs: &Observation, at: (i32, i32)) -> bool {
        match cell {
            Cell::CoinOwn => true,
            Cell::CoinOther => self.strategy == Strategy::Defect,
            Cell::Apple => self.may_enter(cell, obs, at),
            _ => false,
        }
    }

    /// Nearest target offset by Manhattan distance; ties resolve in fixed
    /// window scan order (top-to-bottom, left-to-right).
    fn nearest_target(&self, obs: &Observation) -> Option<(i32, i32)> {
        let r = obs.radius as i32;
        let mut best: Option<(i32, (i32, i32))> = None;
        for dy in -r..=r {
            for dx in -r..=r {
                let Some(cell) = obs.cell_at(dx, dy) else { continue };
                if (dx, dy) == (0, 0) || !self.is_target(cell, obs, (dx, dy)) {
                    continue;
                }
                let dist = dx.abs() + dy.abs();
                if best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, (dx, dy)));
                }
            }
        }
        best.map(|(_, delta)| delta)
    }

    /// Turns toward or advances on the target offset, preferring the axis
    /// with the larger remaining distance (rng breaks exact ties).
    fn steer_toward(&mut self, (dx, dy): (i32, i32), obs: &Observation) -> Action {
        let horizontal = if dx > 0 { Some(Orientation::East) } else if dx < 0 { Some(Orientation::West) } else { None };
        let vertical = if dy > 0 { Some(Orientation::South) } else if dy < 0 { Some(Orientation::North) } else { None };
        let mut prefs: Vec<Orientation> = Vec::new();
        let horizontal_first = match dx.abs().cmp(&dy.abs()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => self.rng.random::<bool>(),
        };
        let (first, second) = if horizontal_first { (horizontal, vertical) } else { (vertical, horizontal) };
        prefs.extend(first);
        prefs.extend(second);
        for dir in prefs {
            let step = dir.delta();
            let enterable = obs
                .cell_at(step.0, step.1)
                .is_some_and(|c| self.may_enter(c, obs, (step.0, step.1)));
            if !enterable {
                continue;
            }
            if obs.orientation == dir {
                return Action::Forward;
            }
            return turn_toward(obs.orientation, dir);
        }
        self.wander(obs)
    }

    fn wander(&mut self, obs: &Observation) -> Action {
        let step = obs.orientation.delta();
        let clear = obs
            .cell_at(step.0, step.1)
            .is_some_and(|c| self.may_enter(c, obs, (step.0, step.1)));
        if clear {
            Action::Forward
        } else {
            self.random_turn()
        }
    }

    fn random_turn(&mut self) -> Action {
        if self.rng.random::<bool>() {
            Action::TurnLeft
        } else {
            Action::TurnRight
        }
    }
}

fn turn_toward(from: Orientation, to: Orientation) -> Action {
    if from.left() == to {
        Action::TurnLeft
    } else {
        // Right turn covers both the right neighbor and the 180° case.
        Action::TurnRight
    }
}

/// Runs one full episode under per-agent scripted roles. Returns the event
/// log and the undiscounted extrinsic return per agent.
pub fn run_scripted_episode(
    config: &EnvConfig,
    strategies: &[Strategy],
    policy: &PolicyConfig,
    seed: u64,
) -> Result<(EventLog, Vec<f64>), GridError> {
    if strategies.len() != config.n_agents() {
        return Err(GridError::ActionCount { expected: config.n_agents(), got: strategies.len() });
    }
    let mut env = EnvState::reset(config, derive_seed(seed, 0))?;
    let mut policies: Vec<ScriptedPolicy> = strategies
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let cfg = PolicyConfig { zap_width: config.agents[i].zap_width, ..*policy };
            ScriptedPolicy::new(s, config.kind, cfg, derive_seed(seed, 1 + i as u64))
        })
        .collect();
    let mut returns = vec![0.0; config.n_agents()];
    while !env.done() {
        let mut actions = Vec::with_capacity(config.n_agents());
        for (i, p) in policies.iter_mut().enumerate() {
            actions.push(p.act(&env.observe(i)?));
        }
        let out = env.step(&actions)?;
        for (acc, r) in returns.iter_mut().zip(&out.rewards) {
            *acc += r;
        }
    }
    Ok((env.into_log(), returns))
}

/// Enumerates every cooperate/defect role assignment, runs
/// `episodes_per_assignment` seeded episodes for each, and emits one
/// return sample per agent per episode.
pub fn schelling_sweep(
    config: &EnvConfig,
    policy: &PolicyConfig,
    episodes_per_assignment: usize,
    base_seed: u64,
) -> Result<Vec<RoleSample>, GridError> {
    let n = config.n_agents();
    if n > 12 {
        return Err(GridError::InvalidConfig(format!(
            "role sweep enumerates 2^n assignments; n = {n} is too large"
        )));
    }
    let mut samples = Vec::new();
    for mask in 0u32..(1 << n) {
        let strategies: Vec<Strategy> = (0..n)
            .map(|i| if mask & (1 << i) != 0 { Strategy::Defect } else { Strategy::Cooperate })
            .collect();
        for ep in 0..episodes_per_assignment {
            let stream = (mask as u64) * episodes_per_assignment as u64 + ep as u64;
            let (_, returns) =
                run_scripted_episode(config, &strategies, policy, derive_seed(base_seed, stream))?;
            for (i, &ret) in returns.iter().enumerate() {
                let cooperating_others = strategies
                    .iter()
                    .enumerate()
                    .filter(|&(j, &s)| j != i && s == Strategy::Cooperate)
                    .count() as u32;
                samples.push(RoleSample {
                    agent_type: config.agents[i].agent_type.config_name().to_owned(),
                    strategy: strategies[i],
                    cooperating_others,
                    episode_return: ret,
                });
            }
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dilemma::SchellingDiagram;
    use crate::events::EventKind;
    use crate::gridworld::Variant;

    fn policy(strategy: Strategy, env: EnvKind, seed: u64) -> ScriptedPolicy {
        // jitter 0 makes single-step expectations deterministic
        let cfg = PolicyConfig { jitter: 0.0, ..PolicyConfig::default() };
        ScriptedPolicy::new(strategy, env, cfg, seed)
    }

    #[test]
    fn defector_walks_onto_adjacent_mismatch_coin() {
        let cfg = EnvConfig::coins(Variant::Symmetric);
        let mut env = EnvState::reset(&cfg, 0).unwrap();
        env.clear_items();
        env.place_agent(0, Pos::new(1, 2), Orientation::East);
        env.place_agent(1, Pos::new(4, 4), Orientation::North);
        env.place_coin(1, Pos::new(2, 2));
        let mut p = policy(Strategy::Defect, EnvKind::Coins, 7);
        assert_eq!(p.act(&env.observe(0).unwrap()), Action::Forward);
    }

    #[test]
    fn cooperator_never_collects_a_mismatch_coin() {
        let mut cfg = EnvConfig::coins(Variant::Symmetric);
        cfg.coin_spawn_prob = 0.0;
        cfg.episode_len = 40;
        let mut env = EnvState::reset(&cfg, 3).unwrap();
        env.clear_items();
        env.place_agent(0, Pos::new(1, 2), Orientation::East);
        env.place_agent(1, Pos::new(4, 4), Orientation::North);
        env.place_coin(1, Pos::new(2, 2));
        let mut p = policy(Strategy::Cooperate, EnvKind::Coins, 7);
        let mut other = policy(Strategy::Cooperate, EnvKind::Coins, 8);
        for _ in 0..40 {
            let a = p.act(&env.observe(0).unwrap());
            let b = other.act(&env.observe(1).unwrap());
            env.step(&[a, b]).unwrap();
        }
        assert!(env
            .log()
            .events()
            .iter()
            .all(|e| e.kind != EventKind::MismatchCoin && e.agent != 0 || e.kind == EventKind::Penalty));
        assert!(env.log().events().iter().all(|e| !(e.kind == EventKind::MismatchCoin && e.agent == 0)));
    }

    #[test]
    fn cooperator_ignores_low_density_apples() {
        let mut cfg = EnvConfig::harvest(Variant::Symmetric, 2);
        cfg.episode_len = 60;
        // No regrowth: the isolated apple must stay isolated, otherwise a
        // regrown neighbor would make it legitimately harvestable.
        cfg.regrowth = crate::gridworld::RegrowthTable { zero: 0.0, one: 0.0, two: 0.0, many: 0.0 };
        let mut env = EnvState::reset(&cfg, 2).unwrap();
        // One isolated apple right next to agent 0; nothing else on the map.
        env.place_agent(0, Pos::new(2, 2), Orientation::East);
        env.place_agent(1, Pos::new(13, 7), Orientation::North);
        env.set_apples([Pos::new(3, 2)]);
        let mut coop = policy(Strategy::Cooperate, EnvKind::Harvest, 5);
        let mut other = policy(Strategy::Cooperate, EnvKind::Harvest, 6);
        for _ in 0..60 {
            let a = coop.act(&env.observe(0).unwrap());
            let b = other.act(&env.observe(1).unwrap());
            env.step(&[a, b]).unwrap();
        }
        assert!(env.log().events().iter().all(|e| e.kind != EventKind::Apple));

        // A defector in the same spot takes it immediately.
        let mut env = EnvState::reset(&cfg, 2).unwrap();
        env.place_agent(0, Pos::new(2, 2), Orientation::East);
        env.place_agent(1, Pos::new(13, 7), Orientation::North);
        env.set_apples([Pos::new(3, 2)]);
        let mut defect = policy(Strategy::Defect, EnvKind::Harvest, 5);
        let a = defect.act(&env.observe(0).unwrap());
        let out = env.step(&[a, Action::Stay]).unwrap();
        assert_eq!(out.rewards[0], 1.0);
    }

    #[test]
    fn cooperator_never_zaps_defector_zaps_in_range() {
        let cfg = EnvConfig::harvest(Variant::Symmetric, 2);
        let mut env = EnvState::reset(&cfg, 4).unwrap();
        env.clear_items();
        env.place_agent(0, Pos::new(3, 4), Orientation::East);
        env.place_agent(1, Pos::new(6, 4), Orientation::North);
        let obs = env.observe(0).unwrap();
        let mut defect = policy(Strategy::Defect, EnvKind::Harvest, 9);
        let mut coop = policy(Strategy::Cooperate, EnvKind::Harvest, 9);
        assert_eq!(defect.act(&obs), Action::Zap);
        assert_ne!(coop.act(&obs), Action::Zap);
    }

    #[test]
    fn timed_out_agents_submit_stay() {
        let cfg = EnvConfig::harvest(Variant::Symmetric, 2);
        let mut env = EnvState::reset(&cfg, 4).unwrap();
        env.clear_items();
        env.place_agent(0, Pos::new(3, 4), Orientation::East);
        env.place_agent(1, Pos::new(6, 4), Orientation::North);
        env.step(&[Action::Zap, Action::Stay]).unwrap();
        let mut p = policy(Strategy::Defect, EnvKind::Harvest, 1);
        assert_eq!(p.act(&env.observe(1).unwrap()), Action::Stay);
    }

    #[test]
    fn scripted_episodes_are_seed_deterministic() {
        let cfg = EnvConfig::coins(Variant::Symmetric);
        let roles = [Strategy::Defect, Strategy::Cooperate];
        let pol = PolicyConfig::default();
        let (log_a, ret_a) = run_scripted_episode(&cfg, &roles, &pol, 11).unwrap();
        let (log_b, ret_b) = run_scripted_episode(&cfg, &roles, &pol, 11).unwrap();
        assert_eq!(log_a.to_csv(), log_b.to_csv());
        assert_eq!(ret_a, ret_b);
    }

    #[test]
    fn sweep_covers_every_role_count_for_both_strategies() {
        let mut cfg = EnvConfig::coins(Variant::Symmetric);
        cfg.episode_len = 150;
        let samples = schelling_sweep(&cfg, &PolicyConfig::default(), 2, 21).unwrap();
        // 4 assignments x 2 episodes x 2 agents.
        assert_eq!(samples.len(), 16);
        let diagram = SchellingDiagram::from_samples(samples);
        for k in 0..=1u32 {
            for s in [Strategy::Cooperate, Strategy::Defect] {
                assert!(diagram.cell("standard", k, s).is_some(), "missing cell k={k} {s}");
            }
        }
    }
}
