//! Environment state and the step pipeline.
//!
//! Each step resolves in fixed phases so that simultaneous actions are
//! order-independent and every stochastic draw comes from the single
//! seeded stream:
//!
//! 1. timed-out bookkeeping (removed agents must submit Stay),
//! 2. zap resolution against pre-movement positions (Harvest),
//! 3. simultaneous movement with conflict blocking,
//! 4. item collection and penalties,
//! 5. item dynamics: coin aging/spawning or apple regrowth,
//! 6. timeout countdown and re-entry.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::events::{Event, EventKind, EventLog};

use super::{
    beam_cells, Action, Cell, EnvConfig, EnvKind, GridError, Observation, Orientation, Pos,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub pos: Pos,
    pub orientation: Orientation,
    /// Steps of removal left; the agent occupies no cell while positive.
    pub timeout: u64,
}

impl AgentState {
    fn active(&self) -> bool {
        self.timeout == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Coin {
    owner: usize,
    pos: Pos,
    age: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SpawnBias {
    color: usize,
    remaining: u64,
}

/// Per-step result: extrinsic rewards in agent order plus the step index
/// the emitted events carry.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub t: u64,
    pub rewards: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct EnvState {
    config: EnvConfig,
    apple_sites: BTreeSet<Pos>,
    t: u64,
    rng: ChaCha8Rng,
    agents: Vec<AgentState>,
    coin: Option<Coin>,
    spawn_bias: Option<SpawnBias>,
    apples: BTreeSet<Pos>,
    log: EventLog,
}

impl EnvState {
    /// Builds the initial state for `config` under `seed`. Agents spawn at
    /// seeded distinct cells (off the apple patches), all facing North.
    pub fn reset(config: &EnvConfig, seed: u64) -> Result<EnvState, GridError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let apple_sites = config.apple_sites();
        let mut free: Vec<Pos> = (0..config.height as i32)
            .flat_map(|y| (0..config.width as i32).map(move |x| Pos::new(x, y)))
            .filter(|p| !apple_sites.contains(p))
            .collect();
        if free.len() < config.n_agents() {
            return Err(GridError::InvalidConfig(
                "not enough free cells to place all agents".into(),
            ));
        }
        let agents = (0..config.n_agents())
            .map(|_| {
                let idx = rng.random_range(0..free.len());
                AgentState { pos: free.swap_remove(idx), orientation: Orientation::North, timeout: 0 }
            })
            .collect();
        Ok(EnvState {
            apples: apple_sites.clone(),
            apple_sites,
            t: 0,
            rng,
            agents,
            coin: None,
            spawn_bias: None,
            log: EventLog::new(config.kind, config.n_agents(), config.episode_len),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn done(&self) -> bool {
        self.t >= self.config.episode_len
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    pub fn agent(&self, i: usize) -> Result<&AgentState, GridError> {
        self.agents.get(i).ok_or(GridError::UnknownAgent(i))
    }

    pub fn coin(&self) -> Option<(usize, Pos, u64)> {
        self.coin.map(|c| (c.owner, c.pos, c.age))
    }

    pub fn apples(&self) -> &BTreeSet<Pos> {
        &self.apples
    }

    pub fn spawn_bias(&self) -> Option<(usize, u64)> {
        self.spawn_bias.map(|b| (b.color, b.remaining))
    }

    fn occupied_cells(&self) -> BTreeSet<Pos> {
        self.agents.iter().filter(|a| a.active()).map(|a| a.pos).collect()
    }

    /// Other active agents within agent `i`'s observation window. A
    /// timed-out observer is off the grid and sees nobody.
    pub fn visible_agents(&self, i: usize) -> Result<Vec<usize>, GridError> {
        let me = self.agent(i)?;
        if !me.active() {
            return Ok(Vec::new());
        }
        let r = self.config.radius() as i32;
        Ok(self
            .agents
            .iter()
            .enumerate()
            .filter(|&(j, a)| {
                j != i
                    && a.active()
                    && (a.pos.x - me.pos.x).abs() <= r
                    && (a.pos.y - me.pos.y).abs() <= r
            })
            .map(|(j, _)| j)
            .collect())
    }

    /// Symbolic egocentric observation for agent `i`.
    pub fn observe(&self, i: usize) -> Result<Observation, GridError> {
        let me = self.agent(i)?;
        let r = self.config.radius() as i32;
        let side = (2 * r + 1) as usize;
        let mut cells = Vec::with_capacity(side * side);
        for dy in -r..=r {
            for dx in -r..=r {
                let p = Pos::new(me.pos.x + dx, me.pos.y + dy);
                cells.push(self.render_cell(p, i));
            }
        }
        Ok(Observation {
            radius: r as u32,
            cells,
            orientation: me.orientation,
            timed_out: !me.active(),
            visible: self.visible_agents(i)?,
        })
    }

    fn render_cell(&self, p: Pos, viewer: usize) -> Cell {
        if !self.config.in_bounds(p) {
            return Cell::Wall;
        }
        // Timed-out agents occupy no cell and are not rendered.
        for (j, a) in self.agents.iter().enumerate() {
            if a.active() && a.pos == p {
                return if j == viewer {
                    Cell::AgentSelf
                } else {
                    Cell::AgentOther(self.config.agents[j].agent_type)
                };
            }
        }
        if let Some(c) = self.coin {
            if c.pos == p {
                return if c.owner == viewer { Cell::CoinOwn } else { Cell::CoinOther };
            }
        }
        if self.apples.contains(&p) {
            return Cell::Apple;
        }
        Cell::Empty
    }

    /// Advances the environment by one simultaneous joint action.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome, GridError> {
        let n = self.config.n_agents();
        if self.done() {
            return Err(GridError::EpisodeOver(self.t));
        }
        if actions.len() != n {
            return Err(GridError::ActionCount { expected: n, got: actions.len() });
        }
        for (i, &a) in actions.iter().enumerate() {
            if !Action::legal(self.config.kind).contains(&a) {
                return Err(GridError::IllegalAction { agent: i, action: a, env: self.config.kind });
            }
            if !self.agents[i].active() && a != Action::Stay {
                return Err(GridError::ActionWhileTimedOut { agent: i });
            }
        }
        let t = self.t + 1;
        let mut rewards = vec![0.0; n];

        // Phase 1: removed agents sit this step out.
        let was_out: Vec<bool> = self.agents.iter().map(|a| !a.active()).collect();
        for i in 0..n {
            if was_out[i] {
                self.log.push(Event {
                    t,
                    agent: i,
                    kind: EventKind::TimedOut,
                    value: 0.0,
                    counterparty: None,
                });
            }
        }

        // Phase 2: all zaps resolve simultaneously against current
        // positions, before any movement. Mutual hits remove both.
        let mut freshly_zapped = vec![false; n];
        if self.config.kind == EnvKind::Harvest {
            let mut hits: Vec<(usize, usize)> = Vec::new();
            for shooter in 0..n {
                if was_out[shooter] || actions[shooter] != Action::Zap {
                    continue;
                }
                let spec = &self.config.agents[shooter];
                let me = &self.agents[shooter];
                let beam: BTreeSet<Pos> =
                    beam_cells(me.pos, me.orientation, self.config.beam_length, spec.zap_width)
                        .into_iter()
                        .collect();
                for victim in 0..n {
                    if victim != shooter && !was_out[victim] && beam.contains(&self.agents[victim].pos)
                    {
                        hits.push((shooter, victim));
                    }
                }
            }
            for &(shooter, victim) in &hits {
                freshly_zapped[victim] = true;
                self.log.push(Event {
                    t,
                    agent: shooter,
                    kind: EventKind::Zap,
                    value: 0.0,
                    counterparty: Some(victim),
                });
            }
        }

        // Phase 3: simultaneous movement. Turns always succeed; forward
        // moves block on walls, shared targets, swaps, and cells whose
        // occupant is not leaving.
        let acts = |i: usize| was_out[i] || freshly_zapped[i];
        let mut target: Vec<Option<Pos>> = vec![None; n];
        for i in 0..n {
            if acts(i) {
                continue;
            }
            match actions[i] {
                Action::Forward => {
                    let tgt = self.agents[i].pos.step(self.agents[i].orientation);
                    if self.config.in_bounds(tgt) {
                        target[i] = Some(tgt);
                    }
                }
                Action::TurnLeft => self.agents[i].orientation = self.agents[i].orientation.left(),
                Action::TurnRight => self.agents[i].orientation = self.agents[i].orientation.right(),
                Action::Stay | Action::Zap => {}
            }
        }
        let on_grid = |i: usize, freshly: &[bool]| self.agents[i].active() && !freshly[i];
        let mut blocked = vec![false; n];
        loop {
            let mut changed = false;
            for i in 0..n {
                let Some(tgt) = target[i] else { continue };
                if blocked[i] {
                    continue;
                }
                for j in 0..n {
                    if j == i || !on_grid(j, &freshly_zapped) {
                        continue;
                    }
                    let same_target = target[j] == Some(tgt) && !blocked[j];
                    let swap = self.agents[j].pos == tgt
                        && target[j] == Some(self.agents[i].pos)
                        && !blocked[j];
                    let stationary_occupant =
                        self.agents[j].pos == tgt && (target[j].is_none() || blocked[j]);
                    if same_target || swap {
                        blocked[i] = true;
                        blocked[j] = true;
                        changed = true;
                    } else if stationary_occupant {
                        blocked[i] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for i in 0..n {
            if let Some(tgt) = target[i] {
                if !blocked[i] {
                    self.agents[i].pos = tgt;
                }
            }
        }

        // Phase 4: collection. Movement blocking guarantees at most one
        // active agent per cell.
        for i in 0..n {
            if acts(i) {
                continue;
            }
            let pos = self.agents[i].pos;
            match self.config.kind {
                EnvKind::Coins => {
                    let Some(coin) = self.coin else { continue };
                    if coin.pos != pos {
                        continue;
                    }
                    let spec = &self.config.agents[i];
                    let value = spec.reward_multiplier;
                    rewards[i] += value;
                    if coin.owner == i {
                        self.log.push(Event {
                            t,
                            agent: i,
                            kind: EventKind::OwnCoin,
                            value,
                            counterparty: None,
                        });
                    } else {
                        self.log.push(Event {
                            t,
                            agent: i,
                            kind: EventKind::MismatchCoin,
                            value,
                            counterparty: Some(coin.owner),
                        });
                        // The collector's type sets the owner's fine.
                        let fine = spec.mismatch_penalty;
                        rewards[coin.owner] -= fine;
                        self.log.push(Event {
                            t,
                            agent: coin.owner,
                            kind: EventKind::Penalty,
                            value: -fine,
                            counterparty: Some(i),
                        });
                        self.open_spawn_bias_window(i, coin.owner);
                    }
                    self.coin = None;
                }
                EnvKind::Harvest => {
                    if self.apples.remove(&pos) {
                        let value = self.config.agents[i].reward_multiplier;
                        rewards[i] += value;
                        self.log.push(Event {
                            t,
                            agent: i,
                            kind: EventKind::Apple,
                            value,
                            counterparty: None,
                        });
                    }
                }
            }
        }

        // Phase 5: item dynamics.
        match self.config.kind {
            EnvKind::Coins => self.update_coin(),
            EnvKind::Harvest => self.regrow_apples(),
        }

        // Phase 6: timeout countdown; fresh hits start their removal now.
        let occupied = self.occupied_cells();
        let mut returned: BTreeSet<Pos> = BTreeSet::new();
        for i in 0..n {
            if was_out[i] {
                self.agents[i].timeout -= 1;
                if self.agents[i].timeout == 0 {
                    // Re-entry: keep the stored cell unless something now
                    // stands there, else take the nearest free cell.
                    let pos = self.free_cell_near(self.agents[i].pos, &occupied, &returned);
                    self.agents[i].pos = pos;
                    returned.insert(pos);
                }
            } else if freshly_zapped[i] {
                self.agents[i].timeout = self.config.zap_timeout;
            }
        }

        self.t = t;
        Ok(StepOutcome { t, rewards, done: self.done() })
    }

    fn open_spawn_bias_window(&mut self, collector: usize, owner: usize) {
        let (agent, steps) = if self.config.spawn_bias_on_victim {
            (owner, self.config.agents[owner].spawn_bias_steps)
        } else {
            (collector, self.config.agents[collector].spawn_bias_steps)
        };
        if steps > 0 {
            self.spawn_bias = Some(SpawnBias { color: agent, remaining: steps });
        }
    }

    fn update_coin(&mut self) {
        if let Some(coin) = &mut self.coin {
            coin.age += 1;
            if coin.age >= self.config.coin_lifetime {
                self.coin = None;
            }
        }
        if self.coin.is_none() && self.rng.random::<f64>() < self.config.coin_spawn_prob {
            let owner = match self.spawn_bias {
                Some(bias) => bias.color,
                None => self.rng.random_range(0..self.config.n_agents()),
            };
            let occupied = self.occupied_cells();
            let free: Vec<Pos> = (0..self.config.height as i32)
                .flat_map(|y| (0..self.config.width as i32).map(move |x| Pos::new(x, y)))
                .filter(|p| !occupied.contains(p))
                .collect();
            if !free.is_empty() {
                let pos = free[self.rng.random_range(0..free.len())];
                self.coin = Some(Coin { owner, pos, age: 0 });
            }
        }
        if let Some(bias) = &mut self.spawn_bias {
            bias.remaining -= 1;
            if bias.remaining == 0 {
                self.spawn_bias = None;
            }
        }
    }

    fn regrow_apples(&mut self) {
        let occupied = self.occupied_cells();
        let mut grown: Vec<Pos> = Vec::new();
        // Neighbor counts use the pre-step apple set so regrowth is
        // simultaneous and independent of site order.
        for &site in &self.apple_sites {
            if self.apples.contains(&site) || occupied.contains(&site) {
                continue;
            }
            let neighbors = self
                .apples
                .iter()
                .filter(|a| {
                    let dx = a.x - site.x;
                    let dy = a.y - site.y;
                    dx * dx + dy * dy <= 4
                })
                .count();
            let p = self.config.regrowth.prob(neighbors);
            if p > 0.0 && self.rng.random::<f64>() < p {
                grown.push(site);
            }
        }
        self.apples.extend(grown);
    }

    fn free_cell_near(&self, want: Pos, occupied: &BTreeSet<Pos>, taken: &BTreeSet<Pos>) -> Pos {
        let busy = |p: &Pos| occupied.contains(p) || taken.contains(p);
        if self.config.in_bounds(want) && !busy(&want) {
            return want;
        }
        let max_r = self.config.width.max(self.config.height) as i32;
        for r in 1..=max_r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let p = Pos::new(want.x + dx, want.y + dy);
                    if self.config.in_bounds(p) && !busy(&p) {
                        return p;
                    }
                }
            }
        }
        // Validation guarantees more cells than agents.
        unreachable!("no free cell found for re-entry");
    }

    // Test hooks: deterministic state surgery for unit tests.
    #[cfg(test)]
    pub(crate) fn place_agent(&mut self, i: usize, pos: Pos, orientation: Orientation) {
        self.agents[i].pos = pos;
        self.agents[i].orientation = orientation;
    }

    #[cfg(test)]
    pub(crate) fn place_coin(&mut self, owner: usize, pos: Pos) {
        self.coin = Some(Coin { owner, pos, age: 0 });
    }

    #[cfg(test)]
    pub(crate) fn clear_items(&mut self) {
        self.coin = None;
        self.apples.clear();
    }

    #[cfg(test)]
    pub(crate) fn set_apples<I: IntoIterator<Item = Pos>>(&mut self, apples: I) {
        self.apples = apples.into_iter().collect();
    }
}
