//! Fairness-based reward shaping.
//!
//! Extrinsic rewards are first temporally smoothed per agent,
//!
//! ```text
//! e^t = gamma * lambda * e^(t-1) + r^t,        e^(-1) = 0
//! ```
//!
//! and optionally min-max normalized against the extrema seen so far in the
//! episode. Two intrinsic penalties are supported on top:
//!
//! * inequity aversion: disadvantageous gaps are charged at `alpha`,
//!   advantageous gaps at `beta`, both averaged over the other agents;
//! * social value orientation: the angle between own and mean-other value
//!   is pulled toward a target angle at weight `w`.
//!
//! Per-agent-type multipliers `phi` rescale the weights so differently
//! endowed agents can carry different social drives. The comparison values
//! are either the true values of all agents or, in the local variants, the
//! owner's gossip-propagated estimate table.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::estimates::EstimateTable;
use crate::gridworld::AgentSpec;

/// Ranges tighter than this are treated as degenerate and normalize to 0.5.
pub const RANGE_EPSILON: f64 = 1e-8;

/// Normalized value reported while the seen range is degenerate.
pub const DEGENERATE_NORMALIZED: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ShapingError {
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("smoothed tracker was never updated")]
    NeverUpdated,
    #[error("decay parameter {name} = {value} outside [0, 1]")]
    BadDecay { name: &'static str, value: f64 },
    #[error("shaping needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("expected {expected} comparison values, got {got}")]
    OthersLength { expected: usize, got: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("local shaping requires estimate tables")]
    MissingEstimates,
    #[error("invalid shaping config: {0}")]
    InvalidConfig(String),
}

// ---------------------------------------------------------------------------
// Temporal smoothing.
// ---------------------------------------------------------------------------

/// Exponentially smoothed reward with running episode extrema.
///
/// The extrema cover the smoothed values actually produced (`e^0` onward);
/// the implicit starting point `e^(-1) = 0` is not an observation and never
/// enters the range.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmoothedTracker {
    value: f64,
    extrema: Option<(f64, f64)>,
}

impl SmoothedTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies one smoothing step with the given decay parameters.
    pub fn update(&mut self, reward: f64, gamma: f64, lambda: f64) -> Result<(), ShapingError> {
        if !reward.is_finite() {
            return Err(ShapingError::NonFiniteReward(reward));
        }
        check_decay("gamma", gamma)?;
        check_decay("lambda", lambda)?;
        self.value = gamma * lambda * self.value + reward;
        self.extrema = match self.extrema {
            None => Some((self.value, self.value)),
            Some((lo, hi)) => Some((lo.min(self.value), hi.max(self.value))),
        };
        Ok(())
    }

    pub fn updated(&self) -> bool {
        self.extrema.is_some()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn min(&self) -> Option<f64> {
        self.extrema.map(|(lo, _)| lo)
    }

    pub fn max(&self) -> Option<f64> {
        self.extrema.map(|(_, hi)| hi)
    }

    pub fn range(&self) -> Option<f64> {
        self.extrema.map(|(lo, hi)| hi - lo)
    }

    /// Min-max normalized value in [0, 1]; 0.5 while the range is
    /// degenerate (fewer than two distinct values seen).
    pub fn normalized(&self) -> Result<f64, ShapingError> {
        let (lo, hi) = self.extrema.ok_or(ShapingError::NeverUpdated)?;
        if hi - lo < RANGE_EPSILON {
            return Ok(DEGENERATE_NORMALIZED);
        }
        Ok((self.value - lo) / (hi - lo))
    }
}

fn check_decay(name: &'static str, value: f64) -> Result<(), ShapingError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(ShapingError::BadDecay { name, value });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Intrinsic penalties.
// ---------------------------------------------------------------------------

fn check_others(others: &[f64], n_agents: usize) -> Result<(), ShapingError> {
    if n_agents < 2 {
        return Err(ShapingError::TooFewAgents(n_agents));
    }
    if others.len() != n_agents - 1 {
        return Err(ShapingError::OthersLength { expected: n_agents - 1, got: others.len() });
    }
    Ok(())
}

/// Inequity penalty: `alpha` charges envy (others above own value), `beta`
/// charges guilt (own value above others), each averaged over the others.
pub fn ia_penalty(
    own: f64,
    others: &[f64],
    alpha: f64,
    beta: f64,
    n_agents: usize,
) -> Result<f64, ShapingError> {
    check_others(others, n_agents)?;
    let mut envy = 0.0;
    let mut guilt = 0.0;
    for &other in others {
        envy += (other - own).max(0.0);
        guilt += (own - other).max(0.0);
    }
    let scale = (n_agents - 1) as f64;
    Ok(alpha * (envy / scale) + beta * (guilt / scale))
}

pub fn ia_shape(
    reward: f64,
    own: f64,
    others: &[f64],
    alpha: f64,
    beta: f64,
    n_agents: usize,
) -> Result<f64, ShapingError> {
    Ok(reward - ia_penalty(own, others, alpha, beta, n_agents)?)
}

/// Angle in degrees between own value and the mean of the others' values.
///
/// Computed with the two-argument arctangent, so (0, 0) and every other
/// exactly equal pair sit on the 45-degree equality ray.
pub fn svo_angle(own: f64, others: &[f64]) -> Result<f64, ShapingError> {
    if others.is_empty() {
        return Err(ShapingError::OthersLength { expected: 1, got: 0 });
    }
    // An all-equal slice sits on the equality ray even when the rounded
    // mean drifts an ulp away from `own`.
    if others.iter().all(|&v| v == own) {
        return Ok(45.0);
    }
    let mean = others.iter().sum::<f64>() / others.len() as f64;
    if own == mean {
        return Ok(45.0);
    }
    Ok(mean.atan2(own).to_degrees())
}

pub fn svo_penalty(angle_deg: f64, target_deg: f64, w: f64) -> f64 {
    w * (target_deg - angle_deg).abs()
}

pub fn svo_shape(reward: f64, angle_deg: f64, target_deg: f64, w: f64) -> f64 {
    reward - svo_penalty(angle_deg, target_deg, w)
}

// ---------------------------------------------------------------------------
// Method configuration.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    None,
    Ia,
    Svo,
    FairLocalIa,
    FairLocalSvo,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::None, Method::Ia, Method::Svo, Method::FairLocalIa, Method::FairLocalSvo];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Ia => "ia",
            Method::Svo => "svo",
            Method::FairLocalIa => "fair_local_ia",
            Method::FairLocalSvo => "fair_local_svo",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }

    pub fn uses_ia(self) -> bool {
        matches!(self, Method::Ia | Method::FairLocalIa)
    }

    pub fn uses_svo(self) -> bool {
        matches!(self, Method::Svo | Method::FairLocalSvo)
    }

    fn fair_local(self) -> bool {
        matches!(self, Method::FairLocalIa | Method::FairLocalSvo)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapingConfig {
    pub method: Method,
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub w: f64,
    pub theta_svo_deg: f64,
    pub normalized: bool,
    pub local: bool,
    /// Per-agent-type weight multiplier, keyed by the type's config name.
    pub phi: BTreeMap<String, f64>,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        ShapingConfig {
            method: Method::None,
            gamma: 0.99,
            lambda: 0.9,
            alpha: 0.0,
            beta: 0.0,
            w: 0.0,
            theta_svo_deg: 45.0,
            normalized: false,
            local: false,
            phi: BTreeMap::new(),
        }
    }
}

impl ShapingConfig {
    /// The fair-local methods always compare normalized values.
    pub fn effective_normalized(&self) -> bool {
        self.method.fair_local() || self.normalized
    }

    /// The fair-local methods always compare against local estimates.
    pub fn effective_local(&self) -> bool {
        self.method.fair_local() || self.local
    }

    /// Multiplier for one agent type; unlisted types fall back to the
    /// spec's own `phi` field.
    pub fn phi_for(&self, type_name: &str) -> Option<f64> {
        self.phi.get(type_name).copied()
    }

    pub fn validate(&self) -> Result<(), ShapingError> {
        check_decay("gamma", self.gamma)?;
        check_decay("lambda", self.lambda)?;
        for (name, value) in
            [("alpha", self.alpha), ("beta", self.beta), ("w", self.w), ("theta_svo_deg", self.theta_svo_deg)]
        {
            if !value.is_finite() {
                return Err(ShapingError::InvalidConfig(format!("{name} is not finite")));
            }
        }
        for (ty, &phi) in &self.phi {
            if !phi.is_finite() || phi < 0.0 {
                return Err(ShapingError::InvalidConfig(format!(
                    "phi.{ty} = {phi} must be finite and nonnegative"
                )));
            }
        }
        if self.effective_local() && !self.effective_normalized() {
            return Err(ShapingError::InvalidConfig(
                "local comparison requires normalized values (estimate tables store them)".into(),
            ));
        }
        Ok(())
    }
}

/// An agent's weights after applying its `phi` multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EffectiveWeights {
    Ia { alpha: f64, beta: f64 },
    Svo { w: f64 },
}

/// Resolves the weights for one agent: `phi` comes from the config's
/// per-type map when listed, otherwise from the agent spec itself.
pub fn effective_weights(
    cfg: &ShapingConfig,
    spec: &AgentSpec,
) -> Result<EffectiveWeights, ShapingError> {
    let phi = cfg.phi_for(spec.agent_type.config_name()).unwrap_or(spec.phi);
    if !phi.is_finite() || phi < 0.0 {
        return Err(ShapingError::InvalidConfig(format!(
            "phi = {phi} must be finite and nonnegative"
        )));
    }
    match cfg.method {
        Method::Ia | Method::FairLocalIa => {
            Ok(EffectiveWeights::Ia { alpha: phi * cfg.alpha, beta: phi * cfg.beta })
        }
        Method::Svo | Method::FairLocalSvo => Ok(EffectiveWeights::Svo { w: phi * cfg.w }),
        Method::None => {
            Err(ShapingError::InvalidConfig("method `none` has no shaping weights".into()))
        }
    }
}

// ---------------------------------------------------------------------------
// Batch shaping.
// ---------------------------------------------------------------------------

/// One agent's shaped learning signal for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedReward {
    pub extrinsic: f64,
    pub penalty: f64,
    pub shaped: f64,
}

pub const AUDIT_HEADER: &str = "t,agent,extrinsic,penalty,shaped";

pub fn audit_row(t: u64, agent: usize, s: &ShapedReward) -> String {
    format!("{t},{agent},{},{},{}", s.extrinsic, s.penalty, s.shaped)
}

/// Shapes one step of per-agent extrinsic rewards.
///
/// Comparison values are the trackers' raw or normalized values; in the
/// local variants each agent instead compares against its own estimate
/// table, which must be supplied.
pub fn shape_rewards(
    cfg: &ShapingConfig,
    specs: &[AgentSpec],
    extrinsic: &[f64],
    trackers: &[SmoothedTracker],
    tables: Option<&[EstimateTable]>,
) -> Result<Vec<ShapedReward>, ShapingError> {
    cfg.validate()?;
    let n = specs.len();
    if extrinsic.len() != n {
        return Err(ShapingError::LengthMismatch { what: "extrinsic rewards", expected: n, got: extrinsic.len() });
    }
    for &r in extrinsic {
        if !r.is_finite() {
            return Err(ShapingError::NonFiniteReward(r));
        }
    }
    if cfg.method == Method::None {
        return Ok(extrinsic
            .iter()
            .map(|&r| ShapedReward { extrinsic: r, penalty: 0.0, shaped: r })
            .collect());
    }
    if n < 2 {
        return Err(ShapingError::TooFewAgents(n));
    }
    if trackers.len() != n {
        return Err(ShapingError::LengthMismatch { what: "trackers", expected: n, got: trackers.len() });
    }
    let tables = if cfg.effective_local() {
        let tables = tables.ok_or(ShapingError::MissingEstimates)?;
        if tables.len() != n {
            return Err(ShapingError::LengthMismatch { what: "estimate tables", expected: n, got: tables.len() });
        }
        Some(tables)
    } else {
        None
    };
    let own: Vec<f64> = if cfg.effective_normalized() {
        trackers.iter().map(|t| t.normalized()).collect::<Result<_, _>>()?
    } else {
        trackers.iter().map(|t| t.value()).collect()
    };

    let mut shaped = Vec::with_capacity(n);
    for i in 0..n {
        let others: Vec<f64> = match tables {
            Some(tables) => tables[i].other_values(),
            None => own.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).collect(),
        };
        let penalty = match effective_weights(cfg, &specs[i])? {
            EffectiveWeights::Ia { alpha, beta } => ia_penalty(own[i], &others, alpha, beta, n)?,
            EffectiveWeights::Svo { w } => {
                let angle = svo_angle(own[i], &others)?;
                svo_penalty(angle, cfg.theta_svo_deg, w)
            }
        };
        shaped.push(ShapedReward {
            extrinsic: extrinsic[i],
            penalty,
            shaped: extrinsic[i] - penalty,
        });
    }
    Ok(shaped)
}
