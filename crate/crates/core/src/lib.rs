//! Desk-scale laboratory for studying asymmetric social dilemmas.
//!
//! The crate has three layers:
//!
//! * matrix-game analysis ([`dilemma`]): classify 2x2 payoff structures,
//!   normalize them per agent, and verify empirical dilemmas from
//!   Schelling-diagram sweeps;
//! * simulation ([`gridworld`], [`events`], [`metrics`]): deterministic
//!   Coins and Harvest engines with heterogeneous agent types, scripted
//!   role policies, and event-log-driven metrics;
//! * learning ([`shaping`], [`estimates`], [`learning`]): inequity-averse
//!   and social-value-orientation reward shaping, optionally fed by
//!   gossip-propagated local estimates, on top of tabular Q-learners.
//!
//! [`config`] and [`harness`] wire the layers into reproducible experiment
//! runs behind the `fairgrid` command-line binary.

pub mod config;
pub mod dilemma;
pub mod estimates;
pub mod events;
pub mod gridworld;
pub mod harness;
pub mod learning;
pub mod metrics;
pub mod shaping;
