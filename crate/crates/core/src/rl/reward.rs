//! Shaped rewards for the end-to-end agent.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::Terminal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RewardKind {
    /// Cross-track and heading.
    Cth,
    Progress,
    /// Trajectory-aided learning: agreement with the classical planner.
    Tal,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Cth, RewardKind::Progress, RewardKind::Tal];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Cth => "cth",
            RewardKind::Progress => "progress",
            RewardKind::Tal => "tal",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cth" => Ok(RewardKind::Cth),
            "progress" => Ok(RewardKind::Progress),
            "tal" => Ok(RewardKind::Tal),
            other => Err(Error::Unknown {
                kind: "reward",
                name: other.to_string(),
            }),
        }
    }
}

/// Quantities the rewards are computed from, all normalised.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardContext {
    /// Speed over the agent's top speed.
    pub v_t: f64,
    /// Heading error to the track direction (rad).
    pub psi_err: f64,
    /// Cross-track distance over the local half-width.
    pub d_c: f64,
    /// Unwrapped progress over the track length.
    pub s_t: f64,
    pub s_prev: f64,
    /// Actions rescaled into [0, 1]².
    pub u_agent: [f64; 2],
    pub u_classic: [f64; 2],
}

pub const LAP_REWARD: f64 = 1.0;
pub const CRASH_REWARD: f64 = -1.0;

/// Per-step reward; `tal_weight` scales the trajectory-aided term.
pub fn reward(kind: RewardKind, ctx: &RewardContext, terminal: Option<Terminal>, tal_weight: f64) -> f64 {
    match terminal {
        Some(Terminal::LapComplete) => return LAP_REWARD,
        Some(Terminal::Crash) => return CRASH_REWARD,
        _ => {}
    }
    match kind {
        RewardKind::Cth => ctx.v_t * ctx.psi_err.cos() - ctx.d_c,
        RewardKind::Progress => ctx.s_t - ctx.s_prev,
        RewardKind::Tal => {
            let l1 = (ctx.u_agent[0] - ctx.u_classic[0]).abs() + (ctx.u_agent[1] - ctx.u_classic[1]).abs();
            tal_weight * (1.0 - 0.5 * l1)
        }
    }
}
