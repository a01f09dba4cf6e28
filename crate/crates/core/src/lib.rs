//! Desk-scale autonomous-racing benchmark: a single-track simulator with a
//! simulated LiDAR and five racing methods (particle-filter localisation,
//! minimum-curvature raceline with pure pursuit, MPCC, follow-the-gap and an
//! end-to-end TD3 agent), plus the experiment harness that compares them.

pub mod config;
pub mod csvio;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod track;

pub use error::{Error, Result};
pub mod localization;
pub mod sim;
pub mod qp;
pub mod raceline;
pub mod pursuit;
pub mod mpcc;
pub mod ftg;
pub mod rl;
pub mod harness;
