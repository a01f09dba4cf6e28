//! End-to-end learning: a small MLP policy trained with TD3 from stacked
//! downsampled scans and speed.

pub mod env;
pub mod mlp;
pub mod optim;
pub mod replay;
pub mod reward;
pub mod td3;
pub mod train;

pub use env::{Agent, AgentConfig, EnvStep, RacingEnv};
pub use mlp::{Activation, Mlp};
pub use reward::{reward, RewardContext, RewardKind};
pub use td3::{bellman_target, Td3, Td3Hyper};
pub use train::{evaluate, mean_progress, train, CurveRow, TrainConfig, TrainOutcome};
