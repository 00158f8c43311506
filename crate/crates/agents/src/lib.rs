//! The two backbone learners: a dueling double DQN with proportional
//! prioritized replay, and a PPO actor-critic. Both run on the flat-MLP
//! substrate and are bitwise reproducible per seed.

mod dqn;
mod dueling;
mod ppo;
mod replay;

pub use dqn::{double_q_target, DqnAgent, DqnCheckpoint, DqnConfig, SafetyPenalty, TrainStats};
pub use dueling::{DuelTrace, DuelingGrads, DuelingQNetwork};
pub use ppo::{PpoAgent, PpoCheckpoint, PpoConfig, PpoStep, PpoUpdateStats};
pub use replay::{PrioritizedReplayBuffer, SampledBatch, Transition};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("numeric: {0}")]
    Nn(#[from] tsc_nn::NnError),
    #[error("replay buffer holds {have} transitions, need {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, AgentError>;
