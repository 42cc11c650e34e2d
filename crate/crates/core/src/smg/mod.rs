//! Turn-based stochastic games between the system and an adversarial
//! environment, and strategy synthesis over them.

mod build;
mod game;
mod solve;

use thiserror::Error;

pub use build::{
    build_game, fallback_tactic, realize, strategy_to_tactics, DatacenterGame, EnvBranching,
    GameBounds, GameParams, GameState, QosModel, StrategyAdvice, DECREASE_CAP, DECREASE_PM,
    DECREASE_VM, IDLE, INCREASE_CAP, INCREASE_PM, INCREASE_VM,
};
pub use game::{
    GameAction, GameStateInfo, Player, RewardStructure, Sense, StochasticGame, Strategy, END_LABEL,
    GOAL_LABEL,
};
pub use solve::{
    evaluate_strategy_bound, extract_strategy, normalized, scalarize,
    synthesize_max_reachability_reward, synthesize_weighted_multiobjective, BoundCheck, Horizon,
    Solution, SolveOptions,
};

use crate::datacenter::DatacenterError;

#[derive(Debug, Error)]
pub enum SmgError {
    #[error("invalid game: {0}")]
    Invalid(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("unknown reward structure `{0}`")]
    UnknownReward(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("inconsistent bounds: {0}")]
    Bounds(String),
    #[error("game exceeds {0} states")]
    TooLarge(usize),
    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: u32, residual: f64 },
    #[error("model line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Datacenter(#[from] DatacenterError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
