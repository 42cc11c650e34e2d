//! Stability-aware self-adaptation of a simulated cloud datacenter.

pub mod attribute;
pub mod config;
pub mod datacenter;
pub mod engine;
pub mod goals;
pub mod qlearning;
pub mod smg;
pub mod tactics;
pub mod workload;

pub use attribute::{Attribute, Measurements, Reading};
pub use datacenter::{ArchitectureConfig, ConcurrencyMode, SchedulingPolicy, VmType};
pub use goals::{GoalHistory, GoalSet, RuntimeGoal};
pub use tactics::{Tactic, TacticKind, TacticSettings};
pub use workload::{ServiceType, WorkloadTrace};
pub use config::{ExperimentConfig, WorkloadSource};
pub use engine::{run_experiment, ControllerKind, InstanceRecord, SimulationResult, Totals};
