//! Experiment configuration: a JSON document whose every field has a default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::ControllerKind;
use crate::datacenter::{initial_deployment, ArchitectureConfig, VmCapacity};
use crate::goals::GoalSet;
use crate::qlearning::QParams;
use crate::smg::{GameParams, SolveOptions};
use crate::tactics::TacticSettings;
use crate::workload::{self, ServiceType, WorkloadTrace, DEFAULT_INSTANCE_DURATION_S, DEFAULT_MAX_PARALLEL_REQUESTS};

/// MIPS per vCPU core used by experiments, calibrated so that the initial
/// deployment sits near the response-time objective at moderate load.
pub const CALIBRATED_CORE_MIPS: f64 = 500_000.0;

/// Seconds over which one instance's request count arrives.
pub const DEFAULT_ARRIVAL_WINDOW_S: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration field `{path}`: {message}")]
    Field { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkloadSource {
    /// Synthetic rise-and-decay trend with seeded noise.
    Trend { base: u32, peak: u32, instances: usize },
    /// `index,request_count` CSV.
    File { path: PathBuf },
}

impl WorkloadSource {
    pub fn moderate() -> Self {
        WorkloadSource::Trend {
            base: 50,
            peak: 300,
            instances: 50,
        }
    }

    pub fn stress() -> Self {
        WorkloadSource::Trend {
            base: 100,
            peak: 700,
            instances: 50,
        }
    }
}

impl Default for WorkloadSource {
    fn default() -> Self {
        Self::stress()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineParams {
    /// Zero disables adaptation altogether.
    pub max_cycles_per_instance: u32,
    /// Goal-aware control acts once a metric is within this fraction of its objective.
    pub proactive_margin: f64,
    /// Instances between strategy re-syntheses of the meta controller.
    pub resynthesis_interval: u32,
    pub arrival_window_s: f64,
    pub instance_duration_s: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            max_cycles_per_instance: 3,
            proactive_margin: 0.1,
            resynthesis_interval: 10,
            arrival_window_s: DEFAULT_ARRIVAL_WINDOW_S,
            instance_duration_s: DEFAULT_INSTANCE_DURATION_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub controller: ControllerKind,
    pub seed: u64,
    pub service_type: u8,
    pub max_parallel_requests: u32,
    pub workload: WorkloadSource,
    pub initial: ArchitectureConfig,
    pub goals: GoalSet,
    pub tactics: TacticSettings,
    pub engine: EngineParams,
    pub qlearning: QParams,
    pub game: GameParams,
    pub solver: SolveOptions,
    pub output_dir: PathBuf,
    /// Truncates a file workload to this many instances.
    pub instance_limit: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut initial = initial_deployment();
        initial.vm_capacity = VmCapacity::PerCore(CALIBRATED_CORE_MIPS);
        let mut game = GameParams::default();
        game.pm_step = 2;
        game.vm_step = 5;
        Self {
            controller: ControllerKind::SelfAdaptiveBaseline,
            seed: 0,
            service_type: 1,
            max_parallel_requests: DEFAULT_MAX_PARALLEL_REQUESTS,
            workload: WorkloadSource::default(),
            initial,
            goals: GoalSet::default(),
            tactics: TacticSettings::default(),
            engine: EngineParams::default(),
            qlearning: QParams::default(),
            game,
            solver: SolveOptions::default(),
            output_dir: PathBuf::from("out"),
            instance_limit: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let c: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Field {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Keeps only the first `n` instances of the workload.
    pub fn limit_instances(&mut self, n: usize) {
        match &mut self.workload {
            WorkloadSource::Trend { instances, .. } => *instances = n,
            WorkloadSource::File { .. } => self.instance_limit = Some(n),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn service(&self) -> Result<ServiceType, ConfigError> {
        ServiceType::from_id(self.service_type).map_err(invalid)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.service()?;
        self.initial.validate().map_err(invalid)?;
        if !self.initial.vms_fit() {
            return Err(invalid("initial VMs do not fit the initial hosts"));
        }
        self.goals.validate().map_err(invalid)?;
        self.tactics.validate().map_err(invalid)?;
        self.qlearning.validate().map_err(invalid)?;
        let e = &self.engine;
        if !(0.0..1.0).contains(&e.proactive_margin) {
            return Err(invalid("proactive_margin must be in [0, 1)"));
        }
        if e.resynthesis_interval == 0 {
            return Err(invalid("resynthesis_interval must be >= 1"));
        }
        if !(e.arrival_window_s > 0.0 && e.arrival_window_s.is_finite()) {
            return Err(invalid("arrival_window_s must be > 0"));
        }
        if !(e.instance_duration_s > 0.0 && e.instance_duration_s.is_finite()) {
            return Err(invalid("instance_duration_s must be > 0"));
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(invalid("solver tolerance and max_iterations must be positive"));
        }
        if let WorkloadSource::Trend { base, peak, instances } = self.workload {
            if base > peak || peak > self.max_parallel_requests || instances == 0 {
                return Err(invalid(format!(
                    "trend needs base <= peak <= {} and instances >= 1",
                    self.max_parallel_requests
                )));
            }
        }
        Ok(())
    }

    /// The workload trace this configuration describes, noise seeded by `seed`.
    pub fn trace(&self) -> Result<WorkloadTrace, crate::workload::WorkloadError> {
        let service = ServiceType::from_id(self.service_type)?;
        let mut trace = match &self.workload {
            WorkloadSource::Trend { base, peak, instances } => {
                workload::synthesize_trend(*base, *peak, *instances, self.seed)?
            }
            WorkloadSource::File { path } => {
                let f = std::fs::File::open(path)?;
                workload::load_trace(f, self.service_type, self.max_parallel_requests)?
            }
        };
        if let Some(n) = self.instance_limit {
            let counts = trace.counts();
            trace = WorkloadTrace::from_counts(&counts[..n.min(counts.len())], service, self.max_parallel_requests);
        }
        trace = trace.with_service_type(service);
        trace.instance_duration_s = self.engine.instance_duration_s;
        Ok(trace)
    }
}
