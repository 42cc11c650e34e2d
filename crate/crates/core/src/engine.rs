//! Time-instance loop hosting the four controllers, plus run metrics and exports.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Attribute, Measurements, Reading};
use crate::config::ExperimentConfig;
use crate::datacenter::{self, ArchitectureConfig, DatacenterError, VmCapacity};
use crate::goals::{
    self, satisfaction, ChangeTuple, GoalError, GoalHistory, ProcessOptions, RuntimeGoalInstance,
    TraceStep,
};
use crate::qlearning::{reward, ActionConfig, QError, QLearner, QMatrix};
use crate::smg::{self, DatacenterGame, GameBounds, QosModel, SmgError, Solution};
use crate::tactics::{self, Tactic, TacticKind};
use crate::workload::{ServiceType, WorkloadTrace};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Datacenter(#[from] DatacenterError),
    #[error(transparent)]
    Goal(#[from] GoalError),
    #[error(transparent)]
    QLearning(#[from] QError),
    #[error(transparent)]
    Game(#[from] SmgError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("record {0} has no goal violation")]
    NotAViolation(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    SelfAdaptiveBaseline,
    GoalAware,
    TimeAware,
    MetaSelfAware,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::SelfAdaptiveBaseline,
        ControllerKind::GoalAware,
        ControllerKind::TimeAware,
        ControllerKind::MetaSelfAware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::SelfAdaptiveBaseline => "self_adaptive_baseline",
            ControllerKind::GoalAware => "goal_aware",
            ControllerKind::TimeAware => "time_aware",
            ControllerKind::MetaSelfAware => "meta_self_aware",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "self_adaptive_baseline" | "baseline" => Ok(ControllerKind::SelfAdaptiveBaseline),
            "goal_aware" => Ok(ControllerKind::GoalAware),
            "time_aware" => Ok(ControllerKind::TimeAware),
            "meta_self_aware" => Ok(ControllerKind::MetaSelfAware),
            other => Err(EngineError::Config(format!("unknown controller `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub t_i: u64,
    pub request_count: u32,
    pub response_time_ms: Reading,
    pub energy_kwh: f64,
    pub cost_usd: f64,
    pub adaptation_cycles: u32,
    pub overhead_s: f64,
    pub pm_num: u32,
    pub vm_num: u32,
    /// Hosts beyond the minimum whose capacity covers the demand.
    pub overshoot: u32,
    /// Some goal was violated when the instance was monitored.
    pub violated: bool,
    /// Some goal is still violated after this instance's adaptation.
    pub settling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t_i: u64,
    pub tactic: Option<TacticKind>,
    pub variation: String,
    pub outcome: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub instances: usize,
    /// Mean over instances with a finite response time.
    pub mean_response_time_ms: f64,
    pub saturated_instances: usize,
    pub violations: usize,
    pub total_energy_kwh: f64,
    pub total_cost_usd: f64,
    pub total_adaptation_cycles: u64,
    pub total_overhead_s: f64,
    pub peak_overshoot: u32,
}

impl Totals {
    /// Fold over the records in order.
    pub fn from_records(records: &[InstanceRecord]) -> Self {
        let mut t = Totals {
            instances: records.len(),
            ..Totals::default()
        };
        let mut rt_sum = 0.0;
        let mut rt_n = 0usize;
        for r in records {
            match r.response_time_ms {
                Reading::Finite(v) => {
                    rt_sum += v;
                    rt_n += 1;
                }
                Reading::Saturated => t.saturated_instances += 1,
            }
            t.violations += usize::from(r.settling);
            t.total_energy_kwh += r.energy_kwh;
            t.total_cost_usd += r.cost_usd;
            t.total_adaptation_cycles += u64::from(r.adaptation_cycles);
            t.total_overhead_s += r.overhead_s;
            t.peak_overshoot = t.peak_overshoot.max(r.overshoot);
        }
        if rt_n > 0 {
            t.mean_response_time_ms = rt_sum / rt_n as f64;
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub controller: ControllerKind,
    pub seed: u64,
    pub records: Vec<InstanceRecord>,
    pub totals: Totals,
    pub log: Vec<LogEntry>,
    pub histories: Vec<GoalHistory>,
    pub strategy_misses: u64,
    pub syntheses: u32,
    pub qmatrix: Option<QMatrix>,
}

pub const RECORD_COLUMNS: [&str; 12] = [
    "t_i",
    "request_count",
    "response_time_ms",
    "energy_kwh",
    "cost_usd",
    "adaptation_cycles",
    "overhead_s",
    "pm_num",
    "vm_num",
    "overshoot",
    "violated",
    "settling",
];

pub const LOG_COLUMNS: [&str; 4] = ["t_i", "tactic", "variation", "outcome"];

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

impl SimulationResult {
    pub fn write_records_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut w = csv_writer(out);
        w.write_record(RECORD_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.t_i.to_string(),
                r.request_count.to_string(),
                r.response_time_ms.to_string(),
                r.energy_kwh.to_string(),
                r.cost_usd.to_string(),
                r.adaptation_cycles.to_string(),
                r.overhead_s.to_string(),
                r.pm_num.to_string(),
                r.vm_num.to_string(),
                r.overshoot.to_string(),
                r.violated.to_string(),
                r.settling.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut w = csv_writer(out);
        w.write_record(LOG_COLUMNS)?;
        for e in &self.log {
            w.write_record([
                e.t_i.to_string(),
                e.tactic.map_or("none", TacticKind::name).to_string(),
                e.variation.clone(),
                e.outcome.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON object with the controller, seed, totals and meta-controller counters.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "controller": self.controller.as_str(),
            "seed": self.seed,
            "totals": self.totals,
            "strategy_misses": self.strategy_misses,
            "syntheses": self.syntheses,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Settling {
    Instances(usize),
    /// Never satisfied again before the trace ended.
    EndOfTrace,
}

/// Instances from the violation at `violation_index` until all goals hold again.
pub fn settling_time(records: &[InstanceRecord], violation_index: usize) -> Result<Settling, EngineError> {
    let r = records
        .get(violation_index)
        .ok_or(EngineError::NotAViolation(violation_index))?;
    if !r.violated && !r.settling {
        return Err(EngineError::NotAViolation(violation_index));
    }
    Ok(records[violation_index..]
        .iter()
        .position(|r| !r.settling)
        .map_or(Settling::EndOfTrace, Settling::Instances))
}

/// Fewest hosts whose raw VM capacity covers `lambda_total` requests per second.
pub fn min_hosts_for_demand(config: &ArchitectureConfig, lambda_total: f64, service: &ServiceType) -> u32 {
    let per_core = match config.vm_capacity {
        VmCapacity::PerCore(m) => m,
        VmCapacity::PerVm(m) => m / 2.0,
    };
    let host = f64::from(config.pm.cores) * per_core * config.service_rate_factor();
    let need = (lambda_total * service.required_mips / host).ceil();
    if need.is_finite() {
        (need as u32).max(1)
    } else {
        config.max_pm_num
    }
}

pub fn overshoot(config: &ArchitectureConfig, lambda_total: f64, service: &ServiceType) -> u32 {
    config
        .pm_num
        .saturating_sub(min_hosts_for_demand(config, lambda_total, service))
}

enum ControllerState {
    Baseline,
    GoalAware,
    TimeAware {
        learner: Box<QLearner>,
        adapted: bool,
    },
    Meta {
        plan: Option<(DatacenterGame, Solution)>,
        synthesized_at: Option<u64>,
        misses: u64,
        syntheses: u32,
    },
}

/// One run of one controller, advanced an instance at a time.
pub struct Simulation<'a> {
    cfg: &'a ExperimentConfig,
    controller: ControllerKind,
    seed: u64,
    service: ServiceType,
    config: ArchitectureConfig,
    state: ControllerState,
    histories: Vec<GoalHistory>,
    records: Vec<InstanceRecord>,
    log: Vec<LogEntry>,
}

/// One applied tactic and the configuration it produced.
struct Applied {
    tactic: Tactic,
    after: ArchitectureConfig,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ExperimentConfig, controller: ControllerKind, seed: u64) -> Result<Self, EngineError> {
        cfg.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        let service = cfg.service().map_err(|e| EngineError::Config(e.to_string()))?;
        let state = match controller {
            ControllerKind::SelfAdaptiveBaseline => ControllerState::Baseline,
            ControllerKind::GoalAware => ControllerState::GoalAware,
            ControllerKind::TimeAware => ControllerState::TimeAware {
                learner: Box::new(QLearner::new(
                    cfg.qlearning.clone(),
                    &cfg.initial,
                    seed ^ 0x5eed_0f_7153,
                )?),
                adapted: false,
            },
            ControllerKind::MetaSelfAware => ControllerState::Meta {
                plan: None,
                synthesized_at: None,
                misses: 0,
                syntheses: 0,
            },
        };
        Ok(Self {
            cfg,
            controller,
            seed,
            service,
            config: cfg.initial.clone(),
            state,
            histories: cfg.goals.iter().map(|g| GoalHistory::new(g.id.clone())).collect(),
            records: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn histories(&self) -> &[GoalHistory] {
        &self.histories
    }

    fn lambda(&self, requests: u32) -> f64 {
        f64::from(requests) / self.cfg.engine.arrival_window_s
    }

    fn measure(&self, config: &ArchitectureConfig, lambda: f64) -> Result<Measurements, EngineError> {
        Ok(datacenter::measure(
            config,
            lambda,
            &self.service,
            self.cfg.engine.instance_duration_s,
        )?)
    }

    fn goals_met(&self, m: &Measurements) -> bool {
        self.cfg
            .goals
            .iter()
            .all(|g| !m.get(g.attribute).exceeds(g.objective()))
    }

    fn first_violated(&self, m: &Measurements) -> Option<Attribute> {
        self.cfg
            .goals
            .iter()
            .find(|g| m.get(g.attribute).exceeds(g.objective()))
            .map(|g| g.attribute)
    }

    fn note(&mut self, t_i: u64, tactic: Option<&Tactic>, outcome: &str) {
        self.log.push(LogEntry {
            t_i,
            tactic: tactic.map(|t| t.kind),
            variation: tactic.map_or(String::new(), |t| t.variation.to_string()),
            outcome: outcome.to_string(),
        });
    }

    /// Applies `tactic` to the live configuration if its guard allows.
    fn execute(&mut self, t_i: u64, tactic: Tactic, applied: &mut Vec<Applied>, outcome: &str) -> bool {
        match tactics::apply(&tactic, &self.config) {
            Ok(next) => {
                self.config = next.clone();
                applied.push(Applied { tactic, after: next });
                self.note(t_i, Some(&tactic), outcome);
                true
            }
            Err(e) => {
                log::debug!("t={t_i}: {e}");
                self.note(t_i, Some(&tactic), "rejected");
                false
            }
        }
    }

    /// Advances one time instance with `requests` arrivals.
    pub fn step(&mut self, t_i: u64, requests: u32) -> Result<InstanceRecord, EngineError> {
        let lambda = self.lambda(requests);
        let before_config = self.config.clone();
        let monitored = self.measure(&self.config, lambda)?;
        let budget = self.cfg.engine.max_cycles_per_instance as usize;
        let mut applied: Vec<Applied> = Vec::new();

        match self.controller {
            _ if budget == 0 => {}
            ControllerKind::SelfAdaptiveBaseline => self.decide_baseline(t_i, lambda, &monitored, &mut applied)?,
            ControllerKind::GoalAware => self.decide_goal_aware(t_i, lambda, budget, &mut applied)?,
            ControllerKind::TimeAware => self.decide_time_aware(t_i, &monitored, budget, &mut applied)?,
            ControllerKind::MetaSelfAware => self.decide_meta(t_i, lambda, &monitored, budget, &mut applied)?,
        }
        debug_assert!(applied.len() <= budget);
        debug_assert!(self.config.validate().is_ok() && self.config.vms_fit());

        let after = self.measure(&self.config, lambda)?;
        self.record_histories(t_i, lambda, &before_config, &monitored, &after, &applied)?;

        let record = InstanceRecord {
            t_i,
            request_count: requests,
            response_time_ms: after.response_time_ms,
            energy_kwh: after.energy_kwh,
            cost_usd: after.cost_usd,
            adaptation_cycles: applied.len() as u32,
            overhead_s: applied.iter().fold(0.0, |acc, a| acc + a.tactic.overhead_s),
            pm_num: self.config.pm_num,
            vm_num: self.config.total_vms(),
            overshoot: overshoot(&self.config, lambda, &self.service),
            violated: !self.goals_met(&monitored),
            settling: !self.goals_met(&after),
        };
        self.records.push(record.clone());
        Ok(record)
    }

    fn decide_baseline(
        &mut self,
        t_i: u64,
        lambda: f64,
        monitored: &Measurements,
        applied: &mut Vec<Applied>,
    ) -> Result<(), EngineError> {
        let Some(attr) = self.first_violated(monitored) else {
            return Ok(());
        };
        let goal = self.cfg.goals.get(attr).expect("violated goal exists").clone();
        let decision = goals::process_goal(
            &goal,
            monitored.get(attr),
            &self.config,
            &self.cfg.tactics,
            None,
            &ProcessOptions::default(),
            |c| self.reading(c, lambda, attr),
        );
        if decision.exhausted {
            self.note(t_i, None, "exhausted");
        }
        for t in decision.applied {
            self.execute(t_i, t, applied, "applied");
        }
        Ok(())
    }

    fn reading(&self, c: &ArchitectureConfig, lambda: f64, attr: Attribute) -> Reading {
        self.measure(c, lambda)
            .map(|m| m.get(attr))
            .unwrap_or(Reading::Saturated)
    }

    fn decide_goal_aware(
        &mut self,
        t_i: u64,
        lambda: f64,
        budget: usize,
        applied: &mut Vec<Applied>,
    ) -> Result<(), EngineError> {
        let goals = self.cfg.goals.clone();
        for (gi, goal) in goals.iter().enumerate() {
            let left = budget - applied.len();
            if left == 0 {
                break;
            }
            let current = self.measure(&self.config, lambda)?.get(goal.attribute);
            let opts = ProcessOptions {
                time_aware: true,
                proactive_margin: self.cfg.engine.proactive_margin,
                max_tactics: left,
            };
            let decision = goals::process_goal(
                goal,
                current,
                &self.config,
                &self.cfg.tactics,
                Some(&self.histories[gi]),
                &opts,
                |c| self.reading(c, lambda, goal.attribute),
            );
            if decision.exhausted {
                self.note(t_i, None, "exhausted");
            }
            for t in decision.applied {
                self.execute(t_i, t, applied, "applied");
            }
        }
        Ok(())
    }

    /// Scaling tactics moving the live configuration towards `target`, host
    /// increases first and host decreases last so every step keeps VMs placed.
    fn plan_towards(&self, target: ActionConfig) -> Vec<(TacticKind, u32)> {
        let (pm, vm) = (self.config.pm_num, self.config.total_vms());
        let mut plan = Vec::new();
        if target.pm_num > pm {
            plan.push((TacticKind::HorizontalScaling, target.pm_num - pm));
        }
        if target.vm_num > vm {
            plan.push((TacticKind::VerticalScaling, target.vm_num - vm));
        } else if target.vm_num < vm {
            plan.push((TacticKind::VerticalDescaling, vm - target.vm_num));
        }
        if target.pm_num < pm {
            plan.push((TacticKind::HorizontalDescaling, pm - target.pm_num));
        }
        plan
    }

    /// Largest step up to `step` the guard of `kind` accepts on the live configuration.
    fn feasible_step(&self, kind: TacticKind, step: u32) -> Option<Tactic> {
        (1..=step).rev().find_map(|s| {
            let t = self.cfg.tactics.tactic_with_step(kind, s).ok()?;
            tactics::applicable(&t, &self.config).then_some(t)
        })
    }

    fn decide_time_aware(
        &mut self,
        t_i: u64,
        monitored: &Measurements,
        budget: usize,
        applied: &mut Vec<Applied>,
    ) -> Result<(), EngineError> {
        let satisfied = self.goals_met(monitored);
        let ControllerState::TimeAware { learner, adapted } = &mut self.state else {
            unreachable!("time-aware state");
        };
        let r = reward(monitored, &self.cfg.goals, *adapted, learner.params.adaptation_penalty);
        let target = learner.step(monitored, r, satisfied);
        let plan = self.plan_towards(target);
        for (kind, step) in plan.into_iter().take(budget) {
            match self.feasible_step(kind, step) {
                Some(t) => {
                    self.execute(t_i, t, applied, "applied");
                }
                None => self.note(t_i, Some(&self.cfg.tactics.tactic(kind)), "rejected"),
            }
        }
        if let ControllerState::TimeAware { adapted, .. } = &mut self.state {
            *adapted = !applied.is_empty();
        }
        Ok(())
    }

    fn bounds_around(&self, base: &ArchitectureConfig) -> GameBounds {
        let b = self.cfg.game.bounds;
        let widen = |(lo, hi): (u32, u32), x: u32| (lo.min(x).max(1), hi.max(x));
        GameBounds {
            pm: widen(b.pm, base.pm_num),
            vm: widen(b.vm, base.total_vms()),
            vm_cap: widen(b.vm_cap, self.cfg.game.vm_cap_init),
        }
    }

    fn synthesize(&mut self, t_i: u64, lambda: f64) -> Result<(), EngineError> {
        let mut params = self.cfg.game;
        params.bounds = self.bounds_around(&self.config);
        let model = QosModel {
            service: self.service,
            lambda_total: lambda,
            duration_s: self.cfg.engine.instance_duration_s,
            goals: self.cfg.goals.clone(),
        };
        let dg = smg::build_game(&self.config, &params, &model)?;
        let sol = dg.synthesize(&self.cfg.goals, &self.cfg.solver)?;
        log::debug!(
            "t={t_i}: synthesized over {} states in {} iterations",
            dg.game.len(),
            sol.iterations
        );
        if let ControllerState::Meta {
            plan,
            synthesized_at,
            syntheses,
            ..
        } = &mut self.state
        {
            *plan = Some((dg, sol));
            *synthesized_at = Some(t_i);
            *syntheses += 1;
        }
        Ok(())
    }

    fn needs_synthesis(&self, t_i: u64, live_goal: bool) -> bool {
        let ControllerState::Meta {
            plan, synthesized_at, ..
        } = &self.state
        else {
            return false;
        };
        let Some((dg, _)) = plan else { return true };
        let due = synthesized_at.is_none_or(|s| t_i - s >= u64::from(self.cfg.engine.resynthesis_interval));
        let label_changed = dg
            .sys_state_of(&self.config)
            .is_none_or(|s| dg.is_goal(s) != live_goal);
        due || label_changed
    }

    fn decide_meta(
        &mut self,
        t_i: u64,
        lambda: f64,
        monitored: &Measurements,
        budget: usize,
        applied: &mut Vec<Applied>,
    ) -> Result<(), EngineError> {
        let mut current = *monitored;
        if self.goals_met(&current) {
            return Ok(());
        }
        if self.needs_synthesis(t_i, false) {
            self.synthesize(t_i, lambda)?;
        }
        while applied.len() < budget && !self.goals_met(&current) {
            let fallback = self.first_violated(&current);
            let ControllerState::Meta { plan, misses, .. } = &mut self.state else {
                unreachable!("meta state");
            };
            let (dg, sol) = plan.as_ref().expect("synthesized above");
            let advice = smg::strategy_to_tactics(dg, &sol.strategy, &self.config, &self.cfg.tactics, fallback, misses);
            let outcome = match (advice.miss, advice.fallback) {
                (true, _) => "miss",
                (false, true) => "fallback",
                _ => "applied",
            };
            let Some(t) = advice.tactic else {
                if advice.fallback {
                    self.note(t_i, None, "exhausted");
                }
                break;
            };
            if !self.execute(t_i, t, applied, outcome) {
                break;
            }
            current = self.measure(&self.config, lambda)?;
        }
        Ok(())
    }

    /// One change tuple per goal, with every applied tactic traced against that goal.
    fn record_histories(
        &mut self,
        t_i: u64,
        lambda: f64,
        before: &ArchitectureConfig,
        monitored: &Measurements,
        after: &Measurements,
        applied: &[Applied],
    ) -> Result<(), EngineError> {
        let mut readings = Vec::with_capacity(applied.len() + 1);
        readings.push(*monitored);
        for a in applied {
            readings.push(self.measure(&a.after, lambda)?);
        }
        let _ = before;
        for (gi, goal) in self.cfg.goals.iter().enumerate() {
            let mut inst = RuntimeGoalInstance::new(goal, t_i);
            inst.actual_value = Some(after.get(goal.attribute));
            let trace: Vec<TraceStep> = applied
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    let b = readings[k].get(goal.attribute);
                    let e = readings[k + 1].get(goal.attribute);
                    TraceStep {
                        tactic: a.tactic.kind,
                        variation: a.tactic.variation,
                        before: b,
                        after: e,
                        satisfaction_before: satisfaction(goal, b),
                        satisfaction_after: satisfaction(goal, e),
                        pm_num: a.after.pm_num,
                        vm_num: a.after.total_vms(),
                    }
                })
                .collect();
            let tuple = ChangeTuple {
                t_i,
                objective: inst.objective,
                tactic_executed: applied.last().map(|a| a.tactic),
                execution_trace: trace,
                satisfaction_before: satisfaction(goal, monitored.get(goal.attribute)),
                satisfaction: satisfaction(goal, after.get(goal.attribute)),
                env_goals: inst.env_goals,
                env_tactics: inst.env_tactics,
            };
            self.histories[gi].append(tuple)?;
        }
        Ok(())
    }

    pub fn finish(self) -> SimulationResult {
        let (misses, syntheses, qmatrix) = match self.state {
            ControllerState::Meta {
                misses, syntheses, ..
            } => (misses, syntheses, None),
            ControllerState::TimeAware { learner, .. } => (0, 0, Some(learner.matrix)),
            _ => (0, 0, None),
        };
        SimulationResult {
            controller: self.controller,
            seed: self.seed,
            totals: Totals::from_records(&self.records),
            records: self.records,
            log: self.log,
            histories: self.histories,
            strategy_misses: misses,
            syntheses,
            qmatrix,
        }
    }
}

/// Runs `controller` over every instance of `trace`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    controller: ControllerKind,
    trace: &WorkloadTrace,
    seed: u64,
) -> Result<SimulationResult, EngineError> {
    let mut sim = Simulation::new(cfg, controller, seed)?;
    for inst in trace.instances() {
        sim.step(inst.index as u64, inst.requests)?;
    }
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datacenter::{ConcurrencyMode, SchedulingPolicy};
    use crate::workload::WorkloadTrace;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::default()
    }

    fn trace(counts: &[u32]) -> WorkloadTrace {
        WorkloadTrace::from_counts(counts, ServiceType::from_id(1).unwrap(), 700)
    }

    fn record(t: u64, violated: bool, settling: bool) -> InstanceRecord {
        InstanceRecord {
            t_i: t,
            request_count: 0,
            response_time_ms: Reading::Finite(1.0),
            energy_kwh: 0.0,
            cost_usd: 0.0,
            adaptation_cycles: 0,
            overhead_s: 0.0,
            pm_num: 1,
            vm_num: 1,
            overshoot: 0,
            violated,
            settling,
        }
    }

    #[test]
    fn zero_requests_need_no_adaptation() {
        let c = cfg();
        let res = run_experiment(&c, ControllerKind::SelfAdaptiveBaseline, &trace(&[0, 0]), 1).unwrap();
        assert!(res.records.iter().all(|r| r.adaptation_cycles == 0 && !r.violated));
    }

    #[test]
    fn empty_trace_gives_zero_totals() {
        let c = cfg();
        let res = run_experiment(&c, ControllerKind::GoalAware, &WorkloadTrace::empty(ServiceType::from_id(1).unwrap()), 1).unwrap();
        assert!(res.records.is_empty());
        assert_eq!(res.totals, Totals::default());
    }

    #[test]
    fn baseline_starts_with_scheduling() {
        let c = cfg();
        // 1263 req/s is where the initial deployment crosses 25 ms
        let mut sim = Simulation::new(&c, ControllerKind::SelfAdaptiveBaseline, 1).unwrap();
        let rec = sim.step(0, 330).unwrap();
        assert!(rec.violated);
        assert_eq!(rec.adaptation_cycles, 1);
        assert_eq!(sim.log[0].tactic, Some(TacticKind::DynamicScheduling));
        assert_eq!(rec.overhead_s, 1.0);
    }

    #[test]
    fn forced_exhaustion_is_logged() {
        let mut c = cfg();
        c.initial.pm_num = 1;
        c.initial.max_pm_num = 1;
        c.initial.vm_counts = [1, 0, 0];
        c.initial.scheduling = SchedulingPolicy::Edf;
        c.initial.concurrency = ConcurrencyMode::MultiThread;
        c.initial.vm_capacity = VmCapacity::PerCore(1.0);
        c.initial.pm.cores = 2;
        let mut sim = Simulation::new(&c, ControllerKind::SelfAdaptiveBaseline, 1).unwrap();
        let rec = sim.step(0, 10).unwrap();
        assert!(rec.violated);
        assert_eq!(rec.adaptation_cycles, 0);
        assert_eq!(sim.log.last().unwrap().outcome, "exhausted");
    }

    #[test]
    fn horizontal_overhead_is_charged() {
        let c = cfg();
        let mut sim = Simulation::new(&c, ControllerKind::SelfAdaptiveBaseline, 1).unwrap();
        let t = c.tactics.tactic(TacticKind::HorizontalScaling);
        let mut applied = Vec::new();
        assert!(sim.execute(0, t, &mut applied, "applied"));
        assert_eq!(applied.iter().map(|a| a.tactic.overhead_s).sum::<f64>(), 30.0);
    }

    #[test]
    fn time_aware_first_action_is_index_zero() {
        let mut c = cfg();
        c.qlearning.epsilon = 0.0;
        let mut sim = Simulation::new(&c, ControllerKind::TimeAware, 1).unwrap();
        let ControllerState::TimeAware { learner, .. } = &sim.state else { panic!() };
        let first = learner.matrix.actions[0];
        sim.step(0, 100).unwrap();
        assert_eq!(ActionConfig::of(sim.config()), first);
    }

    #[test]
    fn settling_examples() {
        let mut rs: Vec<_> = (0..10).map(|t| record(t, false, false)).collect();
        rs[5] = record(5, true, true);
        rs[6] = record(6, false, true);
        assert_eq!(settling_time(&rs, 5).unwrap(), Settling::Instances(2));
        rs[8] = record(8, true, false);
        assert_eq!(settling_time(&rs, 8).unwrap(), Settling::Instances(0));
        rs[9] = record(9, true, true);
        assert_eq!(settling_time(&rs, 9).unwrap(), Settling::EndOfTrace);
        assert!(matches!(settling_time(&rs, 0), Err(EngineError::NotAViolation(0))));
    }

    #[test]
    fn constant_moderate_load_settles() {
        let c = cfg();
        let lambda = 150.0 / c.engine.arrival_window_s;
        let m = datacenter::measure(&c.initial, lambda, &ServiceType::from_id(1).unwrap(), 864.0).unwrap();
        // 600 req/s keeps the initial deployment within every objective
        assert!(m.response_time_ms.finite().unwrap() < 25.0);
        let res = run_experiment(&c, ControllerKind::SelfAdaptiveBaseline, &trace(&[150; 20]), 3).unwrap();
        assert_eq!(res.totals.total_adaptation_cycles, 0);
    }

    #[test]
    fn overshoot_counts_spare_hosts() {
        let c = cfg();
        let s = ServiceType::from_id(1).unwrap();
        // one host: 12 cores x 500k MIPS = 6e6 MIPS = 600 req/s of 10k MI
        assert_eq!(min_hosts_for_demand(&c.initial, 600.0, &s), 1);
        assert_eq!(min_hosts_for_demand(&c.initial, 601.0, &s), 2);
        assert_eq!(overshoot(&c.initial, 601.0, &s), 8);
    }

    #[test]
    fn controller_names_parse() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
        }
        assert!("nope".parse::<ControllerKind>().is_err());
    }
}
