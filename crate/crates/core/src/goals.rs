//! Runtime goals: weighted stability goals, per-instance processing and the
//! append-only goal history of change tuples.
//!
//! Each time instance a goal is processed once: the monitored value is compared
//! with the client's objective, on violation a tactic is selected from the goal's
//! tactic set and executed, and the resulting satisfaction is recorded as a change
//! tuple. The history is then available for tactic scoring in later instances.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Attribute, Reading};
use crate::datacenter::ArchitectureConfig;
use crate::tactics::{self, Tactic, TacticKind, TacticSettings, Variation};

pub const DEFAULT_CLIENT: &str = "shared";
pub const DEFAULT_NODE: &str = "node-1";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GoalError {
    #[error("change tuple for t={got} does not follow last recorded t={last}")]
    Ordering { last: u64, got: u64 },
    #[error("tactic selection needs at least one candidate")]
    EmptyCandidates,
    #[error("goal `{0}` has no objective functions")]
    NoObjective(String),
    #[error("goal weights sum to {0}, above 1")]
    Weights(f64),
    #[error("goal `{goal}`: weight {weight} outside [0, 1]")]
    Weight { goal: String, weight: f64 },
    #[error("goal `{goal}` has no objective for client `{client}`")]
    UnknownClient { goal: String, client: String },
}

/// A stability goal of one node. All goals here minimize their metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeGoal {
    pub id: String,
    #[serde(default)]
    pub definition: String,
    #[serde(default = "default_node")]
    pub node_id: String,
    pub attribute: Attribute,
    pub weight: f64,
    /// Objective threshold per client SLA.
    pub objective_fns: BTreeMap<String, f64>,
    #[serde(default)]
    pub tactic_ids: BTreeSet<TacticKind>,
}

fn default_node() -> String {
    DEFAULT_NODE.to_string()
}

impl RuntimeGoal {
    /// A goal for `attribute` with one shared-client objective and the tactics the
    /// adaptation rules relate to it.
    pub fn new(attribute: Attribute, weight: f64, objective: f64) -> Self {
        Self {
            id: attribute.as_str().to_string(),
            definition: format!("keep {attribute} within {objective} {}", attribute.unit()),
            node_id: default_node(),
            attribute,
            weight,
            objective_fns: BTreeMap::from([(DEFAULT_CLIENT.to_string(), objective)]),
            tactic_ids: tactics::ordered_tactics(attribute).into_iter().collect(),
        }
    }

    pub fn metric(&self) -> &'static str {
        self.attribute.unit()
    }

    pub fn objective_for(&self, client: &str) -> Result<f64, GoalError> {
        self.objective_fns
            .get(client)
            .copied()
            .ok_or_else(|| GoalError::UnknownClient {
                goal: self.id.clone(),
                client: client.to_string(),
            })
    }

    /// Objective of the shared client, or the strictest objective if there is none.
    pub fn objective(&self) -> f64 {
        self.objective_fns
            .get(DEFAULT_CLIENT)
            .copied()
            .unwrap_or_else(|| {
                self.objective_fns
                    .values()
                    .copied()
                    .fold(f64::INFINITY, f64::min)
            })
    }

    /// Candidate tactics for this goal in rule-priority order.
    pub fn ordered_tactics(&self) -> Vec<TacticKind> {
        tactics::ordered_tactics(self.attribute)
            .into_iter()
            .filter(|t| self.tactic_ids.contains(t))
            .collect()
    }
}

/// Degree of satisfaction in `[0, 1]` of a minimize-goal: 1 within the objective,
/// `objective / measured` beyond it, 0 when saturated.
pub fn satisfaction(goal: &RuntimeGoal, measured: Reading) -> f64 {
    satisfaction_against(goal.objective(), measured)
}

pub fn satisfaction_against(objective: f64, measured: Reading) -> f64 {
    match measured {
        Reading::Saturated => 0.0,
        Reading::Finite(v) if v <= objective => 1.0,
        Reading::Finite(v) => (objective / v).clamp(0.0, 1.0),
    }
}

/// The goals of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub goals: Vec<RuntimeGoal>,
}

impl Default for GoalSet {
    /// Response time 0.5 / 25 ms, greenability 0.2 / 25 kWh, cost 0.2 / $50.
    fn default() -> Self {
        Self {
            goals: vec![
                RuntimeGoal::new(Attribute::ResponseTime, 0.5, 25.0),
                RuntimeGoal::new(Attribute::Energy, 0.2, 25.0),
                RuntimeGoal::new(Attribute::Cost, 0.2, 50.0),
            ],
        }
    }
}

impl GoalSet {
    pub fn validate(&self) -> Result<(), GoalError> {
        let mut sum = 0.0;
        for g in &self.goals {
            if g.objective_fns.is_empty() {
                return Err(GoalError::NoObjective(g.id.clone()));
            }
            if !(0.0..=1.0).contains(&g.weight) {
                return Err(GoalError::Weight {
                    goal: g.id.clone(),
                    weight: g.weight,
                });
            }
            sum += g.weight;
        }
        if sum > 1.0 + 1e-12 {
            return Err(GoalError::Weights(sum));
        }
        Ok(())
    }

    pub fn get(&self, attribute: Attribute) -> Option<&RuntimeGoal> {
        self.goals.iter().find(|g| g.attribute == attribute)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RuntimeGoal> {
        self.goals.iter()
    }

    pub fn total_weight(&self) -> f64 {
        self.goals.iter().map(|g| g.weight).sum()
    }
}

/// Goal of another node observed through interaction; recorded, never exchanged.
pub type EnvGoal = (String, String);

/// One goal evaluated at one time instance for one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeGoalInstance {
    pub goal_id: String,
    pub node_id: String,
    pub t_i: u64,
    pub client: String,
    pub objective: f64,
    pub tactic_executed: Option<Tactic>,
    /// Present once the instance has been evaluated.
    pub actual_value: Option<Reading>,
    pub env_goals: Vec<EnvGoal>,
    pub env_tactics: Vec<TacticKind>,
}

impl RuntimeGoalInstance {
    pub fn new(goal: &RuntimeGoal, t_i: u64) -> Self {
        Self {
            goal_id: goal.id.clone(),
            node_id: goal.node_id.clone(),
            t_i,
            client: DEFAULT_CLIENT.to_string(),
            objective: goal.objective(),
            tactic_executed: None,
            actual_value: None,
            env_goals: Vec::new(),
            env_tactics: Vec::new(),
        }
    }

    pub fn is_evaluated(&self) -> bool {
        self.actual_value.is_some()
    }
}

/// One executed tactic with the goal metric before and after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub tactic: TacticKind,
    pub variation: Variation,
    pub before: Reading,
    pub after: Reading,
    pub satisfaction_before: f64,
    pub satisfaction_after: f64,
    pub pm_num: u32,
    pub vm_num: u32,
}

impl TraceStep {
    pub fn improvement(&self) -> f64 {
        self.satisfaction_after - self.satisfaction_before
    }
}

pub type ExecutionTrace = Vec<TraceStep>;

/// What one time instance left behind for a goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeTuple {
    pub t_i: u64,
    pub objective: f64,
    pub tactic_executed: Option<Tactic>,
    pub execution_trace: ExecutionTrace,
    pub satisfaction_before: f64,
    pub satisfaction: f64,
    pub env_goals: Vec<EnvGoal>,
    pub env_tactics: Vec<TacticKind>,
}

impl ChangeTuple {
    /// Assembles the tuple for an evaluated goal instance.
    pub fn from_decision(instance: &RuntimeGoalInstance, decision: &GoalDecision) -> Self {
        Self {
            t_i: instance.t_i,
            objective: instance.objective,
            tactic_executed: decision.applied.last().copied(),
            execution_trace: decision.trace.clone(),
            satisfaction_before: decision.satisfaction_before,
            satisfaction: decision.satisfaction,
            env_goals: instance.env_goals.clone(),
            env_tactics: instance.env_tactics.clone(),
        }
    }
}

/// Append-only, strictly time-ordered change tuples of one goal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GoalHistory {
    pub goal_id: String,
    tuples: Vec<ChangeTuple>,
}

impl GoalHistory {
    pub fn new(goal_id: impl Into<String>) -> Self {
        Self {
            goal_id: goal_id.into(),
            tuples: Vec::new(),
        }
    }

    pub fn append(&mut self, tuple: ChangeTuple) -> Result<(), GoalError> {
        if let Some(last) = self.last_t() {
            if tuple.t_i <= last {
                return Err(GoalError::Ordering {
                    last,
                    got: tuple.t_i,
                });
            }
        }
        self.tuples.push(tuple);
        Ok(())
    }

    pub fn last_t(&self) -> Option<u64> {
        self.tuples.last().map(|t| t.t_i)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ChangeTuple> {
        self.tuples.iter()
    }

    pub fn tuples(&self) -> &[ChangeTuple] {
        &self.tuples
    }

    /// Mean satisfaction improvement per tactic over all recorded applications.
    pub fn mean_improvements(&self) -> BTreeMap<TacticKind, f64> {
        let mut acc: BTreeMap<TacticKind, (f64, u32)> = BTreeMap::new();
        for step in self.tuples.iter().flat_map(|t| &t.execution_trace) {
            let e = acc.entry(step.tactic).or_default();
            e.0 += step.improvement();
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(k, (sum, n))| (k, sum / f64::from(n)))
            .collect()
    }

    /// `t_i,objective,tactic,satisfaction`, one row per tuple.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_i,objective,tactic,satisfaction")?;
        for t in &self.tuples {
            let tactic = t.tactic_executed.map_or("none", |x| x.kind.name());
            writeln!(out, "{},{},{},{}", t.t_i, t.objective, tactic, t.satisfaction)?;
        }
        Ok(())
    }
}

/// Picks a tactic from `candidates` (given in priority order). Without history
/// the first candidate wins; with history the candidate with the best mean
/// historical improvement wins, untried tactics scoring zero and ties going to
/// the higher-priority candidate.
pub fn select_tactic(
    candidates: &[TacticKind],
    history: Option<&GoalHistory>,
) -> Result<TacticKind, GoalError> {
    let first = *candidates.first().ok_or(GoalError::EmptyCandidates)?;
    let Some(history) = history else {
        return Ok(first);
    };
    let scores = history.mean_improvements();
    let score = |k: &TacticKind| scores.get(k).copied().unwrap_or(0.0);
    let mut best = first;
    let mut best_score = score(&first);
    for k in &candidates[1..] {
        let s = score(k);
        if s > best_score {
            best = *k;
            best_score = s;
        }
    }
    Ok(best)
}

/// Knobs for one call of [`process_goal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOptions {
    /// Consult the goal history when selecting tactics.
    pub time_aware: bool,
    /// Act once the metric exceeds `objective * (1 - margin)`; zero is purely reactive.
    pub proactive_margin: f64,
    /// Upper bound on tactics executed for this goal in one instance.
    pub max_tactics: usize,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        Self {
            time_aware: false,
            proactive_margin: 0.0,
            max_tactics: 1,
        }
    }
}

/// Result of processing one goal instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalDecision {
    pub violated: bool,
    /// The metric crossed the (possibly proactive) trigger threshold.
    pub triggered: bool,
    /// Applicable, effective candidates at the first selection, in priority order.
    pub candidates: Vec<TacticKind>,
    pub selected: Option<TacticKind>,
    pub applied: Vec<Tactic>,
    pub trace: ExecutionTrace,
    pub config: ArchitectureConfig,
    pub reading_after: Reading,
    pub satisfaction_before: f64,
    pub satisfaction: f64,
    /// Triggered but no applicable tactic remained.
    pub exhausted: bool,
}

/// Candidates for `goal` that are applicable and would change `config`.
pub fn effective_candidates(
    goal: &RuntimeGoal,
    config: &ArchitectureConfig,
    settings: &TacticSettings,
) -> Vec<TacticKind> {
    goal.ordered_tactics()
        .into_iter()
        .filter(|k| {
            let t = settings.tactic(*k);
            tactics::applicable(&t, config) && !tactics::is_noop(&t, config)
        })
        .collect()
}

/// Processes one runtime goal instance: detect violation, pick and execute
/// tactics, re-evaluate through `evaluate` and report the satisfaction reached.
pub fn process_goal<F>(
    goal: &RuntimeGoal,
    monitored: Reading,
    config: &ArchitectureConfig,
    settings: &TacticSettings,
    history: Option<&GoalHistory>,
    options: &ProcessOptions,
    mut evaluate: F,
) -> GoalDecision
where
    F: FnMut(&ArchitectureConfig) -> Reading,
{
    let objective = goal.objective();
    let threshold = objective * (1.0 - options.proactive_margin);
    let satisfaction_before = satisfaction_against(objective, monitored);
    let mut decision = GoalDecision {
        violated: monitored.exceeds(objective),
        triggered: monitored.exceeds(threshold),
        candidates: Vec::new(),
        selected: None,
        applied: Vec::new(),
        trace: Vec::new(),
        config: config.clone(),
        reading_after: monitored,
        satisfaction_before,
        satisfaction: satisfaction_before,
        exhausted: false,
    };
    if !decision.triggered {
        return decision;
    }
    let history = if options.time_aware { history } else { None };
    let mut current = monitored;
    while decision.applied.len() < options.max_tactics && current.exceeds(threshold) {
        let candidates = effective_candidates(goal, &decision.config, settings);
        if decision.applied.is_empty() {
            decision.candidates = candidates.clone();
        }
        let Ok(kind) = select_tactic(&candidates, history) else {
            decision.exhausted = true;
            log::debug!("goal {}: tactics exhausted at {}", goal.id, decision.config);
            break;
        };
        decision.selected.get_or_insert(kind);
        let tactic = settings.tactic(kind);
        let next = tactics::apply(&tactic, &decision.config)
            .expect("effective candidates are applicable");
        let after = evaluate(&next);
        decision.trace.push(TraceStep {
            tactic: kind,
            variation: tactic.variation,
            before: current,
            after,
            satisfaction_before: satisfaction_against(objective, current),
            satisfaction_after: satisfaction_against(objective, after),
            pm_num: next.pm_num,
            vm_num: next.total_vms(),
        });
        decision.applied.push(tactic);
        decision.config = next;
        current = after;
    }
    decision.reading_after = current;
    decision.satisfaction = satisfaction_against(objective, current);
    decision
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datacenter::{initial_deployment, ConcurrencyMode, SchedulingPolicy};
    use proptest::prelude::*;

    fn rt_goal() -> RuntimeGoal {
        RuntimeGoal::new(Attribute::ResponseTime, 0.5, 25.0)
    }

    fn tuple(t_i: u64) -> ChangeTuple {
        ChangeTuple {
            t_i,
            objective: 25.0,
            tactic_executed: None,
            execution_trace: Vec::new(),
            satisfaction_before: 1.0,
            satisfaction: 1.0,
            env_goals: Vec::new(),
            env_tactics: Vec::new(),
        }
    }

    fn step(tactic: TacticKind, before: f64, after: f64) -> TraceStep {
        TraceStep {
            tactic,
            variation: Variation::Step(1),
            before: Reading::Finite(0.0),
            after: Reading::Finite(0.0),
            satisfaction_before: before,
            satisfaction_after: after,
            pm_num: 1,
            vm_num: 1,
        }
    }

    #[test]
    fn default_goal_weights_and_objectives() {
        let g = GoalSet::default();
        g.validate().unwrap();
        let w: Vec<f64> = g.iter().map(|x| x.weight).collect();
        let o: Vec<f64> = g.iter().map(|x| x.objective()).collect();
        assert_eq!(w, vec![0.5, 0.2, 0.2]);
        assert_eq!(o, vec![25.0, 25.0, 50.0]);
        assert!((g.total_weight() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn goal_set_validation() {
        let mut g = GoalSet::default();
        g.goals[0].weight = 0.7;
        assert!(matches!(g.validate(), Err(GoalError::Weights(_))));
        let mut g = GoalSet::default();
        g.goals[1].objective_fns.clear();
        assert!(matches!(g.validate(), Err(GoalError::NoObjective(_))));
    }

    #[test]
    fn objective_per_client() {
        let mut g = rt_goal();
        g.objective_fns.insert("dedicated".into(), 15.0);
        assert_eq!(g.objective_for("dedicated").unwrap(), 15.0);
        assert_eq!(g.objective(), 25.0);
        assert!(g.objective_for("nobody").is_err());
    }

    #[test]
    fn satisfaction_rules() {
        let g = rt_goal();
        assert_eq!(satisfaction(&g, Reading::Finite(25.0)), 1.0);
        assert_eq!(satisfaction(&g, Reading::Finite(50.0)), 0.5);
        assert_eq!(satisfaction(&g, Reading::Saturated), 0.0);
        assert_eq!(satisfaction(&g, Reading::Finite(0.0)), 1.0);
    }

    #[test]
    fn history_append_and_order() {
        let mut h = GoalHistory::new("response_time");
        h.append(tuple(0)).unwrap();
        assert_eq!(h.len(), 1);
        h.append(tuple(1)).unwrap();
        h.append(tuple(2)).unwrap();
        let ts: Vec<u64> = h.iter().map(|t| t.t_i).collect();
        assert_eq!(ts, vec![0, 1, 2]);
        assert_eq!(
            h.append(tuple(1)),
            Err(GoalError::Ordering { last: 2, got: 1 })
        );
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn select_without_history_takes_priority() {
        let c = [TacticKind::DynamicScheduling, TacticKind::Concurrency];
        assert_eq!(select_tactic(&c, None).unwrap(), TacticKind::DynamicScheduling);
        assert_eq!(select_tactic(&[], None), Err(GoalError::EmptyCandidates));
    }

    #[test]
    fn select_with_history_takes_best_mean_improvement() {
        let mut h = GoalHistory::new("rt");
        let mut t0 = tuple(0);
        t0.execution_trace = vec![
            step(TacticKind::VerticalScaling, 0.5, 0.6),
            step(TacticKind::HorizontalScaling, 0.2, 0.6),
        ];
        h.append(t0).unwrap();
        let c = [TacticKind::VerticalScaling, TacticKind::HorizontalScaling];
        assert_eq!(
            select_tactic(&c, Some(&h)).unwrap(),
            TacticKind::HorizontalScaling
        );
    }

    #[test]
    fn select_ties_go_to_priority() {
        let mut h = GoalHistory::new("rt");
        let mut t0 = tuple(0);
        t0.execution_trace = vec![
            step(TacticKind::VerticalScaling, 0.5, 0.7),
            step(TacticKind::HorizontalScaling, 0.5, 0.7),
        ];
        h.append(t0).unwrap();
        let c = [TacticKind::VerticalScaling, TacticKind::HorizontalScaling];
        assert_eq!(
            select_tactic(&c, Some(&h)).unwrap(),
            TacticKind::VerticalScaling
        );
    }

    fn eval_fixed(value: f64) -> impl FnMut(&ArchitectureConfig) -> Reading {
        move |_| Reading::Finite(value)
    }

    #[test]
    fn process_within_objective_does_nothing() {
        let d = process_goal(
            &rt_goal(),
            Reading::Finite(20.0),
            &initial_deployment(),
            &TacticSettings::default(),
            None,
            &ProcessOptions::default(),
            eval_fixed(20.0),
        );
        assert!(!d.violated);
        assert!(d.selected.is_none());
        assert!(d.applied.is_empty());
        assert_eq!(d.satisfaction, 1.0);
    }

    #[test]
    fn process_violation_starts_with_scheduling() {
        let d = process_goal(
            &rt_goal(),
            Reading::Finite(40.0),
            &initial_deployment(),
            &TacticSettings::default(),
            None,
            &ProcessOptions::default(),
            eval_fixed(30.0),
        );
        assert!(d.violated);
        assert_eq!(d.candidates[0], TacticKind::DynamicScheduling);
        assert_eq!(d.selected, Some(TacticKind::DynamicScheduling));
        assert_eq!(d.config.scheduling, SchedulingPolicy::Edf);
        assert_eq!(d.trace.len(), 1);
        assert!((d.satisfaction - 25.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn process_exhausts_at_capacity() {
        let mut c = initial_deployment();
        c.pm_num = 1000;
        c.max_pm_num = 1000;
        c.vm_counts = [6000, 0, 0]; // 12000 cores, no headroom
        c.scheduling = SchedulingPolicy::Edf;
        c.concurrency = ConcurrencyMode::MultiThread;
        c.validate().unwrap();
        let d = process_goal(
            &rt_goal(),
            Reading::Finite(40.0),
            &c,
            &TacticSettings::default(),
            None,
            &ProcessOptions::default(),
            eval_fixed(40.0),
        );
        assert!(d.violated && d.exhausted);
        assert!(d.applied.is_empty());
        assert!(d.candidates.is_empty());
    }

    #[test]
    fn proactive_margin_triggers_before_violation() {
        let opts = ProcessOptions {
            proactive_margin: 0.1,
            max_tactics: 3,
            ..ProcessOptions::default()
        };
        let d = process_goal(
            &rt_goal(),
            Reading::Finite(23.0),
            &initial_deployment(),
            &TacticSettings::default(),
            None,
            &opts,
            eval_fixed(21.0),
        );
        assert!(!d.violated && d.triggered);
        assert_eq!(d.applied.len(), 1);
    }

    #[test]
    fn process_stops_at_max_tactics() {
        let opts = ProcessOptions {
            max_tactics: 3,
            ..ProcessOptions::default()
        };
        let d = process_goal(
            &rt_goal(),
            Reading::Saturated,
            &initial_deployment(),
            &TacticSettings::default(),
            None,
            &opts,
            |_| Reading::Saturated,
        );
        let kinds: Vec<_> = d.applied.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TacticKind::DynamicScheduling,
                TacticKind::Concurrency,
                TacticKind::VerticalScaling
            ]
        );
        assert_eq!(d.satisfaction, 0.0);
    }

    #[test]
    fn history_csv() {
        let mut h = GoalHistory::new("rt");
        h.append(tuple(0)).unwrap();
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t_i,objective,tactic,satisfaction\n0,25,none,1\n"
        );
    }

    proptest! {
        #[test]
        fn satisfaction_bounded_and_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, obj in 0.1f64..1e3) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s_lo = satisfaction_against(obj, Reading::Finite(lo));
            let s_hi = satisfaction_against(obj, Reading::Finite(hi));
            prop_assert!((0.0..=1.0).contains(&s_lo));
            prop_assert!((0.0..=1.0).contains(&s_hi));
            prop_assert!(s_hi <= s_lo);
            prop_assert!(satisfaction_against(obj, Reading::Saturated) <= s_hi);
        }
    }
}
