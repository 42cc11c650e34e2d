//! Tactics catalogue as guarded, bounded transformations of [`ArchitectureConfig`],
//! and the priority-ordered adaptation rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::Attribute;
use crate::datacenter::{ArchitectureConfig, ConcurrencyMode, SchedulingPolicy, VmType};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TacticError {
    #[error("{tactic} not applicable: {bound}")]
    Limit { tactic: TacticKind, bound: String },
    #[error("unknown stability attribute `{0}`")]
    UnknownAttribute(String),
    #[error("unknown tactic `{0}`")]
    UnknownTactic(String),
    #[error("tactic step must be >= 1")]
    ZeroStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TacticKind {
    VerticalScaling = 1,
    VerticalDescaling = 2,
    HorizontalScaling = 3,
    HorizontalDescaling = 4,
    VmConsolidation = 5,
    Concurrency = 6,
    DynamicScheduling = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TacticObject {
    Vms,
    Hosts,
    HostsAndVms,
    Scheduler,
}

impl TacticKind {
    pub const ALL: [TacticKind; 7] = [
        TacticKind::VerticalScaling,
        TacticKind::VerticalDescaling,
        TacticKind::HorizontalScaling,
        TacticKind::HorizontalDescaling,
        TacticKind::VmConsolidation,
        TacticKind::Concurrency,
        TacticKind::DynamicScheduling,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(usize::from(id).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TacticKind::VerticalScaling => "vertical_scaling",
            TacticKind::VerticalDescaling => "vertical_descaling",
            TacticKind::HorizontalScaling => "horizontal_scaling",
            TacticKind::HorizontalDescaling => "horizontal_descaling",
            TacticKind::VmConsolidation => "vm_consolidation",
            TacticKind::Concurrency => "concurrency",
            TacticKind::DynamicScheduling => "dynamic_scheduling",
        }
    }

    pub fn object(self) -> TacticObject {
        match self {
            TacticKind::VerticalScaling | TacticKind::VerticalDescaling => TacticObject::Vms,
            TacticKind::HorizontalScaling | TacticKind::HorizontalDescaling => TacticObject::Hosts,
            TacticKind::VmConsolidation => TacticObject::HostsAndVms,
            TacticKind::Concurrency | TacticKind::DynamicScheduling => TacticObject::Scheduler,
        }
    }
}

impl fmt::Display for TacticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TacticKind {
    type Err = TacticError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TacticError::UnknownTactic(s.to_string()))
    }
}

/// Which variant of a tactic is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variation {
    /// Add or remove this many VMs or hosts.
    Step(u32),
    Scheduling(SchedulingPolicy),
    Concurrency(ConcurrencyMode),
}

impl fmt::Display for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variation::Step(n) => write!(f, "step={n}"),
            Variation::Scheduling(p) => write!(f, "{p:?}"),
            Variation::Concurrency(c) => write!(f, "{c:?}"),
        }
    }
}

/// A concrete tactic ready to be applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tactic {
    pub kind: TacticKind,
    pub variation: Variation,
    pub overhead_s: f64,
}

impl Tactic {
    pub fn step(&self) -> u32 {
        match self.variation {
            Variation::Step(n) => n,
            _ => 1,
        }
    }
}

/// Adaptation time charged per tactic application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TacticOverheads {
    pub scheduling_s: f64,
    pub concurrency_s: f64,
    pub vertical_s: f64,
    pub horizontal_s: f64,
    pub consolidation_s: f64,
}

impl Default for TacticOverheads {
    fn default() -> Self {
        Self {
            scheduling_s: 1.0,
            concurrency_s: 1.0,
            vertical_s: 5.0,
            horizontal_s: 30.0,
            consolidation_s: 60.0,
        }
    }
}

/// Step sizes, target policies and overheads used to instantiate tactics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TacticSettings {
    pub vertical_step: u32,
    pub horizontal_step: u32,
    pub scheduling_policy: SchedulingPolicy,
    pub concurrency_mode: ConcurrencyMode,
    pub overheads: TacticOverheads,
}

impl Default for TacticSettings {
    fn default() -> Self {
        Self {
            vertical_step: 1,
            horizontal_step: 1,
            scheduling_policy: SchedulingPolicy::Edf,
            concurrency_mode: ConcurrencyMode::MultiThread,
            overheads: TacticOverheads::default(),
        }
    }
}

impl TacticSettings {
    pub fn validate(&self) -> Result<(), TacticError> {
        if self.vertical_step == 0 || self.horizontal_step == 0 {
            return Err(TacticError::ZeroStep);
        }
        Ok(())
    }

    pub fn overhead_s(&self, kind: TacticKind) -> f64 {
        let o = &self.overheads;
        match kind {
            TacticKind::VerticalScaling | TacticKind::VerticalDescaling => o.vertical_s,
            TacticKind::HorizontalScaling | TacticKind::HorizontalDescaling => o.horizontal_s,
            TacticKind::VmConsolidation => o.consolidation_s,
            TacticKind::Concurrency => o.concurrency_s,
            TacticKind::DynamicScheduling => o.scheduling_s,
        }
    }

    /// The configured tactic of `kind` with its default step.
    pub fn tactic(&self, kind: TacticKind) -> Tactic {
        let variation = match kind {
            TacticKind::VerticalScaling | TacticKind::VerticalDescaling => {
                Variation::Step(self.vertical_step)
            }
            TacticKind::HorizontalScaling
            | TacticKind::HorizontalDescaling
            | TacticKind::VmConsolidation => Variation::Step(self.horizontal_step),
            TacticKind::Concurrency => Variation::Concurrency(self.concurrency_mode),
            TacticKind::DynamicScheduling => Variation::Scheduling(self.scheduling_policy),
        };
        Tactic {
            kind,
            variation,
            overhead_s: self.overhead_s(kind),
        }
    }

    /// A scaling tactic with an explicit step.
    pub fn tactic_with_step(&self, kind: TacticKind, step: u32) -> Result<Tactic, TacticError> {
        if step == 0 {
            return Err(TacticError::ZeroStep);
        }
        let mut t = self.tactic(kind);
        if matches!(t.variation, Variation::Step(_)) {
            t.variation = Variation::Step(step);
        }
        Ok(t)
    }
}

/// Reason the tactic cannot be applied to `config`, or `None` if it can.
fn violated_bound(tactic: &Tactic, config: &ArchitectureConfig) -> Option<String> {
    let step = tactic.step();
    match tactic.kind {
        TacticKind::HorizontalScaling => (config.pm_num.saturating_add(step) > config.max_pm_num)
            .then(|| format!("maximum of {} hosts", config.max_pm_num)),
        TacticKind::HorizontalDescaling => {
            if config.pm_num <= step {
                Some("minimum one running host".into())
            } else if (config.pm_num - step) * config.pm.cores < config.total_vm_cores() {
                Some("remaining hosts cannot fit the running VMs".into())
            } else {
                None
            }
        }
        TacticKind::VerticalScaling => {
            let extra = step.saturating_mul(VmType::Large.vcpu_cores());
            (config.total_vm_cores().saturating_add(extra) > config.host_cores())
                .then(|| "maximum CPU capacity of running hosts".into())
        }
        TacticKind::VerticalDescaling => (config.total_vms() <= step)
            .then(|| "minimum one running VM".into()),
        TacticKind::VmConsolidation => {
            (config.pm_num < 2).then(|| "minimum one running host".into())
        }
        TacticKind::Concurrency | TacticKind::DynamicScheduling => None,
    }
}

/// True iff applying `tactic` keeps every configuration invariant.
pub fn applicable(tactic: &Tactic, config: &ArchitectureConfig) -> bool {
    violated_bound(tactic, config).is_none()
}

/// Pure transform of `config` by `tactic`.
pub fn apply(tactic: &Tactic, config: &ArchitectureConfig) -> Result<ArchitectureConfig, TacticError> {
    if let Some(bound) = violated_bound(tactic, config) {
        return Err(TacticError::Limit {
            tactic: tactic.kind,
            bound,
        });
    }
    let mut next = config.clone();
    let step = tactic.step();
    match (tactic.kind, tactic.variation) {
        (TacticKind::HorizontalScaling, _) => next.pm_num += step,
        (TacticKind::HorizontalDescaling, _) => next.pm_num -= step,
        // cheapest type first
        (TacticKind::VerticalScaling, _) => *next.vm_count_mut(VmType::Large) += step,
        (TacticKind::VerticalDescaling, _) => {
            let mut remaining = step;
            for vm_type in VmType::ALL.iter().rev() {
                let take = remaining.min(next.vm_count(*vm_type));
                *next.vm_count_mut(*vm_type) -= take;
                remaining -= take;
            }
        }
        (TacticKind::VmConsolidation, _) => next.pm_num = next.pm_num.min(next.min_hosts()),
        (TacticKind::Concurrency, Variation::Concurrency(mode)) => next.concurrency = mode,
        (TacticKind::DynamicScheduling, Variation::Scheduling(policy)) => next.scheduling = policy,
        (kind, variation) => {
            return Err(TacticError::Limit {
                tactic: kind,
                bound: format!("variation {variation} does not apply"),
            })
        }
    }
    debug_assert!(next.validate().is_ok(), "{tactic:?} broke {next:?}");
    Ok(next)
}

/// True when the tactic can be applied but would leave the configuration unchanged.
pub fn is_noop(tactic: &Tactic, config: &ArchitectureConfig) -> bool {
    apply(tactic, config).is_ok_and(|next| &next == config)
}

/// One row of the adaptation rules table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptationRule {
    pub tactic: TacticKind,
    pub related_attributes: &'static [Attribute],
    pub priority: u32,
}

const RULES: [AdaptationRule; 7] = [
    AdaptationRule {
        tactic: TacticKind::DynamicScheduling,
        related_attributes: &[Attribute::ResponseTime],
        priority: 1,
    },
    AdaptationRule {
        tactic: TacticKind::Concurrency,
        related_attributes: &[Attribute::ResponseTime],
        priority: 2,
    },
    AdaptationRule {
        tactic: TacticKind::VerticalScaling,
        related_attributes: &[Attribute::ResponseTime],
        priority: 3,
    },
    AdaptationRule {
        tactic: TacticKind::HorizontalScaling,
        related_attributes: &[Attribute::ResponseTime],
        priority: 4,
    },
    AdaptationRule {
        tactic: TacticKind::VmConsolidation,
        related_attributes: &[Attribute::Energy],
        priority: 1,
    },
    AdaptationRule {
        tactic: TacticKind::VerticalDescaling,
        related_attributes: &[Attribute::Cost, Attribute::Energy],
        priority: 2,
    },
    AdaptationRule {
        tactic: TacticKind::HorizontalDescaling,
        related_attributes: &[Attribute::Cost, Attribute::Energy],
        priority: 3,
    },
];

pub fn adaptation_rules() -> &'static [AdaptationRule] {
    &RULES
}

/// Rules related to `attribute`, ascending by priority.
pub fn rules_for(attribute: Attribute) -> Vec<AdaptationRule> {
    let mut rules: Vec<_> = RULES
        .iter()
        .filter(|r| r.related_attributes.contains(&attribute))
        .copied()
        .collect();
    rules.sort_by_key(|r| r.priority);
    rules
}

pub fn ordered_tactics(attribute: Attribute) -> Vec<TacticKind> {
    rules_for(attribute).into_iter().map(|r| r.tactic).collect()
}

pub fn ordered_tactics_by_name(attribute: &str) -> Result<Vec<TacticKind>, TacticError> {
    let attribute: Attribute = attribute
        .parse()
        .map_err(|_| TacticError::UnknownAttribute(attribute.to_string()))?;
    Ok(ordered_tactics(attribute))
}

/// Priority of `tactic` for `attribute`, if a rule relates them.
pub fn priority(attribute: Attribute, tactic: TacticKind) -> Option<u32> {
    RULES
        .iter()
        .find(|r| r.tactic == tactic && r.related_attributes.contains(&attribute))
        .map(|r| r.priority)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datacenter::initial_deployment;
    use proptest::prelude::*;

    fn settings() -> TacticSettings {
        TacticSettings::default()
    }

    #[test]
    fn ids_match_catalogue() {
        let names: Vec<_> = (1..=7)
            .map(|i| TacticKind::from_id(i).unwrap().name())
            .collect();
        assert_eq!(
            names,
            [
                "vertical_scaling",
                "vertical_descaling",
                "horizontal_scaling",
                "horizontal_descaling",
                "vm_consolidation",
                "concurrency",
                "dynamic_scheduling"
            ]
        );
        assert_eq!(TacticKind::from_id(0), None);
        assert_eq!(TacticKind::from_id(8), None);
        for k in TacticKind::ALL {
            assert_eq!(k.name().parse::<TacticKind>().unwrap(), k);
            assert_eq!(TacticKind::from_id(k.id()), Some(k));
        }
    }

    #[test]
    fn horizontal_limits() {
        let mut c = initial_deployment();
        c.pm_num = 1000;
        let up = settings().tactic(TacticKind::HorizontalScaling);
        assert!(!applicable(&up, &c));
        assert!(matches!(apply(&up, &c), Err(TacticError::Limit { .. })));

        let mut c = initial_deployment();
        c.pm_num = 1;
        c.vm_counts = [1, 0, 0];
        assert!(!applicable(&settings().tactic(TacticKind::HorizontalDescaling), &c));
    }

    #[test]
    fn scheduler_tactics_always_applicable() {
        let c = initial_deployment();
        for kind in [TacticKind::DynamicScheduling, TacticKind::Concurrency] {
            let t = settings().tactic(kind);
            assert!(applicable(&t, &c));
            assert!(!is_noop(&t, &c));
            let next = apply(&t, &c).unwrap();
            assert!(is_noop(&t, &next));
        }
    }

    #[test]
    fn horizontal_scaling_adds_step() {
        let c = initial_deployment();
        let next = apply(&settings().tactic(TacticKind::HorizontalScaling), &c).unwrap();
        assert_eq!(next.pm_num, 11);
    }

    #[test]
    fn consolidation_packs_hosts() {
        // 40 vCPU cores on 12-core hosts need ceil(40 / 12) = 4 hosts.
        let mut c = initial_deployment();
        c.vm_counts = [2, 3, 3];
        assert_eq!(c.total_vm_cores(), 40);
        let next = apply(&settings().tactic(TacticKind::VmConsolidation), &c).unwrap();
        assert_eq!(next.pm_num, 4);
        assert_eq!(next.vm_counts, c.vm_counts);
    }

    #[test]
    fn vertical_descaling_floor() {
        let mut c = initial_deployment();
        c.vm_counts = [1, 0, 0];
        let err = apply(&settings().tactic(TacticKind::VerticalDescaling), &c).unwrap_err();
        match err {
            TacticError::Limit { bound, .. } => assert!(bound.contains("minimum one running VM")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn vertical_scaling_targets_cheapest_descaling_most_expensive() {
        let c = initial_deployment();
        let up = apply(&settings().tactic(TacticKind::VerticalScaling), &c).unwrap();
        assert_eq!(up.vm_counts, [6, 5, 5]);
        let down = settings()
            .tactic_with_step(TacticKind::VerticalDescaling, 7)
            .unwrap();
        let next = apply(&down, &c).unwrap();
        assert_eq!(next.vm_counts, [5, 3, 0]);
    }

    #[test]
    fn vertical_scaling_needs_core_headroom() {
        let mut c = initial_deployment();
        c.pm_num = 6; // 72 cores, 70 used
        assert!(applicable(&settings().tactic(TacticKind::VerticalScaling), &c));
        let two = settings().tactic_with_step(TacticKind::VerticalScaling, 2).unwrap();
        assert!(!applicable(&two, &c));
    }

    #[test]
    fn rule_table() {
        assert_eq!(
            ordered_tactics(Attribute::ResponseTime),
            vec![
                TacticKind::DynamicScheduling,
                TacticKind::Concurrency,
                TacticKind::VerticalScaling,
                TacticKind::HorizontalScaling
            ]
        );
        assert_eq!(
            ordered_tactics(Attribute::Energy),
            vec![
                TacticKind::VmConsolidation,
                TacticKind::VerticalDescaling,
                TacticKind::HorizontalDescaling
            ]
        );
        assert_eq!(
            ordered_tactics(Attribute::Cost),
            vec![TacticKind::VerticalDescaling, TacticKind::HorizontalDescaling]
        );
        let cost: Vec<u32> = rules_for(Attribute::Cost).iter().map(|r| r.priority).collect();
        assert_eq!(cost, vec![2, 3]);
        assert!(matches!(
            ordered_tactics_by_name("throughput"),
            Err(TacticError::UnknownAttribute(_))
        ));
        assert_eq!(
            ordered_tactics_by_name("energy").unwrap(),
            ordered_tactics(Attribute::Energy)
        );
    }

    #[test]
    fn priorities_contiguous_for_response_time_and_energy() {
        for attribute in [Attribute::ResponseTime, Attribute::Energy] {
            let p: Vec<u32> = rules_for(attribute).iter().map(|r| r.priority).collect();
            let expected: Vec<u32> = (1..=p.len() as u32).collect();
            assert_eq!(p, expected);
        }
    }

    #[test]
    fn zero_step_rejected() {
        assert_eq!(
            settings().tactic_with_step(TacticKind::HorizontalScaling, 0),
            Err(TacticError::ZeroStep)
        );
    }

    /// Exhaustive small grid: apply errors exactly when applicable is false.
    #[test]
    fn applicable_is_domain_of_apply() {
        let s = settings();
        for pm in 1..=4u32 {
            for large in 0..=3u32 {
                for xl in 0..=2u32 {
                    for xxl in 0..=1u32 {
                        let mut c = initial_deployment();
                        c.max_pm_num = 4;
                        c.pm_num = pm;
                        c.vm_counts = [large, xl, xxl];
                        if c.validate().is_err() {
                            continue;
                        }
                        for kind in TacticKind::ALL {
                            for step in 1..=3 {
                                let t = s.tactic_with_step(kind, step).unwrap();
                                let res = apply(&t, &c);
                                assert_eq!(res.is_ok(), applicable(&t, &c), "{t:?} on {c}");
                                if let Ok(next) = res {
                                    next.validate().unwrap();
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn arb_config() -> impl Strategy<Value = ArchitectureConfig> {
        (1u32..=1000, 0u32..40, 0u32..20, 0u32..10).prop_filter_map(
            "valid config",
            |(pm, a, b, c)| {
                let mut cfg = initial_deployment();
                cfg.pm_num = pm;
                cfg.vm_counts = [a, b, c];
                cfg.validate().ok().map(|_| cfg)
            },
        )
    }

    proptest! {
        #[test]
        fn apply_preserves_invariants(cfg in arb_config(), kind in 1u8..=7, step in 1u32..6) {
            let t = settings().tactic_with_step(TacticKind::from_id(kind).unwrap(), step).unwrap();
            if applicable(&t, &cfg) {
                let next = apply(&t, &cfg).unwrap();
                prop_assert!(next.validate().is_ok());
            } else {
                prop_assert!(apply(&t, &cfg).is_err());
            }
        }

        #[test]
        fn horizontal_pair_restores_pm(cfg in arb_config(), step in 1u32..4) {
            let s = settings();
            let up = s.tactic_with_step(TacticKind::HorizontalScaling, step).unwrap();
            let down = s.tactic_with_step(TacticKind::HorizontalDescaling, step).unwrap();
            if let Ok(next) = apply(&up, &cfg) {
                prop_assert!(applicable(&down, &next));
                prop_assert_eq!(apply(&down, &next).unwrap().pm_num, cfg.pm_num);
            }
        }
    }
}
