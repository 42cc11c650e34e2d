//! Builds the system-versus-environment game over datacenter configurations and
//! maps synthesised strategies back onto tactics.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::game::{
    GameAction, GameStateInfo, Player, RewardStructure, Sense, StochasticGame, Strategy, END_LABEL,
    GOAL_LABEL,
};
use super::SmgError;
use crate::attribute::{Attribute, Measurements};
use crate::datacenter::{self, ArchitectureConfig, VmCapacity};
use crate::goals::GoalSet;
use crate::tactics::{self, Tactic, TacticKind, TacticSettings};
use crate::workload::ServiceType;

pub const DEFAULT_MAX_STATES: usize = 1_000_000;

/// Stand-in value for a saturated response time in reward structures.
pub const SATURATED_RT_MS: f64 = 1e9;

/// Inclusive `[min, max]` ranges of the game variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameBounds {
    pub pm: (u32, u32),
    pub vm: (u32, u32),
    pub vm_cap: (u32, u32),
}

impl Default for GameBounds {
    fn default() -> Self {
        Self {
            pm: (1, 60),
            vm: (1, 90),
            vm_cap: (1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvBranching {
    /// One env action spreading probability evenly over feasible disturbances.
    #[default]
    Uniform,
    /// One env action per disturbance, resolved by the solver's min step.
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameParams {
    pub bounds: GameBounds,
    /// Capacity level of the live configuration; VM MIPS scale with level / init.
    pub vm_cap_init: u32,
    pub pm_step: u32,
    pub vm_step: u32,
    pub cap_step: u32,
    pub max_pm_change: u32,
    pub max_vm_change: u32,
    /// Disturbances the environment may make before `end` holds.
    pub disturbance_budget: u32,
    pub success_prob: f64,
    pub env_branching: EnvBranching,
    pub max_states: usize,
}

impl Default for GameParams {
    fn default() -> Self {
        Self {
            bounds: GameBounds::default(),
            vm_cap_init: 1,
            pm_step: 1,
            vm_step: 1,
            cap_step: 1,
            max_pm_change: 1,
            max_vm_change: 1,
            disturbance_budget: 1,
            success_prob: 0.9,
            env_branching: EnvBranching::Uniform,
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

/// Load and goals under which state QoS and the `goal` label are computed.
#[derive(Debug, Clone, PartialEq)]
pub struct QosModel {
    pub service: ServiceType,
    pub lambda_total: f64,
    pub duration_s: f64,
    pub goals: GoalSet,
}

impl QosModel {
    pub fn measure(&self, config: &ArchitectureConfig) -> Result<Measurements, SmgError> {
        Ok(datacenter::measure(
            config,
            self.lambda_total,
            &self.service,
            self.duration_s,
        )?)
    }

    pub fn goals_met(&self, m: &Measurements) -> bool {
        self.goals
            .iter()
            .all(|g| !m.get(g.attribute).exceeds(g.objective()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GameState {
    pub turn: Player,
    pub pm_num: u32,
    pub vm_num: u32,
    pub vm_cap: u32,
    pub disturbance_used: u32,
}

impl GameState {
    fn with_turn(self, turn: Player) -> Self {
        Self { turn, ..self }
    }
}

/// Sys command labels.
pub const INCREASE_PM: &str = "increase_pm_num";
pub const DECREASE_PM: &str = "decrease_pm_num";
pub const INCREASE_VM: &str = "increase_vm_num";
pub const DECREASE_VM: &str = "decrease_vm_num";
pub const INCREASE_CAP: &str = "increase_vm_cap";
pub const DECREASE_CAP: &str = "decrease_vm_cap";
pub const IDLE: &str = "idle";

/// A built game together with the configuration each state stands for.
#[derive(Debug, Clone)]
pub struct DatacenterGame {
    pub game: StochasticGame,
    pub states: Vec<GameState>,
    index: HashMap<GameState, usize>,
    pub base: ArchitectureConfig,
    pub params: GameParams,
}

/// `base` with `vm_num` VMs in total (adding large VMs, removing the most
/// expensive first), `pm_num` hosts and capacity scaled to `vm_cap`.
pub fn realize(base: &ArchitectureConfig, params: &GameParams, pm_num: u32, vm_num: u32, vm_cap: u32) -> ArchitectureConfig {
    let mut c = base.with_vm_total(vm_num);
    c.pm_num = pm_num;
    if vm_cap != params.vm_cap_init {
        let f = f64::from(vm_cap) / f64::from(params.vm_cap_init);
        c.vm_capacity = match c.vm_capacity {
            VmCapacity::PerCore(m) => VmCapacity::PerCore(m * f),
            VmCapacity::PerVm(m) => VmCapacity::PerVm(m * f),
        };
    }
    c
}

fn check_range(name: &str, (lo, hi): (u32, u32), init: u32) -> Result<(), SmgError> {
    if lo == 0 || lo > init || init > hi {
        return Err(SmgError::Bounds(format!(
            "{name}: need 1 <= min <= {init} <= max, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

struct Builder<'a> {
    base: &'a ArchitectureConfig,
    params: &'a GameParams,
    model: &'a QosModel,
    qos: HashMap<(u32, u32, u32), (Measurements, bool, bool)>,
    states: Vec<GameState>,
    index: HashMap<GameState, usize>,
    queue: VecDeque<usize>,
}

impl Builder<'_> {
    /// (measurements, vms fit, goal met), cached per configuration.
    fn qos(&mut self, pm: u32, vm: u32, cap: u32) -> Result<(Measurements, bool, bool), SmgError> {
        if let Some(q) = self.qos.get(&(pm, vm, cap)) {
            return Ok(*q);
        }
        let c = realize(self.base, self.params, pm, vm, cap);
        let m = self.model.measure(&c)?;
        let q = (m, c.vms_fit(), self.model.goals_met(&m));
        self.qos.insert((pm, vm, cap), q);
        Ok(q)
    }

    fn fits(&mut self, pm: u32, vm: u32, cap: u32) -> Result<bool, SmgError> {
        Ok(self.qos(pm, vm, cap)?.1)
    }

    fn intern(&mut self, s: GameState) -> Result<usize, SmgError> {
        if let Some(i) = self.index.get(&s) {
            return Ok(*i);
        }
        if self.states.len() >= self.params.max_states {
            return Err(SmgError::TooLarge(self.params.max_states));
        }
        let i = self.states.len();
        self.states.push(s);
        self.index.insert(s, i);
        self.queue.push_back(i);
        Ok(i)
    }

    fn in_bounds(&self, pm: i64, vm: i64, cap: i64) -> bool {
        let b = &self.params.bounds;
        let inside = |x: i64, (lo, hi): (u32, u32)| x >= i64::from(lo) && x <= i64::from(hi);
        inside(pm, b.pm) && inside(vm, b.vm) && inside(cap, b.vm_cap)
    }

    fn env_actions(&mut self, s: GameState) -> Result<Vec<GameAction>, SmgError> {
        let pass = self.intern(s.with_turn(Player::Sys))?;
        let mut moves = vec![("pass".to_string(), pass)];
        if s.disturbance_used < self.params.disturbance_budget {
            let mp = i64::from(self.params.max_pm_change);
            let mv = i64::from(self.params.max_vm_change);
            for dp in -mp..=mp {
                for dv in -mv..=mv {
                    if dp == 0 && dv == 0 {
                        continue;
                    }
                    let pm = i64::from(s.pm_num) + dp;
                    let vm = i64::from(s.vm_num) + dv;
                    if !self.in_bounds(pm, vm, i64::from(s.vm_cap)) {
                        continue;
                    }
                    let (pm, vm) = (pm as u32, vm as u32);
                    if !self.fits(pm, vm, s.vm_cap)? {
                        continue;
                    }
                    let t = self.intern(GameState {
                        turn: Player::Sys,
                        pm_num: pm,
                        vm_num: vm,
                        vm_cap: s.vm_cap,
                        disturbance_used: s.disturbance_used + 1,
                    })?;
                    moves.push((format!("disturb_{dp}_{dv}"), t));
                }
            }
        }
        Ok(match self.params.env_branching {
            EnvBranching::Adversarial => moves
                .into_iter()
                .map(|(label, t)| GameAction::dirac(label, t))
                .collect(),
            EnvBranching::Uniform => {
                let p = 1.0 / moves.len() as f64;
                vec![GameAction {
                    label: "disturb".into(),
                    distribution: moves.into_iter().map(|(_, t)| (t, p)).collect(),
                }]
            }
        })
    }

    fn sys_actions(&mut self, s: GameState, goal: bool) -> Result<Vec<GameAction>, SmgError> {
        if goal {
            let stay = self.intern(s.with_turn(Player::Env))?;
            return Ok(vec![GameAction::dirac(IDLE, stay)]);
        }
        let p = self.params;
        let (pm, vm, cap) = (i64::from(s.pm_num), i64::from(s.vm_num), i64::from(s.vm_cap));
        let (ps, vs, cs) = (i64::from(p.pm_step), i64::from(p.vm_step), i64::from(p.cap_step));
        let commands = [
            (INCREASE_PM, pm + ps, vm, cap),
            (DECREASE_PM, pm - ps, vm, cap),
            (INCREASE_VM, pm, vm + vs, cap),
            (DECREASE_VM, pm, vm - vs, cap),
            (INCREASE_CAP, pm, vm, cap + cs),
            (DECREASE_CAP, pm, vm, cap - cs),
        ];
        let mut actions = Vec::new();
        for (label, npm, nvm, ncap) in commands {
            if !self.in_bounds(npm, nvm, ncap) {
                continue;
            }
            let (npm, nvm, ncap) = (npm as u32, nvm as u32, ncap as u32);
            if !self.fits(npm, nvm, ncap)? {
                continue;
            }
            let t = self.intern(GameState {
                turn: Player::Env,
                pm_num: npm,
                vm_num: nvm,
                vm_cap: ncap,
                disturbance_used: s.disturbance_used,
            })?;
            let distribution = if p.success_prob >= 1.0 {
                vec![(t, 1.0)]
            } else {
                let stay = self.intern(s.with_turn(Player::Env))?;
                vec![(t, p.success_prob), (stay, 1.0 - p.success_prob)]
            };
            actions.push(GameAction {
                label: label.to_string(),
                distribution,
            });
        }
        if actions.is_empty() {
            let stay = self.intern(s.with_turn(Player::Env))?;
            actions.push(GameAction::dirac(IDLE, stay));
        }
        Ok(actions)
    }
}

/// Explores every state reachable from the environment's turn at `base`.
pub fn build_game(base: &ArchitectureConfig, params: &GameParams, model: &QosModel) -> Result<DatacenterGame, SmgError> {
    let b = &params.bounds;
    check_range("pm_num", b.pm, base.pm_num)?;
    check_range("vm_num", b.vm, base.total_vms())?;
    check_range("vm_cap", b.vm_cap, params.vm_cap_init)?;
    if b.pm.1 > base.max_pm_num {
        return Err(SmgError::Bounds(format!(
            "pm_num max {} above the host limit {}",
            b.pm.1, base.max_pm_num
        )));
    }
    if params.pm_step == 0 || params.vm_step == 0 || params.cap_step == 0 {
        return Err(SmgError::Bounds("steps must be positive".into()));
    }
    if !(params.success_prob > 0.0 && params.success_prob <= 1.0) {
        return Err(SmgError::Parameter(format!(
            "success probability {} outside (0, 1]",
            params.success_prob
        )));
    }
    if !base.vms_fit() {
        return Err(SmgError::Bounds("initial VMs do not fit the hosts".into()));
    }
    let mut builder = Builder {
        base,
        params,
        model,
        qos: HashMap::new(),
        states: Vec::new(),
        index: HashMap::new(),
        queue: VecDeque::new(),
    };
    let init = builder.intern(GameState {
        turn: Player::Env,
        pm_num: base.pm_num,
        vm_num: base.total_vms(),
        vm_cap: params.vm_cap_init,
        disturbance_used: 0,
    })?;
    let mut infos: BTreeMap<usize, GameStateInfo> = BTreeMap::new();
    while let Some(i) = builder.queue.pop_front() {
        let s = builder.states[i];
        let (_, _, goal) = builder.qos(s.pm_num, s.vm_num, s.vm_cap)?;
        let mut info = GameStateInfo::new(s.turn);
        info.valuation = vec![
            ("t".into(), if s.turn == Player::Sys { 0 } else { 1 }),
            ("pm_num".into(), i64::from(s.pm_num)),
            ("vm_num".into(), i64::from(s.vm_num)),
            ("vm_cap".into(), i64::from(s.vm_cap)),
            ("disturbance".into(), i64::from(s.disturbance_used)),
        ];
        if goal {
            info.labels.insert(GOAL_LABEL.into());
        }
        if s.disturbance_used >= params.disturbance_budget {
            info.labels.insert(END_LABEL.into());
        }
        info.actions = match s.turn {
            Player::Env => builder.env_actions(s)?,
            Player::Sys => builder.sys_actions(s, goal)?,
        };
        infos.insert(i, info);
    }
    let states = builder.states;
    let mut rewards = vec![
        (Attribute::ResponseTime, Vec::with_capacity(states.len())),
        (Attribute::Energy, Vec::with_capacity(states.len())),
        (Attribute::Cost, Vec::with_capacity(states.len())),
    ];
    for s in &states {
        let (m, _, _) = builder.qos[&(s.pm_num, s.vm_num, s.vm_cap)];
        for (a, values) in rewards.iter_mut() {
            values.push(m.get(*a).value_or(SATURATED_RT_MS));
        }
    }
    let mut game = StochasticGame::new(infos.into_values().collect(), init);
    game.rewards = rewards
        .into_iter()
        .filter_map(|(a, values)| {
            let goal = model.goals.get(a)?;
            Some(RewardStructure {
                name: a.as_str().to_string(),
                values,
                sense: Sense::Minimize,
                target: goal.objective(),
            })
        })
        .collect();
    game.validate()?;
    log::debug!("built game with {} states", game.len());
    Ok(DatacenterGame {
        game,
        index: builder.index,
        states,
        base: base.clone(),
        params: *params,
    })
}

impl DatacenterGame {
    pub fn state_index(&self, s: &GameState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// The sys state matching the live configuration, preferring an unused
    /// disturbance budget.
    pub fn sys_state_of(&self, config: &ArchitectureConfig) -> Option<usize> {
        (0..=self.params.disturbance_budget).find_map(|used| {
            self.state_index(&GameState {
                turn: Player::Sys,
                pm_num: config.pm_num,
                vm_num: config.total_vms(),
                vm_cap: self.params.vm_cap_init,
                disturbance_used: used,
            })
        })
    }

    pub fn config_of(&self, state: usize) -> ArchitectureConfig {
        let s = self.states[state];
        realize(&self.base, &self.params, s.pm_num, s.vm_num, s.vm_cap)
    }

    pub fn is_goal(&self, state: usize) -> bool {
        self.game.states[state].has_label(GOAL_LABEL)
    }

    /// Weighted synthesis over the game's reward structures using the goal weights.
    pub fn synthesize(&self, goals: &GoalSet, options: &super::SolveOptions) -> Result<super::Solution, SmgError> {
        let weighted: Vec<(&RewardStructure, f64)> = self
            .game
            .rewards
            .iter()
            .filter_map(|r| {
                let a: Attribute = r.name.parse().ok()?;
                Some((r, goals.get(a)?.weight))
            })
            .collect();
        super::synthesize_weighted_multiobjective(&self.game, &weighted, GOAL_LABEL, options)
    }
}

/// What the strategy asks of the live system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyAdvice {
    pub tactic: Option<Tactic>,
    /// The live configuration has no state in the game.
    pub miss: bool,
    /// The strategy's action was unusable and the rule order decided.
    pub fallback: bool,
}

fn tactic_for_label(label: &str, params: &GameParams, settings: &TacticSettings) -> Option<Tactic> {
    let (kind, step) = match label {
        INCREASE_PM => (TacticKind::HorizontalScaling, params.pm_step),
        DECREASE_PM => (TacticKind::HorizontalDescaling, params.pm_step),
        INCREASE_VM => (TacticKind::VerticalScaling, params.vm_step),
        DECREASE_VM => (TacticKind::VerticalDescaling, params.vm_step),
        INCREASE_CAP => (TacticKind::VerticalScaling, params.cap_step),
        DECREASE_CAP => (TacticKind::VerticalDescaling, params.cap_step),
        _ => return None,
    };
    settings.tactic_with_step(kind, step).ok()
}

/// First applicable, effective tactic in rule order for `attribute`.
pub fn fallback_tactic(attribute: Attribute, config: &ArchitectureConfig, settings: &TacticSettings) -> Option<Tactic> {
    tactics::ordered_tactics(attribute)
        .into_iter()
        .map(|k| settings.tactic(k))
        .find(|t| tactics::applicable(t, config) && !tactics::is_noop(t, config))
}

/// Maps the strategy's choice at the live configuration to a tactic. Unknown
/// configurations and inapplicable choices fall back to the rule order for
/// `fallback`, and unknown configurations bump `misses`.
pub fn strategy_to_tactics(
    dg: &DatacenterGame,
    strategy: &Strategy,
    config: &ArchitectureConfig,
    settings: &TacticSettings,
    fallback: Option<Attribute>,
    misses: &mut u64,
) -> StrategyAdvice {
    let rule_order = |miss: bool| StrategyAdvice {
        tactic: fallback.and_then(|a| fallback_tactic(a, config, settings)),
        miss,
        fallback: true,
    };
    let Some(s) = dg.sys_state_of(config) else {
        *misses += 1;
        log::debug!("strategy miss at {config}");
        return rule_order(true);
    };
    let Some(a) = strategy.get(s) else {
        *misses += 1;
        return rule_order(true);
    };
    let label = &dg.game.states[s].actions[a].label;
    if label == IDLE {
        return StrategyAdvice {
            tactic: None,
            miss: false,
            fallback: false,
        };
    }
    match tactic_for_label(label, &dg.params, settings) {
        Some(t) if tactics::applicable(&t, config) => StrategyAdvice {
            tactic: Some(t),
            miss: false,
            fallback: false,
        },
        _ => rule_order(false),
    }
}
