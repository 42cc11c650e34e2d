//! Tabular Q-learning over discretised stability states and a finite grid of
//! configuration actions.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribute::{Attribute, Measurements, Reading};
use crate::datacenter::ArchitectureConfig;
use crate::goals::{satisfaction, GoalSet};

#[derive(Debug, Error)]
pub enum QError {
    #[error("{name} = {value} outside [0, 1]")]
    Parameter { name: &'static str, value: f64 },
    #[error("cell ({state}, {action}) outside a {states}x{actions} table")]
    Cell {
        state: usize,
        action: usize,
        states: usize,
        actions: usize,
    },
    #[error("action grid is empty")]
    EmptyGrid,
    #[error("bucket edges for {0} must be non-empty and strictly increasing")]
    Edges(Attribute),
    #[error("q-table csv line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_unit(name: &'static str, value: f64) -> Result<(), QError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(QError::Parameter { name, value })
    }
}

/// Bucket edges per attribute. With edges `e`, a value below `e[0]` falls in
/// bucket 0 and otherwise in `1 + #{k >= 1 : x > e[k]}`, so `e[1]` is the last
/// value still counted within the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEdges {
    pub response_time_ms: Vec<f64>,
    pub energy_kwh: Vec<f64>,
    pub cost_usd: Vec<f64>,
}

impl Default for BucketEdges {
    fn default() -> Self {
        Self::around(25.0, 25.0, 50.0)
    }
}

impl BucketEdges {
    /// Edges at half, one and two times each objective.
    pub fn around(rt: f64, energy: f64, cost: f64) -> Self {
        let e = |o: f64| vec![o / 2.0, o, 2.0 * o];
        Self {
            response_time_ms: e(rt),
            energy_kwh: e(energy),
            cost_usd: e(cost),
        }
    }

    pub fn for_attribute(&self, attribute: Attribute) -> &[f64] {
        match attribute {
            Attribute::ResponseTime => &self.response_time_ms,
            Attribute::Energy => &self.energy_kwh,
            Attribute::Cost => &self.cost_usd,
        }
    }

    pub fn validate(&self) -> Result<(), QError> {
        for a in Attribute::ALL {
            let e = self.for_attribute(a);
            if e.is_empty() || e.windows(2).any(|w| !(w[0] < w[1])) || e.iter().any(|x| !x.is_finite()) {
                return Err(QError::Edges(a));
            }
        }
        Ok(())
    }

    pub fn bucket_count(&self, attribute: Attribute) -> usize {
        self.for_attribute(attribute).len() + 1
    }

    pub fn bucket(&self, attribute: Attribute, reading: Reading) -> usize {
        let edges = self.for_attribute(attribute);
        match reading {
            Reading::Saturated => edges.len(),
            Reading::Finite(x) if x < edges[0] => 0,
            Reading::Finite(x) => 1 + edges[1..].iter().filter(|e| x > **e).count(),
        }
    }

    pub fn state_count(&self) -> usize {
        Attribute::ALL.iter().map(|a| self.bucket_count(*a)).product()
    }

    pub fn state_index(&self, s: StabilityState) -> usize {
        let nc = self.bucket_count(Attribute::Cost);
        let ne = self.bucket_count(Attribute::Energy);
        (s.rt_bucket * ne + s.energy_bucket) * nc + s.cost_bucket
    }

    pub fn state_at(&self, index: usize) -> StabilityState {
        let nc = self.bucket_count(Attribute::Cost);
        let ne = self.bucket_count(Attribute::Energy);
        StabilityState {
            rt_bucket: index / (ne * nc),
            energy_bucket: (index / nc) % ne,
            cost_bucket: index % nc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StabilityState {
    pub rt_bucket: usize,
    pub energy_bucket: usize,
    pub cost_bucket: usize,
}

pub fn discretize(metrics: &Measurements, edges: &BucketEdges) -> StabilityState {
    StabilityState {
        rt_bucket: edges.bucket(Attribute::ResponseTime, metrics.response_time_ms),
        energy_bucket: edges.bucket(Attribute::Energy, metrics.get(Attribute::Energy)),
        cost_bucket: edges.bucket(Attribute::Cost, metrics.get(Attribute::Cost)),
    }
}

/// Target host and total VM counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionConfig {
    pub pm_num: u32,
    pub vm_num: u32,
}

pub const DEFAULT_PM_GRID: [u32; 4] = [5, 10, 20, 50];
pub const DEFAULT_VM_GRID: [u32; 5] = [5, 10, 15, 30, 60];

impl ActionConfig {
    pub fn of(config: &ArchitectureConfig) -> Self {
        Self {
            pm_num: config.pm_num,
            vm_num: config.total_vms(),
        }
    }

    /// `base` resized to this action's counts the way the scaling tactics would.
    pub fn realize(&self, base: &ArchitectureConfig) -> ArchitectureConfig {
        let mut c = base.with_vm_total(self.vm_num);
        c.pm_num = self.pm_num;
        c
    }

    pub fn is_realizable(&self, base: &ArchitectureConfig) -> bool {
        self.pm_num >= 1
            && self.vm_num >= 1
            && self.pm_num <= base.max_pm_num
            && self.realize(base).vms_fit()
    }
}

/// Ascending cross product of the grids, keeping only actions realisable from `base`.
pub fn action_grid(pms: &[u32], vms: &[u32], base: &ArchitectureConfig, order: GridOrder) -> Vec<ActionConfig> {
    let mut out: Vec<ActionConfig> = pms
        .iter()
        .flat_map(|&pm_num| vms.iter().map(move |&vm_num| ActionConfig { pm_num, vm_num }))
        .filter(|a| a.is_realizable(base))
        .collect();
    out.sort();
    out.dedup();
    if order == GridOrder::CapacityFirst {
        out.sort_by(|a, b| b.vm_num.cmp(&a.vm_num).then(a.pm_num.cmp(&b.pm_num)));
    }
    out
}

/// Column order of the action grid, which decides the tie-break on a uniform row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridOrder {
    /// Lexicographic by (pm, vm).
    Ascending,
    /// Most VMs first, then fewest hosts.
    #[default]
    CapacityFirst,
}

/// Dense Q-table indexed by state and action number, with visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
    visits: Vec<u64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize, init_value: f64) -> Self {
        Self {
            states,
            actions,
            values: vec![init_value; states * actions],
            visits: vec![0; states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    fn idx(&self, s: usize, a: usize) -> Result<usize, QError> {
        if s >= self.states || a >= self.actions {
            return Err(QError::Cell {
                state: s,
                action: a,
                states: self.states,
                actions: self.actions,
            });
        }
        Ok(s * self.actions + a)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) -> Result<(), QError> {
        let i = self.idx(s, a)?;
        self.values[i] = value;
        Ok(())
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.visits[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Best action in `s`, lowest index on ties.
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    /// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_a' Q(s',a'))`.
    pub fn update(
        &mut self,
        s: usize,
        a: usize,
        r: f64,
        s_next: usize,
        alpha: f64,
        gamma: f64,
    ) -> Result<f64, QError> {
        check_unit("alpha", alpha)?;
        check_unit("gamma", gamma)?;
        let i = self.idx(s, a)?;
        self.idx(s_next, 0)?;
        let target = r + gamma * self.max_value(s_next);
        let v = (1.0 - alpha) * self.values[i] + alpha * target;
        self.values[i] = v;
        self.visits[i] += 1;
        Ok(v)
    }

    /// Epsilon-greedy choice: uniform with probability `epsilon`, else argmax.
    pub fn select<R: Rng>(&self, s: usize, epsilon: f64, rng: &mut R) -> usize {
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            rng.gen_range(0..self.actions)
        } else {
            self.argmax(s)
        }
    }
}

/// Weighted satisfaction of the goals minus `penalty` if the instance adapted.
pub fn reward(metrics: &Measurements, goals: &GoalSet, adapted: bool, penalty: f64) -> f64 {
    let r: f64 = goals
        .iter()
        .map(|g| g.weight * satisfaction(g, metrics.get(g.attribute)))
        .sum();
    if adapted {
        r - penalty
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { alpha: f64 },
    /// `1 / visits` of the updated cell.
    InverseVisits,
}

impl LearningRate {
    pub fn alpha(&self, visits_before: u64) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::InverseVisits => 1.0 / (visits_before + 1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QParams {
    pub learning_rate: LearningRate,
    pub gamma: f64,
    pub epsilon: f64,
    /// Multiplied into epsilon after every step.
    pub epsilon_decay: f64,
    pub init_value: f64,
    pub adaptation_penalty: f64,
    pub edges: BucketEdges,
    pub pm_grid: Vec<u32>,
    pub vm_grid: Vec<u32>,
    pub grid_order: GridOrder,
    /// Also explore while every goal holds; otherwise exploration waits for a violation.
    pub explore_when_satisfied: bool,
}

impl Default for QParams {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::Constant { alpha: 0.5 },
            gamma: 0.99,
            epsilon: 0.1,
            epsilon_decay: 0.995,
            init_value: 0.0,
            adaptation_penalty: 0.05,
            edges: BucketEdges::default(),
            pm_grid: DEFAULT_PM_GRID.to_vec(),
            vm_grid: DEFAULT_VM_GRID.to_vec(),
            grid_order: GridOrder::default(),
            explore_when_satisfied: false,
        }
    }
}

impl QParams {
    pub fn validate(&self) -> Result<(), QError> {
        if let LearningRate::Constant { alpha } = self.learning_rate {
            check_unit("alpha", alpha)?;
        }
        check_unit("gamma", self.gamma)?;
        check_unit("epsilon", self.epsilon)?;
        check_unit("epsilon_decay", self.epsilon_decay)?;
        if !self.init_value.is_finite() {
            return Err(QError::Parameter {
                name: "init_value",
                value: self.init_value,
            });
        }
        self.edges.validate()
    }
}

/// Q-table over stability states and a configuration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    pub edges: BucketEdges,
    pub actions: Vec<ActionConfig>,
    pub table: QTable,
}

pub const QTABLE_COLUMNS: [&str; 6] = ["rt_bucket", "energy_bucket", "cost_bucket", "pm", "vm", "value"];

impl QMatrix {
    pub fn new(edges: BucketEdges, actions: Vec<ActionConfig>, init_value: f64) -> Result<Self, QError> {
        edges.validate()?;
        if actions.is_empty() {
            return Err(QError::EmptyGrid);
        }
        let table = QTable::new(edges.state_count(), actions.len(), init_value);
        Ok(Self {
            edges,
            actions,
            table,
        })
    }

    pub fn state_index(&self, s: StabilityState) -> usize {
        self.edges.state_index(s)
    }

    pub fn value(&self, s: StabilityState, a: usize) -> f64 {
        self.table.get(self.state_index(s), a)
    }

    /// One row per cell in state-major order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), QError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(QTABLE_COLUMNS)?;
        for si in 0..self.table.states() {
            let s = self.edges.state_at(si);
            for (ai, a) in self.actions.iter().enumerate() {
                w.write_record([
                    s.rt_bucket.to_string(),
                    s.energy_bucket.to_string(),
                    s.cost_bucket.to_string(),
                    a.pm_num.to_string(),
                    a.vm_num.to_string(),
                    self.table.get(si, ai).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`QMatrix::write_csv`]. Bucket counts are taken
    /// from the dump and the edges are placeholders.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, QError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != QTABLE_COLUMNS {
            return Err(QError::Parse {
                line: 1,
                reason: format!("expected header {}", QTABLE_COLUMNS.join(",")),
            });
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<&str, QError> {
                rec.get(i).ok_or_else(|| QError::Parse {
                    line,
                    reason: format!("missing column {}", QTABLE_COLUMNS[i]),
                })
            };
            let int = |i: usize| -> Result<u32, QError> {
                field(i)?.trim().parse().map_err(|e| QError::Parse {
                    line,
                    reason: format!("{}: {e}", QTABLE_COLUMNS[i]),
                })
            };
            let value: f64 = field(5)?.trim().parse().map_err(|e| QError::Parse {
                line,
                reason: format!("value: {e}"),
            })?;
            rows.push(([int(0)?, int(1)?, int(2)?], ActionConfig { pm_num: int(3)?, vm_num: int(4)? }, value));
        }
        let mut actions: Vec<ActionConfig> = Vec::new();
        for r in &rows {
            if !actions.contains(&r.1) {
                actions.push(r.1);
            }
        }
        let counts = [0, 1, 2].map(|k| rows.iter().map(|r| r.0[k]).max().map_or(1, |m| m as usize + 1));
        let edges = BucketEdges {
            response_time_ms: (1..counts[0]).map(|i| i as f64).collect(),
            energy_kwh: (1..counts[1]).map(|i| i as f64).collect(),
            cost_usd: (1..counts[2]).map(|i| i as f64).collect(),
        };
        let edges = BucketEdges {
            response_time_ms: non_empty(edges.response_time_ms),
            energy_kwh: non_empty(edges.energy_kwh),
            cost_usd: non_empty(edges.cost_usd),
        };
        let mut m = QMatrix::new(edges, actions, 0.0)?;
        for (b, a, v) in rows {
            let s = StabilityState {
                rt_bucket: b[0] as usize,
                energy_bucket: b[1] as usize,
                cost_bucket: b[2] as usize,
            };
            let si = m.state_index(s);
            let ai = m.actions.iter().position(|x| *x == a).expect("action collected above");
            m.table.set(si, ai, v)?;
        }
        Ok(m)
    }
}

fn non_empty(v: Vec<f64>) -> Vec<f64> {
    if v.is_empty() {
        vec![1.0]
    } else {
        v
    }
}

/// Online learner following the observe, update, select loop.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub params: QParams,
    pub matrix: QMatrix,
    epsilon: f64,
    rng: ChaCha8Rng,
    previous: Option<(usize, usize)>,
}

impl QLearner {
    /// Grid realised against `base`, the configuration the run starts from.
    pub fn new(params: QParams, base: &ArchitectureConfig, seed: u64) -> Result<Self, QError> {
        params.validate()?;
        let actions = action_grid(&params.pm_grid, &params.vm_grid, base, params.grid_order);
        let matrix = QMatrix::new(params.edges.clone(), actions, params.init_value)?;
        Ok(Self {
            epsilon: params.epsilon,
            params,
            matrix,
            rng: ChaCha8Rng::seed_from_u64(seed),
            previous: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn previous(&self) -> Option<(StabilityState, ActionConfig)> {
        self.previous
            .map(|(s, a)| (self.matrix.edges.state_at(s), self.matrix.actions[a]))
    }

    /// Rewards the previous action with `reward`, moves to the state observed in
    /// `metrics` and picks the next action. `satisfied` gates exploration.
    pub fn step(&mut self, metrics: &Measurements, reward: f64, satisfied: bool) -> ActionConfig {
        let s_next = self.matrix.state_index(discretize(metrics, &self.matrix.edges));
        if let Some((s, a)) = self.previous {
            let alpha = self.params.learning_rate.alpha(self.matrix.table.visits(s, a));
            self.matrix
                .table
                .update(s, a, reward, s_next, alpha, self.params.gamma)
                .expect("validated parameters and cells");
        }
        let eps = if satisfied && !self.params.explore_when_satisfied {
            0.0
        } else {
            self.epsilon
        };
        let a_next = self.matrix.table.select(s_next, eps, &mut self.rng);
        self.epsilon *= self.params.epsilon_decay;
        self.previous = Some((s_next, a_next));
        self.matrix.actions[a_next]
    }
}
