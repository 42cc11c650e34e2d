//! Turn-based two-player stochastic games with labelled states and reward
//! structures, plus their plain-text listing.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::SmgError;

pub const GOAL_LABEL: &str = "goal";
pub const END_LABEL: &str = "end";

const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Sys,
    Env,
}

impl Player {
    pub fn as_str(self) -> &'static str {
        match self {
            Player::Sys => "sys",
            Player::Env => "env",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameAction {
    pub label: String,
    /// Successor states with their probabilities.
    pub distribution: Vec<(usize, f64)>,
}

impl GameAction {
    pub fn dirac(label: impl Into<String>, target: usize) -> Self {
        Self {
            label: label.into(),
            distribution: vec![(target, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStateInfo {
    pub owner: Player,
    /// Variable assignment, for display and strategy export.
    pub valuation: Vec<(String, i64)>,
    pub labels: BTreeSet<String>,
    pub actions: Vec<GameAction>,
}

impl GameStateInfo {
    pub fn new(owner: Player) -> Self {
        Self {
            owner,
            valuation: Vec::new(),
            labels: BTreeSet::new(),
            actions: Vec::new(),
        }
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn valuation_string(&self) -> String {
        if self.valuation.is_empty() {
            return "-".to_string();
        }
        let mut s = String::new();
        for (i, (k, v)) in self.valuation.iter().enumerate() {
            if i > 0 {
                s.push(';');
            }
            let _ = write!(s, "{k}={v}");
        }
        s
    }
}

/// A named non-negative state reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardStructure {
    pub name: String,
    pub values: Vec<f64>,
    pub sense: Sense,
    /// SLA target used to normalise values to `[0, 1]`.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticGame {
    pub states: Vec<GameStateInfo>,
    pub initial: usize,
    /// Atomic propositions that may label states.
    pub propositions: BTreeSet<String>,
    pub rewards: Vec<RewardStructure>,
}

impl StochasticGame {
    pub fn new(states: Vec<GameStateInfo>, initial: usize) -> Self {
        let mut propositions: BTreeSet<String> =
            [GOAL_LABEL, END_LABEL].iter().map(|s| s.to_string()).collect();
        for s in &states {
            propositions.extend(s.labels.iter().cloned());
        }
        Self {
            states,
            initial,
            propositions,
            rewards: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn owner(&self, s: usize) -> Player {
        self.states[s].owner
    }

    pub fn reward(&self, name: &str) -> Result<&RewardStructure, SmgError> {
        self.rewards
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| SmgError::UnknownReward(name.to_string()))
    }

    pub fn labelled(&self, label: &str) -> Vec<bool> {
        self.states.iter().map(|s| s.has_label(label)).collect()
    }

    pub fn sys_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|s| self.states[*s].owner == Player::Sys)
    }

    /// Checks non-empty action sets, distributions and rewards.
    pub fn validate(&self) -> Result<(), SmgError> {
        let n = self.len();
        if self.initial >= n {
            return Err(SmgError::Invalid(format!(
                "initial state {} out of {n} states",
                self.initial
            )));
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.actions.is_empty() {
                return Err(SmgError::Invalid(format!("state {i} has no actions")));
            }
            for a in &s.actions {
                let mut sum = 0.0;
                for &(t, p) in &a.distribution {
                    if t >= n {
                        return Err(SmgError::Invalid(format!(
                            "state {i} action `{}` targets missing state {t}",
                            a.label
                        )));
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(SmgError::Invalid(format!(
                            "state {i} action `{}` has probability {p}",
                            a.label
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > PROB_TOLERANCE {
                    return Err(SmgError::Invalid(format!(
                        "state {i} action `{}` sums to {sum}",
                        a.label
                    )));
                }
            }
            for l in &s.labels {
                if !self.propositions.contains(l) {
                    return Err(SmgError::UnknownLabel(l.clone()));
                }
            }
        }
        for r in &self.rewards {
            if r.values.len() != n {
                return Err(SmgError::Invalid(format!(
                    "reward `{}` has {} values for {n} states",
                    r.name,
                    r.values.len()
                )));
            }
            if let Some(v) = r.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(SmgError::Invalid(format!(
                    "reward `{}` has value {v}",
                    r.name
                )));
            }
            if !(r.target.is_finite() && r.target > 0.0) {
                return Err(SmgError::Invalid(format!(
                    "reward `{}` has target {}",
                    r.name, r.target
                )));
            }
        }
        Ok(())
    }

    /// Plain-text listing, one line per state, action and reward structure.
    pub fn write_listing<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "smg 1")?;
        writeln!(out, "states {}", self.len())?;
        writeln!(out, "initial {}", self.initial)?;
        let props: Vec<&str> = self.propositions.iter().map(String::as_str).collect();
        writeln!(out, "labels {}", props.join(","))?;
        for (i, s) in self.states.iter().enumerate() {
            let labels: Vec<&str> = s.labels.iter().map(String::as_str).collect();
            let labels = if labels.is_empty() {
                "-".to_string()
            } else {
                labels.join(",")
            };
            writeln!(
                out,
                "state {i} {} {} {labels}",
                s.owner.as_str(),
                s.valuation_string()
            )?;
            for a in &s.actions {
                write!(out, "action {i} {}", a.label)?;
                for (t, p) in &a.distribution {
                    write!(out, " {t}:{p}")?;
                }
                writeln!(out)?;
            }
        }
        for r in &self.rewards {
            write!(out, "reward {} {} {}", r.name, r.sense.as_str(), r.target)?;
            for v in &r.values {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_listing<R: BufRead>(input: R) -> Result<Self, SmgError> {
        let mut states: Vec<GameStateInfo> = Vec::new();
        let mut declared = None;
        let mut initial = None;
        let mut propositions = BTreeSet::new();
        let mut rewards = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            let err = |reason: String| SmgError::Parse {
                line: line_no,
                reason,
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            let Some(&head) = toks.first() else { continue };
            let num = |s: &str| -> Result<usize, SmgError> {
                s.parse().map_err(|e| err(format!("`{s}`: {e}")))
            };
            let real = |s: &str| -> Result<f64, SmgError> {
                s.parse().map_err(|e| err(format!("`{s}`: {e}")))
            };
            match head {
                "smg" => {}
                "states" if toks.len() == 2 => declared = Some(num(toks[1])?),
                "initial" if toks.len() == 2 => initial = Some(num(toks[1])?),
                "labels" if toks.len() == 2 => {
                    propositions.extend(toks[1].split(',').map(str::to_string));
                }
                "state" if toks.len() == 5 => {
                    let i = num(toks[1])?;
                    if i != states.len() {
                        return Err(err(format!("state {i} out of order")));
                    }
                    let owner = match toks[2] {
                        "sys" => Player::Sys,
                        "env" => Player::Env,
                        o => return Err(err(format!("unknown owner `{o}`"))),
                    };
                    let mut s = GameStateInfo::new(owner);
                    if toks[3] != "-" {
                        for kv in toks[3].split(';') {
                            let (k, v) = kv
                                .split_once('=')
                                .ok_or_else(|| err(format!("bad valuation `{kv}`")))?;
                            let v: i64 = v.parse().map_err(|e| err(format!("`{v}`: {e}")))?;
                            s.valuation.push((k.to_string(), v));
                        }
                    }
                    if toks[4] != "-" {
                        s.labels = toks[4].split(',').map(str::to_string).collect();
                    }
                    states.push(s);
                }
                "action" if toks.len() >= 4 => {
                    let i = num(toks[1])?;
                    let s = states
                        .get_mut(i)
                        .ok_or_else(|| err(format!("action for undeclared state {i}")))?;
                    let mut distribution = Vec::new();
                    for tp in &toks[3..] {
                        let (t, p) = tp
                            .split_once(':')
                            .ok_or_else(|| err(format!("bad transition `{tp}`")))?;
                        distribution.push((num(t)?, real(p)?));
                    }
                    s.actions.push(GameAction {
                        label: toks[2].to_string(),
                        distribution,
                    });
                }
                "reward" if toks.len() >= 4 => {
                    let sense = match toks[2] {
                        "maximize" => Sense::Maximize,
                        "minimize" => Sense::Minimize,
                        o => return Err(err(format!("unknown sense `{o}`"))),
                    };
                    let values = toks[4..].iter().map(|v| real(v)).collect::<Result<_, _>>()?;
                    rewards.push(RewardStructure {
                        name: toks[1].to_string(),
                        sense,
                        target: real(toks[3])?,
                        values,
                    });
                }
                _ => return Err(err(format!("unrecognised line `{line}`"))),
            }
        }
        if let Some(d) = declared {
            if d != states.len() {
                return Err(SmgError::Invalid(format!(
                    "declared {d} states, listed {}",
                    states.len()
                )));
            }
        }
        let mut game = StochasticGame::new(states, initial.unwrap_or(0));
        game.propositions.extend(propositions);
        game.rewards = rewards;
        game.validate()?;
        Ok(game)
    }
}

/// Memoryless deterministic choice of an action index per sys state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    choice: Vec<Option<usize>>,
}

impl Strategy {
    pub fn new(choice: Vec<Option<usize>>) -> Self {
        Self { choice }
    }

    pub fn get(&self, s: usize) -> Option<usize> {
        self.choice.get(s).copied().flatten()
    }

    pub fn choices(&self) -> &[Option<usize>] {
        &self.choice
    }

    /// Total over sys states and only picking existing actions.
    pub fn is_valid_for(&self, game: &StochasticGame) -> bool {
        self.choice.len() == game.len()
            && game.states.iter().zip(&self.choice).all(|(s, c)| match (s.owner, c) {
                (Player::Sys, Some(a)) => *a < s.actions.len(),
                (Player::Sys, None) => false,
                (Player::Env, c) => c.is_none(),
            })
    }

    /// `state,valuation,action` rows for every sys state.
    pub fn write_csv<W: Write>(&self, game: &StochasticGame, out: W) -> Result<(), SmgError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["state", "valuation", "action"])?;
        for (i, c) in self.choice.iter().enumerate() {
            if let Some(a) = c {
                let s = &game.states[i];
                w.write_record([
                    i.to_string(),
                    s.valuation_string(),
                    s.actions[*a].label.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
