//! Value iteration for turn-based games: sys maximises, env minimises.

use serde::{Deserialize, Serialize};

use super::game::{Player, RewardStructure, Sense, StochasticGame, Strategy};
use super::SmgError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Horizon {
    /// Discounted total reward until goal; a factor of 1 is undiscounted.
    Discounted { gamma: f64 },
    /// Exactly this many backups.
    Steps { steps: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub horizon: Horizon,
    pub tolerance: f64,
    pub max_iterations: u32,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            horizon: Horizon::Discounted { gamma: 0.95 },
            tolerance: 1e-6,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub strategy: Strategy,
    pub iterations: u32,
    /// Sup-norm change of every backup.
    pub residuals: Vec<f64>,
}

impl Solution {
    pub fn initial_value(&self, game: &StochasticGame) -> f64 {
        self.values[game.initial]
    }
}

fn expectation(dist: &[(usize, f64)], v: &[f64]) -> f64 {
    dist.iter().map(|(t, p)| p * v[*t]).sum()
}

/// One backup. Goal states keep their own reward and stop accumulating.
fn backup(game: &StochasticGame, reward: &[f64], goal: &[bool], gamma: f64, v: &[f64], out: &mut [f64]) {
    for (s, info) in game.states.iter().enumerate() {
        if goal[s] {
            out[s] = reward[s];
            continue;
        }
        let mut best = match info.owner {
            Player::Sys => f64::NEG_INFINITY,
            Player::Env => f64::INFINITY,
        };
        for a in &info.actions {
            let q = expectation(&a.distribution, v);
            best = match info.owner {
                Player::Sys => best.max(q),
                Player::Env => best.min(q),
            };
        }
        out[s] = reward[s] + gamma * best;
    }
}

/// Argmax per sys state with a relative tie tolerance; lowest index wins ties.
pub fn extract_strategy(game: &StochasticGame, values: &[f64], goal: &[bool]) -> Strategy {
    let choice = game
        .states
        .iter()
        .enumerate()
        .map(|(s, info)| {
            if info.owner != Player::Sys {
                return None;
            }
            if goal[s] {
                return Some(0);
            }
            let qs: Vec<f64> = info
                .actions
                .iter()
                .map(|a| expectation(&a.distribution, values))
                .collect();
            let max = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * max.abs().max(1e-300);
            Some(qs.iter().position(|q| *q >= max - tol).unwrap_or(0))
        })
        .collect();
    Strategy::new(choice)
}

/// Maximal expected reward accumulated until a state labelled `goal_label`,
/// against an adversarial environment, and a strategy achieving it.
///
/// Convergence is declared once the residual bounds the remaining error by
/// `tolerance` relative to the largest reward magnitude (at least 1).
pub fn synthesize_max_reachability_reward(
    game: &StochasticGame,
    reward: &[f64],
    goal_label: &str,
    options: &SolveOptions,
) -> Result<Solution, SmgError> {
    if !game.propositions.contains(goal_label) {
        return Err(SmgError::UnknownLabel(goal_label.to_string()));
    }
    if reward.len() != game.len() || reward.iter().any(|r| !r.is_finite()) {
        return Err(SmgError::Invalid(format!(
            "reward needs {} finite values",
            game.len()
        )));
    }
    let goal = game.labelled(goal_label);
    let n = game.len();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residuals = Vec::new();
    let (gamma, fixed_steps) = match options.horizon {
        Horizon::Discounted { gamma } => {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(SmgError::Parameter(format!("discount {gamma} outside (0, 1]")));
            }
            (gamma, None)
        }
        Horizon::Steps { steps } => (1.0, Some(steps)),
    };
    let scale = reward.iter().fold(1.0f64, |m, r| m.max(r.abs()));
    let tol = options.tolerance * scale;
    let limit = fixed_steps.unwrap_or(options.max_iterations);
    let mut iterations = 0;
    let mut converged = fixed_steps.is_some();
    while iterations < limit {
        backup(game, reward, &goal, gamma, &v, &mut next);
        let res = v
            .iter()
            .zip(&next)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut v, &mut next);
        residuals.push(res);
        iterations += 1;
        if fixed_steps.is_none() {
            let bound = if gamma < 1.0 { res * gamma / (1.0 - gamma) } else { res };
            if bound <= tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(SmgError::NonConvergence {
            iterations,
            residual: residuals.last().copied().unwrap_or(f64::NAN),
        });
    }
    let strategy = extract_strategy(game, &v, &goal);
    Ok(Solution {
        values: v,
        strategy,
        iterations,
        residuals,
    })
}

/// `clamp(value / target, 0, 1)`, negated for minimised structures.
pub fn normalized(structure: &RewardStructure, s: usize) -> f64 {
    let n = (structure.values[s] / structure.target).clamp(0.0, 1.0);
    match structure.sense {
        Sense::Maximize => n,
        Sense::Minimize => -n,
    }
}

pub fn scalarize(game: &StochasticGame, weighted: &[(&RewardStructure, f64)]) -> Result<Vec<f64>, SmgError> {
    if weighted.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
        return Err(SmgError::Parameter("weights must be finite and >= 0".into()));
    }
    if !weighted.iter().any(|(_, w)| *w > 0.0) {
        return Err(SmgError::Parameter("at least one weight must be positive".into()));
    }
    for (r, _) in weighted {
        if r.values.len() != game.len() {
            return Err(SmgError::Invalid(format!("reward `{}` does not fit the game", r.name)));
        }
    }
    Ok((0..game.len())
        .map(|s| weighted.iter().map(|(r, w)| w * normalized(r, s)).sum())
        .collect())
}

/// Weighted scalarisation of several reward structures, then single-objective synthesis.
pub fn synthesize_weighted_multiobjective(
    game: &StochasticGame,
    weighted: &[(&RewardStructure, f64)],
    goal_label: &str,
    options: &SolveOptions,
) -> Result<Solution, SmgError> {
    let r = scalarize(game, weighted)?;
    synthesize_max_reachability_reward(game, &r, goal_label, options)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub holds: bool,
    /// Expected reward per step over the horizon.
    pub average: f64,
}

/// Fixes the sys strategy and computes the horizon-`h` average reward against
/// an environment working against `sense`. The bound holds when the average
/// is at least `threshold` (maximise) or at most it (minimise).
pub fn evaluate_strategy_bound(
    game: &StochasticGame,
    strategy: &Strategy,
    reward: &[f64],
    sense: Sense,
    threshold: f64,
    horizon: u32,
) -> Result<BoundCheck, SmgError> {
    if !strategy.is_valid_for(game) {
        return Err(SmgError::Invalid("strategy is not total over sys states".into()));
    }
    if horizon == 0 {
        return Err(SmgError::Parameter("horizon must be positive".into()));
    }
    let n = game.len();
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..horizon {
        for (s, info) in game.states.iter().enumerate() {
            let cont = match info.owner {
                Player::Sys => {
                    let a = strategy.get(s).expect("validated strategy");
                    expectation(&info.actions[a].distribution, &u)
                }
                Player::Env => {
                    let qs = info.actions.iter().map(|a| expectation(&a.distribution, &u));
                    match sense {
                        Sense::Maximize => qs.fold(f64::INFINITY, f64::min),
                        Sense::Minimize => qs.fold(f64::NEG_INFINITY, f64::max),
                    }
                }
            };
            next[s] = reward[s] + cont;
        }
        std::mem::swap(&mut u, &mut next);
    }
    let average = u[game.initial] / f64::from(horizon);
    let holds = match sense {
        Sense::Maximize => average >= threshold,
        Sense::Minimize => average <= threshold,
    };
    Ok(BoundCheck { holds, average })
}
