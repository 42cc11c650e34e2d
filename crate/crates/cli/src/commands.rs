use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use stabsim::engine::{run_experiment, ControllerKind, SimulationResult, LOG_COLUMNS, RECORD_COLUMNS};
use stabsim::qlearning::{QMatrix, QTABLE_COLUMNS};
use stabsim::smg::{
    build_game, synthesize_max_reachability_reward, synthesize_weighted_multiobjective, Horizon,
    QosModel, RewardStructure, Solution, SolveOptions, StochasticGame, GOAL_LABEL,
};
use stabsim::config::ConfigError;
use stabsim::{ExperimentConfig, WorkloadSource};

use crate::error::CliError;
use crate::output::write_atomic;
use crate::Common;

fn read_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(|e| match e {
        ConfigError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => read_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(k) = common.controller {
        cfg.controller = k;
    }
    if let Some(st) = common.service_type {
        cfg.service_type = st;
    }
    if let Some(n) = common.instances {
        cfg.limit_instances(n);
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig, controller: ControllerKind) -> Result<SimulationResult, CliError> {
    let trace = cfg.trace()?;
    Ok(run_experiment(cfg, controller, &trace, cfg.seed)?)
}

fn summary_text(cfg: &ExperimentConfig, r: &SimulationResult) -> String {
    let t = &r.totals;
    let mut s = String::new();
    let _ = writeln!(s, "# instances.csv columns: {}", RECORD_COLUMNS.join(","));
    let _ = writeln!(s, "# adaptations.csv columns: {}", LOG_COLUMNS.join(","));
    let _ = writeln!(s, "controller: {}", r.controller);
    let _ = writeln!(s, "seed: {}", r.seed);
    let _ = writeln!(s, "service_type: {}", cfg.service_type);
    let _ = writeln!(s, "instances: {}", t.instances);
    let _ = writeln!(s, "mean_response_time_ms: {}", t.mean_response_time_ms);
    let _ = writeln!(s, "saturated_instances: {}", t.saturated_instances);
    let _ = writeln!(s, "violations: {}", t.violations);
    let _ = writeln!(s, "total_energy_kwh: {}", t.total_energy_kwh);
    let _ = writeln!(s, "total_cost_usd: {}", t.total_cost_usd);
    let _ = writeln!(s, "adaptation_cycles: {}", t.total_adaptation_cycles);
    let _ = writeln!(s, "overhead_s: {}", t.total_overhead_s);
    let _ = writeln!(s, "peak_overshoot: {}", t.peak_overshoot);
    if r.controller == ControllerKind::MetaSelfAware {
        let _ = writeln!(s, "syntheses: {}", r.syntheses);
        let _ = writeln!(s, "strategy_misses: {}", r.strategy_misses);
    }
    s
}

pub fn run(common: &Common) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let r = simulate(&cfg, cfg.controller)?;
    let dir = &cfg.output_dir;
    write_atomic(&dir.join("instances.csv"), |b| Ok(r.write_records_csv(b)?))?;
    write_atomic(&dir.join("adaptations.csv"), |b| Ok(r.write_log_csv(b)?))?;
    for h in &r.histories {
        write_atomic(&dir.join(format!("history_{}.csv", h.goal_id)), |b| Ok(h.write_csv(b)?))?;
    }
    if let Some(q) = &r.qmatrix {
        write_atomic(&dir.join("qtable.csv"), |b| Ok(q.write_csv(b)?))?;
    }
    let summary = summary_text(&cfg, &r);
    write_atomic(&dir.join("summary.txt"), |b| {
        b.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    print!("{summary}");
    Ok(())
}

pub const COMPARISON_COLUMNS: [&str; 6] = [
    "controller",
    "mean_response_time_ms",
    "total_energy_kwh",
    "total_cost_usd",
    "adaptation_cycles",
    "overhead_s",
];

pub fn compare(common: &Common, controllers: &[ControllerKind]) -> Result<(), CliError> {
    let cfg = load_config(common)?;
    let kinds: Vec<ControllerKind> = if controllers.is_empty() {
        ControllerKind::ALL.to_vec()
    } else {
        controllers.to_vec()
    };
    if kinds.len() < 2 {
        return Err(CliError::Validation("compare needs at least two controllers".into()));
    }
    let results: Vec<Result<SimulationResult, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = kinds
            .iter()
            .map(|&k| {
                let cfg = &cfg;
                scope.spawn(move || simulate(cfg, k))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("controller thread")).collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<[String; 6]> = results
        .iter()
        .map(|r| {
            let t = &r.totals;
            [
                r.controller.to_string(),
                t.mean_response_time_ms.to_string(),
                t.total_energy_kwh.to_string(),
                t.total_cost_usd.to_string(),
                t.total_adaptation_cycles.to_string(),
                t.total_overhead_s.to_string(),
            ]
        })
        .collect();
    write_atomic(&cfg.output_dir.join("comparison.csv"), |b| {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(b);
        w.write_record(COMPARISON_COLUMNS).map_err(csv_err)?;
        for row in &rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;

    println!(
        "{:<24} {:>12} {:>12} {:>12} {:>8} {:>10}",
        "controller", "mean_rt_ms", "energy_kwh", "cost_usd", "cycles", "overhead_s"
    );
    for r in &results {
        let t = &r.totals;
        println!(
            "{:<24} {:>12.3} {:>12.3} {:>12.3} {:>8} {:>10.1}",
            r.controller.as_str(),
            t.mean_response_time_ms,
            t.total_energy_kwh,
            t.total_cost_usd,
            t.total_adaptation_cycles,
            t.total_overhead_s
        );
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

pub fn synth_trace(common: &Common, base: Option<u32>, peak: Option<u32>) -> Result<(), CliError> {
    let mut cfg = load_config(common)?;
    if base.is_some() || peak.is_some() {
        let (b0, p0, n0) = match cfg.workload {
            WorkloadSource::Trend { base, peak, instances } => (base, peak, instances),
            WorkloadSource::File { .. } => match WorkloadSource::default() {
                WorkloadSource::Trend { base, peak, instances } => (base, peak, common.instances.unwrap_or(instances)),
                WorkloadSource::File { .. } => unreachable!("default workload is a trend"),
            },
        };
        cfg.workload = WorkloadSource::Trend {
            base: base.unwrap_or(b0),
            peak: peak.unwrap_or(p0),
            instances: n0,
        };
        cfg.instance_limit = None;
        cfg.validate()?;
    }
    let trace = cfg.trace()?;
    let path = match &common.out {
        Some(p) => p.clone(),
        None => cfg.output_dir.join("trace.csv"),
    };
    write_atomic(&path, |b| Ok(trace.save(b)?))?;
    println!("wrote {} instances to {}", trace.len(), path.display());
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SolveGameArgs {
    /// Game listing to solve.
    #[arg(long, conflicts_with = "config")]
    pub model: Option<PathBuf>,
    /// Build the datacenter game of this configuration instead of reading a listing.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Requests per instance for the datacenter game.
    #[arg(long, default_value_t = 300)]
    pub requests: u32,
    /// Maximise this reward structure until the goal label.
    #[arg(long, conflicts_with = "weights")]
    pub reward: Option<String>,
    /// Weighted objectives as `name=weight` pairs, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<String>,
    #[arg(long, default_value = GOAL_LABEL)]
    pub goal_label: String,
    /// Discount factor in (0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    /// Output directory for strategy.csv and values.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_weights(game: &StochasticGame, pairs: &[String]) -> Result<Vec<(RewardStructure, f64)>, CliError> {
    pairs
        .iter()
        .map(|p| {
            let (name, w) = p
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("weight `{p}` is not name=value")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("weight `{p}` is not a number")))?;
            Ok((game.reward(name.trim())?.clone(), w))
        })
        .collect()
}

fn solve_options(args: &SolveGameArgs, base: SolveOptions) -> SolveOptions {
    let mut o = base;
    if let Some(g) = args.gamma {
        o.horizon = Horizon::Discounted { gamma: g };
    }
    if let Some(t) = args.tolerance {
        o.tolerance = t;
    }
    if let Some(m) = args.max_iterations {
        o.max_iterations = m;
    }
    o
}

pub fn solve_game(args: &SolveGameArgs) -> Result<(), CliError> {
    let (game, base_opts, goal_weights, out) = match &args.model {
        Some(path) => {
            let f = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let game = StochasticGame::read_listing(std::io::BufReader::new(f))?;
            (game, SolveOptions::default(), None, PathBuf::from("."))
        }
        None => {
            let cfg = match &args.config {
                Some(p) => read_config(p)?,
                None => ExperimentConfig::default(),
            };
            let model = QosModel {
                service: cfg.service()?,
                lambda_total: f64::from(args.requests) / cfg.engine.arrival_window_s,
                duration_s: cfg.engine.instance_duration_s,
                goals: cfg.goals.clone(),
            };
            let dg = build_game(&cfg.initial, &cfg.game, &model)?;
            let weights: Vec<String> = cfg
                .goals
                .iter()
                .map(|g| format!("{}={}", g.attribute.as_str(), g.weight))
                .collect();
            (dg.game, cfg.solver, Some(weights), cfg.output_dir.clone())
        }
    };
    game.validate()?;
    let opts = solve_options(args, base_opts);
    let out = args.out.clone().unwrap_or(out);

    let sol: Solution = if let Some(name) = &args.reward {
        let r = game.reward(name)?;
        synthesize_max_reachability_reward(&game, &r.values, &args.goal_label, &opts)?
    } else {
        let pairs = if !args.weights.is_empty() {
            args.weights.clone()
        } else if let Some(w) = goal_weights {
            w
        } else {
            return Err(CliError::Validation("give --reward or --weights for a listing".into()));
        };
        let owned = parse_weights(&game, &pairs)?;
        let weighted: Vec<(&RewardStructure, f64)> = owned.iter().map(|(r, w)| (r, *w)).collect();
        synthesize_weighted_multiobjective(&game, &weighted, &args.goal_label, &opts)?
    };

    write_atomic(&out.join("strategy.csv"), |b| Ok(sol.strategy.write_csv(&game, b)?))?;
    write_atomic(&out.join("values.csv"), |b| {
        writeln!(b, "state,valuation,value")?;
        for (i, v) in sol.values.iter().enumerate() {
            writeln!(b, "{i},{},{v}", game.states[i].valuation_string())?;
        }
        Ok(())
    })?;
    if args.model.is_none() {
        write_atomic(&out.join("game.smg"), |b| Ok(game.write_listing(b)?))?;
    }
    println!(
        "value at initial state {}: {} ({} states, {} iterations)",
        game.initial,
        sol.initial_value(&game),
        game.len(),
        sol.iterations
    );
    Ok(())
}

fn header_only(text: &str) -> bool {
    text.lines().skip(1).all(|l| l.trim().is_empty())
}

pub fn inspect_qtable(common: &Common, qtable: Option<&Path>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    match qtable {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            if header_only(&text) {
                writeln!(buf, "{}", QTABLE_COLUMNS.join(","))?;
            } else {
                QMatrix::read_csv(text.as_bytes())?.write_csv(&mut buf)?;
            }
        }
        None => {
            let cfg = load_config(common)?;
            let r = simulate(&cfg, ControllerKind::TimeAware)?;
            r.qmatrix.expect("time-aware runs keep a Q-table").write_csv(&mut buf)?;
        }
    }
    match &common.out {
        Some(path) => write_atomic(path, |b| {
            b.extend_from_slice(&buf);
            Ok(())
        }),
        None => Ok(std::io::stdout().write_all(&buf)?),
    }
}
