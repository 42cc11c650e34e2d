use std::path::Path;
use std::process::{Command, Output};

fn stabsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().skip(1).filter(|l| !l.is_empty()).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_three_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = stabsim(&["run", "--instances", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["instances.csv", "adaptations.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(data_rows(&read(&out.join("instances.csv"))).len(), 5);
    let summary = read(&out.join("summary.txt"));
    assert!(summary.starts_with("# instances.csv columns: t_i,request_count,"));
    assert!(summary.contains("instances: 5\n"));
}

#[test]
fn bad_controller_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["run", "--controller", "psychic", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--controller"));
}

#[test]
fn bad_controller_in_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"controller": "psychic"}"#);
    let o = stabsim(&["run", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("`controller`"), "{}", stderr(&o));
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["run", "--service-type", "9", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let cfg = write(dir.path(), "c.json", r#"{"engine": {"arrival_window_s": -1}}"#);
    let o = stabsim(&["run", "--config", &cfg, "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("arrival_window_s"));
}

#[test]
fn missing_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let o = stabsim(&["run", "--config", s(&missing)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("absent.json"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = stabsim(&["run", "--controller", "meta_self_aware", "--seed", "11", "--instances", "20", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["instances.csv", "adaptations.csv", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn time_aware_run_dumps_qtable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let o = stabsim(&["run", "--controller", "time_aware", "--instances", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 4 x 4 x 4 stability states times 16 realisable grid actions
    assert_eq!(data_rows(&read(&out.join("qtable.csv"))).len(), 64 * 16);
}

fn comparison_rows(out: &Path) -> Vec<Vec<String>> {
    let text = read(&out.join("comparison.csv"));
    assert!(text.starts_with("controller,mean_response_time_ms,total_energy_kwh,total_cost_usd,adaptation_cycles,overhead_s\n"));
    data_rows(&text)
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn compare_emits_one_row_per_controller() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&[
        "compare",
        "--controllers",
        "self_adaptive_baseline,time_aware",
        "--instances",
        "10",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = comparison_rows(dir.path());
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.len() == 6));
    assert_eq!(rows[0][0], "self_adaptive_baseline");
    assert_eq!(rows[1][0], "time_aware");
}

#[test]
fn compare_same_controller_twice_gives_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["compare", "--controllers", "goal_aware,goal_aware", "--instances", "15", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = comparison_rows(dir.path());
    assert_eq!(rows[0], rows[1]);
}

#[test]
fn compare_needs_two_controllers() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["compare", "--controllers", "goal_aware", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stress_trend_time_aware_adapts_less_than_goal_aware() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["compare", "--controllers", "time_aware,goal_aware", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = comparison_rows(dir.path());
    let cycles = |i: usize| rows[i][4].parse::<u64>().unwrap();
    assert!(cycles(0) < cycles(1), "{rows:?}");
}

#[test]
fn synth_trace_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let o = stabsim(&["synth-trace", "--seed", "42", "--base", "50", "--peak", "300", "--instances", "30", "--out", s(p)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let text = read(&a);
    assert_eq!(text, read(&b));
    assert!(text.starts_with("instance,requests\n"));
    assert_eq!(data_rows(&text).len(), 30);
}

#[test]
fn synth_trace_rejects_peak_above_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["synth-trace", "--peak", "900", "--out", s(&dir.path().join("t.csv"))]);
    assert_eq!(code(&o), 2);
}

const TOY: &str = "smg 1
states 3
initial 0
labels goal
state 0 sys - -
action 0 high 1:1
action 0 low 2:1
state 1 env - goal
action 1 stay 1:1
state 2 env - goal
action 2 stay 2:1
reward r maximize 10 1 7 2
";

fn value_line(o: &Output) -> f64 {
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().find(|l| l.starts_with("value at initial state")).expect("value line");
    line.split(": ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap()
}

#[test]
fn solve_game_toy_matches_hand_value() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "toy.smg", TOY);
    let o = stabsim(&["solve-game", "--model", &model, "--reward", "r", "--gamma", "0.95", "--tolerance", "1e-12", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // 1 + 0.95 * 7
    assert!((value_line(&o) - 7.65).abs() < 1e-9);
    let strategy = read(&dir.path().join("strategy.csv"));
    assert!(strategy.contains("\n0,-,high\n"), "{strategy}");
    assert_eq!(data_rows(&read(&dir.path().join("values.csv"))).len(), 3);
}

#[test]
fn solve_game_zero_weights_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "toy.smg", TOY);
    let o = stabsim(&["solve-game", "--model", &model, "--weights", "r=0", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn solve_game_four_states_matches_enumeration() {
    // s0 sys: `a` to s1, `b` to s3 w.p. 0.6 and s2 w.p. 0.4
    // s1 env: `x` to s3, `y` to s2; s2 and s3 are goals
    let game = "smg 1
states 4
initial 0
labels goal
state 0 sys - -
action 0 a 1:1
action 0 b 3:0.6 2:0.4
state 1 env - -
action 1 x 3:1
action 1 y 2:1
state 2 sys - goal
action 2 stay 2:1
state 3 sys - goal
action 3 stay 3:1
reward r maximize 10 1 2 4 10
";
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "four.smg", game);
    let o = stabsim(&["solve-game", "--model", &model, "--reward", "r", "--gamma", "0.95", "--tolerance", "1e-12", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let g = 0.95;
    let (r0, r1, r2, r3) = (1.0, 2.0, 4.0, 10.0);
    let oracle = [
        // sys a: env picks the cheaper goal
        [r0 + g * (r1 + g * r3), r0 + g * (r1 + g * r2)],
        // sys b: env has no choice on this path
        [r0 + g * (0.6 * r3 + 0.4 * r2); 2],
    ]
    .iter()
    .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
    .fold(f64::NEG_INFINITY, f64::max);
    assert!((value_line(&o) - oracle).abs() <= 1e-5, "{} vs {oracle}", value_line(&o));
}

#[test]
fn solve_game_parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "bad.smg", "smg 1\nstates 1\nstate 0 robot - -\n");
    let o = stabsim(&["solve-game", "--model", &model, "--reward", "r", "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn solve_game_non_convergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "toy.smg", TOY);
    let o = stabsim(&["solve-game", "--model", &model, "--reward", "r", "--max-iterations", "1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn solve_game_from_config_writes_listing() {
    let dir = tempfile::tempdir().unwrap();
    let o = stabsim(&["solve-game", "--requests", "400", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["strategy.csv", "values.csv", "game.smg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let listing = dir.path().join("game.smg");
    let o = stabsim(&["solve-game", "--model", s(&listing), "--weights", "response_time=1", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn inspect_empty_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let q = write(dir.path(), "empty.csv", "rt_bucket,energy_bucket,cost_bucket,pm,vm,value\n");
    let o = stabsim(&["inspect-qtable", "--qtable", &q]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "rt_bucket,energy_bucket,cost_bucket,pm,vm,value\n");
}

#[test]
fn inspect_after_run_is_dense() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.csv");
    let o = stabsim(&["inspect-qtable", "--instances", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = read(&out);
    assert_eq!(data_rows(&text).len(), 64 * 16);
    let o = stabsim(&["inspect-qtable", "--qtable", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8_lossy(&o.stdout), text);
}
