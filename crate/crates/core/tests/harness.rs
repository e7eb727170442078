//! End-to-end harness behaviour through the library entry points.

use std::fs;
use std::path::Path;

use streamrl::evalstats::read_eval_csv;
use streamrl::harness::{
    build_report, read_runs_csv, report, run_grid, run_sweep, run_toy, ExperimentConfig, ReportConfig, ReportInput,
    SweepConfig, ToyKind, ToyProblemConfig,
};

fn small(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.apply(&[
        ("algorithm".into(), "streamq".into()),
        ("envs".into(), "chain5".into()),
        ("run.total_steps".into(), "600".into()),
        ("run.eval_every".into(), "200".into()),
        ("run.eval_episodes".into(), "2".into()),
        ("env.max_steps".into(), "50".into()),
        ("net.hidden".into(), "8".into()),
    ])
    .unwrap();
    c.out_dir = out.to_path_buf();
    c
}

fn rows_for_seed(text: &str, seed: u64) -> Vec<String> {
    text.lines()
        .skip(1)
        .filter(|l| l.split(',').nth(2) == Some(&seed.to_string()))
        .map(String::from)
        .collect()
}

#[test]
fn two_seeds_give_two_reproducible_row_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut both = small(&dir.path().join("both"));
    both.seeds = vec![0, 1];
    run_grid(&both).unwrap();
    let text = fs::read_to_string(dir.path().join("both/eval.csv")).unwrap();
    let rows = read_eval_csv(&text).unwrap();
    let seeds: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    assert_eq!(rows.len(), 6);

    // seed 1 alone reproduces its rows bit for bit
    let mut alone = small(&dir.path().join("alone"));
    alone.seeds = vec![1];
    run_grid(&alone).unwrap();
    let text_alone = fs::read_to_string(dir.path().join("alone/eval.csv")).unwrap();
    assert_eq!(rows_for_seed(&text, 1), rows_for_seed(&text_alone, 1));
    assert_ne!(rows_for_seed(&text, 0), rows_for_seed(&text, 1));
}

#[test]
fn eval_interval_beyond_budget_gives_one_final_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.eval_every = 10_000;
    let grid = run_grid(&c).unwrap();
    assert_eq!(grid.runs[0].evals.len(), 1);
    assert_eq!(grid.runs[0].evals[0].0, 600);
}

#[test]
fn numeric_fault_is_recorded_and_reported_once() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(&dir.path().join("grid"));
    c.seeds = vec![0, 1];
    c.inject_nan_at = Some(100);
    let grid = run_grid(&c).unwrap();
    assert_eq!(grid.failures(), 2);
    let runs = read_runs_csv(&fs::read_to_string(dir.path().join("grid/runs.csv")).unwrap()).unwrap();
    assert_eq!(runs.len(), 2);
    assert!(runs
        .iter()
        .all(|r| r.status == "failed" && r.steps == 101 && r.message.contains("numeric fault")));

    let rep = report(
        &[dir.path().join("grid")],
        &ReportConfig::default(),
        &dir.path().join("rep"),
    )
    .unwrap();
    assert_eq!(rep.runs.rows.len(), 2);
    assert!(rep.runs.rows.iter().all(|r| r[3] == "failed" && r[4].is_empty()));
    let summary = fs::read_to_string(dir.path().join("rep/run_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn sweep_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = SweepConfig {
        base: small(dir.path()),
        ..Default::default()
    };
    s.base.total_steps = 200;
    s.base.eval_every = 100;
    s.set("sweep.agent.lambda", "0.0; 0.8").unwrap();
    s.set("sweep.agent.kappa", "1; 2; 3").unwrap();
    let out = run_sweep(&s).unwrap();
    assert_eq!(out.table.rows.len(), 6);
    assert_eq!(
        out.table.header,
        ["cell", "agent.lambda", "agent.kappa", "iqm", "runs_ok", "runs_failed"]
    );
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert_eq!(out.table.rows[5][1..3], ["0.8".to_string(), "3".to_string()]);
}

#[test]
fn degenerate_sweep_matches_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let base = small(&dir.path().join("grid"));
    run_grid(&base).unwrap();
    let mut s = SweepConfig {
        base: small(&dir.path().join("sweep")),
        ..Default::default()
    };
    s.set("sweep.agent.kappa", "2").unwrap();
    let out = run_sweep(&s).unwrap();
    assert_eq!(out.table.rows.len(), 1);
    assert_eq!(
        fs::read(dir.path().join("grid/eval.csv")).unwrap(),
        fs::read(dir.path().join("sweep/cell0/eval.csv")).unwrap()
    );
}

#[test]
fn empty_sweep_axis_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = SweepConfig {
        base: small(dir.path()),
        ..Default::default()
    };
    s.set("sweep.agent.kappa", " ; ").unwrap();
    assert!(matches!(run_sweep(&s), Err(streamrl::Error::Config(_))));
}

fn fixture(rows: &[(&str, &str, u64, u64, f64)]) -> ReportInput {
    let mut csv = String::from("algorithm,env,seed,step,eval_return\n");
    for (a, e, s, t, r) in rows {
        csv += &format!("{a},{e},{s},{t},{r}\n");
    }
    ReportInput {
        evals: read_eval_csv(&csv).unwrap(),
        runs: vec![],
    }
}

fn metric(rep: &streamrl::harness::Report, alg: &str, m: &str) -> Vec<String> {
    rep.aggregates
        .rows
        .iter()
        .find(|r| r[0] == alg && r[1] == m)
        .unwrap()
        .clone()
}

#[test]
fn report_matches_hand_computed_iqm() {
    // window 2: final scores are run means of the last two evaluations
    // env x: (1+3)/2 = 2, (5+7)/2 = 6; env y: (10+20)/2 = 15, (0+2)/2 = 1
    // pooled sorted [1, 2, 6, 15]; IQM drops one from each end -> (2 + 6) / 2 = 4
    let input = fixture(&[
        ("a", "x", 0, 1, 9.0),
        ("a", "x", 0, 2, 1.0),
        ("a", "x", 0, 3, 3.0),
        ("a", "x", 1, 2, 5.0),
        ("a", "x", 1, 3, 7.0),
        ("a", "y", 0, 2, 10.0),
        ("a", "y", 0, 3, 20.0),
        ("a", "y", 1, 2, 0.0),
        ("a", "y", 1, 3, 2.0),
    ]);
    let config = ReportConfig {
        window: 2,
        ..Default::default()
    };
    let rep = build_report(&input, None, &config).unwrap();
    assert_eq!(metric(&rep, "a", "iqm")[2], "4");
    assert_eq!(metric(&rep, "a", "mean")[2], "6");
    assert_eq!(metric(&rep, "a", "runs_ok")[2], "4");
}

#[test]
fn constant_returns_aggregate_to_the_constant() {
    let rows: Vec<(&str, &str, u64, u64, f64)> = (0..4)
        .flat_map(|s| (1..4).map(move |t| ("a", "x", s, t, 2.5)))
        .collect();
    let rep = build_report(&fixture(&rows), None, &ReportConfig::default()).unwrap();
    assert_eq!(metric(&rep, "a", "iqm")[2..], ["2.5", "2.5", "2.5"]);
}

#[test]
fn experiment_config_round_trips() {
    let mut c = ExperimentConfig::default();
    for (k, v) in [
        ("algorithm", "c51"),
        ("envs", "chain7,grid5x5,catch"),
        ("optim.lr", "0.00030000000000000003"),
        ("net.hidden", "64,16"),
        ("run.seeds", "3,1,2"),
        ("run.inject_nan_at", "17"),
        ("explore.decay_steps", "12345"),
    ] {
        c.set(k, v).unwrap();
    }
    assert_eq!(ExperimentConfig::parse(&c.print()).unwrap(), c);
    let s = SweepConfig {
        base: c,
        axes: vec![("optim.eps".into(), vec!["0.1".into(), "1e-8".into()])],
        ..Default::default()
    };
    assert_eq!(SweepConfig::parse(&s.print()).unwrap(), s);
}

fn toy(kind: ToyKind, epsilon: f64, steps: u64, lr: f64) -> Vec<(f64, f64)> {
    let mut c = ToyProblemConfig {
        kind,
        steps,
        lr,
        seed: 0,
        ..Default::default()
    };
    c.adam.epsilon = epsilon;
    run_toy(&c).unwrap().iter().map(|r| r.w).collect()
}

#[test]
fn toy_examples() {
    let w0 = ToyProblemConfig::default().w0;
    let w0_norm = w0.0.hypot(w0.1);
    for kind in [ToyKind::Noisy, ToyKind::Sparse] {
        let end = *toy(kind, 0.1, 2000, 0.3).last().unwrap();
        assert!(end.0.hypot(end.1) < 0.1 * w0_norm, "{kind:?}: {end:?}");
    }
    let large = toy(ToyKind::Noisy, 0.1, 2000, 0.3).last().unwrap().0.abs();
    let small = toy(ToyKind::Noisy, 1e-8, 2000, 0.3).last().unwrap().0.abs();
    assert!(small > large, "{small} vs {large}");
    assert!(toy(ToyKind::Sparse, 0.1, 50, 0.0).iter().all(|w| *w == w0));
}
