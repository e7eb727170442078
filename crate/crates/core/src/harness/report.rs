use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::config::ReportConfig;
use super::grid::rng_stream;
use super::output::{write_atomic, CsvTable};
use crate::error::{Error, Result};
use crate::evalstats::{
    format_real, group_runs, iqm, mean, normalize_scores, poi_bootstrap_ci, probability_of_improvement, read_eval_csv,
    stratified_bootstrap_ci, Baselines, EvalRow, Interval, ScoreMatrix,
};

/// A row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RunRow {
    pub algorithm: String,
    pub env: String,
    pub seed: u64,
    pub status: String,
    pub steps: u64,
    #[serde(default)]
    pub message: String,
}

pub fn read_runs_csv(text: &str) -> Result<Vec<RunRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::Io(format!("runs csv: {e}"))))
        .collect()
}

/// Evaluation rows and run statuses gathered from one or more grid outputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportInput {
    pub evals: Vec<EvalRow>,
    pub runs: Vec<RunRow>,
}

impl ReportInput {
    /// Reads `eval.csv` (and `runs.csv` when present) from a grid output
    /// directory, or a bare eval CSV file.
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut input = ReportInput::default();
        for p in paths {
            let (eval_path, runs_path) = if p.is_dir() {
                (p.join("eval.csv"), Some(p.join("runs.csv")))
            } else {
                (p.clone(), None)
            };
            let text =
                fs::read_to_string(&eval_path).map_err(|e| Error::Io(format!("{}: {e}", eval_path.display())))?;
            input.evals.extend(read_eval_csv(&text)?);
            if let Some(rp) = runs_path.filter(|rp| rp.exists()) {
                input.runs.extend(read_runs_csv(&fs::read_to_string(rp)?)?);
            }
        }
        Ok(input)
    }
}

pub const AGGREGATE_HEADER: [&str; 5] = ["algorithm", "metric", "point", "ci_low", "ci_high"];
pub const RUN_SUMMARY_HEADER: [&str; 5] = ["algorithm", "env", "seed", "status", "score"];

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub aggregates: CsvTable,
    /// Every run exactly once, with its status and final score.
    pub runs: CsvTable,
    pub warnings: Vec<String>,
}

type RunKey = (String, String, u64);

fn push_interval(t: &mut CsvTable, alg: &str, metric: &str, point: f64, ci: Option<&Interval>) {
    let (lo, hi) = ci.map_or((f64::NAN, f64::NAN), |c| (c.low, c.high));
    t.push(vec![
        alg.into(),
        metric.into(),
        format_real(point),
        format_real(lo),
        format_real(hi),
    ]);
}

fn restrict(m: &ScoreMatrix, envs: &BTreeSet<&String>) -> ScoreMatrix {
    m.strata()
        .iter()
        .filter(|(e, _)| envs.contains(e))
        .flat_map(|(e, s)| s.iter().map(move |v| (e.clone(), *v)))
        .collect()
}

/// Aggregates per algorithm (IQM and mean with stratified bootstrap
/// intervals, run counts) and pairwise probability of improvement.
pub fn build_report(input: &ReportInput, baselines: Option<&Baselines>, config: &ReportConfig) -> Result<Report> {
    config.validate()?;
    let mut warnings = Vec::new();
    let mut status: BTreeMap<RunKey, String> = BTreeMap::new();
    for r in &input.runs {
        let key = (r.algorithm.clone(), r.env.clone(), r.seed);
        if status.insert(key, r.status.clone()).is_some() {
            return Err(Error::Usage(format!(
                "run {}/{}/{} listed twice",
                r.algorithm, r.env, r.seed
            )));
        }
    }
    let grouped = group_runs(&input.evals)?;
    let mut scores: BTreeMap<RunKey, f64> = BTreeMap::new();
    for (alg, runs) in &grouped {
        for r in runs {
            if let Some(s) = r.final_score(config.window) {
                scores.insert((alg.clone(), r.env.clone(), r.seed), s);
            }
        }
    }
    for key in scores.keys() {
        status.entry(key.clone()).or_insert_with(|| "ok".into());
    }

    let mut runs = CsvTable::new(&RUN_SUMMARY_HEADER);
    let mut matrices: BTreeMap<String, ScoreMatrix> = BTreeMap::new();
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (key, st) in &status {
        let (alg, env, seed) = key;
        let ok = st == "ok";
        let score = if ok { scores.get(key).copied() } else { None };
        runs.push(vec![
            alg.clone(),
            env.clone(),
            seed.to_string(),
            st.clone(),
            score.map(format_real).unwrap_or_default(),
        ]);
        let c = counts.entry(alg.clone()).or_default();
        let m = matrices.entry(alg.clone()).or_default();
        if ok {
            c.0 += 1;
            if let Some(s) = score {
                m.push(env.clone(), s);
            }
        } else {
            c.1 += 1;
        }
    }
    if let Some(b) = baselines {
        for m in matrices.values_mut() {
            *m = normalize_scores(m, b)?;
        }
    }

    let mut aggregates = CsvTable::new(&AGGREGATE_HEADER);
    let mut stream = 0u64;
    let mut next_rng = || {
        stream += 1;
        rng_stream(config.seed, stream)
    };
    let mut note = |w: Option<String>, what: String| {
        if let Some(w) = w {
            warnings.push(format!("{what}: {w}"));
        }
    };
    for (alg, m) in &matrices {
        let (ok, failed) = counts[alg];
        push_interval(&mut aggregates, alg, "runs_ok", ok as f64, None);
        push_interval(&mut aggregates, alg, "runs_failed", failed as f64, None);
        if m.is_empty() {
            push_interval(&mut aggregates, alg, "iqm", f64::NAN, None);
            push_interval(&mut aggregates, alg, "mean", f64::NAN, None);
            continue;
        }
        let pooled = m.pooled();
        let ci = stratified_bootstrap_ci(m, iqm, config.resamples, config.level, &mut next_rng())?;
        note(ci.warning.clone(), format!("{alg} iqm"));
        push_interval(&mut aggregates, alg, "iqm", iqm(&pooled), Some(&ci));
        let ci = stratified_bootstrap_ci(m, mean, config.resamples, config.level, &mut next_rng())?;
        push_interval(&mut aggregates, alg, "mean", mean(&pooled), Some(&ci));
    }
    for (x, mx) in &matrices {
        for (y, my) in &matrices {
            if x == y {
                continue;
            }
            let common: BTreeSet<&String> = mx.strata().keys().filter(|e| my.strata().contains_key(*e)).collect();
            if common.is_empty() {
                warnings.push(format!("{x} and {y} share no environment; no improvement probability"));
                continue;
            }
            let (rx, ry) = (restrict(mx, &common), restrict(my, &common));
            let point = probability_of_improvement(&rx, &ry)?;
            let ci = poi_bootstrap_ci(&rx, &ry, config.resamples, config.level, &mut next_rng())?;
            push_interval(&mut aggregates, x, &format!("poi_vs_{y}"), point, Some(&ci));
        }
    }
    Ok(Report {
        aggregates,
        runs,
        warnings,
    })
}

/// Reads the inputs, builds the report and writes `aggregates.csv` and
/// `run_summary.csv` into `out_dir`.
pub fn report(inputs: &[PathBuf], config: &ReportConfig, out_dir: &Path) -> Result<Report> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one input".into()));
    }
    let baselines = match &config.baselines {
        Some(p) => Some(Baselines::from_csv(
            &fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        )?),
        None => None,
    };
    let input = ReportInput::load(inputs)?;
    let rep = build_report(&input, baselines.as_ref(), config)?;
    fs::create_dir_all(out_dir)?;
    write_atomic(&out_dir.join("aggregates.csv"), &rep.aggregates.to_bytes()?)?;
    write_atomic(&out_dir.join("run_summary.csv"), &rep.runs.to_bytes()?)?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, env: &str, seed: u64, step: u64, r: f64) -> EvalRow {
        EvalRow {
            algorithm: alg.into(),
            env: env.into(),
            seed,
            step,
            eval_return: r,
        }
    }

    fn metric<'a>(rep: &'a Report, alg: &str, metric: &str) -> Option<&'a Vec<String>> {
        rep.aggregates.rows.iter().find(|r| r[0] == alg && r[1] == metric)
    }

    #[test]
    fn single_algorithm_has_no_poi_rows() {
        let input = ReportInput {
            evals: vec![row("a", "e", 0, 1, 1.0), row("a", "e", 1, 1, 2.0)],
            runs: vec![],
        };
        let rep = build_report(&input, None, &ReportConfig::default()).unwrap();
        assert!(rep.aggregates.rows.iter().all(|r| !r[1].starts_with("poi")));
        assert_eq!(metric(&rep, "a", "mean").unwrap()[2], "1.5");
    }

    #[test]
    fn identical_algorithms_tie() {
        let mut evals = Vec::new();
        for alg in ["a", "b"] {
            for seed in 0..3 {
                evals.push(row(alg, "e", seed, 1, seed as f64));
            }
        }
        let rep = build_report(&ReportInput { evals, runs: vec![] }, None, &ReportConfig::default()).unwrap();
        assert_eq!(metric(&rep, "a", "poi_vs_b").unwrap()[2], "0.5");
        assert_eq!(metric(&rep, "b", "poi_vs_a").unwrap()[2], "0.5");
    }

    #[test]
    fn failed_runs_are_listed_once() {
        let input = ReportInput {
            evals: vec![row("a", "e", 0, 1, 1.0), row("a", "e", 1, 1, 5.0)],
            runs: vec![
                RunRow {
                    algorithm: "a".into(),
                    env: "e".into(),
                    seed: 0,
                    status: "ok".into(),
                    steps: 1,
                    message: String::new(),
                },
                RunRow {
                    algorithm: "a".into(),
                    env: "e".into(),
                    seed: 1,
                    status: "failed".into(),
                    steps: 1,
                    message: "x".into(),
                },
                RunRow {
                    algorithm: "a".into(),
                    env: "e".into(),
                    seed: 2,
                    status: "failed".into(),
                    steps: 0,
                    message: "y".into(),
                },
            ],
        };
        let rep = build_report(&input, None, &ReportConfig::default()).unwrap();
        assert_eq!(rep.runs.rows.len(), 3);
        assert_eq!(metric(&rep, "a", "runs_failed").unwrap()[2], "2");
        assert_eq!(metric(&rep, "a", "iqm").unwrap()[2], "1");
    }

    #[test]
    fn small_resample_counts_warn() {
        let input = ReportInput {
            evals: vec![row("a", "e", 0, 1, 1.0)],
            runs: vec![],
        };
        let config = ReportConfig {
            resamples: 10,
            ..Default::default()
        };
        let rep = build_report(&input, None, &config).unwrap();
        assert!(!rep.warnings.is_empty());
    }
}
