//! Aggregate statistics over evaluation runs: normalized scores, interquartile
//! mean, stratified bootstrap intervals and probability of improvement.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Evaluation history of one (env, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub env: String,
    pub seed: u64,
    series: Vec<(u64, f64)>,
}

impl RunRecord {
    pub fn new(env: impl Into<String>, seed: u64, series: Vec<(u64, f64)>) -> Result<Self> {
        let env = env.into();
        if let Some(w) = series.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::Usage(format!(
                "run {env}/{seed}: evaluation steps must increase, got {} then {}",
                w[0].0, w[1].0
            )));
        }
        Ok(RunRecord { env, seed, series })
    }

    pub fn series(&self) -> &[(u64, f64)] {
        &self.series
    }

    /// Mean of the last `window` evaluation returns (all of them if fewer).
    pub fn final_score(&self, window: usize) -> Option<f64> {
        if self.series.is_empty() || window == 0 {
            return None;
        }
        let tail = &self.series[self.series.len().saturating_sub(window)..];
        Some(tail.iter().map(|(_, r)| r).sum::<f64>() / tail.len() as f64)
    }
}

/// Per-environment (random, reference) score pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Baselines {
    table: BTreeMap<String, (f64, f64)>,
}

impl Baselines {
    pub fn insert(&mut self, env: impl Into<String>, random: f64, reference: f64) -> Result<()> {
        let env = env.into();
        if !(random.is_finite() && reference.is_finite()) || reference == random {
            return Err(Error::Config(format!(
                "baseline for {env} needs finite, distinct random and reference scores"
            )));
        }
        self.table.insert(env, (random, reference));
        Ok(())
    }

    pub fn get(&self, env: &str) -> Option<(f64, f64)> {
        self.table.get(env).copied()
    }

    /// Reads `env,random,reference` rows (with header).
    pub fn from_csv(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            env: String,
            random: f64,
            reference: f64,
        }
        let mut out = Baselines::default();
        for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<Row>() {
            let row = row.map_err(|e| Error::Config(format!("baselines: {e}")))?;
            out.insert(row.env, row.random, row.reference)?;
        }
        Ok(out)
    }
}

/// Scores grouped by environment; each stratum holds one score per run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreMatrix {
    strata: BTreeMap<String, Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new() -> Self {
        ScoreMatrix::default()
    }

    pub fn push(&mut self, env: impl Into<String>, score: f64) {
        self.strata.entry(env.into()).or_default().push(score);
    }

    pub fn strata(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.strata
    }

    pub fn is_empty(&self) -> bool {
        self.strata.values().all(Vec::is_empty)
    }

    /// All scores, strata in name order.
    pub fn pooled(&self) -> Vec<f64> {
        self.strata.values().flatten().copied().collect()
    }
}

impl FromIterator<(String, f64)> for ScoreMatrix {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        let mut m = ScoreMatrix::new();
        for (env, s) in iter {
            m.push(env, s);
        }
        m
    }
}

/// `(raw - random) / (reference - random)` for every entry.
pub fn normalize_scores(raw: &ScoreMatrix, baselines: &Baselines) -> Result<ScoreMatrix> {
    let mut out = ScoreMatrix::new();
    for (env, scores) in raw.strata() {
        let (random, reference) = baselines
            .get(env)
            .ok_or_else(|| Error::Config(format!("no baseline for environment {env}")))?;
        for s in scores {
            out.push(env.clone(), (s - random) / (reference - random));
        }
    }
    Ok(out)
}

/// Interquartile mean: drops the `floor(n / 4)` smallest and largest samples and
/// averages the rest. NaN for an empty input.
pub fn iqm(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.len() / 4;
    let middle = &sorted[cut..sorted.len() - cut];
    middle.iter().sum::<f64>() / middle.len() as f64
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Percentile of sorted data with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    /// Set when the resample count is too small to trust the tails.
    pub warning: Option<String>,
}

pub const MIN_RESAMPLES: usize = 100;

fn check_bootstrap_args(resamples: usize, level: f64) -> Result<Option<String>> {
    if resamples == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("confidence level {level} outside (0, 1)")));
    }
    Ok((resamples < MIN_RESAMPLES)
        .then(|| format!("only {resamples} bootstrap resamples (< {MIN_RESAMPLES}); interval is unreliable")))
}

fn percentile_interval(mut stats: Vec<f64>, level: f64, warning: Option<String>) -> Interval {
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Interval {
        low: percentile(&stats, tail),
        high: percentile(&stats, 1.0 - tail),
        warning,
    }
}

fn resample<R: Rng>(scores: &[f64], rng: &mut R, out: &mut Vec<f64>) {
    for _ in 0..scores.len() {
        out.push(scores[rng.gen_range(0..scores.len())]);
    }
}

/// Percentile interval of `statistic` over the pooled scores, resampling runs
/// with replacement inside each environment.
pub fn stratified_bootstrap_ci<F, R>(
    matrix: &ScoreMatrix,
    statistic: F,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<Interval>
where
    F: Fn(&[f64]) -> f64,
    R: Rng,
{
    let warning = check_bootstrap_args(resamples, level)?;
    if matrix.is_empty() {
        return Err(Error::Usage("bootstrap of an empty score matrix".into()));
    }
    let mut pooled = Vec::new();
    let stats = (0..resamples)
        .map(|_| {
            pooled.clear();
            for scores in matrix.strata().values() {
                resample(scores, rng, &mut pooled);
            }
            statistic(&pooled)
        })
        .collect();
    Ok(percentile_interval(stats, level, warning))
}

/// `(2 * wins + ties, 2 * n * m)` for one environment.
fn pairwise_counts(x: &[f64], y: &[f64]) -> (i128, i128) {
    let mut score = 0i128;
    for a in x {
        for b in y {
            score += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    (score, 2 * x.len() as i128 * y.len() as i128)
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Average over environments of `P(X > Y) + P(X = Y) / 2` across all run pairs.
/// Computed in exact rational arithmetic and rounded so that swapping the
/// arguments gives exactly `1 - p`.
pub fn probability_of_improvement(x: &ScoreMatrix, y: &ScoreMatrix) -> Result<f64> {
    if x.strata().keys().ne(y.strata().keys()) {
        return Err(Error::Usage(
            "probability of improvement needs the same environments on both sides".into(),
        ));
    }
    if x.strata().is_empty() {
        return Err(Error::Usage("probability of improvement of empty score sets".into()));
    }
    let mut total = Ratio::from_integer(0i128);
    for (env, xs) in x.strata() {
        let ys = &y.strata()[env];
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::Usage(format!("no runs for {env}")));
        }
        let (num, den) = pairwise_counts(xs, ys);
        total += Ratio::new(num, den);
    }
    let p = total / Ratio::from_integer(x.strata().len() as i128);
    let half = Ratio::new(1, 2);
    // Round the side at or below one half; the complement then sums to 1.0 exactly.
    Ok(if p <= half {
        ratio_to_f64(p)
    } else {
        1.0 - ratio_to_f64(Ratio::from_integer(1) - p)
    })
}

/// Stratified bootstrap interval for [`probability_of_improvement`], resampling
/// both sides independently within each environment.
pub fn poi_bootstrap_ci<R: Rng>(
    x: &ScoreMatrix,
    y: &ScoreMatrix,
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<Interval> {
    let warning = check_bootstrap_args(resamples, level)?;
    probability_of_improvement(x, y)?;
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = Vec::new();
    for _ in 0..resamples {
        let mut rx = ScoreMatrix::new();
        let mut ry = ScoreMatrix::new();
        for (env, xs) in x.strata() {
            buf.clear();
            resample(xs, rng, &mut buf);
            rx.strata.insert(env.clone(), buf.clone());
            buf.clear();
            resample(&y.strata()[env], rng, &mut buf);
            ry.strata.insert(env.clone(), buf.clone());
        }
        stats.push(probability_of_improvement(&rx, &ry)?);
    }
    Ok(percentile_interval(stats, level, warning))
}

/// One row of an evaluation log.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct EvalRow {
    pub algorithm: String,
    pub env: String,
    pub seed: u64,
    pub step: u64,
    pub eval_return: f64,
}

pub fn read_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::Io(format!("eval csv: {e}"))))
        .collect()
}

/// Groups rows into per-algorithm run records, keyed by algorithm name.
pub fn group_runs(rows: &[EvalRow]) -> Result<BTreeMap<String, Vec<RunRecord>>> {
    let mut series: BTreeMap<(String, String, u64), Vec<(u64, f64)>> = BTreeMap::new();
    for r in rows {
        series
            .entry((r.algorithm.clone(), r.env.clone(), r.seed))
            .or_default()
            .push((r.step, r.eval_return));
    }
    let mut out: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for ((alg, env, seed), s) in series {
        out.entry(alg).or_default().push(RunRecord::new(env, seed, s)?);
    }
    Ok(out)
}

/// Final scores (mean of the last `window` evaluations) of each run.
pub fn final_scores(runs: &[RunRecord], window: usize) -> ScoreMatrix {
    runs.iter()
        .filter_map(|r| r.final_score(window).map(|s| (r.env.clone(), s)))
        .collect()
}

/// Formats a real with 17 significant digits, trailing zeros removed; the text
/// parses back to the identical value.
pub fn format_real(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let digits = digits.trim_end_matches('0');
    if (-5..17).contains(&exp) {
        let body = if exp < 0 {
            format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
        } else {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                format!("{}{}", digits, "0".repeat(int_len - digits.len()))
            } else {
                format!("{}.{}", &digits[..int_len], &digits[int_len..])
            }
        };
        format!("{sign}{body}")
    } else {
        let frac = &digits[1..];
        if frac.is_empty() {
            format!("{sign}{}e{exp}", &digits[..1])
        } else {
            format!("{sign}{}.{}e{exp}", &digits[..1], frac)
        }
    }
}
