//! Simulation versus prediction.
//!
//! Rows are joined on `(t, quantity, mode)`. A point passes when
//! `|sim - pred| <= max(k_sigma·stderr, rel_tol·|pred| + abs_tol)`. The run
//! passes when at least `min_pass_fraction` of the points pass and no series
//! shows too few sign runs in its residuals (one-sided Wald–Wolfowitz test,
//! conditional on the sign counts).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use crate::config::ComparePolicy;
use crate::error::CliError;
use crate::output::{PREDICT_HEADER, SERIES_HEADER};

/// Above this many signs the runs distribution is replaced by its normal limit.
pub const EXACT_RUNS_LIMIT: u64 = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub t: f64,
    pub effective_time: f64,
    pub quantity: String,
    pub mode: u64,
    pub value: f64,
    pub stderr: Option<f64>,
}

type Key = (String, u64, u64);

fn key(r: &Row) -> Key {
    (r.quantity.clone(), r.mode, r.t.to_bits())
}

fn parse_f64(field: &str, what: &str, path: &Path) -> Result<f64, CliError> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{}: bad {what} value {field:?}", path.display())))
}

/// Reads a `series.csv` or `predict.csv`; anything else is a schema error.
pub fn read_rows(path: &Path) -> Result<Vec<Row>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let is_series = header == SERIES_HEADER;
    if !is_series && header != PREDICT_HEADER {
        return Err(CliError::usage(format!(
            "{}: unrecognized columns {header:?}; expected {SERIES_HEADER:?} or {PREDICT_HEADER:?}",
            path.display()
        )));
    }
    let mut rows = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let stderr = if is_series && !rec[5].trim().is_empty() { Some(parse_f64(&rec[5], "stderr", path)?) } else { None };
        rows.push(Row {
            t: parse_f64(&rec[0], "t", path)?,
            effective_time: parse_f64(&rec[1], "effective_time", path)?,
            quantity: rec[2].to_owned(),
            mode: rec[3]
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("{}: bad mode {:?}", path.display(), &rec[3])))?,
            value: parse_f64(&rec[4], "value", path)?,
            stderr,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCheck {
    pub t: f64,
    pub quantity: String,
    pub mode: u64,
    pub simulated: f64,
    pub stderr: Option<f64>,
    pub predicted: f64,
    pub allowed: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunsCheck {
    pub quantity: String,
    pub mode: u64,
    pub positive: u64,
    pub negative: u64,
    pub runs: u64,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub policy: ComparePolicy,
    pub matched: usize,
    pub unmatched_predictions: usize,
    pub pass_fraction: f64,
    pub runs: Vec<RunsCheck>,
    pub pass: bool,
    pub points: Vec<PointCheck>,
}

pub fn compare(sim: &[Row], pred: &[Row], policy: &ComparePolicy) -> Result<CompareReport, CliError> {
    let by_key: BTreeMap<Key, &Row> = sim.iter().map(|r| (key(r), r)).collect();
    let mut points = vec![];
    let mut unmatched = 0;
    for p in pred {
        let Some(s) = by_key.get(&key(p)) else {
            unmatched += 1;
            continue;
        };
        let band = policy.rel_tol * p.value.abs() + policy.abs_tol;
        let allowed = band.max(policy.k_sigma * s.stderr.unwrap_or(0.0));
        points.push(PointCheck {
            t: p.t,
            quantity: p.quantity.clone(),
            mode: p.mode,
            simulated: s.value,
            stderr: s.stderr,
            predicted: p.value,
            allowed,
            pass: (s.value - p.value).abs() <= allowed,
        });
    }
    if points.is_empty() {
        return Err(CliError::usage("no (t, quantity, mode) rows in common; were both files made from the same config?"));
    }
    points.sort_by(|a, b| (&a.quantity, a.mode).cmp(&(&b.quantity, b.mode)).then(a.t.total_cmp(&b.t)));

    let mut runs = vec![];
    for chunk in points.chunk_by(|a, b| a.quantity == b.quantity && a.mode == b.mode) {
        let signs: Vec<bool> = chunk
            .iter()
            .map(|c| c.simulated - c.predicted)
            .filter(|d| *d != 0.0)
            .map(|d| d > 0.0)
            .collect();
        let positive = signs.iter().filter(|s| **s).count() as u64;
        let negative = signs.len() as u64 - positive;
        let n_runs = if signs.is_empty() { 0 } else { 1 + signs.windows(2).filter(|w| w[0] != w[1]).count() as u64 };
        let p_value = runs_lower_tail(positive, negative, n_runs);
        runs.push(RunsCheck {
            quantity: chunk[0].quantity.clone(),
            mode: chunk[0].mode,
            positive,
            negative,
            runs: n_runs,
            p_value,
            pass: p_value >= policy.runs_alpha,
        });
    }
    let passed = points.iter().filter(|p| p.pass).count();
    let pass_fraction = passed as f64 / points.len() as f64;
    Ok(CompareReport {
        policy: *policy,
        matched: points.len(),
        unmatched_predictions: unmatched,
        pass_fraction,
        pass: pass_fraction >= policy.min_pass_fraction && runs.iter().all(|r| r.pass),
        runs,
        points,
    })
}

/// `P(R <= r)` for the number of runs in a random arrangement of `n1`
/// positives and `n2` negatives. 1 when either count is zero.
pub fn runs_lower_tail(n1: u64, n2: u64, r: u64) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 1.0;
    }
    let n = n1 + n2;
    if n > EXACT_RUNS_LIMIT {
        let (a, b, nf) = (n1 as f64, n2 as f64, n as f64);
        let mean = 2.0 * a * b / nf + 1.0;
        let var = 2.0 * a * b * (2.0 * a * b - nf) / (nf * nf * (nf - 1.0));
        let z = (r as f64 + 0.5 - mean) / var.sqrt();
        return Normal::standard().cdf(z);
    }
    exact_lower_tail(n1, n2, r)
}

fn exact_lower_tail(n1: u64, n2: u64, r: u64) -> f64 {
    let ln_total = ln_binomial(n1 + n2, n1);
    let ln_c = |m: u64, k: u64| if k > m { f64::NEG_INFINITY } else { ln_binomial(m, k) };
    let mut p = 0.0;
    for runs in 2..=r {
        let k = runs / 2;
        p += if runs % 2 == 0 {
            2.0 * (ln_c(n1 - 1, k - 1) + ln_c(n2 - 1, k - 1) - ln_total).exp()
        } else {
            (ln_c(n1 - 1, k) + ln_c(n2 - 1, k - 1) - ln_total).exp()
                + (ln_c(n1 - 1, k - 1) + ln_c(n2 - 1, k) - ln_total).exp()
        };
    }
    p.min(1.0)
}
