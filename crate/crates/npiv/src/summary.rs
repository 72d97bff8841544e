//! Monte Carlo aggregation of per-replication rows.

use serde::{Deserialize, Serialize};

use crate::csvio::ReplicationRow;

/// Aggregate of one `(design, estimator, sieve)` cell.
///
/// `mc_sd` uses the `n - 1` denominator. For regression designs the
/// statistic is the held-out R^2 and `bias`/`rmse`/`coverage` are absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub design: String,
    pub estimator: String,
    pub sieve: String,
    /// `theta` or `r2`.
    pub statistic: String,
    pub theta_true: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_sd: Option<f64>,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub mean_se: Option<f64>,
    pub coverage: Option<f64>,
    pub n_reps: usize,
    pub successes: usize,
    pub failures: usize,
    pub failure_rate: f64,
}

/// Everything written to a run's `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub sigma_smd: String,
    pub sigma_score: String,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub cells: Vec<McSummary>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_sd(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Summarizes rows sharing one estimator; order of rows does not matter
/// beyond floating-point summation order, which follows `rows`.
pub fn summarize_cell(rows: &[&ReplicationRow], theta_true: Option<f64>) -> McSummary {
    let first = rows.first().expect("cell has rows");
    let ok: Vec<&&ReplicationRow> = rows.iter().filter(|r| r.ok()).collect();
    let regression = rows.iter().any(|r| r.r2.is_some());
    let values: Vec<f64> = ok
        .iter()
        .filter_map(|r| if regression { r.r2 } else { r.theta })
        .collect();
    let mc_mean = mean(&values);
    let truth = if regression { None } else { theta_true };
    let bias = truth.and_then(|t| mc_mean.map(|m| m - t));
    let rmse = truth.and_then(|t| mean(&values.iter().map(|v| (v - t) * (v - t)).collect::<Vec<_>>()).map(f64::sqrt));
    let ses: Vec<f64> = ok.iter().filter_map(|r| r.se).collect();
    let cov: Vec<f64> = ok
        .iter()
        .filter_map(|r| r.covered.map(|c| if c { 1.0 } else { 0.0 }))
        .collect();
    let failures = rows.len() - ok.len();
    McSummary {
        design: first.design.clone(),
        estimator: first.estimator.clone(),
        sieve: first.sieve.clone(),
        statistic: if regression { "r2" } else { "theta" }.into(),
        theta_true: truth,
        mc_mean,
        mc_sd: sample_sd(&values),
        bias,
        rmse,
        mean_se: mean(&ses),
        coverage: mean(&cov),
        n_reps: rows.len(),
        successes: ok.len(),
        failures,
        failure_rate: failures as f64 / rows.len() as f64,
    }
}

/// One cell per estimator, in order of first appearance.
pub fn summarize(rows: &[ReplicationRow], theta_true: Option<f64>) -> Vec<McSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.estimator.as_str()) {
            names.push(&r.estimator);
        }
    }
    names
        .iter()
        .map(|e| {
            let cell: Vec<&ReplicationRow> = rows.iter().filter(|r| r.estimator == *e).collect();
            summarize_cell(&cell, theta_true)
        })
        .collect()
}
