//! Tables rendered from completed run directories.
//!
//! A run directory holds `summary.json` and `replications.csv` (written by
//! `simulate`); `estimate` directories hold `estimate.json`. The main table
//! has the columns [`REPORT_COLUMNS`], one row per run and estimator, runs
//! sorted by name and estimators in the fixed order p-ismd, op-osmd, is,
//! es, is-x, es-x, pl, pa, ls. When several runs estimate ES on the same
//! design with different score `Sigma` choices, a sensitivity grid
//! (design x Sigma choice, `mean (sd)`) follows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use npiv_core::pipeline::EstimatorKind;
use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::estimate::{render_estimate, EstimateOutput};
use crate::runner::{write_json, REGRESSION_ESTIMATOR};
use crate::summary::{McSummary, RunSummary};

pub const REPORT_COLUMNS: [&str; 12] = [
    "run", "design", "sieve", "estimator", "n_reps", "failures", "mean", "sd", "bias", "rmse", "mean_se", "coverage",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EsGridRow {
    pub design: String,
    /// `(Sigma choice, mean, sd)` sorted by choice.
    pub cells: Vec<(String, Option<f64>, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    pub estimates: Vec<EstimateOutput>,
    pub es_grid: Vec<EsGridRow>,
    #[serde(skip)]
    pub text: String,
}

fn estimator_rank(name: &str) -> usize {
    EstimatorKind::ALL
        .iter()
        .position(|k| k.name() == name)
        .unwrap_or(if name == REGRESSION_ESTIMATOR { EstimatorKind::ALL.len() } else { usize::MAX })
}

fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut consider = |p: PathBuf| {
        if ["summary.json", "replications.csv", "estimate.json"].iter().any(|f| p.join(f).exists()) {
            out.push(p);
        }
    };
    consider(dir.to_path_buf());
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut subs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subs.sort();
    for p in subs {
        consider(p);
    }
    Ok(out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

fn sorted_cells(run: &RunSummary) -> Vec<&McSummary> {
    let mut cells: Vec<&McSummary> = run.cells.iter().collect();
    cells.sort_by_key(|c| estimator_rank(&c.estimator));
    cells
}

fn es_grid(runs: &[RunSummary]) -> Vec<EsGridRow> {
    let mut by_design: BTreeMap<&str, BTreeMap<&str, &McSummary>> = BTreeMap::new();
    for r in runs {
        for c in r.cells.iter().filter(|c| c.estimator == EstimatorKind::Es.name()) {
            by_design.entry(&c.design).or_default().insert(&r.sigma_score, c);
        }
    }
    by_design
        .into_iter()
        .filter(|(_, m)| m.len() > 1)
        .map(|(d, m)| EsGridRow {
            design: d.to_string(),
            cells: m.into_iter().map(|(s, c)| (s.to_string(), c.mc_mean, c.mc_sd)).collect(),
        })
        .collect()
}

fn render(runs: &[RunSummary], estimates: &[EstimateOutput], grid: &[EsGridRow]) -> String {
    let mut s = String::new();
    if !runs.is_empty() {
        let _ = writeln!(s, "{}", REPORT_COLUMNS.join("\t"));
        for r in runs {
            for c in sorted_cells(r) {
                let cov = c.coverage;
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.run,
                    c.design,
                    c.sieve,
                    c.estimator,
                    c.n_reps,
                    c.failures,
                    fmt(c.mc_mean),
                    fmt(c.mc_sd),
                    fmt(c.bias),
                    fmt(c.rmse),
                    fmt(c.mean_se),
                    fmt(cov),
                );
            }
        }
    }
    if !grid.is_empty() {
        let _ = writeln!(s, "\nES sensitivity to the score Sigma (mean (sd))");
        for row in grid {
            let cells: Vec<String> = row
                .cells
                .iter()
                .map(|(k, m, sd)| format!("{k}: {} ({})", fmt(*m), fmt(*sd)))
                .collect();
            let _ = writeln!(s, "{}\t{}", row.design, cells.join("\t"));
        }
    }
    for e in estimates {
        let _ = writeln!(s);
        s.push_str(&render_estimate(e));
    }
    s
}

/// Collects every run under `dir` (the directory itself or its immediate
/// subdirectories) and renders the tables.
pub fn build_report(dir: &Path) -> Result<Report> {
    if !dir.is_dir() {
        return Err(HarnessError::NoRuns(dir.to_path_buf()));
    }
    let dirs = run_dirs(dir)?;
    let mut missing = Vec::new();
    let mut runs = Vec::new();
    let mut estimates = Vec::new();
    for d in &dirs {
        if d.join("estimate.json").exists() {
            estimates.push(read_json::<EstimateOutput>(&d.join("estimate.json"))?);
        }
        let has_sum = d.join("summary.json").exists();
        let has_csv = d.join("replications.csv").exists();
        match (has_sum, has_csv) {
            (true, true) => runs.push(read_json::<RunSummary>(&d.join("summary.json"))?),
            (true, false) => missing.push(format!("{}: replications.csv", d.display())),
            (false, true) => missing.push(format!("{}: summary.json", d.display())),
            (false, false) => {}
        }
    }
    if !missing.is_empty() {
        return Err(HarnessError::MissingArtifacts(missing));
    }
    if runs.is_empty() && estimates.is_empty() {
        return Err(HarnessError::NoRuns(dir.to_path_buf()));
    }
    let grid = es_grid(&runs);
    let text = render(&runs, &estimates, &grid);
    Ok(Report {
        runs,
        estimates,
        es_grid: grid,
        text,
    })
}

/// Builds the report and writes `report.txt` and `report.json` into `dir`.
pub fn write_report(dir: &Path) -> Result<Report> {
    let rep = build_report(dir)?;
    let p = dir.join("report.txt");
    std::fs::write(&p, &rep.text).map_err(|e| HarnessError::io(&p, e))?;
    write_json(&dir.join("report.json"), &rep)?;
    Ok(rep)
}
