//! Estimation on user-supplied data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use npiv_core::pipeline::{run_pipeline, BootstrapContext, EstimatorResult, Sample};
use serde::{Deserialize, Serialize};

use crate::config::{ColumnRoles, RunConfig};
use crate::csvio::{dataset_from_table, read_table};
use crate::error::{HarnessError, Result};
use crate::parallel::{bootstrap_parallel, bootstrap_seed, thread_pool};
use crate::runner::write_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutput {
    pub data: PathBuf,
    pub roles: ColumnRoles,
    pub n: usize,
    pub dropped_rows: usize,
    pub sieve: String,
    pub seed: u64,
    pub results: Vec<EstimatorResult>,
}

pub fn run_estimate(data_path: &Path, roles: &ColumnRoles, cfg: &RunConfig) -> Result<EstimateOutput> {
    roles.validate()?;
    cfg.validate()?;
    let table = read_table(data_path, &roles.used_columns())?;
    let (data, dropped) = dataset_from_table(&table, roles)?;
    let pcfg = cfg.pipeline(cfg.seed)?;
    let sample = Sample::new(data);
    let (mut results, fits) = run_pipeline(&sample, &pcfg, &cfg.estimators)?;
    if let Some(b) = &cfg.bootstrap {
        let pool = thread_pool(cfg.threads)?;
        for res in results.iter_mut().filter(|r| r.estimator.bootstrappable()) {
            let ctx = BootstrapContext::new(&sample, &pcfg, &fits, res.estimator)?;
            let boot = pool.install(|| bootstrap_parallel(&ctx, b.draws, bootstrap_seed(cfg.seed), b.level, b.law))?;
            res.attach_bootstrap(&boot);
        }
    }
    Ok(EstimateOutput {
        data: data_path.to_path_buf(),
        roles: roles.clone(),
        n: sample.len(),
        dropped_rows: dropped,
        sieve: cfg.sieve.label(),
        seed: cfg.seed,
        results,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4}"))
}

/// One line per estimator: estimate, SE and CI under the sieve heading.
pub fn render_estimate(out: &EstimateOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "data: {}  n = {}  dropped rows = {}  sieve = {}",
        out.data.display(),
        out.n,
        out.dropped_rows,
        out.sieve
    );
    let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>24}", "estimator", "theta", "se", "ci");
    for r in &out.results {
        let ci = match (r.ci, r.ci_level) {
            (Some((lo, hi)), Some(l)) => format!("[{lo:.4}, {hi:.4}] @{:.0}%", l * 100.0),
            _ => "-".into(),
        };
        let _ = writeln!(s, "{:<10} {:>10.4} {:>10} {:>24}", r.estimator.name(), r.theta, cell(r.se), ci);
    }
    s
}

/// Writes `estimate.json` and `estimate.txt` into `dir`.
pub fn write_estimate(dir: &Path, out: &EstimateOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_json(&dir.join("estimate.json"), out)?;
    let p = dir.join("estimate.txt");
    std::fs::write(&p, render_estimate(out)).map_err(|e| HarnessError::io(&p, e))
}
