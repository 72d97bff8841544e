//! Monte Carlo replications of a simulation design.

use std::path::{Path, PathBuf};
use std::time::Instant;

use npiv_core::dgp::{generate, heldout_r2, DesignId, SimSample};
use npiv_core::pipeline::{fit_regression, run_pipeline, BootstrapContext, PipelineConfig, Sample};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::csvio::{sample_roles, write_replications, write_sample, ReplicationRow, REPLICATION_SCHEMA};
use crate::error::{HarnessError, Result};
use crate::parallel::{bootstrap_parallel, bootstrap_seed, replication_seed, thread_pool};
use crate::summary::{summarize, RunSummary};

pub struct SimulationOutput {
    /// Rows ordered by replication, then by configured estimator.
    pub rows: Vec<ReplicationRow>,
    pub summary: RunSummary,
}

/// Estimator label used for least-squares fits on regression designs.
pub const REGRESSION_ESTIMATOR: &str = "ls";

struct RepContext<'a> {
    cfg: &'a RunConfig,
    design: DesignId,
    run: String,
    design_label: String,
    sieve_label: String,
    dump_dir: Option<&'a Path>,
}

impl RepContext<'_> {
    fn row(&self, estimator: &str, rep: u64, seed: u64) -> ReplicationRow {
        ReplicationRow {
            schema: REPLICATION_SCHEMA.into(),
            run: self.run.clone(),
            design: self.design_label.clone(),
            sieve: self.sieve_label.clone(),
            estimator: estimator.into(),
            rep,
            seed,
            n: self.cfg.n,
            theta: None,
            se: None,
            ci_lo: None,
            ci_hi: None,
            ci_level: None,
            covered: None,
            r2: None,
            boot_failures: None,
            runtime_ms: 0.0,
            status: "ok".into(),
            error: None,
        }
    }

    fn failed_rows(&self, rep: u64, seed: u64, err: &dyn std::fmt::Display) -> Vec<ReplicationRow> {
        let names: Vec<String> = if self.design.theta_true().is_none() {
            vec![REGRESSION_ESTIMATOR.into()]
        } else {
            self.cfg.estimators.iter().map(|e| e.name().to_string()).collect()
        };
        names
            .iter()
            .map(|e| {
                let mut r = self.row(e, rep, seed);
                r.status = "failed".into();
                r.error = Some(err.to_string());
                r
            })
            .collect()
    }

    fn run(&self, rep: u64) -> Vec<ReplicationRow> {
        let seed = replication_seed(self.cfg.seed, rep);
        let start = Instant::now();
        let mut rows = match self.try_run(rep, seed) {
            Ok(rows) => rows,
            Err(e) => {
                log::warn!("{} rep {rep}: {e}", self.run);
                self.failed_rows(rep, seed, &e)
            }
        };
        let ms = start.elapsed().as_secs_f64() * 1e3;
        for r in &mut rows {
            r.runtime_ms = ms;
        }
        rows
    }

    fn try_run(&self, rep: u64, seed: u64) -> Result<Vec<ReplicationRow>> {
        let sim = generate(&self.design, self.cfg.n, seed)?;
        if let Some(dir) = self.dump_dir {
            write_sample(&dir.join(format!("rep_{rep}.csv")), &sim.data)?;
        }
        let pcfg = self.cfg.pipeline(seed)?;
        if self.design.theta_true().is_none() {
            return self.regression(&sim, &pcfg, rep, seed);
        }
        let theta_true = sim.theta_true;
        let sample = Sample::with_oracle(sim.data, sim.sigma)?;
        let (results, fits) = run_pipeline(&sample, &pcfg, &self.cfg.estimators)?;
        let mut rows = Vec::with_capacity(results.len());
        for mut res in results {
            let mut row = self.row(res.estimator.name(), rep, seed);
            if let (Some(b), true) = (&self.cfg.bootstrap, res.estimator.bootstrappable()) {
                let boot = BootstrapContext::new(&sample, &pcfg, &fits, res.estimator)
                    .map_err(HarnessError::from)
                    .and_then(|ctx| bootstrap_parallel(&ctx, b.draws, bootstrap_seed(seed), b.level, b.law));
                match boot {
                    Ok(bres) => res.attach_bootstrap(&bres),
                    Err(e) => row.error = Some(format!("bootstrap: {e}")),
                }
            }
            row.theta = Some(res.theta);
            row.se = res.se;
            if let Some((lo, hi)) = res.ci {
                row.ci_lo = Some(lo);
                row.ci_hi = Some(hi);
                row.ci_level = res.ci_level;
                row.covered = theta_true.map(|t| lo <= t && t <= hi);
            }
            row.boot_failures = res.bootstrap_failures;
            rows.push(row);
        }
        Ok(rows)
    }

    fn regression(&self, sim: &SimSample, pcfg: &PipelineConfig, rep: u64, seed: u64) -> Result<Vec<ReplicationRow>> {
        let h = fit_regression(&sim.data, &pcfg.sieve, seed)?;
        let ho = sim
            .heldout
            .as_ref()
            .ok_or_else(|| HarnessError::Config("regression design without evaluation sample".into()))?;
        let mut row = self.row(REGRESSION_ESTIMATOR, rep, seed);
        row.r2 = Some(heldout_r2(&h.eval(&ho.x)?, &ho.f));
        Ok(vec![row])
    }
}

/// Runs all replications of `cfg` (which must name a design). Samples are
/// dumped into `dump_dir` when given.
pub fn run_simulation_with(cfg: &RunConfig, dump_dir: Option<&Path>) -> Result<SimulationOutput> {
    cfg.validate()?;
    let design = cfg
        .design
        .ok_or_else(|| HarnessError::Config("simulate needs a design".into()))?;
    let pcfg = cfg.pipeline(0)?;
    let ctx = RepContext {
        cfg,
        design,
        run: cfg.run_name(),
        design_label: design.label(),
        sieve_label: cfg.sieve.label(),
        dump_dir,
    };
    let pool = thread_pool(cfg.threads)?;
    let per_rep: Vec<Vec<ReplicationRow>> =
        pool.install(|| (0..cfg.replications as u64).into_par_iter().map(|rep| ctx.run(rep)).collect());
    let rows: Vec<ReplicationRow> = per_rep.into_iter().flatten().collect();
    let summary = RunSummary {
        run: ctx.run.clone(),
        sigma_smd: pcfg.sigma_smd.to_string(),
        sigma_score: pcfg.sigma_score.to_string(),
        n: cfg.n,
        replications: cfg.replications,
        seed: cfg.seed,
        cells: summarize(&rows, design.theta_true()),
    };
    Ok(SimulationOutput { rows, summary })
}

pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationOutput> {
    run_simulation_with(cfg, None)
}

/// Runs `cfg` and writes `config.json`, `replications.csv` and
/// `summary.json` (plus `samples/` when requested) under
/// `output_dir/<run name>`. Returns the run directory.
pub fn simulate_to_dir(cfg: &RunConfig) -> Result<(SimulationOutput, PathBuf)> {
    let dir = cfg.output_dir.join(cfg.run_name());
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let dump = dir.join("samples");
    if cfg.dump_samples {
        std::fs::create_dir_all(&dump).map_err(|e| HarnessError::io(&dump, e))?;
    }
    let out = run_simulation_with(cfg, cfg.dump_samples.then_some(dump.as_path()))?;
    if cfg.dump_samples {
        if let Some(d) = cfg.design {
            // Column names are fixed by the design, so one file serves every sample.
            let probe = generate(&d, 1, 0)?;
            write_json(&dump.join("roles.json"), &sample_roles(&probe.data))?;
        }
    }
    write_json(&dir.join("config.json"), cfg)?;
    write_replications(&dir.join("replications.csv"), &out.rows)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    Ok((out, dir))
}

pub(crate) fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}
