use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use npiv::config::{BootstrapConfig, ColumnRoles, RunConfig};
use npiv::estimate::{render_estimate, write_estimate};
use npiv::parallel::THREADS_ENV;

#[derive(Parser)]
#[command(name = "npiv", version, about = "Sieve estimation of average derivatives in NPIV models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo replications of a simulation design.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` in the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Worker threads (defaults to the config, then the environment).
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// Estimate on a CSV file.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        roles: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Bootstrap draws for the SMD estimators.
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ci_level: Option<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// Render tables from completed runs.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate {
            config,
            output_dir,
            threads,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let (out, dir) = npiv::simulate_to_dir(&cfg)?;
            let failures: usize = out.summary.cells.iter().map(|c| c.failures).sum();
            println!("wrote {} ({} rows, {failures} failed)", dir.display(), out.rows.len());
            for c in &out.summary.cells {
                println!(
                    "{:<8} mean {:>9} sd {:>9} failures {}",
                    c.estimator,
                    c.mc_mean.map_or("-".into(), |v| format!("{v:.4}")),
                    c.mc_sd.map_or("-".into(), |v| format!("{v:.4}")),
                    c.failures
                );
            }
        }
        Command::Estimate {
            data,
            roles,
            config,
            bootstrap,
            seed,
            ci_level,
            output_dir,
            threads,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            let roles = ColumnRoles::load(&roles)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            if let Some(b) = bootstrap {
                let base = cfg.bootstrap.clone().unwrap_or(BootstrapConfig {
                    draws: b,
                    level: 0.95,
                    law: npiv_core::inference::MultiplierLaw::Exponential,
                });
                cfg.bootstrap = Some(BootstrapConfig { draws: b, ..base });
            }
            if let Some(l) = ci_level {
                match cfg.bootstrap.as_mut() {
                    Some(b) => b.level = l,
                    None => anyhow::bail!("--ci-level needs bootstrap draws (--bootstrap or config)"),
                }
            }
            cfg.validate()?;
            let out = npiv::run_estimate(&data, &roles, &cfg)?;
            print!("{}", render_estimate(&out));
            let dir = output_dir.unwrap_or_else(|| cfg.output_dir.join(cfg.run_name()));
            write_estimate(&dir, &out).with_context(|| format!("writing {}", dir.display()))?;
        }
        Command::Report { dir } => {
            let rep = npiv::write_report(&dir)?;
            print!("{}", rep.text);
        }
    }
    Ok(())
}
