//! Replication runner, file formats and CLI plumbing around `npiv-core`.

pub mod config;
pub mod csvio;
pub mod error;
pub mod estimate;
pub mod parallel;
pub mod report;
pub mod runner;
pub mod summary;

pub use config::{ColumnRoles, RunConfig, SieveConfig};
pub use error::{HarnessError, Result};
pub use estimate::{run_estimate, EstimateOutput};
pub use report::{build_report, write_report};
pub use runner::{run_simulation, simulate_to_dir, SimulationOutput};
