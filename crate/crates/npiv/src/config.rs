//! JSON run configuration shared by `simulate` and `estimate`.

use std::path::{Path, PathBuf};

use npiv_core::ann::{Activation, StoppingRule};
use npiv_core::dgp::DesignId;
use npiv_core::inference::MultiplierLaw;
use npiv_core::pipeline::{EstimatorKind, PipelineConfig, SigmaChoice};
use npiv_core::sieve::BasisSpec;
use npiv_core::smd::{AnnConfig, HSieve};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// JSON schema for [`RunConfig`], shipped with the crate.
pub const RUN_CONFIG_SCHEMA: &str = include_str!("../schema/run_config.schema.json");
/// JSON schema for [`ColumnRoles`].
pub const ROLES_SCHEMA: &str = include_str!("../schema/roles.schema.json");

fn default_n() -> usize {
    1000
}
fn default_reps() -> usize {
    1
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::PIsmd, EstimatorKind::OpOsmd, EstimatorKind::Is, EstimatorKind::Es]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_layers() -> usize {
    1
}
fn default_width() -> usize {
    10
}
fn default_lr() -> f64 {
    0.01
}
fn default_window() -> usize {
    500
}
fn default_rel_tol() -> f64 {
    1e-5
}
fn default_level() -> f64 {
    0.95
}
fn default_law() -> MultiplierLaw {
    MultiplierLaw::Exponential
}

/// Sieve for `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SieveConfig {
    /// Linear sieve; `specs` defaults to cubic splines with interactions.
    Spline {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        specs: Option<Vec<BasisSpec>>,
    },
    /// Feedforward network trained by Adam. Step bounds default per design.
    Ann {
        activation: Activation,
        #[serde(default = "default_layers")]
        layers: usize,
        #[serde(default = "default_width")]
        width: usize,
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_steps: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_steps: Option<usize>,
        #[serde(default = "default_window")]
        window: usize,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
}

impl Default for SieveConfig {
    fn default() -> Self {
        SieveConfig::Spline { specs: None }
    }
}

impl SieveConfig {
    /// Short label, e.g. `spline` or `ann[sigmoid,1x10]`.
    pub fn label(&self) -> String {
        match self {
            SieveConfig::Spline { .. } => "spline".into(),
            SieveConfig::Ann {
                activation, layers, width, ..
            } => {
                let act = match activation {
                    Activation::Relu => "relu",
                    Activation::Sigmoid => "sigmoid",
                    Activation::Tanh => "tanh",
                };
                format!("ann[{act},{layers}x{width}]")
            }
        }
    }
}

/// Optimizer step band `(min, max)` for a design when the config gives none.
pub fn default_ann_steps(design: Option<&DesignId>) -> (usize, usize) {
    match design {
        Some(DesignId::SimpleB { .. }) => (6000, 10000),
        Some(DesignId::Mc3a { .. } | DesignId::Mc3b { .. }) => (7000, 10000),
        _ => (3000, 5000),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub draws: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_law")]
    pub law: MultiplierLaw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Simulation design (`simulate` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignId>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub sieve: SieveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<BasisSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<BasisSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<BasisSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_smd: Option<SigmaChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_score: Option<SigmaChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_rel_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pa_spline_scalars: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `NPIV_THREADS` or all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Write each simulated sample to `samples/rep_<k>.csv`.
    #[serde(default)]
    pub dump_samples: bool,
    /// Run directory name; derived from design and sieve when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.replications == 0 {
            return bad("replications must be positive");
        }
        if self.estimators.is_empty() {
            return bad("estimators must not be empty");
        }
        if let Some(d) = &self.design {
            d.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if let Some(b) = &self.bootstrap {
            if b.draws == 0 || !(b.level > 0.0 && b.level < 1.0) {
                return bad("bootstrap needs draws >= 1 and 0 < level < 1");
            }
        }
        if self.threads == Some(0) {
            return bad("threads must be positive");
        }
        if let SieveConfig::Ann {
            layers, width, min_steps, max_steps, ..
        } = &self.sieve
        {
            if *layers == 0 || *width == 0 {
                return bad("ann layers and width must be positive");
            }
            if let (Some(a), Some(b)) = (min_steps, max_steps) {
                if a > b {
                    return bad("min_steps must not exceed max_steps");
                }
            }
        }
        self.pipeline(0)?.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Design-appropriate network settings.
    pub fn ann_config(&self) -> Option<AnnConfig> {
        match &self.sieve {
            SieveConfig::Spline { .. } => None,
            SieveConfig::Ann {
                activation,
                layers,
                width,
                lr,
                min_steps,
                max_steps,
                window,
                rel_tol,
            } => {
                let (dmin, dmax) = default_ann_steps(self.design.as_ref());
                let max = max_steps.unwrap_or(dmax.max(min_steps.unwrap_or(0)));
                let min = min_steps.unwrap_or(dmin.min(max));
                let rule = StoppingRule {
                    min_steps: min,
                    max_steps: max,
                    window: *window,
                    rel_tol: *rel_tol,
                };
                Some(AnnConfig::new(*activation, *layers, *width, *lr, rule))
            }
        }
    }

    /// Pipeline settings with `seed` for network initialization and splits.
    pub fn pipeline(&self, seed: u64) -> Result<PipelineConfig> {
        let mut p = match self.ann_config() {
            Some(a) => {
                let mut p = PipelineConfig::ann(a);
                // The fixed instrument list needs the simulation layout
                // x = [X1, X2, X3, X~]; other data use the spline default.
                if !has_simulation_layout(self.design.as_ref()) {
                    p.phi = PipelineConfig::spline().phi;
                }
                p
            }
            None => PipelineConfig::spline(),
        };
        if let SieveConfig::Spline { specs: Some(s) } = &self.sieve {
            p.sieve = HSieve::Spline(s.clone());
        }
        if let Some(v) = &self.phi {
            p.phi = v.clone();
        }
        if let Some(v) = &self.lambda {
            p.lambda = v.clone();
        }
        if let Some(v) = &self.nu {
            p.nu = v.clone();
        }
        if let Some(s) = self.sigma_smd {
            p.sigma_smd = s;
        }
        if let Some(s) = self.sigma_score {
            p.sigma_score = s;
        }
        if let Some(f) = self.sigma_rel_floor {
            p.sigma_rel_floor = f;
        }
        if let Some(b) = self.pa_spline_scalars {
            p.pa_spline_scalars = b;
        }
        p.seed = seed;
        Ok(p)
    }

    /// Directory name of this run inside `output_dir`.
    pub fn run_name(&self) -> String {
        let raw = match (&self.label, &self.design) {
            (Some(l), _) => l.clone(),
            (None, Some(d)) => format!("{}_{}", d.label(), self.sieve.label()),
            (None, None) => format!("estimate_{}", self.sieve.label()),
        };
        raw.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect()
    }
}

fn has_simulation_layout(design: Option<&DesignId>) -> bool {
    matches!(
        design,
        Some(DesignId::Mc2 { .. } | DesignId::Mc3a { .. } | DesignId::Mc3b { .. } | DesignId::McA1 { .. })
    )
}

/// Column names for `estimate`: the first structural column is the
/// derivative target. Columns may appear in several roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    pub outcome: String,
    pub structural: Vec<String>,
    pub instruments: Vec<String>,
}

impl ColumnRoles {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let r: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Roles(format!("{}: {e}", path.display())))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.structural.is_empty() || self.instruments.is_empty() {
            return Err(HarnessError::Roles("structural and instrument lists must be non-empty".into()));
        }
        Ok(())
    }

    /// Every column used, in first-appearance order.
    pub fn used_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in std::iter::once(&self.outcome).chain(&self.structural).chain(&self.instruments) {
            if !out.contains(&c.as_str()) {
                out.push(c);
            }
        }
        out
    }
}
