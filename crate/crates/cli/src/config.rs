//! TOML run configuration.
//!
//! ```toml
//! format_version = 1
//!
//! [model]
//! kind = "one_d"        # or "fem2d"
//! n_per_side = 21       # fem2d only
//!
//! [run]
//! tol = 1e-3            # single tolerance …
//! # tol_sequence = [1e-2, 1e-3, 1e-4]   # … or a strictly decreasing list
//! tau_init = 0.1
//! nq = 8
//!
//! [sweep]
//! tols = [1e-2, 1e-3, 1e-4]
//! mode = "adaptive"     # adaptive | uniform | nested
//! workers = 2
//!
//! [solver]              # optional overrides of per-model defaults
//! newton_tol = 1e-13
//! kkt_tol = 1e-8
//!
//! [output]
//! dir = "out"
//! write_states = true
//! state_format = "csv"  # csv | bin
//! svg = false
//! ```

use crate::CliError;
use ristep::{SchemeOptions, SolverOptions};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: String,
    pub n_per_side: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tol: Option<f64>,
    pub tol_sequence: Option<Vec<f64>>,
    pub tau_init: Option<f64>,
    pub nq: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub tols: Option<Vec<f64>>,
    pub mode: Option<String>,
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub newton_tol: Option<f64>,
    pub kkt_tol: Option<f64>,
    pub max_newton: Option<usize>,
    pub max_fallback: Option<usize>,
    pub armijo_sigma: Option<f64>,
    pub max_backtracks: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub write_states: bool,
    pub state_format: StateFormat,
    pub svg: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            write_states: true,
            state_format: StateFormat::Csv,
            svg: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum StateFormat {
    Csv,
    Bin,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub nq_fine: usize,
    pub gates: String,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            nq_fine: 64,
            gates: "default".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("{}: {}", path.display(), e))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.format_version != 1 {
            return Err(CliError::Config(format!(
                "unsupported config format_version {}",
                self.format_version
            )));
        }
        match self.model.kind.as_str() {
            "one_d" => {}
            "fem2d" => {
                let n = self.model.n_per_side.unwrap_or(21);
                if n < 3 {
                    return Err(CliError::Config("fem2d needs n_per_side >= 3".into()));
                }
            }
            other => {
                return Err(CliError::Config(format!(
                    "unknown model kind `{other}` (expected one_d or fem2d)"
                )))
            }
        }
        for &tol in self.run.tol.iter() {
            if tol <= 0.0 || !tol.is_finite() {
                return Err(CliError::Config(format!("tolerance must be positive, got {tol}")));
            }
        }
        if let Some(seq) = &self.run.tol_sequence {
            if seq.is_empty() || seq.iter().any(|&t| t <= 0.0 || !t.is_finite()) {
                return Err(CliError::Config("tol_sequence must be positive".into()));
            }
            if seq.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::Config(
                    "tol_sequence must be strictly decreasing".into(),
                ));
            }
        }
        if let Some(tols) = &self.sweep.tols {
            if tols.iter().any(|&t| t <= 0.0 || !t.is_finite()) {
                return Err(CliError::Config("sweep tolerances must be positive".into()));
            }
        }
        if let Some(tau) = self.run.tau_init {
            if tau <= 0.0 || !tau.is_finite() {
                return Err(CliError::Config("tau_init must be positive".into()));
            }
        }
        if let Some(nq) = self.run.nq {
            if nq < 2 || nq % 2 != 0 {
                return Err(CliError::Config("nq must be even and at least 2".into()));
            }
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        match self.model.kind.as_str() {
            "one_d" => "one_d".into(),
            _ => format!("fem2d_n{}", self.model.n_per_side.unwrap_or(21)),
        }
    }

    pub fn build_model(&self) -> Result<Box<dyn ristep::EnergyModel>, CliError> {
        crate::model_from_id(&self.model_id())
    }

    /// Default step-size seed: a tenth of the horizon, unless configured.
    pub fn tau_init(&self, horizon: f64) -> f64 {
        self.run.tau_init.unwrap_or(0.1 * horizon)
    }

    pub fn scheme_options(&self, nq_override: Option<usize>) -> SchemeOptions {
        let mut solver = if self.model.kind == "fem2d" {
            SolverOptions::fem()
        } else {
            SolverOptions::default()
        };
        let s = &self.solver;
        if let Some(x) = s.newton_tol {
            solver.newton_tol = x;
        }
        if let Some(x) = s.kkt_tol {
            solver.kkt_tol = x;
        }
        if let Some(x) = s.max_newton {
            solver.max_newton = x;
        }
        if let Some(x) = s.max_fallback {
            solver.max_fallback = x;
        }
        if let Some(x) = s.armijo_sigma {
            solver.armijo_sigma = x;
        }
        if let Some(x) = s.max_backtracks {
            solver.max_backtracks = x;
        }
        let mut opts = SchemeOptions {
            solver,
            ..SchemeOptions::default()
        };
        if let Some(nq) = nq_override.or(self.run.nq) {
            opts.nq = nq;
        }
        opts
    }
}
