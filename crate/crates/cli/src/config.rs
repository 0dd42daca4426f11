use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sbb_core::{MarginalSpec, SbbError, SolverConfig};

fn default_paths() -> usize {
    100_000
}

fn default_duality_budget() -> f64 {
    0.02
}

/// One run, as read from a JSON file and then overridden by command-line flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mu0: MarginalSpec,
    #[serde(rename = "mu_T")]
    pub mu_t: MarginalSpec,
    pub solver: SolverConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Relative part of the strong-duality budget `3·stderr + rel·|dual|`.
    #[serde(default = "default_duality_budget")]
    pub duality_budget: f64,
    #[serde(default)]
    pub emit_paths: bool,
    /// `(β, T)` pairs for sweep-beta.
    #[serde(default)]
    pub sweep: Vec<(f64, f64)>,
    /// Adds the static Schrödinger bridge value to each sweep row.
    #[serde(default)]
    pub sinkhorn: bool,
    /// Directory that relative marginal paths are resolved against.
    #[serde(skip)]
    pub base: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, SbbError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SbbError::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| SbbError::InvalidConfig(format!("config {}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), SbbError> {
        self.solver.validate()?;
        if !(self.duality_budget >= 0.0) {
            return Err(SbbError::InvalidConfig(format!("duality_budget must be >= 0, got {}", self.duality_budget)));
        }
        for &(beta, horizon) in &self.sweep {
            SolverConfig { beta, horizon, ..self.solver.clone() }.validate()?;
        }
        Ok(())
    }
}

/// Parses `--beta`: comma-separated entries, each `beta` or `beta:T`. Bare values take
/// `default_t`.
pub fn parse_beta_list(s: &str, default_t: f64) -> Result<Vec<(f64, f64)>, SbbError> {
    let bad = |item: &str| SbbError::InvalidConfig(format!("bad --beta entry {item:?} (expected beta or beta:T)"));
    s.split(',')
        .map(str::trim)
        .filter(|item| !item.is_empty())
        .map(|item| {
            let (b, t) = match item.split_once(':') {
                Some((b, t)) => (b.trim().parse().map_err(|_| bad(item))?, t.trim().parse().map_err(|_| bad(item))?),
                None => (item.parse().map_err(|_| bad(item))?, default_t),
            };
            Ok((b, t))
        })
        .collect()
}
