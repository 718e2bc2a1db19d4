//! Versioned JSON run configurations; unknown fields are rejected.

use lawbound::certify::Schedule;
use lawbound::fields::Grid;
use lawbound::rollout::RolloutConfig;
use lawbound::sampler::KernelSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_VERSION: u32 = 1;

pub trait Versioned {
    fn version(&self) -> u32;
}

pub fn load<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg: T = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if cfg.version() != CONFIG_VERSION {
        return Err(format!("{}: unsupported config version {}", path.display(), cfg.version()).into());
    }
    Ok(cfg)
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn version(&self) -> u32 {
                self.version
            }
        }
    )*};
}

versioned!(GenConfig, SampleConfig, RolloutRun, CertifyConfig, PfodeConfig, ObservableConfig);

/// Divergence-free Gaussian ensemble with spectrum `|k|^{-(2s+d)}` up to `k_max`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub version: u32,
    pub grid: Grid,
    pub members: usize,
    pub s: f64,
    pub k_max: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub version: u32,
    pub kernel: KernelSpec,
    pub steps: usize,
}

/// Initial laws are two independent ensembles drawn from the same spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutRun {
    pub version: u32,
    pub members: usize,
    pub s: f64,
    pub k_max: usize,
    pub rollout: RolloutConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub version: u32,
    /// Number of product factors.
    pub k: usize,
    /// Resolution of the target drift.
    #[serde(rename = "K")]
    pub k_res: usize,
    #[serde(rename = "K_test")]
    pub k_test: usize,
    pub epsilon: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub grid: Grid,
    pub members: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfodeConfig {
    pub version: u32,
    pub schedule: Schedule,
    pub taus: Vec<f64>,
    /// Size of the learned-score perturbation.
    pub c: f64,
    pub samples: usize,
    pub rk4_steps: usize,
    #[serde(default)]
    pub mean0: Option<Vec<f64>>,
    /// Row-major covariance of the data law.
    #[serde(default)]
    pub cov0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub score_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub score_offset: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observable {
    /// Periodic Gaussian of width `width` at lattice point `point` on component `component`.
    Mollified { component: usize, point: usize, width: f64 },
    /// Inner product with a random divergence-free field band-limited to `k_test`.
    Inner { k_test: usize, seed: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub version: u32,
    pub observable: Observable,
}
