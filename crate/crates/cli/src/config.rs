//! TOML configuration files. Relative paths inside a config resolve
//! against the config file's directory.

use std::path::{Path, PathBuf};

use addsvm::measure::load_csv;
use addsvm::robustness::smooth_proxy;
use addsvm::simlab::gen_sim;
use addsvm::{DiscreteMeasure, Error, KernelSpec, LossSpec, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

pub fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn default_target() -> String {
    "y".into()
}

/// Solver settings shared by every config with training.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: Option<f64>,
    pub kkt_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
}

impl SolverConfig {
    pub fn options(&self) -> addsvm::TrainOptions {
        let d = addsvm::TrainOptions::default();
        addsvm::TrainOptions {
            tol: self.tol.unwrap_or(d.tol),
            kkt_tol: self.kkt_tol.unwrap_or(d.kkt_tol),
            max_sweeps: self.max_sweeps.unwrap_or(d.max_sweeps),
            ..d
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub kernel: KernelSpec,
    pub loss: LossSpec,
    pub lambda: f64,
    #[serde(default = "default_target")]
    pub target: String,
    pub features: Option<Vec<String>>,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Where a measure comes from.
#[derive(Debug, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSource {
    /// Empirical measure of a CSV file.
    Csv {
        path: PathBuf,
        #[serde(default = "default_target")]
        target: String,
        features: Option<Vec<String>>,
    },
    /// Explicit atoms; weights default to uniform.
    Points {
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        w: Option<Vec<f64>>,
    },
    /// Empirical measure of the simulated model on `[0,1]²`.
    Sim {
        n: usize,
        seed: u64,
        #[serde(default = "one")]
        noise_scale: f64,
    },
    /// Smooth-proxy measure with a prescribed pinball SVM (needs `tau`,
    /// `lambda` and `kernel` from the enclosing config).
    SmoothProxy {
        inputs: Vec<Vec<f64>>,
        alpha: Vec<f64>,
        #[serde(default = "default_half_levels")]
        half_levels: usize,
        #[serde(default = "one")]
        spread: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_half_levels() -> usize {
    100
}

/// Context for building measures that depend on the surrounding config.
pub struct ProxyContext<'a> {
    pub kernel: &'a KernelSpec,
    pub tau: Option<f64>,
    pub lambda: f64,
}

impl MeasureSource {
    pub fn build(&self, field: &str, base: &Path, ctx: &ProxyContext) -> Result<DiscreteMeasure> {
        let named = |e: Error| match e {
            Error::Input(m) => Error::Input(format!("`{field}`: {m}")),
            other => other,
        };
        match self {
            MeasureSource::Csv { path, target, features } => {
                Ok(load_csv(base.join(path), target, features.as_deref())?.0)
            }
            MeasureSource::Points { x, y, w } => {
                if x.len() != y.len() {
                    return Err(Error::Input(format!("`{field}`: {} inputs but {} targets", x.len(), y.len())));
                }
                let pts: Vec<(Vec<f64>, f64)> = x.iter().cloned().zip(y.iter().copied()).collect();
                DiscreteMeasure::from_points(&pts, w.as_deref()).map_err(named)
            }
            MeasureSource::Sim { n, seed, noise_scale } => {
                if *n == 0 {
                    return Err(Error::Input(format!("`{field}.n` must be positive")));
                }
                gen_sim(*n, *seed, *noise_scale).to_measure().map_err(named)
            }
            MeasureSource::SmoothProxy {
                inputs,
                alpha,
                half_levels,
                spread,
            } => {
                let tau = ctx
                    .tau
                    .ok_or_else(|| Error::Input(format!("`{field}`: smooth-proxy needs a pinball loss")))?;
                smooth_proxy(ctx.kernel, tau, ctx.lambda, inputs, alpha, *half_levels, *spread).map_err(named)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasConfig {
    pub kernel: KernelSpec,
    pub loss: LossSpec,
    pub lambda: f64,
    #[serde(default = "default_bias_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Per-coordinate `[lo, hi]`; defaults to the bounding box of both
    /// supports.
    pub domain: Option<Vec<[f64; 2]>>,
    pub p: MeasureSource,
    pub q: MeasureSource,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_bias_eps() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

fn default_probes() -> usize {
    10_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BifConfig {
    pub kernel: KernelSpec,
    pub tau: f64,
    pub lambda: f64,
    #[serde(default = "default_bif_eps")]
    pub eps: Vec<f64>,
    pub p: MeasureSource,
    pub q: MeasureSource,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_bif_eps() -> Vec<f64> {
    vec![0.1, 0.03, 0.01]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub kernel: KernelSpec,
    pub domain: Option<Vec<[f64; 2]>>,
}
