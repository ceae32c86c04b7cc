use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::MLE_MAX_N;
use crate::models::thresholds;
use crate::tensor::MAX_ORDER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Bisection,
    Spiked,
    Hsbm,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Bisection => "bisection",
            Model::Spiked => "spiked",
            Model::Hsbm => "hsbm",
        }
    }

    pub(crate) fn id(self) -> u64 {
        match self {
            Model::Bisection => 1,
            Model::Spiked => 2,
            Model::Hsbm => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mle,
    Sdp,
    Cert,
    Spectral,
    Unfold,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Mle, Method::Sdp, Method::Cert, Method::Spectral, Method::Unfold];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mle => "mle",
            Method::Sdp => "sdp",
            Method::Cert => "cert",
            Method::Spectral => "spectral",
            Method::Unfold => "unfold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

/// A phase sweep: every `(n, grid value, method, trial)` combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: Model,
    pub ns: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Noise levels as multiples of the method's threshold. For `hsbm` the
    /// values are the intra-community edge density `a` directly.
    pub sigma_grid: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inter-community edge density `b` of the hypergraph model.
    #[serde(default = "default_hsbm_b")]
    pub hsbm_b: f64,
    /// Absolute threshold overriding the per-method default.
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Record wall-clock times; off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default = "default_time_limit")]
    pub trial_time_limit_s: f64,
    /// Execution detail; not written to outputs so thread count cannot change them.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

fn default_k() -> usize {
    4
}

fn default_hsbm_b() -> f64 {
    1.0
}

fn default_time_limit() -> f64 {
    120.0
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl SweepConfig {
    pub fn new(model: Model, ns: Vec<usize>, sigma_grid: Vec<f64>, methods: Vec<Method>, trials: usize) -> Self {
        Self {
            model,
            ns,
            k: default_k(),
            sigma_grid,
            methods,
            trials,
            seed: 0,
            hsbm_b: default_hsbm_b(),
            threshold: None,
            timing: false,
            trial_time_limit_s: default_time_limit(),
            threads: None,
            out: None,
            format: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return config_err("trials must be at least 1");
        }
        if self.ns.is_empty() || self.sigma_grid.is_empty() || self.methods.is_empty() {
            return config_err("n list, sigma grid and methods must be non-empty");
        }
        if let Some(v) = self.sigma_grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return config_err(format!("grid values must be finite and non-negative, got {v}"));
        }
        if !(2..=MAX_ORDER).contains(&self.k) {
            return config_err(format!("k must lie in 2..={MAX_ORDER}, got {}", self.k));
        }
        if self.model != Model::Bisection && self.k != 4 {
            return config_err(format!("the {} model is order 4, got k = {}", self.model.name(), self.k));
        }
        for &n in &self.ns {
            if n < 4 || n % 2 == 1 {
                return config_err(format!("n must be even and at least 4, got {n}"));
            }
        }
        let max_n = self.ns.iter().copied().max().unwrap_or(0);
        if self.methods.contains(&Method::Mle) && max_n > MLE_MAX_N {
            return config_err(format!("mle is limited to n <= {MLE_MAX_N}, got n = {max_n}"));
        }
        if self.methods.contains(&Method::Unfold) && self.k != 4 {
            return config_err(format!("unfold needs k = 4, got k = {}", self.k));
        }
        if self.model == Model::Hsbm && !(self.hsbm_b.is_finite() && self.hsbm_b >= 0.0) {
            return config_err(format!("hsbm b must be finite and non-negative, got {}", self.hsbm_b));
        }
        if let Some(t) = self.threshold {
            if !(t.is_finite() && t > 0.0) {
                return config_err(format!("threshold must be finite and positive, got {t}"));
            }
        }
        if !(self.trial_time_limit_s.is_finite() && self.trial_time_limit_s > 0.0) {
            return config_err("trial time limit must be positive");
        }
        if self.threads == Some(0) {
            return config_err("threads must be at least 1");
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return config_err("methods must not repeat");
        }
        Ok(())
    }

    pub fn time_limit(&self) -> Duration {
        Duration::from_secs_f64(self.trial_time_limit_s)
    }

    pub fn output_format(&self) -> OutputFormat {
        self.format.unwrap_or_else(|| self.out.as_deref().map_or(OutputFormat::Csv, OutputFormat::infer))
    }

    /// Unit in which the grid is expressed for `(n, method)`.
    pub fn threshold_for(&self, n: usize, method: Method) -> f64 {
        if let Some(t) = self.threshold {
            return t;
        }
        default_threshold(self.model, n, self.k, method)
    }
}

/// Bisection: `σ*` for the MLE and `σ*₍₂₎` for the matrix methods. Spiked:
/// `λ*` for the MLE, `n/√ln n` for the certificate, `n` for the spectral
/// methods. Hypergraph grids are absolute.
pub fn default_threshold(model: Model, n: usize, k: usize, method: Method) -> f64 {
    let nf = n as f64;
    match model {
        Model::Bisection => {
            let t = thresholds(n, k);
            if method == Method::Mle {
                t.sigma_star
            } else {
                t.sigma_star_trunc
            }
        }
        Model::Spiked => match method {
            Method::Mle => thresholds(n, 4).lambda_star,
            Method::Cert => nf / nf.ln().sqrt(),
            _ => nf,
        },
        Model::Hsbm => 1.0,
    }
}
