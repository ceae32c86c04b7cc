use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{derive_seed, gaussian_tensor, gen_spiked};
use crate::sos4::pseudoexp::{lifted_evaluate, SOS_MAX_N};
use crate::sos4::{sos_lower_bound, Schedule, SosBound};
use crate::tensor::{rank1_tensor, tensor_inner, DenseTensor, SpikeVector};

/// Seed-derivation tag distinguishing this study from the sweep models.
const SOS_STUDY_ID: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SosScalingConfig {
    pub ns: Vec<usize>,
    pub seeds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Initial mixing weight; `None` uses the default schedule.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// When set, also compare `ψ[f]` with `f(y)` for the rank-one model at
    /// `σ = n (ln n)^P`.
    #[serde(default)]
    pub gap_log_power: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_retries() -> usize {
    Schedule::default().max_retries
}

impl SosScalingConfig {
    pub fn new(ns: Vec<usize>, seeds: usize) -> Self {
        Self { ns, seeds, seed: 0, epsilon: None, max_retries: default_retries(), gap_log_power: None, threads: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be at least 1".into()));
        }
        if self.ns.is_empty() {
            return Err(Error::Config("n list must be non-empty".into()));
        }
        for &n in &self.ns {
            if n < 10 || n % 2 == 1 || n > SOS_MAX_N {
                return Err(Error::Config(format!("n must be even with 10 <= n <= {SOS_MAX_N}, got {n}")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(0.0..1.0).contains(&e) {
                return Err(Error::Config(format!("epsilon must lie in [0, 1), got {e}")));
            }
        }
        if let Some(p) = self.gap_log_power {
            if !p.is_finite() {
                return Err(Error::Config("gap log power must be finite".into()));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { epsilon: self.epsilon, max_retries: self.max_retries }
    }

    /// `σ = n (ln n)^P` when the gap comparison is enabled.
    pub fn gap_sigma(&self, n: usize) -> Option<f64> {
        self.gap_log_power.map(|p| n as f64 * (n as f64).ln().powf(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosRecord {
    pub n: usize,
    pub seed_index: usize,
    pub seed: u64,
    /// `ψ[⟨x⊗4, W⟩]`; absent when no valid pseudo-expectation was found.
    pub value: Option<f64>,
    pub valid: bool,
    pub epsilon: f64,
    pub attempts: usize,
    pub sigma: Option<f64>,
    /// `ψ[f] − f(y)` for `f(x) = ⟨x⊗4, y⊗4 + σW⟩`.
    pub gap: Option<f64>,
    pub psi_f: Option<f64>,
    pub f_truth: Option<f64>,
    pub status: String,
}

/// `ψ[f]` and `f(y)` for `f(x) = ⟨x⊗4, T⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParts {
    pub psi_f: f64,
    pub f_truth: f64,
}

impl GapParts {
    pub fn gap(&self) -> f64 {
        self.psi_f - self.f_truth
    }
}

/// Compares the bound's pseudo-expectation of `f(x) = ⟨x⊗4, y⊗4 + σW⟩` with
/// `f(y)`. `ψ[(yᵀx)⁴]` is evaluated exactly on the even lift of `ψ`.
pub fn sos_gap(bound: &SosBound, w: &DenseTensor, truth: &SpikeVector, sigma: f64) -> Result<Option<GapParts>> {
    let Some(psi) = bound.psi.as_ref() else {
        return Ok(None);
    };
    let spike = rank1_tensor(truth, 4)?;
    let psi_signal = lifted_evaluate(psi, &spike)?;
    let psi_f = psi_signal + sigma * bound.lifted_value;
    let f_truth = tensor_inner(&spike, &spike)? + sigma * tensor_inner(&spike, w)?;
    Ok(Some(GapParts { psi_f, f_truth }))
}

fn run_one(config: &SosScalingConfig, n: usize, seed_index: usize) -> SosRecord {
    let seed = derive_seed(&[config.seed, SOS_STUDY_ID, n as u64, seed_index as u64]);
    let sigma = config.gap_sigma(n);
    let mut record = SosRecord {
        n,
        seed_index,
        seed,
        value: None,
        valid: false,
        epsilon: f64::NAN,
        attempts: 0,
        sigma,
        gap: None,
        psi_f: None,
        f_truth: None,
        status: "ok".into(),
    };
    let outcome = (|| -> Result<()> {
        let w = gaussian_tensor(4, n, seed)?;
        let bound = sos_lower_bound(&w, &config.schedule())?;
        record.valid = bound.valid;
        record.value = bound.valid.then_some(bound.value);
        record.epsilon = bound.epsilon_used;
        record.attempts = bound.attempts;
        if let Some(sigma) = sigma {
            // Same seed: the spiked instance's noise is exactly `w`.
            let truth = gen_spiked(n, 0.0, seed)?.truth;
            if let Some(parts) = sos_gap(&bound, &w, &truth, sigma)? {
                record.gap = Some(parts.gap());
                record.psi_f = Some(parts.psi_f);
                record.f_truth = Some(parts.f_truth);
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        record.status = format!("error: {e}");
    }
    record
}

/// One record per `(n, seed index)`, ordered by `n` in config order then seed.
pub fn run_sos_scaling(config: &SosScalingConfig) -> Result<Vec<SosRecord>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config.ns.iter().flat_map(|&n| (0..config.seeds).map(move |s| (n, s))).collect();
    let run = || jobs.par_iter().map(|&(n, s)| run_one(config, n, s)).collect::<Vec<_>>();
    Ok(match super::sweep::resolve_threads(config.threads) {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build a pool of {threads} threads: {e}")))?
            .install(run),
        None => run(),
    })
}

/// Median of the valid values at each `n`, in config order.
pub fn median_values(config: &SosScalingConfig, records: &[SosRecord]) -> Vec<(usize, Option<f64>)> {
    config
        .ns
        .iter()
        .map(|&n| {
            let mut v: Vec<f64> = records.iter().filter(|r| r.n == n).filter_map(|r| r.value).collect();
            v.sort_by(f64::total_cmp);
            let median = match v.len() {
                0 => None,
                l if l % 2 == 1 => Some(v[l / 2]),
                l => Some(0.5 * (v[l / 2 - 1] + v[l / 2])),
            };
            (n, median)
        })
        .collect()
}
