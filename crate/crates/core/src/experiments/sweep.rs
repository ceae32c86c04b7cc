use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Method, Model, SweepConfig};
use crate::error::{Error, Result};
use crate::estimators::{
    mle_bruteforce, multigraph_adjacency, pair_contraction, spectral_round, truncate_to_q, unfold_recover, QMatrix,
    Signal,
};
use crate::models::{derive_seed, gen_bisection, gen_hsbm, gen_spiked, Instance};
use crate::sdp::{certify, flatten_certify, solve_sdp, SdpOptions};
use crate::tensor::{DenseTensor, SpikeVector};

/// Environment variable overriding the worker pool size.
pub const THREADS_ENV: &str = "SPIKED_BISECT_THREADS";

/// One method applied to one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model: Model,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub sigma_over_threshold: f64,
    pub method: Method,
    pub trial_index: i64,
    /// Exact recovery up to a global sign.
    pub success: bool,
    /// `|ŷᵀy| / n`; 0 for an uncertified candidate.
    pub overlap: f64,
    pub certified: bool,
    pub runtime_ms: u64,
    pub seed: u64,
    pub timed_out: bool,
    /// `ok`, or `error: <message>`.
    pub status: String,
}

/// Per-cell summary over all trials of one `(n, grid value, method)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub model: Model,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub sigma_over_threshold: f64,
    pub method: Method,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_overlap: f64,
    pub certified_rate: f64,
    pub timed_out: usize,
    pub errors: usize,
    pub runtime_ms: u64,
    pub cell_seed: u64,
}

impl CellAggregate {
    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "{} n={} k={} {}: sigma/thr={} sigma={:.4} success={}/{} ({:.3}) mean_overlap={:.4}",
            self.model.name(),
            self.n,
            self.k,
            self.method.name(),
            self.sigma_over_threshold,
            self.sigma,
            self.successes,
            self.trials,
            self.success_rate,
            self.mean_overlap,
        );
        if self.method == Method::Cert {
            line.push_str(&format!(" certified={:.3}", self.certified_rate));
        }
        if self.timed_out > 0 {
            line.push_str(&format!(" timed_out={}", self.timed_out));
        }
        if self.errors > 0 {
            line.push_str(&format!(" errors={}", self.errors));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub config: SweepConfig,
    /// Sorted by `(n, grid index, method, trial_index)` in config order.
    pub records: Vec<TrialRecord>,
    /// One per cell, in the same cell order.
    pub aggregates: Vec<CellAggregate>,
}

impl SweepOutput {
    pub fn has_errors(&self) -> bool {
        self.aggregates.iter().any(|a| a.errors > 0)
    }
}

/// Pool size: explicit setting, then the environment, then rayon's default.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&t| t > 0))
}

/// Runs every `(n, grid value, method, trial)` combination.
///
/// Trial `t` of grid point `g` at size `n` draws its instance from
/// `derive_seed([seed, model, n, k, g, t])`, so all methods see the same
/// labeling and noise and the output does not depend on scheduling.
pub fn run_phase_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    let jobs: Vec<(usize, usize, usize)> = config
        .ns
        .iter()
        .enumerate()
        .flat_map(|(ni, _)| {
            (0..config.sigma_grid.len()).flat_map(move |gi| (0..config.trials).map(move |t| (ni, gi, t)))
        })
        .collect();
    let run = || jobs.par_iter().map(|&(ni, gi, t)| run_job(config, ni, gi, t)).collect::<Vec<_>>();
    let per_job = match resolve_threads(config.threads) {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build a pool of {threads} threads: {e}")))?
            .install(run),
        None => run(),
    };

    let methods = config.methods.len();
    let mut records = Vec::with_capacity(jobs.len() * methods);
    let mut aggregates = Vec::new();
    // Jobs are laid out as (n, grid, trial); regroup to (n, grid, method, trial).
    for (cell_jobs, &(ni, gi, _)) in per_job.chunks(config.trials).zip(jobs.iter().step_by(config.trials)) {
        for mi in 0..methods {
            let cell: Vec<TrialRecord> = cell_jobs.iter().map(|job| job[mi].clone()).collect();
            aggregates.push(aggregate(config, ni, gi, &cell));
            records.extend(cell);
        }
    }
    Ok(SweepOutput { config: config.clone(), records, aggregates })
}

fn cell_seed(config: &SweepConfig, n: usize, gi: usize) -> u64 {
    derive_seed(&[config.seed, config.model.id(), n as u64, config.k as u64, gi as u64])
}

fn trial_seed(config: &SweepConfig, n: usize, gi: usize, trial: usize) -> u64 {
    derive_seed(&[config.seed, config.model.id(), n as u64, config.k as u64, gi as u64, trial as u64])
}

fn aggregate(config: &SweepConfig, ni: usize, gi: usize, cell: &[TrialRecord]) -> CellAggregate {
    let first = &cell[0];
    let trials = cell.len();
    let successes = cell.iter().filter(|r| r.success).count();
    CellAggregate {
        model: first.model,
        n: first.n,
        k: first.k,
        sigma: first.sigma,
        sigma_over_threshold: first.sigma_over_threshold,
        method: first.method,
        trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        mean_overlap: cell.iter().map(|r| r.overlap).sum::<f64>() / trials as f64,
        certified_rate: cell.iter().filter(|r| r.certified).count() as f64 / trials as f64,
        timed_out: cell.iter().filter(|r| r.timed_out).count(),
        errors: cell.iter().filter(|r| r.status != "ok").count(),
        runtime_ms: cell.iter().map(|r| r.runtime_ms).sum(),
        cell_seed: cell_seed(config, config.ns[ni], gi),
    }
}

/// Records for every configured method on trial `trial` of grid point `gi`.
fn run_job(config: &SweepConfig, ni: usize, gi: usize, trial: usize) -> Vec<TrialRecord> {
    let n = config.ns[ni];
    let mult = config.sigma_grid[gi];
    let seed = trial_seed(config, n, gi, trial);
    // Methods sharing a threshold share the instance.
    let mut cache: Vec<(f64, Result<Prepared>)> = Vec::new();
    config
        .methods
        .iter()
        .map(|&method| {
            let sigma = mult * config.threshold_for(n, method);
            let mut record = TrialRecord {
                model: config.model,
                n,
                k: config.k,
                sigma,
                sigma_over_threshold: mult,
                method,
                trial_index: trial as i64,
                success: false,
                overlap: 0.0,
                certified: false,
                runtime_ms: 0,
                seed,
                timed_out: false,
                status: "ok".into(),
            };
            let start = Instant::now();
            let idx = match cache.iter().position(|(s, _)| *s == sigma) {
                Some(i) => i,
                None => {
                    cache.push((sigma, Prepared::new(config, n, sigma, seed)));
                    cache.len() - 1
                }
            };
            let outcome = match &cache[idx].1 {
                Ok(prepared) => prepared.run(method, config.time_limit()),
                Err(e) => Err(Error::InvalidArgument(e.to_string())),
            };
            let elapsed = start.elapsed();
            match outcome {
                Ok(o) => {
                    record.overlap = o.overlap;
                    record.success = o.overlap == 1.0;
                    record.certified = o.certified;
                    record.timed_out = o.timed_out || elapsed > config.time_limit();
                }
                Err(e) => record.status = format!("error: {}", error_message(&e)),
            }
            if config.timing {
                record.runtime_ms = elapsed.as_millis() as u64;
            }
            record
        })
        .collect()
}

fn error_message(e: &Error) -> String {
    match e {
        Error::InvalidArgument(m) => m.clone(),
        other => other.to_string(),
    }
}

struct Outcome {
    overlap: f64,
    certified: bool,
    timed_out: bool,
}

/// An instance with its derived matrix.
struct Prepared {
    model: Model,
    k: usize,
    truth: SpikeVector,
    tensor: DenseTensor,
    q: QMatrix,
}

impl Prepared {
    fn new(config: &SweepConfig, n: usize, sigma: f64, seed: u64) -> Result<Self> {
        let instance = match config.model {
            Model::Bisection => Instance::Bisection(gen_bisection(n, config.k, sigma, seed)?),
            Model::Spiked => Instance::Spiked(gen_spiked(n, sigma, seed)?),
            Model::Hsbm => Instance::Hsbm(gen_hsbm(n, sigma, config.hsbm_b, seed)?),
        };
        Ok(match instance {
            Instance::Bisection(b) => {
                let q = truncate_to_q(&b.observation, b.k)?;
                Prepared { model: config.model, k: b.k, truth: b.truth, tensor: b.observation, q }
            }
            Instance::Spiked(s) => {
                let q = pair_contraction(&s.observation)?;
                Prepared { model: config.model, k: 4, truth: s.truth, tensor: s.observation, q }
            }
            Instance::Hsbm(h) => {
                let adjacency = multigraph_adjacency(&h);
                let q = QMatrix::new(DMatrix::from_fn(n, n, |i, j| adjacency[(i, j)] as f64), 4)?;
                let tensor = h.adjacency_tensor()?;
                Prepared { model: config.model, k: 4, truth: h.truth, tensor, q }
            }
        })
    }

    fn run(&self, method: Method, limit: Duration) -> Result<Outcome> {
        let plain = |estimate: SpikeVector| Outcome {
            overlap: estimate.overlap(&self.truth),
            certified: false,
            timed_out: false,
        };
        match method {
            Method::Mle => {
                let signal = if self.model == Model::Spiked { Signal::Rank1 } else { Signal::Eq };
                Ok(plain(mle_bruteforce(&self.tensor, self.k, signal, true)?))
            }
            Method::Spectral => Ok(plain(spectral_round(&self.q)?)),
            Method::Unfold => Ok(plain(unfold_recover(&self.tensor)?)),
            Method::Sdp => {
                let opts = SdpOptions { time_limit: Some(limit), ..SdpOptions::default() };
                let result = solve_sdp(&self.q, &opts)?;
                let estimate = spectral_round(&QMatrix::new(result.x, self.q.k)?)?;
                Ok(Outcome { timed_out: result.timed_out, ..plain(estimate) })
            }
            Method::Cert => {
                let (candidate, cert) = if self.model == Model::Spiked {
                    let candidate = unfold_recover(&self.tensor)?;
                    let cert = flatten_certify(&self.tensor, &candidate)?;
                    (candidate, cert)
                } else {
                    let candidate = spectral_round(&self.q)?;
                    let cert = certify(&self.q, &candidate)?;
                    (candidate, cert)
                };
                let overlap = if cert.valid { candidate.overlap(&self.truth) } else { 0.0 };
                Ok(Outcome { overlap, certified: cert.valid, timed_out: false })
            }
        }
    }
}

/// One-sided check that success counts do not increase along the grid.
///
/// Every pair `i < j` is tested with a pooled two-proportion z-test for
/// `p_j > p_i`; the trend is rejected if any pair is significant at level
/// `alpha`.
pub fn non_increasing_trend(counts: &[(usize, usize)], alpha: f64) -> bool {
    let z_crit = normal_quantile(1.0 - alpha);
    for i in 0..counts.len() {
        for j in i + 1..counts.len() {
            let (si, ni) = counts[i];
            let (sj, nj) = counts[j];
            let (pi, pj) = (si as f64 / ni as f64, sj as f64 / nj as f64);
            if pj <= pi {
                continue;
            }
            let pooled = (si + sj) as f64 / (ni + nj) as f64;
            let se = (pooled * (1.0 - pooled) * (1.0 / ni as f64 + 1.0 / nj as f64)).sqrt();
            if se == 0.0 || (pj - pi) / se > z_crit {
                return false;
            }
        }
    }
    true
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_table() {
        assert!((normal_quantile(0.99) - 2.3263).abs() < 1e-3);
        assert!((normal_quantile(0.5)).abs() < 1e-6);
    }

    #[test]
    fn trend_test_flags_clear_increase() {
        assert!(non_increasing_trend(&[(50, 50), (40, 50), (10, 50)], 0.01));
        assert!(non_increasing_trend(&[(20, 50), (24, 50)], 0.01));
        assert!(!non_increasing_trend(&[(5, 50), (45, 50)], 0.01));
    }
}
