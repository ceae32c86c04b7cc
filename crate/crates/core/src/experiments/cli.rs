use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::json;

use super::config::{default_threshold, Method, Model, OutputFormat, SweepConfig};
use super::output::{sos_to_json, sweep_bytes, write_output};
use super::sos_scaling::{median_values, run_sos_scaling, SosScalingConfig};
use super::sweep::run_phase_sweep;
use crate::error::{Error, Result};
use crate::estimators::{pair_contraction, spectral_round, truncate_to_q, unfold_recover, QMatrix, MLE_MAX_N};
use crate::models::{gen_bisection, gen_hsbm, gen_spiked, thresholds};
use crate::sdp::{certify, flatten_certify};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spiked-bisect", version, about = "Recovery sweeps and SoS lower bounds for planted tensor models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte-Carlo sweep over a noise grid for a set of methods.
    Sweep(SweepArgs),
    /// Degree-4 SoS lower bound on the noise polynomial across n and seeds.
    SosScaling(SosArgs),
    /// Builds one instance and prints the certificate of its spectral candidate.
    Certify(CertifyArgs),
    /// Prints the closed-form thresholds.
    Thresholds(ThresholdArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON file with a sweep configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long = "n", value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long)]
    k: Option<usize>,
    /// Noise levels as threshold multiples (`a` values for hsbm).
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// Defaults to every method applicable to the configuration.
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; `.json` selects JSON. Defaults to CSV on stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Inter-community density `b` for hsbm.
    #[arg(long)]
    hsbm_b: Option<f64>,
    /// Absolute threshold replacing the per-method default.
    #[arg(long)]
    threshold: Option<f64>,
    /// Record wall-clock times (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Per-trial wall-clock limit in seconds.
    #[arg(long)]
    trial_time_limit: Option<f64>,
    /// Worker threads (overrides SPIKED_BISECT_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress the per-cell summary lines.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct SosArgs {
    #[arg(long = "n", value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Initial mixing weight; defaults to 1/(n (ln n)^0.7).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 6)]
    max_retries: usize,
    /// Also report ψ[f] − f(y) for the rank-one model at σ = n (ln n)^P.
    #[arg(long)]
    gap_log_power: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output JSON file; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Noise level as a multiple of the certificate threshold (`a` for hsbm).
    #[arg(long, default_value_t = 0.5, conflicts_with = "sigma")]
    sigma_mult: f64,
    /// Absolute noise level.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    hsbm_b: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    #[arg(long = "n", value_delimiter = ',', default_values_t = [16, 32, 64, 128])]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
}

/// Parses `argv` (including the program name) and runs the subcommand.
///
/// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error,
/// 3 sweep finished with failed cells.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::SosScaling(a) => sos_scaling(a),
        Command::Certify(a) => certify_one(a),
        Command::Thresholds(a) => print_thresholds(a),
    };
    match result {
        Ok(code) => code,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_))) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn usage_error(subcommand: &str, msg: &str) -> i32 {
    let mut cmd = Cli::command();
    cmd.build();
    let usage = cmd.find_subcommand_mut(subcommand).map(|c| c.render_usage().to_string()).unwrap_or_default();
    eprintln!("error: {msg}\n\n{usage}\n\nFor more information, try '--help'.");
    EXIT_CONFIG
}

fn build_sweep_config(a: &SweepArgs) -> std::result::Result<SweepConfig, String> {
    let mut config = match &a.config {
        Some(path) => SweepConfig::from_json_file(path).map_err(|e| e.to_string())?,
        None => {
            let model = a.model.ok_or("the following required argument was not provided: --model <MODEL>")?;
            let ns = a.ns.clone().ok_or("the following required argument was not provided: --n <NS>")?;
            let grid =
                a.sigma_grid.clone().ok_or("the following required argument was not provided: --sigma-grid <GRID>")?;
            SweepConfig::new(model, ns, grid, Vec::new(), 10)
        }
    };
    if let Some(m) = a.model {
        config.model = m;
    }
    if let Some(ns) = &a.ns {
        config.ns = ns.clone();
    }
    if let Some(k) = a.k {
        config.k = k;
    }
    if let Some(g) = &a.sigma_grid {
        config.sigma_grid = g.clone();
    }
    if let Some(m) = &a.methods {
        config.methods = m.clone();
    }
    if let Some(t) = a.trials {
        config.trials = t;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(o) = &a.out {
        config.out = Some(o.clone());
    }
    if let Some(f) = a.format {
        config.format = Some(f);
    }
    if let Some(b) = a.hsbm_b {
        config.hsbm_b = b;
    }
    if let Some(t) = a.threshold {
        config.threshold = Some(t);
    }
    if a.timing {
        config.timing = true;
    }
    if let Some(l) = a.trial_time_limit {
        config.trial_time_limit_s = l;
    }
    if let Some(t) = a.threads {
        config.threads = Some(t);
    }
    if config.methods.is_empty() {
        let max_n = config.ns.iter().copied().max().unwrap_or(0);
        config.methods = Method::ALL
            .into_iter()
            .filter(|&m| m != Method::Mle || max_n <= MLE_MAX_N)
            .filter(|&m| m != Method::Unfold || config.k == 4)
            .collect();
    }
    Ok(config)
}

fn sweep(a: SweepArgs) -> Result<i32> {
    let config = match build_sweep_config(&a) {
        Ok(c) => c,
        Err(msg) => return Ok(usage_error("sweep", &msg)),
    };
    config.validate()?;
    let out = run_phase_sweep(&config)?;
    if !a.quiet {
        for agg in &out.aggregates {
            eprintln!("{}", agg.summary_line());
        }
    }
    write_output(config.out.as_deref(), &sweep_bytes(&out, config.output_format())?)?;
    Ok(if out.has_errors() { EXIT_PARTIAL } else { EXIT_OK })
}

fn sos_scaling(a: SosArgs) -> Result<i32> {
    let config = SosScalingConfig {
        ns: a.ns,
        seeds: a.seeds,
        seed: a.seed,
        epsilon: a.epsilon,
        max_retries: a.max_retries,
        gap_log_power: a.gap_log_power,
        threads: a.threads,
    };
    let records = run_sos_scaling(&config)?;
    if !a.quiet {
        for (n, median) in median_values(&config, &records) {
            let at_n: Vec<_> = records.iter().filter(|r| r.n == n).collect();
            let valid = at_n.iter().filter(|r| r.valid).count();
            let mut line = format!("sos n={n}: valid={valid}/{}", at_n.len());
            if let Some(m) = median {
                line.push_str(&format!(" median_value={m:.6e}"));
            }
            if config.gap_log_power.is_some() {
                let wins = at_n.iter().filter(|r| r.gap.is_some_and(|g| g > 0.0)).count();
                line.push_str(&format!(" gap_positive={wins}/{valid}"));
            }
            eprintln!("{line}");
        }
    }
    write_output(a.out.as_deref(), &sos_to_json(&records)?)?;
    let failed = records.iter().any(|r| r.status != "ok");
    Ok(if failed { EXIT_PARTIAL } else { EXIT_OK })
}

fn certify_one(a: CertifyArgs) -> Result<i32> {
    let sigma = a.sigma.unwrap_or_else(|| a.sigma_mult * default_threshold(a.model, a.n, a.k, Method::Cert));
    let report = match a.model {
        Model::Bisection => {
            let inst = gen_bisection(a.n, a.k, sigma, a.seed)?;
            let q = truncate_to_q(&inst.observation, a.k)?;
            let candidate = spectral_round(&q)?;
            let cert = certify(&q, &candidate)?;
            json!({ "instance": inst.header(), "candidate_overlap": candidate.overlap(&inst.truth), "certificate": cert })
        }
        Model::Spiked => {
            let inst = gen_spiked(a.n, sigma, a.seed)?;
            let candidate = unfold_recover(&inst.observation)?;
            let cert = flatten_certify(&inst.observation, &candidate)?;
            let contraction = spectral_round(&pair_contraction(&inst.observation)?)?;
            json!({
                "instance": inst.header(),
                "candidate_overlap": candidate.overlap(&inst.truth),
                "pair_contraction_overlap": contraction.overlap(&inst.truth),
                "certificate": cert,
            })
        }
        Model::Hsbm => {
            let h = gen_hsbm(a.n, sigma, a.hsbm_b, a.seed)?;
            let adjacency = crate::estimators::multigraph_adjacency(&h);
            let q = QMatrix::new(nalgebra::DMatrix::from_fn(a.n, a.n, |i, j| adjacency[(i, j)] as f64), 4)?;
            let candidate = spectral_round(&q)?;
            let cert = certify(&q, &candidate)?;
            json!({
                "instance": h.header(),
                "edges": h.edges.len(),
                "candidate_overlap": candidate.overlap(&h.truth),
                "certificate": cert,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_OK)
}

fn print_thresholds(a: ThresholdArgs) -> Result<i32> {
    if a.k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {}", a.k)));
    }
    if let Some(n) = a.ns.iter().find(|&&n| n < 3) {
        return Err(Error::Config(format!("n must be at least 3, got {n}")));
    }
    println!("{:>6} {:>3} {:>14} {:>14} {:>14}", "n", "k", "sigma_star", "sigma_star_2", "lambda_star");
    for &n in &a.ns {
        let t = thresholds(n, a.k);
        println!("{:>6} {:>3} {:>14.4} {:>14.4} {:>14.4}", n, a.k, t.sigma_star, t.sigma_star_trunc, t.lambda_star);
    }
    Ok(EXIT_OK)
}
