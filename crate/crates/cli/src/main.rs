//! Command-line front end: parameter derivation, protocol experiments,
//! balls-into-bins privacy audits, and dataset generation, all reproducible
//! from an explicit seed.
//!
//! Exit codes: 0 success, 2 invalid parameters (one-line diagnostic naming
//! the violated precondition), 1 internal error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shuffledp::bib::{monte_carlo_privacy_loss_overlap, PrivacyAuditReport};
use shuffledp::codec;
use shuffledp::params::{default_bins, BibParams, FeParams, HhdParams};
use shuffledp::sim::{
    generate_dataset, run_fe_experiment, run_hhd_experiment, Dataset, DatasetSpec,
};

/// Fixed default seed; runs are reproducible unless `--entropy` asks for a
/// fresh one.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(
    name = "shuffledp",
    version,
    about = "Shuffle-model DP frequency estimation, heavy hitters, and privacy audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive and print protocol constants (frequency-estimation record, or
    /// the layered heavy-hitter record when --phi is given).
    Params(ParamsArgs),
    /// Run the frequency-estimation experiment and report per-trial max
    /// errors against the (alpha, beta) bound.
    Fe(FeArgs),
    /// Run the prefix-tree heavy-hitter experiment and report recall,
    /// false positives, and candidate-set growth.
    Hhd(HhdArgs),
    /// Audit the balls-into-bins privacy inequality, exactly (binomial
    /// convolution) or by Monte Carlo sampling of the likelihood ratio.
    AuditBib(AuditArgs),
    /// Generate a dataset file (bit-packed binary with provenance header).
    Dataset(DatasetArgs),
}

#[derive(Args, Clone)]
struct CommonOut {
    /// Seed for all randomness (default: the fixed constant 42)
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Draw the seed from OS entropy instead (the chosen seed is echoed to
    /// stderr so the run can be replayed)
    #[arg(long)]
    entropy: bool,
    /// Cap the worker-thread count (default: one per core)
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (default: stdout)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include wall-clock timings in reports (off by default so identical
    /// seeds produce byte-identical outputs)
    #[arg(long)]
    timings: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    /// Direct small-domain protocol (requires rho <= 1)
    Fe0,
    /// Hashed large-domain protocol
    Fe1,
    /// fe0 when its noise rate stays at most 1, else fe1
    Auto,
}

#[derive(Args, Clone)]
struct ProtocolArgs {
    /// Number of users
    #[arg(long)]
    n: u64,
    /// Domain size
    #[arg(long = "B")]
    domain: u64,
    /// Hash bin count for fe1 (default: max(2, n / ln^2 n), clamped to B/2)
    #[arg(long)]
    b: Option<u64>,
    /// Privacy parameter epsilon, 0 < eps <= 3 (default: 1)
    #[arg(long = "eps", default_value_t = 1.0)]
    epsilon: f64,
    /// Privacy parameter delta (default: 1/n^2)
    #[arg(long)]
    delta: Option<f64>,
    /// Honest-user fraction; the noise rate scales by its inverse (default: 1)
    #[arg(long, default_value_t = 1.0)]
    gamma_robust: f64,
}

impl ProtocolArgs {
    fn delta(&self) -> f64 {
        self.delta
            .unwrap_or_else(|| 1.0 / (self.n as f64 * self.n as f64))
    }

    fn bins(&self) -> u64 {
        self.b.unwrap_or_else(|| default_bins(self.n, self.domain))
    }

    fn fe_params(&self, variant: VariantArg) -> Result<FeParams, CliError> {
        let delta = self.delta();
        let params = match variant {
            VariantArg::Fe0 => {
                FeParams::fe0(self.n, self.domain, self.epsilon, delta, self.gamma_robust)?
            }
            VariantArg::Fe1 => FeParams::fe1(
                self.n,
                self.domain,
                self.bins(),
                self.epsilon,
                delta,
                self.gamma_robust,
            )?,
            VariantArg::Auto => {
                match FeParams::fe0(self.n, self.domain, self.epsilon, delta, self.gamma_robust) {
                    Ok(p) => p,
                    Err(shuffledp::Error::Config(_)) => FeParams::fe1(
                        self.n,
                        self.domain,
                        self.bins(),
                        self.epsilon,
                        delta,
                        self.gamma_robust,
                    )?,
                    Err(e) => return Err(e.into()),
                }
            }
        };
        Ok(params)
    }
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Protocol variant; auto picks fe0 only while rho <= 1
    #[arg(long, value_enum, default_value_t = VariantArg::Auto)]
    variant: VariantArg,
    /// Heavy-hitter threshold fraction; deriving the layered record
    #[arg(long)]
    phi: Option<f64>,
    /// Heavy-hitter failure probability (default: 0.1)
    #[arg(long, default_value_t = 0.1)]
    gamma_hh: f64,
    /// Subsampling constant; the concentration bound wants > 8 (default: 16)
    #[arg(long, default_value_t = 16.0)]
    c_sub: f64,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct DataSource {
    /// Synthetic distribution: uniform | zipf:EXP | planted:ELxCOUNT,...
    /// (planted fills the remainder uniformly)
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Read the dataset from a file written by `dataset` instead
    #[arg(long, conflicts_with = "dist")]
    data: Option<PathBuf>,
}

impl DataSource {
    fn load(&self, n: u64, domain: u64, seed: u64) -> Result<Dataset, CliError> {
        if let Some(path) = &self.data {
            let bytes = fs::read(path)?;
            return Ok(codec::decode_dataset(&bytes)?);
        }
        let spec = parse_dist(&self.dist, n)?;
        Ok(generate_dataset(&spec, n, domain, seed)?)
    }
}

#[derive(Args)]
struct FeArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Protocol variant; auto picks fe0 only while rho <= 1
    #[arg(long, value_enum, default_value_t = VariantArg::Auto)]
    variant: VariantArg,
    /// Accuracy confidence parameter (default: 0.1)
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Independent protocol runs (default: 20)
    #[arg(long, default_value_t = 20)]
    trials: u64,
    #[command(flatten)]
    source: DataSource,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct HhdArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Heavy-hitter threshold fraction (elements at frequency >= phi*n)
    #[arg(long)]
    phi: f64,
    /// Heavy-hitter failure probability (default: 0.1)
    #[arg(long, default_value_t = 0.1)]
    gamma_hh: f64,
    /// Subsampling constant; the concentration bound wants > 8 (default: 16)
    #[arg(long, default_value_t = 16.0)]
    c_sub: f64,
    /// Independent protocol runs (default: 10)
    #[arg(long, default_value_t = 10)]
    trials: u64,
    #[command(flatten)]
    source: DataSource,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AuditMode {
    /// Convolve the binomial noise laws (k + n capped at 10^4)
    Exact,
    /// Sample likelihood ratios from the mechanism
    MonteCarlo,
}

#[derive(Args)]
struct AuditArgs {
    /// Audit mode
    #[arg(long, value_enum, default_value_t = AuditMode::Exact)]
    mode: AuditMode,
    /// Total bin count
    #[arg(long)]
    m: u64,
    /// Special-bin count (default: 1)
    #[arg(long, default_value_t = 1)]
    s: u64,
    /// Fixed noisy-ball count (default: 0)
    #[arg(long, default_value_t = 0)]
    k: u64,
    /// Coin count (default: 0)
    #[arg(long, default_value_t = 0)]
    n: u64,
    /// Coin bias in [0, 1] (default: 0)
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Privacy parameter epsilon (default: 1)
    #[arg(long = "eps", default_value_t = 1.0)]
    epsilon: f64,
    /// Target delta recorded as the report's bound (default: 0.05)
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Monte Carlo sample count (default: 100000)
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Overlap |S intersect S'| of the audited neighbor pair
    /// (default: 0 when 2s <= m, else the forced minimum 2s - m)
    #[arg(long)]
    overlap: Option<u64>,
    #[command(flatten)]
    out: CommonOut,
}

#[derive(Args)]
struct DatasetArgs {
    /// Number of users
    #[arg(long)]
    n: u64,
    /// Domain size
    #[arg(long = "B")]
    domain: u64,
    /// Synthetic distribution: uniform | zipf:EXP | planted:ELxCOUNT,...
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[command(flatten)]
    out: CommonOut,
}

enum CliError {
    /// Precondition violations: exit 2.
    Invalid(String),
    /// Everything else: exit 1.
    Internal(String),
}

impl From<shuffledp::Error> for CliError {
    fn from(e: shuffledp::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("json error: {e}"))
    }
}

fn parse_dist(text: &str, n: u64) -> Result<DatasetSpec, CliError> {
    if text == "uniform" {
        return Ok(DatasetSpec::Uniform);
    }
    if let Some(exp) = text.strip_prefix("zipf:") {
        let exponent: f64 = exp
            .parse()
            .map_err(|_| CliError::Invalid(format!("invalid zipf exponent {exp:?}")))?;
        return Ok(DatasetSpec::Zipf { exponent });
    }
    if let Some(list) = text.strip_prefix("planted:") {
        let mut heavy = Vec::new();
        let mut planted = 0u64;
        for item in list.split(',').filter(|s| !s.is_empty()) {
            let (el, count) = item.split_once('x').ok_or_else(|| {
                CliError::Invalid(format!("planted items look like ELxCOUNT, got {item:?}"))
            })?;
            let element: u64 = el
                .parse()
                .map_err(|_| CliError::Invalid(format!("invalid planted element {el:?}")))?;
            let count: u64 = count
                .parse()
                .map_err(|_| CliError::Invalid(format!("invalid planted count {count:?}")))?;
            planted += count;
            heavy.push((element, count));
        }
        if planted > n {
            return Err(CliError::Invalid(format!(
                "planted counts sum to {planted}, above n = {n}"
            )));
        }
        return Ok(DatasetSpec::Planted { heavy, tail: n - planted });
    }
    Err(CliError::Invalid(format!(
        "unknown distribution {text:?}; expected uniform, zipf:EXP, or planted:ELxCOUNT,..."
    )))
}

fn resolve_seed(out: &CommonOut) -> u64 {
    if out.entropy {
        let seed: u64 = rand::random();
        eprintln!("seed: {seed}");
        seed
    } else {
        out.seed
    }
}

fn configure_threads(out: &CommonOut) -> Result<(), CliError> {
    if let Some(threads) = out.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn emit(out: &CommonOut, json: String, csv: Option<Vec<u8>>) -> Result<(), CliError> {
    let bytes = match (out.format, csv) {
        (Format::Json, _) => json.into_bytes(),
        (Format::Csv, Some(rows)) => rows,
        (Format::Csv, None) => {
            return Err(CliError::Invalid(
                "csv output is only available for experiment reports".into(),
            ))
        }
    };
    match &out.output {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn json_line<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn run_params(args: ParamsArgs) -> Result<(), CliError> {
    let json = match args.phi {
        Some(phi) => {
            let p = HhdParams::derive(
                args.protocol.n,
                args.protocol.domain,
                args.protocol.bins(),
                args.protocol.epsilon,
                args.protocol.delta(),
                phi,
                args.gamma_hh,
                args.c_sub,
                args.protocol.gamma_robust,
            )?;
            for w in &p.warnings {
                eprintln!("warning: {w}");
            }
            json_line(&p)?
        }
        None => json_line(&args.protocol.fe_params(args.variant)?)?,
    };
    emit(&args.out, json, None)
}

fn run_fe(args: FeArgs) -> Result<(), CliError> {
    configure_threads(&args.out)?;
    let seed = resolve_seed(&args.out);
    let params = args.protocol.fe_params(args.variant)?;
    let dataset = args.source.load(params.n, params.domain_size, seed)?;
    let mut report = run_fe_experiment(&dataset, &params, args.trials, args.beta, seed)?;
    if !args.out.timings {
        report.clear_timings();
    }
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    emit(&args.out, json_line(&report)?, Some(csv))
}

fn run_hhd(args: HhdArgs) -> Result<(), CliError> {
    configure_threads(&args.out)?;
    let seed = resolve_seed(&args.out);
    let params = HhdParams::derive(
        args.protocol.n,
        args.protocol.domain,
        args.protocol.bins(),
        args.protocol.epsilon,
        args.protocol.delta(),
        args.phi,
        args.gamma_hh,
        args.c_sub,
        args.protocol.gamma_robust,
    )?;
    for w in &params.warnings {
        eprintln!("warning: {w}");
    }
    let dataset = args.source.load(params.n, params.domain_size, seed)?;
    let report = run_hhd_experiment(&dataset, &params, args.trials, seed)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    emit(&args.out, json_line(&report)?, Some(csv))
}

fn run_audit(args: AuditArgs) -> Result<(), CliError> {
    configure_threads(&args.out)?;
    let seed = resolve_seed(&args.out);
    let params = BibParams::new(args.m, args.s, args.k, args.n, args.p)?;
    let report = match args.mode {
        AuditMode::Exact => PrivacyAuditReport::exact(&params, args.epsilon, args.delta)?,
        AuditMode::MonteCarlo => {
            // Default neighbor pair: as disjoint as the bin count allows,
            // which is the adversarial choice (smaller denominators).
            let overlap = args
                .overlap
                .unwrap_or_else(|| (2 * args.s).saturating_sub(args.m));
            monte_carlo_privacy_loss_overlap(
                &params,
                overlap,
                args.epsilon,
                args.delta,
                args.trials,
                seed,
            )?
        }
    };
    emit(&args.out, json_line(&report)?, None)
}

fn run_dataset(args: DatasetArgs) -> Result<(), CliError> {
    let seed = resolve_seed(&args.out);
    let spec = parse_dist(&args.dist, args.n)?;
    let dataset = generate_dataset(&spec, args.n, args.domain, seed)?;
    let bytes = codec::encode_dataset(&dataset);
    match &args.out.output {
        Some(path) => {
            fs::write(path, bytes)?;
            println!(
                "{}",
                serde_json::json!({
                    "path": path,
                    "n": args.n,
                    "B": args.domain,
                    "seed": seed,
                })
            );
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Params(args) => run_params(args),
        Command::Fe(args) => run_fe(args),
        Command::Hhd(args) => run_hhd(args),
        Command::AuditBib(args) => run_audit(args),
        Command::Dataset(args) => run_dataset(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
    }
}
