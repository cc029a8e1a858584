//! Command-line front end: configuration loading, discovery, validation, and
//! degree sweeps with reproducible on-disk artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sid::basis::{basis_size, MonomialBasis};
use sid::detector::{discover, DetectorOptions, ThresholdMode};
use sid::error::SidError;
use sid::report::{
    build_report, export, read_report, write_formulas, DiscoveryReport, ExportFormat, SnapOptions,
};
use sid::simulate::{monte_carlo_validate, McValidation};
use sid::systems::System;

/// Basis sizes above this require --allow-large.
const LARGE_BASIS_GATE: usize = 10_000;

const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_VALIDATION: i32 = 4;

#[derive(Parser)]
#[command(name = "sid", version, about = "Sparse invariant detection for polynomial ODE systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered systems with dimensions and known conserved quantities.
    ListSystems,
    /// Run the discovery pipeline from a config file and export artifacts.
    Discover(DiscoverArgs),
    /// Monte Carlo validation of a discovery report's invariants.
    Validate(ValidateArgs),
    /// Run discovery for a list of basis degrees and tabulate K, M, c.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct DiscoverArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Permit basis sizes above the desk-scale gate.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// TOML run configuration (validation options).
    #[arg(long)]
    config: PathBuf,
    /// Path to a report.json produced by discover.
    #[arg(long)]
    report: PathBuf,
    /// Output directory, defaulting to the report's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML run configuration (the degree key is ignored).
    #[arg(long)]
    config: PathBuf,
    /// Degrees to sweep, ascending: "1..4" (inclusive) or "1,2,3".
    #[arg(long)]
    degrees: String,
    /// Output directory for the sweep summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Permit basis sizes above the desk-scale gate.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    system: String,
    degree: u32,
    p: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    threshold: ThresholdConfig,
    #[serde(default)]
    sparsify: SparsifyConfig,
    #[serde(default)]
    snap: SnapConfig,
    #[serde(default)]
    validation: ValidationConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdConfig {
    eps: f64,
    mode: String,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            eps: 1e-8,
            mode: "abs".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SparsifyConfig {
    restarts: usize,
    sweeps: usize,
    tol: f64,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            restarts: 4,
            sweeps: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapConfig {
    max_den: i64,
    entry_tol: f64,
    conservation_tol: f64,
}

impl Default for SnapConfig {
    fn default() -> Self {
        let d = SnapOptions::default();
        SnapConfig {
            max_den: d.max_den,
            entry_tol: d.entry_tol,
            conservation_tol: d.conservation_tol,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidationConfig {
    n_cases: usize,
    horizon: Option<f64>,
    cv_threshold: f64,
    min_pass_fraction: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            n_cases: 100,
            horizon: None,
            cv_threshold: 1e-6,
            min_pass_fraction: 1.0,
        }
    }
}

impl RunConfig {
    fn load(path: &Path) -> Result<RunConfig, SidError> {
        let text = std::fs::read_to_string(path).map_err(|e| SidError::io(path, e))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| SidError::Config(format!("{}: {e}", path.display())))?;
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), SidError> {
        fn positive(name: &str, value: f64) -> Result<(), SidError> {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(SidError::Config(format!("{name} must be positive, got {value}")))
            }
        }
        if self.degree == 0 {
            return Err(SidError::Config("degree must be at least 1".into()));
        }
        if self.p == Some(0) {
            return Err(SidError::Config("p must be positive".into()));
        }
        positive("threshold.eps", self.threshold.eps)?;
        if ThresholdMode::parse(&self.threshold.mode).is_none() {
            return Err(SidError::Config(format!(
                "unknown threshold.mode {:?}; expected abs, rel, or gap",
                self.threshold.mode
            )));
        }
        if self.sparsify.sweeps == 0 {
            return Err(SidError::Config("sparsify.sweeps must be positive".into()));
        }
        positive("sparsify.tol", self.sparsify.tol)?;
        if self.snap.max_den < 1 {
            return Err(SidError::Config("snap.max_den must be at least 1".into()));
        }
        positive("snap.entry_tol", self.snap.entry_tol)?;
        if !(self.snap.conservation_tol >= 0.0) {
            return Err(SidError::Config(
                "snap.conservation_tol must be nonnegative".into(),
            ));
        }
        if self.validation.n_cases == 0 {
            return Err(SidError::Config("validation.n_cases must be positive".into()));
        }
        if let Some(h) = self.validation.horizon {
            positive("validation.horizon", h)?;
        }
        positive("validation.cv_threshold", self.validation.cv_threshold)?;
        if !(0.0..=1.0).contains(&self.validation.min_pass_fraction) {
            return Err(SidError::Config(
                "validation.min_pass_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    fn system(&self) -> Result<System, SidError> {
        System::by_name(&self.system).ok_or_else(|| {
            let known: Vec<&str> = System::registry().iter().map(|s| s.name()).collect();
            SidError::Config(format!(
                "unknown system {:?}; known systems: {}",
                self.system,
                known.join(", ")
            ))
        })
    }

    fn detector_options(&self) -> DetectorOptions {
        DetectorOptions {
            eps: self.threshold.eps,
            mode: ThresholdMode::parse(&self.threshold.mode).expect("mode checked"),
            restarts: self.sparsify.restarts,
            max_sweeps: self.sparsify.sweeps,
            sweep_tol: self.sparsify.tol,
            ..DetectorOptions::default()
        }
    }

    fn snap_options(&self) -> SnapOptions {
        SnapOptions {
            max_den: self.snap.max_den,
            entry_tol: self.snap.entry_tol,
            conservation_tol: self.snap.conservation_tol,
        }
    }
}

/// Timing and environment sidecar, kept out of report.json so reports stay
/// byte-identical across runs.
#[derive(Serialize)]
struct RunMeta {
    created_unix_s: u64,
    discover_ms: u128,
    report_ms: u128,
    export_ms: u128,
    threads: usize,
    version: &'static str,
}

fn exit_code_for(err: &SidError) -> i32 {
    match err {
        SidError::Config(_)
        | SidError::BasisTooLarge { .. }
        | SidError::Io { .. }
        | SidError::Json(_)
        | SidError::Csv(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn check_basis_gate(system: &System, degree: u32, allow_large: bool) -> Result<u128, SidError> {
    let k = basis_size(system.dim(), degree);
    if k > LARGE_BASIS_GATE as u128 && !allow_large {
        return Err(SidError::Config(format!(
            "basis for {} at degree {degree} has K = {k} > {LARGE_BASIS_GATE} terms; \
             pass --allow-large to run anyway",
            system.name()
        )));
    }
    Ok(k)
}

fn cmd_list_systems() -> i32 {
    for system in System::registry() {
        println!(
            "{}, d={}, known CQs: {}",
            system.name(),
            system.dim(),
            system.known_cq_catalog().len()
        );
    }
    0
}

fn default_out_dir(system: &System, degree: u32) -> PathBuf {
    PathBuf::from("sid_runs").join(format!("{}_deg{}", system.name(), degree))
}

fn run_discover(args: &DiscoverArgs) -> Result<i32, SidError> {
    let config = RunConfig::load(&args.config)?;
    let system = config.system()?;
    let k = check_basis_gate(&system, config.degree, args.allow_large)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| default_out_dir(&system, config.degree));

    let t0 = Instant::now();
    let discovery = discover(
        &system,
        config.degree,
        config.p,
        seed,
        &config.detector_options(),
    )?;
    let discover_ms = t0.elapsed().as_millis();

    let t1 = Instant::now();
    let report = build_report(&discovery, &config.snap_options())?;
    let report_ms = t1.elapsed().as_millis();

    let t2 = Instant::now();
    export(&report, &out, ExportFormat::Json)?;
    export(&report, &out, ExportFormat::Csv)?;
    write_formulas(&report, &out.join("formulas.txt"))?;
    let export_ms = t2.elapsed().as_millis();

    let meta = RunMeta {
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        discover_ms,
        report_ms,
        export_ms,
        threads: rayon::current_num_threads(),
        version: env!("CARGO_PKG_VERSION"),
    };
    let meta_text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(out.join("run_meta.json"), meta_text + "\n")
        .map_err(|e| SidError::io(&out.join("run_meta.json"), e))?;

    println!(
        "system {}, degree {}, K={}, P={}",
        system.name(),
        config.degree,
        k,
        report.p
    );
    println!("M={}, c={}", report.m, report.c);
    for (j, formula) in report.formulas.iter().enumerate() {
        println!("Q{} = {}", j + 1, formula);
    }
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    println!("artifacts written to {}", out.display());
    Ok(0)
}

fn validation_csv(mc: &McValidation, labels: &[String]) -> String {
    let mut text = String::from("case");
    for label in labels {
        text.push_str(&format!(",{label}"));
    }
    text.push('\n');
    for (case, cvs) in mc.per_case_cv.iter().enumerate() {
        text.push_str(&format!("{case}"));
        match cvs {
            Some(values) => {
                for v in values {
                    text.push_str(&format!(",{v}"));
                }
            }
            None => {
                for _ in labels {
                    text.push_str(",failed");
                }
            }
        }
        text.push('\n');
    }
    text
}

fn run_validate(args: &ValidateArgs) -> Result<i32, SidError> {
    let config = RunConfig::load(&args.config)?;
    let report: DiscoveryReport = read_report(&args.report)?;
    let system = System::by_name(&report.system).ok_or_else(|| {
        SidError::Config(format!("report names unknown system {:?}", report.system))
    })?;
    let basis = MonomialBasis::new(report.dim, report.degree)?;
    if basis.len() != report.k {
        return Err(SidError::Config(format!(
            "report K = {} does not match the rebuilt basis ({} terms)",
            report.k,
            basis.len()
        )));
    }
    let thetas: Vec<(String, Vec<f64>)> = report
        .theta3
        .iter()
        .enumerate()
        .map(|(j, col)| (format!("Q{}", j + 1), col.clone()))
        .collect();
    if thetas.is_empty() {
        return Err(SidError::Config(
            "report has no stage-3 invariants to validate".into(),
        ));
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let mc = monte_carlo_validate(
        &system,
        &thetas,
        &basis,
        config.validation.n_cases,
        seed,
        config.validation.cv_threshold,
        config.validation.horizon,
    )?;

    let out = args
        .out
        .clone()
        .or_else(|| args.report.parent().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| SidError::io(&out, e))?;
    let stats_text = serde_json::to_string_pretty(&mc)?;
    std::fs::write(out.join("validation.json"), stats_text + "\n")
        .map_err(|e| SidError::io(&out.join("validation.json"), e))?;
    let labels: Vec<String> = thetas.iter().map(|(l, _)| l.clone()).collect();
    std::fs::write(out.join("validation_cases.csv"), validation_csv(&mc, &labels))
        .map_err(|e| SidError::io(&out.join("validation_cases.csv"), e))?;

    let mut all_met = true;
    println!(
        "validated {} cases ({} failed integrations), horizon {}, CV threshold {:e}",
        mc.n_cases, mc.failed_cases, mc.horizon, mc.cv_threshold
    );
    for inv in &mc.per_invariant {
        let met = inv.pass_fraction >= config.validation.min_pass_fraction;
        all_met &= met;
        println!(
            "{}: max_cv={:e}, pass_fraction={:.3} {}",
            inv.label,
            inv.max_cv,
            inv.pass_fraction,
            if met { "PASS" } else { "FAIL" }
        );
    }
    println!("stats written to {}", out.display());
    Ok(if all_met { 0 } else { EXIT_VALIDATION })
}

fn parse_degrees(text: &str) -> Result<Vec<u32>, SidError> {
    let text = text.trim();
    let degrees: Vec<u32> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: u32 = lo
            .trim()
            .parse()
            .map_err(|_| SidError::Config(format!("bad degree range start {lo:?}")))?;
        let hi: u32 = hi
            .trim()
            .parse()
            .map_err(|_| SidError::Config(format!("bad degree range end {hi:?}")))?;
        if lo > hi {
            return Err(SidError::Config(format!("empty degree range {text:?}")));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|_| SidError::Config(format!("bad degree {part:?}")))
            })
            .collect::<Result<_, _>>()?
    };
    if degrees.is_empty() || degrees.contains(&0) {
        return Err(SidError::Config("degrees must be positive".into()));
    }
    if degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SidError::Config("degrees must be strictly ascending".into()));
    }
    Ok(degrees)
}

fn run_sweep(args: &SweepArgs) -> Result<i32, SidError> {
    let config = RunConfig::load(&args.config)?;
    let system = config.system()?;
    let degrees = parse_degrees(&args.degrees)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let opts = config.detector_options();

    println!("{:<8} {:<8} {:<6} {:<6}", "degree", "K", "M", "c");
    let mut rows: Vec<String> = vec!["degree,k,m,c,status".into()];
    for &degree in &degrees {
        let outcome = check_basis_gate(&system, degree, args.allow_large)
            .and_then(|_| discover(&system, degree, config.p, seed, &opts));
        match outcome {
            Ok(disc) => {
                println!("{:<8} {:<8} {:<6} {:<6}", degree, disc.k, disc.m, disc.c);
                rows.push(format!("{},{},{},{},ok", degree, disc.k, disc.m, disc.c));
            }
            Err(e) => {
                println!("{:<8} failed: {e}", degree);
                eprintln!("degree {degree} failed: {e}");
                rows.push(format!("{degree},,,,{e}"));
            }
        }
    }

    if let Some(out) = args.out.clone().or_else(|| config.out.clone()) {
        std::fs::create_dir_all(&out).map_err(|e| SidError::io(&out, e))?;
        let path = out.join("sweep.csv");
        std::fs::write(&path, rows.join("\n") + "\n").map_err(|e| SidError::io(&path, e))?;
        println!("summary written to {}", path.display());
    }
    Ok(0)
}

fn configure_threads() -> Result<(), SidError> {
    if let Ok(value) = std::env::var("SID_THREADS") {
        let n: usize = value.parse().map_err(|_| {
            SidError::Config(format!("SID_THREADS must be a positive integer, got {value:?}"))
        })?;
        if n == 0 {
            return Err(SidError::Config("SID_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| SidError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(EXIT_CONFIG);
    }
    let result = match &cli.command {
        Command::ListSystems => Ok(cmd_list_systems()),
        Command::Discover(args) => run_discover(args),
        Command::Validate(args) => run_validate(args),
        Command::Sweep(args) => run_sweep(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code_for(&e));
        }
    }
}
