//! Command-line surface for the toolkit: simulate paths, evaluate the
//! closed forms, query the exact oracle, and run verification suites.
//!
//! Output contract: stdout carries only the machine-readable payload
//! (JSON, CSV, or JSON-lines), byte-reproducible for a fixed seed across
//! runs and thread counts. The run manifest, including wall-clock timing,
//! goes to stderr as a single JSON object.
//!
//! Exit codes: 0 all hard checks pass, 1 a hard verification check failed,
//! 2 invalid parameters, 3 oracle budget exceeded.

use std::io::Write;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ksum::mc::{CanonicalEcho, Check, CheckKind};
use ksum::{
    exact_moments, exact_pmf, sigma2_chain, sigma2_elephant, sigma2_ksum, sigma2_minimal,
    simulate_path, variance_trajectory, McError, ModelKind, ModelParams, OracleError,
    SimulationConfig, StatReport, Suite,
};

#[derive(Parser)]
#[command(
    name = "ksum",
    version,
    about = "Correlated Bernoulli sequences with finite memory: simulation, exact oracle, closed forms, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths and emit raw sequences (paths <= 100) or summary
    /// statistics.
    Simulate(SimulateArgs),
    /// Evaluate the closed-form limit variance for the chosen model.
    Sigma2(ModelArgs),
    /// Exact distribution of the success count (pmf, moments, or a
    /// variance trajectory).
    Oracle(OracleArgs),
    /// Run verification suites and stream JSON-lines verdicts.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelFlag {
    /// Canonical (p, theta, k) presentation.
    Ksum,
    /// Minimal-walk presentation (r, q, k).
    Mrw,
    /// Elephant-walk presentation (alpha, k).
    Erw,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "ksum")]
    model: ModelFlag,
    /// Success probability p (ksum).
    #[arg(long)]
    p: Option<f64>,
    /// Memory weight theta in [0, 1) (ksum).
    #[arg(long)]
    theta: Option<f64>,
    /// Memory length k >= 1 (all models).
    #[arg(long)]
    k: Option<usize>,
    /// Repeat probability after a success (mrw).
    #[arg(long)]
    r: Option<f64>,
    /// Repeat probability after a failure (mrw).
    #[arg(long)]
    q: Option<f64>,
    /// Repeat probability in [1/2, 1) (erw).
    #[arg(long)]
    alpha: Option<f64>,
}

impl ModelArgs {
    fn to_kind(&self) -> Result<ModelKind, Failure> {
        let missing = |flag: &str, model: &str| {
            Failure::params(format!("--{flag} is required for --model {model}"))
        };
        Ok(match self.model {
            ModelFlag::Ksum => ModelKind::KSum {
                p: self.p.ok_or_else(|| missing("p", "ksum"))?,
                theta: self.theta.ok_or_else(|| missing("theta", "ksum"))?,
                k: self.k.ok_or_else(|| missing("k", "ksum"))?,
            },
            ModelFlag::Mrw => ModelKind::Minimal {
                r: self.r.ok_or_else(|| missing("r", "mrw"))?,
                q: self.q.ok_or_else(|| missing("q", "mrw"))?,
                k: self.k.ok_or_else(|| missing("k", "mrw"))?,
            },
            ModelFlag::Erw => ModelKind::Elephant {
                alpha: self.alpha.ok_or_else(|| missing("alpha", "erw"))?,
                k: self.k.ok_or_else(|| missing("k", "erw"))?,
            },
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Path length.
    #[arg(long)]
    n: usize,
    /// Number of independent paths.
    #[arg(long, default_value_t = 1)]
    paths: usize,
    /// Master seed; drawn from the OS and recorded in the manifest when
    /// absent.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    out: OutputFormat,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Horizon for the pmf or moments.
    #[arg(long)]
    n: usize,
    /// Emit exact mean/variance/mass as JSON instead of the pmf CSV.
    #[arg(long)]
    moments: bool,
    /// Emit Var(S_i)/i for i = 1..N as JSON.
    #[arg(long, value_name = "N")]
    trajectory: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Suite: clt | fclt | com | lil | martingale | mapping | all.
    #[arg(long)]
    suite: String,
    /// Horizon per path.
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Number of paths.
    #[arg(long, default_value_t = 20000)]
    paths: usize,
    /// Master seed; drawn from the OS and recorded in the manifest when
    /// absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation grid in (0, 1], ascending.
    #[arg(long, value_delimiter = ',', default_values_t = ksum::mc::DEFAULT_GRID)]
    grid: Vec<f64>,
    /// Pass threshold for z-score checks, in standard errors.
    #[arg(long, default_value_t = ksum::mc::DEFAULT_SIGMA_LEVEL)]
    sigma_level: f64,
    /// Half-width of the covariance-ratio acceptance band.
    #[arg(long, default_value_t = ksum::mc::DEFAULT_FCLT_BAND)]
    fclt_band: f64,
    /// Worker threads for the Monte Carlo engine (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

/// A failed run with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn params(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn budget(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<McError> for Failure {
    fn from(err: McError) -> Self {
        match err {
            McError::Oracle(o) => o.into(),
            other => Failure::params(other.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(err: OracleError) -> Self {
        match err {
            OracleError::BudgetExceeded { .. } => Failure::budget(err.to_string()),
            OracleError::EmptyHorizon => Failure::params(err.to_string()),
        }
    }
}

impl From<ksum::ParamError> for Failure {
    fn from(err: ksum::ParamError) -> Self {
        Failure::params(err.to_string())
    }
}

#[derive(Serialize)]
struct Verdicts {
    passed: usize,
    failed: usize,
    warnings: usize,
}

/// Reproducibility record emitted to stderr after every command.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    version: &'static str,
    model: &'a ModelKind,
    canonical: CanonicalEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    suite: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fclt_band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    wall_clock_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdicts: Option<Verdicts>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'static str, model: &'a ModelKind, params: &ModelParams) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            model,
            canonical: CanonicalEcho::from(params),
            n: None,
            paths: None,
            master_seed: None,
            suite: None,
            grid: None,
            sigma_level: None,
            fclt_band: None,
            threads: None,
            wall_clock_ms: 0,
            verdicts: None,
        }
    }

    fn emit(mut self, started: Instant) {
        self.wall_clock_ms = started.elapsed().as_millis();
        eprintln!("{}", serde_json::to_string(&self).expect("manifest serializes"));
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sigma2(args) => cmd_sigma2(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(rand::random::<u64>)
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct SequenceRecord {
    path: usize,
    outcomes: Vec<u8>,
    s_n: u32,
    c_n: f64,
}

#[derive(Serialize)]
struct RawOutput<'a> {
    model: &'a ModelKind,
    canonical: CanonicalEcho,
    n: usize,
    paths: usize,
    master_seed: u64,
    sequences: Vec<SequenceRecord>,
}

#[derive(Serialize)]
struct ScaledSummary {
    endpoint_mean: f64,
    endpoint_variance: f64,
    com_mean: f64,
    com_variance: f64,
    martingale_variance: f64,
}

#[derive(Serialize)]
struct SummaryOutput<'a> {
    model: &'a ModelKind,
    canonical: CanonicalEcho,
    n: usize,
    paths: usize,
    master_seed: u64,
    mean_s_n: f64,
    var_s_n: f64,
    mean_c_n_over_n: f64,
    /// Statistics of the rescaled quantities sqrt(n)(S_n/n - p),
    /// sqrt(n)(C_n/n - p/2), and M_n/sqrt(n).
    scaled: ScaledSummary,
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let kind = args.model.to_kind()?;
    let params = kind.canonical()?;
    if args.n == 0 {
        return Err(Failure::params("--n must be at least 1"));
    }
    if args.paths == 0 {
        return Err(Failure::params("--paths must be at least 1"));
    }
    let seed = resolve_seed(args.seed);

    if args.paths <= 100 {
        let sequences: Vec<SequenceRecord> = (0..args.paths)
            .map(|idx| {
                let mut rng = ksum::path_rng(seed, idx as u64);
                let path = simulate_path(&params, args.n, &mut rng);
                SequenceRecord {
                    path: idx,
                    s_n: path.total(),
                    c_n: path.center_of_mass,
                    outcomes: path.outcomes,
                }
            })
            .collect();
        match args.out {
            OutputFormat::Json => {
                let out = RawOutput {
                    model: &kind,
                    canonical: CanonicalEcho::from(&params),
                    n: args.n,
                    paths: args.paths,
                    master_seed: seed,
                    sequences,
                };
                println!("{}", serde_json::to_string(&out).expect("serializes"));
            }
            OutputFormat::Csv => {
                let mut stdout = std::io::stdout().lock();
                writeln!(stdout, "path,outcomes,s_n,c_n").unwrap();
                for rec in &sequences {
                    let bits: String =
                        rec.outcomes.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect();
                    writeln!(stdout, "{},{},{},{}", rec.path, bits, rec.s_n, rec.c_n).unwrap();
                }
            }
        }
    } else {
        let config = SimulationConfig::new(kind, args.n, args.paths, seed).with_grid(vec![1.0]);
        let stats = ksum::run_batch(&config)?;
        let sqrt_n = (args.n as f64).sqrt();
        let mean_s_n = args.n as f64 * params.p() + sqrt_n * stats.endpoint.mean();
        let var_s_n = args.n as f64 * stats.endpoint.variance();
        let mean_c_n_over_n = params.p() / 2.0 + stats.com.mean() / sqrt_n;
        let out = SummaryOutput {
            model: &kind,
            canonical: CanonicalEcho::from(&params),
            n: args.n,
            paths: args.paths,
            master_seed: seed,
            mean_s_n,
            var_s_n,
            mean_c_n_over_n,
            scaled: ScaledSummary {
                endpoint_mean: stats.endpoint.mean(),
                endpoint_variance: stats.endpoint.variance(),
                com_mean: stats.com.mean(),
                com_variance: stats.com.variance(),
                martingale_variance: stats.martingale.variance(),
            },
        };
        match args.out {
            OutputFormat::Json => {
                println!("{}", serde_json::to_string(&out).expect("serializes"));
            }
            OutputFormat::Csv => {
                let mut stdout = std::io::stdout().lock();
                writeln!(stdout, "paths,n,mean_s_n,var_s_n,mean_c_n_over_n").unwrap();
                writeln!(
                    stdout,
                    "{},{},{},{},{}",
                    args.paths, args.n, mean_s_n, var_s_n, mean_c_n_over_n
                )
                .unwrap();
            }
        }
    }

    let mut manifest = Manifest::new("simulate", &kind, &params);
    manifest.n = Some(args.n);
    manifest.paths = Some(args.paths);
    manifest.master_seed = Some(seed);
    manifest.emit(started);
    Ok(0)
}

// ---------------------------------------------------------------------
// sigma2
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct Sigma2Output<'a> {
    model: &'a ModelKind,
    canonical: CanonicalEcho,
    sigma2: f64,
    branch: ksum::Branch,
    /// Long-run variance of the stationary window chain (independent
    /// derivation; the exact oracle agrees with this value).
    sigma2_chain: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    direct_sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    paper_printed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    printed_matches: Option<bool>,
}

fn cmd_sigma2(args: ModelArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let kind = args.to_kind()?;
    let params = kind.canonical()?;
    let out = match kind {
        ModelKind::KSum { .. } => {
            let vr = sigma2_ksum(&params);
            Sigma2Output {
                model: &kind,
                canonical: CanonicalEcho::from(&params),
                sigma2: vr.sigma2,
                branch: vr.branch,
                sigma2_chain: sigma2_chain(&params),
                direct_sigma2: None,
                paper_printed: None,
                printed_matches: None,
            }
        }
        ModelKind::Minimal { r, q, k } => {
            let direct = sigma2_minimal(r, q, k)?;
            let vr = sigma2_ksum(&params);
            Sigma2Output {
                model: &kind,
                canonical: CanonicalEcho::from(&params),
                sigma2: vr.sigma2,
                branch: vr.branch,
                sigma2_chain: sigma2_chain(&params),
                direct_sigma2: Some(direct.sigma2),
                paper_printed: None,
                printed_matches: None,
            }
        }
        ModelKind::Elephant { alpha, k } => {
            let ev = sigma2_elephant(alpha, k)?;
            Sigma2Output {
                model: &kind,
                canonical: CanonicalEcho::from(&params),
                sigma2: ev.sigma2,
                branch: ev.branch,
                // +/-1 scale, comparable with sigma2
                sigma2_chain: 4.0 * sigma2_chain(&params),
                direct_sigma2: None,
                paper_printed: Some(ev.printed_sigma2),
                printed_matches: Some(ev.printed_matches),
            }
        }
    };
    println!("{}", serde_json::to_string(&out).expect("serializes"));
    Manifest::new("sigma2", &kind, &params).emit(started);
    Ok(0)
}

// ---------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct MomentsOutput<'a> {
    model: &'a ModelKind,
    canonical: CanonicalEcho,
    n: usize,
    mean: f64,
    variance: f64,
    mass: f64,
}

#[derive(Serialize)]
struct TrajectoryOutput<'a> {
    model: &'a ModelKind,
    canonical: CanonicalEcho,
    n_max: usize,
    sigma2: f64,
    sigma2_chain: f64,
    /// values[i] = Var(S_{i+1}) / (i+1)
    values: Vec<f64>,
}

fn cmd_oracle(args: OracleArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let kind = args.model.to_kind()?;
    let params = kind.canonical()?;

    if let Some(n_max) = args.trajectory {
        let values = variance_trajectory(&params, n_max)?;
        let out = TrajectoryOutput {
            model: &kind,
            canonical: CanonicalEcho::from(&params),
            n_max,
            sigma2: sigma2_ksum(&params).sigma2,
            sigma2_chain: sigma2_chain(&params),
            values,
        };
        println!("{}", serde_json::to_string(&out).expect("serializes"));
    } else if args.moments {
        let pmf = exact_pmf(&params, args.n)?;
        let (mean, variance) = exact_moments(&pmf);
        let out = MomentsOutput {
            model: &kind,
            canonical: CanonicalEcho::from(&params),
            n: args.n,
            mean,
            variance,
            mass: pmf.mass(),
        };
        println!("{}", serde_json::to_string(&out).expect("serializes"));
    } else {
        let pmf = exact_pmf(&params, args.n)?;
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "s,prob").unwrap();
        for (s, &prob) in pmf.probs.iter().enumerate() {
            writeln!(stdout, "{s},{prob}").unwrap();
        }
    }

    let mut manifest = Manifest::new("oracle", &kind, &params);
    manifest.n = Some(args.n);
    manifest.emit(started);
    Ok(0)
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

#[derive(Serialize)]
struct CheckLine<'a> {
    r#type: &'static str,
    suite: &'a str,
    name: &'a str,
    kind: CheckKind,
    estimate: f64,
    target: f64,
    stderr: Option<f64>,
    z: Option<f64>,
    tolerance: Option<f64>,
    pass: bool,
    hard: bool,
    note: Option<&'a str>,
}

impl<'a> CheckLine<'a> {
    fn new(suite: &'a str, check: &'a Check) -> Self {
        Self {
            r#type: "check",
            suite,
            name: &check.name,
            kind: check.kind,
            estimate: check.estimate,
            target: check.target,
            stderr: check.stderr,
            z: check.z,
            tolerance: check.tolerance,
            pass: check.pass,
            hard: check.hard,
            note: check.note.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    r#type: &'static str,
    suites: Vec<&'a str>,
    checks: usize,
    passed: usize,
    failed: usize,
    warnings: usize,
    pass: bool,
}

fn print_reports(reports: &[StatReport]) -> Verdicts {
    let mut stdout = std::io::stdout().lock();
    let mut passed = 0;
    let mut failed = 0;
    let mut warnings = 0;
    for report in reports {
        for check in &report.checks {
            if check.pass {
                passed += 1;
            } else if check.hard {
                failed += 1;
            } else {
                warnings += 1;
            }
            let line = CheckLine::new(&report.suite, check);
            writeln!(stdout, "{}", serde_json::to_string(&line).expect("serializes")).unwrap();
        }
    }
    let summary = SummaryLine {
        r#type: "summary",
        suites: reports.iter().map(|r| r.suite.as_str()).collect(),
        checks: passed + failed + warnings,
        passed,
        failed,
        warnings,
        pass: failed == 0,
    };
    writeln!(stdout, "{}", serde_json::to_string(&summary).expect("serializes")).unwrap();
    Verdicts { passed, failed, warnings }
}

fn cmd_verify(args: VerifyArgs) -> Result<i32, Failure> {
    let started = Instant::now();
    let kind = args.model.to_kind()?;
    let params = kind.canonical()?;
    let suite: Suite = args
        .suite
        .parse()
        .map_err(|e: String| Failure::params(format!("{e}; expected one of {:?}", Suite::ALL_NAMES)))?;
    let seed = resolve_seed(args.seed);

    let mut config = SimulationConfig::new(kind, args.n, args.paths, seed);
    config.grid = args.grid.clone();
    config.sigma_level = args.sigma_level;
    config.fclt_band = args.fclt_band;

    let reports = match args.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Failure::params(format!("thread pool: {e}")))?;
            pool.install(|| ksum::run_suite(&config, suite))?
        }
        None => ksum::run_suite(&config, suite)?,
    };

    let verdicts = print_reports(&reports);
    let exit = if verdicts.failed == 0 { 0 } else { 1 };

    let mut manifest = Manifest::new("verify", &kind, &params);
    manifest.n = Some(args.n);
    manifest.paths = Some(args.paths);
    manifest.master_seed = Some(seed);
    manifest.suite = Some(&args.suite);
    manifest.grid = Some(&args.grid);
    manifest.sigma_level = Some(args.sigma_level);
    manifest.fclt_band = Some(args.fclt_band);
    manifest.threads = args.threads;
    manifest.verdicts = Some(verdicts);
    manifest.emit(started);
    Ok(exit)
}
