//! The `gamma` command line: JSON in, JSON out, plus a manifest beside
//! every written file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{estimate_error, AuditReport};
use crate::closed_forms::{
    gamma_box, gamma_ellipsoid, gamma_marginals, gamma_product, gamma_tensor_bounds, ClosedForm, ClosedFormKind,
    ClosedValue, TensorBase,
};
use crate::domain::{Domain, DomainKind};
use crate::duality::{search_certificate, DualCertificate};
use crate::error::Error;
use crate::linalg::PNorm;
use crate::mechanism::{account, run_gaussian_batch, Dataset, MechanismSpec, PrivacyParams};
use crate::solver::{solve_gamma, GammaSolution, SearchStrategy, SolveStatus, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
/// Fallback for `--threads`.
pub const THREADS_ENV: &str = "GAMMA_MECH_THREADS";
/// Points sampled from non-finite domains for certificates.
const CERTIFICATE_POINT_LIMIT: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "gamma", version, about = "Optimal Gaussian noise for unbiased private mean estimation")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (falls back to GAMMA_MECH_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute Gamma_p(K) and an optimal noise shape.
    Solve(SolveArgs),
    /// Search for a dual certificate lower-bounding Gamma_p(K).
    Certify(CertifyArgs),
    /// Evaluate a closed-form value or bounds.
    Oracle(OracleArgs),
    /// Run the Gaussian mechanism.
    Mech {
        #[command(subcommand)]
        command: MechCommand,
    },
    /// Monte Carlo error audit of the Gaussian mechanism.
    Audit(AuditArgs),
}

#[derive(Debug, Subcommand)]
pub enum MechCommand {
    /// Draw mechanism outputs into a binary file of little-endian f64 rows.
    Run(MechRunArgs),
}

fn parse_p(s: &str) -> Result<PNorm, String> {
    PNorm::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    SlidingLevel,
    Bisection,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, value_parser = parse_p)]
    pub p: PNorm,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value = "sliding-level")]
    pub strategy: StrategyArg,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, value_parser = parse_p)]
    pub p: PNorm,
    #[arg(long, default_value_t = 10_000)]
    pub budget: usize,
    /// A solution file used to seed one restart.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OracleKind {
    Box,
    Product,
    Tensor,
    Marginal,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaseArg {
    Cube,
    Ball,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum)]
    pub kind: OracleKind,
    #[arg(long, value_parser = parse_p, default_value = "2")]
    pub p: PNorm,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lo: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub hi: Vec<f64>,
    #[arg(long)]
    pub g1: Option<f64>,
    #[arg(long)]
    pub g2: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long, value_enum, default_value = "cube")]
    pub base: BaseArg,
    /// An ellipsoid domain file, for `--kind ellipsoid`.
    #[arg(long)]
    pub domain: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MechRunArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    /// Also report the (eps', delta)-DP guarantee.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = parse_p, default_value = "2")]
    pub p: PNorm,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eps: f64,
    /// Report file; `--out` is used when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// A solution together with the domain it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub domain: Domain,
    #[serde(flatten)]
    pub solution: GammaSolution,
}

/// A certificate together with the finite point set it weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateFile {
    pub domain: Domain,
    #[serde(flatten)]
    pub certificate: DualCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechRunSummary {
    pub draws: usize,
    pub dim: usize,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub samples: PathBuf,
    pub privacy: PrivacyParams,
    pub approx_dp: Option<PrivacyParams>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub version: String,
    pub wall_time_seconds: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io { path: PathBuf, message: String },
    Parse { path: PathBuf, message: String },
    Config(String),
    Infeasible,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Infeasible => EXIT_INFEASIBLE,
            _ => EXIT_CONFIG,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Lib(e) => (e.kind().to_string(), e.to_string()),
            Failure::Io { path, message } => ("io".into(), format!("{}: {message}", path.display())),
            Failure::Parse { path, message } => ("parse".into(), format!("{}: {message}", path.display())),
            Failure::Config(m) => ("config".into(), m.clone()),
            Failure::Infeasible => ("infeasible".into(), "no feasible point was found".into()),
        };
        serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": self.exit_code() } })
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn emit_error(value: &serde_json::Value) {
    let _ = writeln!(std::io::stderr(), "{value}");
}

/// Parses `argv` (including the program name) and runs the command.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            emit_error(&serde_json::json!({
                "error": { "kind": "usage", "message": e.render().to_string(), "exit_code": EXIT_USAGE }
            }));
            return EXIT_USAGE;
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, command_line) {
        Ok(code) => code,
        Err(f) => {
            emit_error(&f.to_json());
            f.exit_code()
        }
    }
}

fn threads_from_env(explicit: Option<usize>) -> CliResult<Option<usize>> {
    if explicit.is_some() {
        return Ok(explicit);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli, command_line: Vec<String>) -> CliResult<i32> {
    let threads = threads_from_env(cli.threads)?;
    if threads == Some(0) {
        return Err(Failure::Config("thread count must be positive".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Failure::Config(e.to_string()))?;
    let started = Instant::now();
    let mut ctx = Context { seed: cli.seed, out: cli.out.clone(), inputs: Vec::new(), outputs: Vec::new(), config: serde_json::Value::Null };
    let code = pool.install(|| match &cli.command {
        Command::Solve(a) => solve(&mut ctx, a),
        Command::Certify(a) => certify(&mut ctx, a),
        Command::Oracle(a) => oracle(&mut ctx, a),
        Command::Mech { command: MechCommand::Run(a) } => mech_run(&mut ctx, a),
        Command::Audit(a) => audit(&mut ctx, a),
    })?;
    if let Some(primary) = ctx.outputs.first().cloned() {
        let manifest = RunManifest {
            command_line,
            config_hash: hex::encode(Sha256::digest(ctx.config.to_string().as_bytes())),
            seed: cli.seed,
            threads,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: started.elapsed().as_secs_f64(),
            inputs: digests(&ctx.inputs)?,
            outputs: digests(&ctx.outputs)?,
        };
        let mut path = primary.into_os_string();
        path.push(".manifest.json");
        write_file(Path::new(&path), pretty(&manifest)?.as_bytes())?;
    }
    Ok(code)
}

struct Context {
    seed: u64,
    out: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
}

impl Context {
    fn read_json<T: for<'de> Deserialize<'de>>(&mut self, path: &Path) -> CliResult<T> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Io { path: path.into(), message: e.to_string() })?;
        self.inputs.push(path.into());
        serde_json::from_str(&text).map_err(|e| Failure::Parse { path: path.into(), message: e.to_string() })
    }

    /// Writes JSON to `path` (or `--out`, or stdout).
    fn emit<T: Serialize>(&mut self, value: &T, path: Option<&Path>) -> CliResult<()> {
        let text = pretty(value)?;
        match path.or(self.out.as_deref()) {
            Some(p) => {
                write_file(p, text.as_bytes())?;
                self.outputs.push(p.into());
            }
            None => println!("{text}"),
        }
        Ok(())
    }
}

fn pretty<T: Serialize>(value: &T) -> CliResult<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Config(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| Failure::Io { path: path.into(), message: e.to_string() })
}

fn digests(paths: &[PathBuf]) -> CliResult<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Failure::Io { path: p.clone(), message: e.to_string() })?;
            Ok(FileDigest { path: p.clone(), sha256: hex::encode(Sha256::digest(&bytes)) })
        })
        .collect()
}

fn solve(ctx: &mut Context, a: &SolveArgs) -> CliResult<i32> {
    let domain: Domain = ctx.read_json(&a.domain)?;
    let cfg = SolverConfig {
        beta: a.beta,
        max_ellipsoid_iters: a.max_iters,
        eta: a.eta,
        strategy: match a.strategy {
            StrategyArg::SlidingLevel => SearchStrategy::SlidingLevel,
            StrategyArg::Bisection => SearchStrategy::Bisection,
        },
        seed: ctx.seed,
        ..SolverConfig::default()
    };
    ctx.config = serde_json::json!({ "command": "solve", "p": a.p, "solver": cfg });
    let solution = solve_gamma(&domain, a.p, &cfg)?;
    if solution.status == SolveStatus::Infeasible {
        return Err(Failure::Infeasible);
    }
    ctx.emit(&SolutionFile { domain, solution }, None)?;
    Ok(EXIT_OK)
}

/// The finite point set a certificate is computed on.
fn certificate_domain(domain: Domain) -> CliResult<Domain> {
    if matches!(domain.kind(), DomainKind::FiniteSet { .. }) {
        return Ok(domain);
    }
    let points = match domain.points() {
        Some(p) => p.to_vec(),
        None => domain.certificate_points(CERTIFICATE_POINT_LIMIT).ok_or_else(|| {
            Failure::Config(format!("cannot extract certificate points from a `{}` domain", domain.variant_name()))
        })?,
    };
    Ok(Domain::finite_from_vectors(points)?)
}

fn certify(ctx: &mut Context, a: &CertifyArgs) -> CliResult<i32> {
    let domain: Domain = ctx.read_json(&a.domain)?;
    let hint: Option<SolutionFile> = match &a.solution {
        Some(path) => Some(ctx.read_json(path)?),
        None => None,
    };
    ctx.config = serde_json::json!({ "command": "certify", "p": a.p, "budget": a.budget });
    let finite = certificate_domain(domain)?;
    let certificate = search_certificate(&finite, a.p, a.budget, hint.as_ref().map(|h| &h.solution))?;
    ctx.emit(&CertificateFile { domain: finite, certificate }, None)?;
    Ok(EXIT_OK)
}

fn required<T>(value: Option<T>, flag: &str, kind: &str) -> CliResult<T> {
    value.ok_or_else(|| Failure::Config(format!("--kind {kind} requires --{flag}")))
}

fn oracle(ctx: &mut Context, a: &OracleArgs) -> CliResult<i32> {
    let p = a.p;
    let (kind, params, value) = match a.kind {
        OracleKind::Box => {
            if a.lo.is_empty() || a.hi.is_empty() {
                return Err(Failure::Config("--kind box requires --lo and --hi".into()));
            }
            let v = gamma_box(&a.lo, &a.hi, p)?;
            (ClosedFormKind::Box, serde_json::json!({ "lo": a.lo, "hi": a.hi }), ClosedValue::Exact(v))
        }
        OracleKind::Product => {
            let g1 = required(a.g1, "g1", "product")?;
            let g2 = required(a.g2, "g2", "product")?;
            if !(g1 >= 0.0 && g2 >= 0.0) {
                return Err(Failure::Lib(Error::BadParams("factor values must be non-negative".into())));
            }
            let v = gamma_product(g1, g2, p);
            (ClosedFormKind::Product, serde_json::json!({ "g1": g1, "g2": g2 }), ClosedValue::Exact(v))
        }
        OracleKind::Tensor => {
            let d = required(a.d, "d", "tensor")?;
            let ell = required(a.ell, "ell", "tensor")?;
            let (base, kind) = match a.base {
                BaseArg::Cube => (TensorBase::CubeVertices, ClosedFormKind::TensorPowerCube),
                BaseArg::Ball => (TensorBase::Ball, ClosedFormKind::TensorPowerBall),
            };
            let (lower, upper) = gamma_tensor_bounds(d, ell, p, base)?;
            (kind, serde_json::json!({ "d": d, "ell": ell }), ClosedValue::Bounds { lower, upper })
        }
        OracleKind::Marginal => {
            let d = required(a.d, "d", "marginal")?;
            let ell = required(a.ell, "ell", "marginal")?;
            let kind = if ell == 1 { ClosedFormKind::Marginal1Way } else { ClosedFormKind::MarginalLWay };
            (kind, serde_json::json!({ "d": d, "ell": ell }), gamma_marginals(d, ell, p)?)
        }
        OracleKind::Ellipsoid => {
            let path = required(a.domain.clone(), "domain", "ellipsoid")?;
            let domain: Domain = ctx.read_json(&path)?;
            let DomainKind::Ellipsoid { shape, .. } = domain.kind() else {
                return Err(Failure::Lib(Error::UnsupportedVariant(domain.variant_name())));
            };
            let v = gamma_ellipsoid(shape, p)?;
            (ClosedFormKind::Ellipsoid, serde_json::to_value(&domain).unwrap_or_default(), ClosedValue::Exact(v))
        }
    };
    let form = ClosedForm { kind, p, params, value };
    ctx.config = serde_json::json!({ "command": "oracle", "form": &form });
    ctx.emit(&form, None)?;
    Ok(EXIT_OK)
}

fn mechanism_inputs(ctx: &mut Context, solution: &Path, dataset: &Path, eps: f64) -> CliResult<(MechanismSpec, Dataset)> {
    let sol: SolutionFile = ctx.read_json(solution)?;
    let data: Dataset = ctx.read_json(dataset)?;
    let data = Dataset::new(data.points)?;
    let spec = MechanismSpec::new(sol.domain, &sol.solution, data.len(), eps, ctx.seed)?;
    Ok((spec, data))
}

fn mech_run(ctx: &mut Context, a: &MechRunArgs) -> CliResult<i32> {
    let out = ctx.out.clone().ok_or_else(|| Failure::Config("mech run requires --out for the samples file".into()))?;
    let (spec, data) = mechanism_inputs(ctx, &a.solution, &a.dataset, a.eps)?;
    ctx.config = serde_json::json!({ "command": "mech run", "eps": a.eps, "draws": a.draws, "delta": a.delta });
    let draws = run_gaussian_batch(&spec, &data, a.draws)?;
    let mut bytes = Vec::with_capacity(draws.len() * data.dim() * 8);
    for row in &draws {
        for x in row.iter() {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_file(&out, &bytes)?;
    ctx.outputs.push(out.clone());
    let privacy = spec.privacy();
    let mut warnings = Vec::new();
    let approx_dp = match a.delta {
        Some(delta) => {
            if delta > (-a.eps).exp() {
                warnings.push(format!("delta = {delta} exceeds e^-eps; the error lower bounds assume delta <= e^-eps"));
            }
            Some(account(privacy, delta)?)
        }
        None => None,
    };
    let summary = MechRunSummary {
        draws: a.draws,
        dim: data.dim(),
        n: data.len(),
        eps: a.eps,
        seed: ctx.seed,
        samples: out,
        privacy,
        approx_dp,
        warnings,
    };
    let text = pretty(&summary)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn audit(ctx: &mut Context, a: &AuditArgs) -> CliResult<i32> {
    let (spec, data) = mechanism_inputs(ctx, &a.solution, &a.dataset, a.eps)?;
    ctx.config = serde_json::json!({ "command": "audit", "p": a.p, "trials": a.trials, "eps": a.eps });
    let report: AuditReport = estimate_error(&spec, &data, a.p, a.trials, ctx.seed)?;
    ctx.emit(&report, a.report.as_deref())?;
    Ok(EXIT_OK)
}
