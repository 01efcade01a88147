//! Command-line front end: `mincut`, `analyze`, `design` and `simulate`.
//!
//! [`dispatch`] runs one invocation in-process and returns the exit code:
//! 0 on success, 1 on invalid input, 2 when no aligned design exists or the
//! search gave up, 64 on a usage error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use netalign::align::{
    build_blocks, search_design_with, verify_conditions, AlignError, CodeDesign, SearchParams,
};
use netalign::netmodel::{mincuts, NetError, Network};
use netalign::recommended_prime;
use netalign::sim::{run_simulation, SimError, SimulationReport};
use netalign::transfer::{
    analyze, AnalysisReport, Assumption, IdentityVerdict, NetworkModel, TestConfig, TransferError,
    VerdictKind, DEFAULT_COLLISION_BUDGET, DEFAULT_SAMPLES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NO_DESIGN: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "netalign",
    version,
    about = "Aligned linear network codes for three unicast sessions"
)]
pub struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the min-cut of each session.
    Mincut { network: PathBuf },
    /// Classify the transfer matrix and search for asymmetry certificates.
    Analyze(AnalyzeArgs),
    /// Search for precoders and decoders over a (2n+1)-symbol extension.
    Design(DesignArgs),
    /// Encode, propagate and decode random message blocks.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub network: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Probe budget for each asymmetry search.
    #[arg(long, default_value_t = DEFAULT_COLLISION_BUDGET)]
    pub budget: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    pub network: PathBuf,
    #[arg(short)]
    pub n: usize,
    /// Field size (default: recommended for n).
    #[arg(long)]
    pub prime: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = netalign::align::DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub network: PathBuf,
    pub design: PathBuf,
    #[arg(long)]
    pub blocks: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Failure of one invocation, tagged with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<NetError> for Failure {
    fn from(e: NetError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<TransferError> for Failure {
    fn from(e: TransferError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<AlignError> for Failure {
    fn from(e: AlignError) -> Self {
        let code = match e {
            AlignError::Exhausted { .. } | AlignError::CaseRejected(_) => EXIT_NO_DESIGN,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::invalid(e.to_string())
    }
}

/// Parses `argv` (program name first) and runs it, writing normal output to
/// `out` and diagnostics to `err`.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_USAGE
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli.command)),
            Err(e) => Err(Failure::invalid(e.to_string())),
        },
        None => execute(&cli.command),
    };
    match result {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Runs one command and returns what it prints on success.
pub fn execute(command: &Command) -> Result<String, Failure> {
    match command {
        Command::Mincut { network } => {
            let net = load_network(network)?;
            let m = mincuts(&net);
            Ok(format!("{} {} {}\n", m[0], m[1], m[2]))
        }
        Command::Analyze(a) => {
            let net = load_network(&a.network)?;
            let cfg = TestConfig {
                samples: a.samples,
                collision_budget: a.budget,
                ..TestConfig::default()
            };
            let report = analyze(&net, a.seed, &cfg)?;
            let json = to_pretty_json(&report);
            emit(a.output.as_deref(), &json, || render_analysis(&report))
        }
        Command::Design(d) => {
            let net = load_network(&d.network)?;
            let prime = match d.prime {
                Some(p) => p,
                None => recommended_prime(d.n)?,
            };
            let params = SearchParams {
                n: d.n,
                prime,
                seed: d.seed,
                max_attempts: d.max_attempts,
                tests: TestConfig::default(),
            };
            let design = search_design_with(&net, &params)?;
            let json = design.to_json();
            emit(d.output.as_deref(), &json, || render_design(&net, &design))
        }
        Command::Simulate(s) => {
            let net = load_network(&s.network)?;
            let text = read(&s.design)?;
            let design = CodeDesign::from_json(&text)?;
            let report = run_simulation(&net, &design, s.blocks, s.seed)?;
            let json = to_pretty_json(&report);
            emit(s.output.as_deref(), &json, || render_simulation(&report))
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network, Failure> {
    let text = read(path)?;
    Network::parse(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// With an output path, writes `json` there and returns the rendered table;
/// otherwise returns `json` for stdout.
fn emit(
    output: Option<&Path>,
    json: &str,
    table: impl FnOnce() -> String,
) -> Result<String, Failure> {
    match output {
        Some(path) => {
            write_atomic(path, json.as_bytes())?;
            Ok(table())
        }
        None => Ok(json.to_string()),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn fraction(num: u64, den: u64) -> String {
    format!("{num}/{den} ({:.6})", num as f64 / den as f64)
}

fn verdict_label(v: &IdentityVerdict) -> &'static str {
    match v.kind {
        VerdictKind::CertifiedNonzero => "nonzero",
        VerdictKind::LikelyZero => "zero",
        VerdictKind::CertifiedDistinct => "distinct",
        VerdictKind::LikelyProportional => "proportional",
        VerdictKind::LikelyConstant => "constant",
        VerdictKind::CertifiedNonconstant => "nonconstant",
        VerdictKind::CertifiedAsymmetric => "certified",
        VerdictKind::Unverified => "unverified",
    }
}

fn bound(b: Option<f64>) -> String {
    b.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"))
}

pub fn render_analysis(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "case        {}", r.case);
    let _ = writeln!(s, "field       p = {}", r.field_prime);
    let _ = writeln!(s, "seed        {}", r.seed);
    let _ = writeln!(s, "max rank    {}", r.max_rank);
    let _ = writeln!(s, "session  mincut  m_i1         m_i2         m_i3");
    for i in 0..3 {
        let cells: Vec<String> = (0..3)
            .map(|j| format!("{:<12}", verdict_label(&r.triviality[i][j])))
            .collect();
        let _ = writeln!(
            s,
            "{:<8} {:<7} {}",
            i + 1,
            r.mincuts[i],
            cells.join(" ").trim_end()
        );
    }
    if let Some(v) = &r.ratio {
        let ratio = v.ratio.map(|c| format!(" ({c})")).unwrap_or_default();
        let _ = writeln!(s, "ratio a/b   {}{ratio}", verdict_label(v));
    }
    for which in [Assumption::A2, Assumption::A3, Assumption::A4] {
        let v = r.asymmetry.get(which);
        let label = match v.kind {
            VerdictKind::CertifiedAsymmetric => "certified".to_string(),
            _ => "unverified (advisory)".to_string(),
        };
        let _ = writeln!(s, "{which:?}: {label}");
    }
    let e = &r.error_bounds;
    let _ = writeln!(
        s,
        "error bounds  triviality {}  a1 {}  ratio {}",
        bound(e.triviality),
        bound(e.a1),
        bound(e.ratio)
    );
    s
}

pub fn render_design(net: &Network, d: &CodeDesign) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "case        {}", d.case);
    let _ = writeln!(s, "n           {} (block length {})", d.n, d.block_length());
    let _ = writeln!(s, "field       p = {}", d.field.modulus());
    let _ = writeln!(s, "seed        {} (attempt {})", d.seed, d.attempt);
    let m = mincuts(net);
    let _ = writeln!(s, "session  mincut  rate");
    for (i, r) in d.rates().iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<8} {:<7} {}",
            i + 1,
            m[i],
            fraction(*r.numer(), *r.denom())
        );
    }
    let blocks = build_blocks(&NetworkModel::over(net, d.field), &d.extension);
    let _ = writeln!(
        s,
        "conditions  {}",
        verify_conditions(&blocks, &d.precoding)
    );
    s
}

pub fn render_simulation(r: &SimulationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "blocks      {}", r.blocks);
    let _ = writeln!(s, "n           {}", r.n);
    let _ = writeln!(s, "field       p = {}", r.p);
    let _ = writeln!(s, "seed        {}", r.seed);
    let _ = writeln!(s, "session  decoded      rate");
    for i in 0..3 {
        let rate = match r.rates {
            Some(rates) => fraction(rates[i][0], rates[i][1]),
            None => "-".to_string(),
        };
        let _ = writeln!(
            s,
            "{:<8} {:<12} {}",
            i + 1,
            format!("{}/{}", r.successes[i], r.blocks),
            rate
        );
    }
    let failure = r
        .first_failure
        .map_or_else(|| "-".to_string(), |b| b.to_string());
    let _ = writeln!(s, "first failure {failure}");
    s
}

/// Entry point for the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    dispatch(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
