//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chebspectral_core::chebdav::SolverConfig;
use chebspectral_core::graph::{gen_sbm, normalized_laplacian, CsrMatrix, EdgeFormat};
use chebspectral_core::procgrid::{CostCounters, GridTopology, Phase};
use chebspectral_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench::{bench, to_csv};
use crate::io::{self, IoError};
use crate::run::{cluster, solve, Mode, SolveOutput};
use crate::transport::Scheduler;
use crate::verify::{verify, Fault};

/// Simulated ranks allowed without `--allow-large-p`.
pub const MAX_RANKS: usize = 64;

/// Header of the clustering metrics CSV.
pub const METRICS_HEADER: &str = "graph,k,ari_mean,nmi_mean,seconds";

#[derive(Debug, Parser)]
#[command(name = "chebspectral", version, about = "Spectral clustering with a Block Chebyshev-Davidson eigensolver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smallest eigenpairs of the normalized Laplacian of a graph.
    Eigs(EigsArgs),
    /// Full spectral clustering pipeline.
    Cluster(ClusterArgs),
    /// Per-component communication counters over a sweep of grid sizes.
    Bench(BenchArgs),
    /// Run the built-in oracle suites.
    Verify(VerifyArgs),
    /// Write a stochastic block model graph and its planted partition.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Mm,
}

impl From<FormatArg> for EdgeFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => EdgeFormat::Tsv,
            FormatArg::Mm => EdgeFormat::MatrixMarket,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Seq,
    Dist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VectorFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    SkipRedistribute,
    RawRSigns,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Simulated ranks for distributed runs (a perfect square).
    #[arg(long, default_value_t = 4)]
    pub p: usize,
    /// Allow more than 64 simulated ranks. Each rank is a thread holding its
    /// own tiles, so memory grows with p.
    #[arg(long)]
    pub allow_large_p: bool,
    /// Run ranks one at a time in a fixed order (reproducible interleaving).
    #[arg(long)]
    pub lockstep: bool,
}

impl GridArgs {
    fn check(&self, p: usize) -> Result<(), CliError> {
        GridTopology::new(p).map_err(|e| CliError::Usage(e.to_string()))?;
        if p > MAX_RANKS && !self.allow_large_p {
            return Err(CliError::Usage(format!("--p {p} exceeds {MAX_RANKS}; pass --allow-large-p to override")));
        }
        Ok(())
    }

    fn scheduler(&self) -> Scheduler {
        if self.lockstep {
            Scheduler::Lockstep
        } else {
            Scheduler::Threaded
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    pub format: FormatArg,
    /// Number of eigenpairs (and clusters).
    #[arg(long)]
    pub k: usize,
    /// Block size.
    #[arg(long, default_value_t = 4)]
    pub kb: usize,
    /// Chebyshev filter degree.
    #[arg(long, default_value_t = 11)]
    pub deg: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub itmax: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Seq)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Compare a hash of the replicated solver state across ranks after
    /// every iteration.
    #[arg(long)]
    pub check_replication: bool,
    /// Also write per-iteration counters to `trace.csv`.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// JSON run report (default: `<out-dir>/report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EigsArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, value_enum, default_value_t = VectorFormat::Csv)]
    pub vectors: VectorFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Ground-truth labels, one per line; enables ARI/NMI.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Independent k-means runs to average the scores over.
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Metrics CSV to append to (default: `<out-dir>/metrics.csv`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Graph to use; a generated SBM when absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Tsv)]
    pub format: FormatArg,
    #[arg(long, default_value_t = 576)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0.1)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    pub p_out: f64,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 4)]
    pub kb: usize,
    #[arg(long, default_value_t = 11)]
    pub deg: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub itmax: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,4,9,16")]
    pub p_list: Vec<usize>,
    #[arg(long)]
    pub allow_large_p: bool,
    #[arg(long)]
    pub lockstep: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Break one mechanism on purpose; verification must then fail.
    #[arg(long, value_enum)]
    pub inject: Option<FaultArg>,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub blocks: usize,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::DegenerateBounds { .. } | Error::InvalidProbability(_) => CliError::Usage(e.to_string()),
            Error::Comm(chebspectral_core::CommError::NonSquareGrid(_)) => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

/// Everything a solve needs, validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: &'static str,
    pub input: PathBuf,
    pub format: EdgeFormat,
    pub solver: SolverConfig,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub report: PathBuf,
    pub trace: bool,
}

impl RunConfig {
    pub fn from_args(command: &'static str, a: &SolveArgs) -> Result<Self, CliError> {
        let mut solver = SolverConfig::new(a.k, a.kb, a.deg);
        solver.tol = a.tol;
        solver.itmax = a.itmax;
        solver.seed = a.seed;
        if a.k == 0 || a.kb == 0 || a.deg < 2 || a.itmax == 0 || !a.tol.is_finite() || a.tol < 0.0 {
            return Err(CliError::Usage("need --k >= 1, --kb >= 1, --deg >= 2, --itmax >= 1 and a finite --tol >= 0".into()));
        }
        let mode = match a.mode {
            ModeArg::Seq => Mode::Sequential,
            ModeArg::Dist => {
                a.grid.check(a.grid.p)?;
                Mode::Distributed { p: a.grid.p, scheduler: a.grid.scheduler(), check_replication: a.check_replication }
            }
        };
        Ok(Self {
            command,
            input: a.input.clone(),
            format: a.format.into(),
            solver,
            mode,
            out_dir: a.out_dir.clone(),
            report: a.report.clone().unwrap_or_else(|| a.out_dir.join("report.json")),
            trace: a.trace,
        })
    }

    fn load(&self) -> Result<CsrMatrix, CliError> {
        let g = io::load_edge_list(&self.input, self.format)?;
        if g.n_nodes() < 2 {
            return Err(CliError::Usage(format!("{}: graph has fewer than two nodes", self.input.display())));
        }
        Ok(normalized_laplacian(&g))
    }

    fn solve(&self, a: &CsrMatrix) -> Result<SolveOutput, CliError> {
        self.solver.fit_to(a.n())?;
        Ok(solve(a, &self.solver, None, None, self.mode)?)
    }

    fn report(&self, out: &SolveOutput, seconds: f64) -> serde_json::Value {
        let r = &out.result;
        let (mode, p) = match self.mode {
            Mode::Sequential => ("seq", 1),
            Mode::Distributed { p, .. } => ("dist", p),
        };
        json!({
            "command": self.command,
            "input": self.input.display().to_string(),
            "mode": mode,
            "p": p,
            "config": io::config_json(&r.config),
            "iterations": r.iterations,
            "converged": r.converged,
            "eigenvalues": r.values,
            "residuals": r.residuals,
            "counters": io::counters_json(&out.counters),
            "seconds": seconds,
        })
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source }.into())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_path_buf(), source }.into())
}

fn trace_csv(trace: &[CostCounters]) -> String {
    let mut s = String::from("iteration,phase,collectives,messages,words,flops\n");
    for (i, c) in trace.iter().enumerate() {
        for ph in Phase::ALL {
            let t = c.phase_tally(ph);
            if t.count > 0 || c.phase_flops(ph) > 0 {
                s.push_str(&format!("{},{},{},{},{},{}\n", i + 1, ph.name(), t.count, t.messages, t.words, c.phase_flops(ph)));
            }
        }
    }
    s
}

/// Solves and writes the outputs shared by `eigs` and `cluster`.
fn solve_and_write(cfg: &RunConfig) -> Result<(SolveOutput, f64), CliError> {
    let a = cfg.load()?;
    create_dir(&cfg.out_dir)?;
    let t = Instant::now();
    let out = cfg.solve(&a)?;
    let seconds = t.elapsed().as_secs_f64();
    log::info!("{} iterations, converged={}, {seconds:.3}s", out.result.iterations, out.result.converged);
    io::write_eigenvalues(&cfg.out_dir.join("eigenvalues.txt"), &out.result.values)?;
    if cfg.trace {
        write_text(&cfg.out_dir.join("trace.csv"), &trace_csv(&out.trace))?;
    }
    Ok((out, seconds))
}

fn not_converged(out: &SolveOutput) -> Result<(), CliError> {
    if out.result.converged {
        Ok(())
    } else {
        Err(CliError::Failure(format!("eigensolver did not converge in {} iterations", out.result.iterations)))
    }
}

pub fn cmd_eigs(args: &EigsArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args("eigs", &args.solve)?;
    let (out, seconds) = solve_and_write(&cfg)?;
    match args.vectors {
        VectorFormat::Csv => io::write_eigenvectors_csv(&cfg.out_dir.join("eigenvectors.csv"), &out.result.vectors)?,
        VectorFormat::Bin => io::write_eigenvectors_bin(&cfg.out_dir.join("eigenvectors.bin"), &out.result.vectors)?,
    }
    io::write_json(&cfg.report, &cfg.report(&out, seconds))?;
    not_converged(&out)
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<(), CliError> {
    let cfg = RunConfig::from_args("cluster", &args.solve)?;
    let truth = args.truth.as_deref().map(io::read_partition).transpose()?;
    let t = Instant::now();
    let (out, _) = solve_and_write(&cfg)?;
    if let Some(tr) = &truth {
        if tr.len() != out.result.vectors.rows() {
            return Err(CliError::Usage(format!("truth has {} labels for {} nodes", tr.len(), out.result.vectors.rows())));
        }
    }
    let runs = cluster(&out.result.vectors, cfg.solver.k_want, cfg.solver.seed, args.repeats, truth.as_ref())?;
    let seconds = t.elapsed().as_secs_f64();
    io::write_partition(&cfg.out_dir.join("partition.txt"), runs.best())?;
    let mut report = cfg.report(&out, seconds);
    if let Some((ari, nmi)) = runs.mean_scores() {
        report["ari_mean"] = json!(ari);
        report["nmi_mean"] = json!(nmi);
        report["repeats"] = json!(runs.scores.len());
        let path = args.metrics.clone().unwrap_or_else(|| cfg.out_dir.join("metrics.csv"));
        append_metrics(&path, &cfg.input, cfg.solver.k_want, ari, nmi, seconds)?;
    }
    io::write_json(&cfg.report, &report)?;
    not_converged(&out)
}

fn append_metrics(path: &Path, graph: &Path, k: usize, ari: f64, nmi: f64, seconds: f64) -> Result<(), CliError> {
    let fresh = !path.exists();
    let err = |source| CliError::Io(IoError::Io { path: path.to_path_buf(), source });
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
    let mut text = String::new();
    if fresh {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    text.push_str(&format!("{},{k},{ari},{nmi},{seconds}\n", graph.display()));
    f.write_all(text.as_bytes()).map_err(err)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    let grid = GridArgs { p: 1, allow_large_p: args.allow_large_p, lockstep: args.lockstep };
    if args.p_list.is_empty() {
        return Err(CliError::Usage("--p-list is empty".into()));
    }
    for &p in &args.p_list {
        grid.check(p)?;
    }
    let a = match &args.input {
        Some(path) => normalized_laplacian(&io::load_edge_list(path, args.format.into())?),
        None => normalized_laplacian(&gen_sbm(args.n, args.blocks, args.p_in, args.p_out, args.seed)?.0),
    };
    let mut cfg = SolverConfig::new(args.k, args.kb, args.deg);
    cfg.tol = args.tol;
    cfg.itmax = args.itmax;
    cfg.seed = args.seed;
    cfg.fit_to(a.n())?;
    let rows = bench(&a, &cfg, &args.p_list, grid.scheduler())?;
    create_dir(&args.out_dir)?;
    write_text(&args.out_dir.join("bench.csv"), &to_csv(&rows))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let fault = match args.inject {
        None => Fault::None,
        Some(FaultArg::SkipRedistribute) => Fault::SkipRedistribute,
        Some(FaultArg::RawRSigns) => Fault::RawRSigns,
    };
    let checks = verify(args.seed, fault);
    for c in &checks {
        match &c.outcome {
            Ok(()) => println!("PASS {}", c.name),
            Err(msg) => println!("FAIL {}: {msg}", c.name),
        }
    }
    match checks.iter().find(|c| c.outcome.is_err()) {
        Some(c) => Err(CliError::Failure(format!("verification failed: {}", c.name))),
        None => Ok(()),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let (g, truth) = gen_sbm(args.n, args.blocks, args.p_in, args.p_out, args.seed)?;
    create_dir(&args.out_dir)?;
    io::write_edge_list(&args.out_dir.join("graph.tsv"), &g)?;
    io::write_partition(&args.out_dir.join("truth.txt"), &truth)?;
    Ok(())
}

pub fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Eigs(a) => cmd_eigs(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
