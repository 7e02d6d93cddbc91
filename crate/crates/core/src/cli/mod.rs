//! Command-line front end.
//!
//! ```text
//! sparse-lqr demo mass-spring --gamma-max 0.1 --out runs/ms
//! sparse-lqr demo biochem --penalty blk-wl1
//! sparse-lqr solve plant.txt --penalty card --gamma 0.01,0.1,1
//! ```
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 infeasible plant,
//! 4 numerical failure, 1 failure to write outputs.

pub mod format;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::admm::AdmmOptions;
use crate::linalg::Matrix;
use crate::model::{BlockPartition, Granularity, ModelError, PenaltyKind, PenaltySpec, Plant};
use crate::par::Parallelism;
use crate::path::{log_grid, run_path_observed, PathError, PathEvent, PathOptions, PathResult};
use crate::polish::PolishOptions;
use crate::problems;

/// Output directory used when `--out` is not given.
pub const OUT_ENV: &str = "SPARSE_LQR_OUT";

#[derive(Debug, Parser)]
#[command(name = "sparse-lqr", version, about = "Sparse and block-sparse H2 state-feedback design")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a built-in benchmark plant.
    Demo {
        #[arg(value_enum)]
        problem: Problem,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run on a plant read from a matrix file.
    Solve {
        plant_file: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    MassSpring,
    Network,
    Biochem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum PenaltyArg {
    Wl1,
    Card,
    Slog,
    BlkWl1,
    BlkCard,
    BlkSlog,
}

impl PenaltyArg {
    fn kind(self) -> PenaltyKind {
        match self {
            PenaltyArg::Wl1 | PenaltyArg::BlkWl1 => PenaltyKind::WeightedL1,
            PenaltyArg::Card | PenaltyArg::BlkCard => PenaltyKind::Cardinality,
            PenaltyArg::Slog | PenaltyArg::BlkSlog => PenaltyKind::SumOfLogs,
        }
    }

    fn is_blockwise(self) -> bool {
        matches!(self, PenaltyArg::BlkWl1 | PenaltyArg::BlkCard | PenaltyArg::BlkSlog)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyArg>,
    /// Explicit γ values, comma separated. A value of 0 only reports the
    /// centralized gain.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["gamma_min", "gamma_max", "gamma_steps"])]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma_min: Option<f64>,
    #[arg(long)]
    pub gamma_max: Option<f64>,
    #[arg(long)]
    pub gamma_steps: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// ADMM stopping tolerance on the primal residual and the change in G.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Anderson–Moore steps allowed per F-step.
    #[arg(long)]
    pub am_max_iter: Option<usize>,
    #[arg(long)]
    pub no_reweight: bool,
    #[arg(long)]
    pub reweight_eps: Option<f64>,
    #[arg(long)]
    pub epsilon_log: Option<f64>,
    /// Block partition as `<row sizes>x<col sizes>`, e.g. `1,1x3,3`.
    #[arg(long)]
    pub blocks: Option<String>,
    /// Seed for randomly generated plants.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Problem size: masses for mass-spring, nodes for network.
    #[arg(long)]
    pub n: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, short)]
    pub quiet: bool,
    /// Run every data-parallel kernel on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Parse { path: String, source: format::FormatError },
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("infeasible plant: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write outputs: {0}")]
    Write(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Parse { .. } | CliError::Read { .. } => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Write(_) => 1,
        }
    }
}

impl From<PathError> for CliError {
    fn from(e: PathError) -> Self {
        match e {
            PathError::Synthesis(s) => CliError::Infeasible(s),
            PathError::Options(s) => CliError::Usage(s),
            PathError::Model(m) => CliError::Usage(m.to_string()),
            e @ PathError::Admm { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub problem: String,
    pub size: Option<usize>,
    pub seed: Option<u64>,
    pub states: usize,
    pub inputs: usize,
    pub disturbances: usize,
    pub penalty: &'static str,
    pub blocks: Option<BlockPartition>,
    pub epsilon_log: f64,
    pub reweighting: bool,
    pub reweight_eps: f64,
    pub gamma_grid: Vec<f64>,
    pub admm: AdmmOptions,
    pub polish: PolishOptions,
    pub parallelism: Parallelism,
    pub zero_tol_rel: f64,
}

/// Defaults that differ between the built-in problems.
struct Defaults {
    penalty: PenaltyArg,
    size: Option<usize>,
    gamma_min: f64,
    gamma_max: f64,
    gamma_steps: usize,
    rho: f64,
    max_iter: usize,
    am_max_iter: usize,
}

fn defaults(problem: Option<Problem>) -> Defaults {
    let base = Defaults {
        penalty: PenaltyArg::Wl1,
        size: None,
        gamma_min: 1e-4,
        gamma_max: 1e-1,
        gamma_steps: 50,
        rho: AdmmOptions::default().rho,
        max_iter: AdmmOptions::default().max_iter,
        am_max_iter: AdmmOptions::default().am_max_iter,
    };
    match problem {
        None => base,
        Some(Problem::MassSpring) => Defaults { size: Some(50), ..base },
        Some(Problem::Network) => Defaults {
            size: Some(100),
            gamma_min: NETWORK_GAMMA_MIN,
            gamma_max: NETWORK_GAMMA_MAX,
            gamma_steps: NETWORK_GAMMA_STEPS,
            max_iter: NETWORK_MAX_ITER,
            am_max_iter: NETWORK_AM_MAX_ITER,
            ..base
        },
        Some(Problem::Biochem) => Defaults {
            penalty: PenaltyArg::BlkWl1,
            gamma_min: 1e-2,
            gamma_max: 3.6,
            ..base
        },
    }
}

pub const NETWORK_GAMMA_MIN: f64 = 12.6;
pub const NETWORK_GAMMA_MAX: f64 = 70.0;
pub const NETWORK_GAMMA_STEPS: usize = 3;
/// ADMM iterations per γ for the network demo; each costs seconds at 200 states.
pub const NETWORK_MAX_ITER: usize = 30;
/// Inexact F-steps for the network demo.
pub const NETWORK_AM_MAX_ITER: usize = 10;
pub const NETWORK_SIDE: f64 = 10.0;
pub const NETWORK_SEED: u64 = 7;
pub const MASS_SPRING_R: f64 = 10.0;

/// Parses `<row sizes>x<col sizes>`.
pub fn parse_blocks(s: &str) -> Result<BlockPartition, CliError> {
    let bad = || CliError::Usage(format!("--blocks expects `<row sizes>x<col sizes>`, got `{s}`"));
    let (rows, cols) = s.split_once('x').ok_or_else(bad)?;
    let sizes = |part: &str| -> Result<Vec<usize>, CliError> {
        part.split(',').map(|t| t.trim().parse::<usize>().map_err(|_| bad())).collect()
    };
    BlockPartition::new(sizes(rows)?, sizes(cols)?).map_err(|e| CliError::Usage(e.to_string()))
}

fn gamma_grid(run: &RunArgs, d: &Defaults) -> Result<Vec<f64>, CliError> {
    if let Some(list) = &run.gamma {
        if list.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(CliError::Usage("gamma values must be finite and nonnegative".into()));
        }
        let grid: Vec<f64> = list.iter().copied().filter(|&g| g > 0.0).collect();
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage("gamma values must be strictly increasing".into()));
        }
        return Ok(grid);
    }
    let min = run.gamma_min.unwrap_or(d.gamma_min);
    let max = run.gamma_max.unwrap_or(d.gamma_max);
    let steps = run.gamma_steps.unwrap_or(d.gamma_steps);
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(CliError::Usage(format!("need 0 < gamma-min <= gamma-max, got {min} and {max}")));
    }
    Ok(log_grid(min, max, steps))
}

fn infeasible(e: ModelError) -> CliError {
    CliError::Infeasible(e.to_string())
}

/// A plant ready to solve, with its provenance.
struct Setup {
    plant: Plant,
    problem: String,
    size: Option<usize>,
    seed: Option<u64>,
    partition: Option<BlockPartition>,
    positions: Option<Vec<[f64; 2]>>,
}

fn setup(command: &Command, d: &Defaults) -> Result<Setup, CliError> {
    let (problem, run) = match command {
        Command::Demo { problem, run } => (Some(*problem), run),
        Command::Solve { plant_file, run } => {
            let path = plant_file.display().to_string();
            let text = std::fs::read_to_string(plant_file)
                .map_err(|source| CliError::Read { path: path.clone(), source })?;
            let plant = format::parse_plant(&text).map_err(|e| match e {
                format::PlantFileError::Format(source) => CliError::Parse { path: path.clone(), source },
                format::PlantFileError::Plant(m) => infeasible(m),
            })?;
            if run.n.is_some() || run.seed.is_some() {
                return Err(CliError::Usage("--n and --seed only apply to demo plants".into()));
            }
            let partition = run.blocks.as_deref().map(parse_blocks).transpose()?;
            return Ok(Setup { plant, problem: path, size: None, seed: None, partition, positions: None });
        }
    };
    let problem = problem.expect("demo has a problem");
    let name = problem.to_possible_value().expect("no skipped variants").get_name().to_string();
    let size = run.n.or(d.size);
    if size == Some(0) {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let blocks = run.blocks.as_deref().map(parse_blocks).transpose()?;
    let mut out = match problem {
        Problem::MassSpring => {
            reject_seed(run)?;
            let plant = problems::mass_spring(size.expect("sized"), MASS_SPRING_R).map_err(infeasible)?;
            Setup { plant, problem: name, size, seed: None, partition: None, positions: None }
        }
        Problem::Network => {
            let seed = run.seed.unwrap_or(NETWORK_SEED);
            let net = problems::random_network(size.expect("sized"), NETWORK_SIDE, seed).map_err(infeasible)?;
            Setup { plant: net.plant, problem: name, size, seed: Some(seed), partition: None, positions: Some(net.positions) }
        }
        Problem::Biochem => {
            reject_seed(run)?;
            if run.n.is_some() {
                return Err(CliError::Usage("the biochemical plant has a fixed size".into()));
            }
            let (plant, part) = problems::biochemical();
            Setup { plant, problem: name, size: None, seed: None, partition: Some(part), positions: None }
        }
    };
    if blocks.is_some() {
        out.partition = blocks;
    }
    Ok(out)
}

fn reject_seed(run: &RunArgs) -> Result<(), CliError> {
    if run.seed.is_some() {
        return Err(CliError::Usage("--seed only applies to the network demo".into()));
    }
    Ok(())
}

/// Result of a completed run.
pub struct Report {
    pub manifest: Manifest,
    pub result: PathResult,
    pub out_dir: PathBuf,
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    let (problem, run) = match &cli.command {
        Command::Demo { problem, run } => (Some(*problem), run),
        Command::Solve { run, .. } => (None, run),
    };
    let d = defaults(problem);
    let setup = setup(&cli.command, &d)?;
    let plant = &setup.plant;
    let penalty = run.penalty.unwrap_or(d.penalty);

    let granularity = if penalty.is_blockwise() {
        let part = setup
            .partition
            .clone()
            .ok_or_else(|| CliError::Usage("blockwise penalties need --blocks".into()))?;
        Granularity::Blockwise(part)
    } else {
        Granularity::Elementwise
    };
    let mut spec = PenaltySpec::new(penalty.kind(), granularity, plant.m(), plant.n())
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(e) = run.epsilon_log {
        spec.epsilon_log = e;
    }
    if let Some(e) = run.reweight_eps {
        spec.epsilon_reweight = e;
    }
    spec.check(plant.m(), plant.n()).map_err(|e| CliError::Usage(e.to_string()))?;

    let defaults_admm = AdmmOptions::default();
    let admm = AdmmOptions {
        rho: run.rho.unwrap_or(d.rho),
        eps_stop: run.eps.unwrap_or(defaults_admm.eps_stop),
        max_iter: run.max_iter.unwrap_or(d.max_iter),
        am_max_iter: run.am_max_iter.unwrap_or(d.am_max_iter),
        ..defaults_admm
    };
    admm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut popts = PathOptions::new(gamma_grid(run, &d)?);
    popts.reweighting = !run.no_reweight;
    popts.reweight_eps = spec.epsilon_reweight;
    if run.sequential {
        popts.parallelism = Parallelism::Sequential;
    }

    let out_dir = match &run.out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from),
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: if problem.is_some() { "demo" } else { "solve" },
        problem: setup.problem.clone(),
        size: setup.size,
        seed: setup.seed,
        states: plant.n(),
        inputs: plant.m(),
        disturbances: plant.d(),
        penalty: spec.short_name(),
        blocks: setup.partition.clone(),
        epsilon_log: spec.epsilon_log,
        reweighting: popts.reweighting,
        reweight_eps: popts.reweight_eps,
        gamma_grid: popts.gamma_grid.clone(),
        admm,
        polish: popts.polish,
        parallelism: popts.parallelism,
        zero_tol_rel: crate::model::ZERO_TOL_REL,
    };

    let started = std::time::Instant::now();
    let mut progress = |e: PathEvent| {
        if run.quiet {
            return;
        }
        let t = started.elapsed().as_secs_f64();
        match e {
            PathEvent::Centralized { objective, nnz } => {
                eprintln!("[{t:8.1}s] centralized: J = {objective:.6}, nnz = {nnz}")
            }
            PathEvent::Identified { index, gamma, nnz, objective, admm_iters, status } => eprintln!(
                "[{t:8.1}s] {index:>3} gamma = {gamma:.4e}: nnz = {nnz}, J = {objective:.6}, {admm_iters} iterations, {}",
                status.as_str()
            ),
            PathEvent::Polishing { records } => eprintln!("[{t:8.1}s] polishing {records} structures"),
        }
    };
    let result = run_path_observed(plant, &spec, &popts, &admm, &mut progress)?;
    if !run.quiet {
        eprintln!("[{:8.1}s] done", started.elapsed().as_secs_f64());
    }
    output::write_run(
        &out_dir,
        &manifest,
        plant,
        &result,
        setup.partition.as_ref(),
        setup.positions.as_deref(),
    )?;
    Ok(Report { manifest, result, out_dir })
}

fn summary(report: &Report) -> String {
    let mut out = format!(
        "{:>12} {:>7} {:>9} {:>14} {:>9} {:>6}  status\n",
        "gamma", "nnz", "ratio", "J_polished", "dJ%", "iters"
    );
    for rec in &report.result.records {
        out.push_str(&format!(
            "{:>12.4e} {:>7} {:>9.4} {:>14.6} {:>9.3} {:>6}  {}\n",
            rec.gamma,
            rec.nnz,
            report.result.nnz_ratio(rec),
            rec.j_polished,
            report.result.dj_percent(rec),
            rec.admm_iters,
            rec.status.as_str()
        ));
    }
    out.push_str(&format!("outputs written to {}\n", report.out_dir.display()));
    out
}

/// Parses `args`, runs, prints a summary and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(report) => {
            print!("{}", summary(&report));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Reads a single-stanza gain file.
pub fn read_gain(path: &Path) -> Result<Matrix, CliError> {
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: display.clone(), source })?;
    let mats = format::parse_matrices(&text).map_err(|source| CliError::Parse { path: display.clone(), source })?;
    let mut it = mats.into_values();
    match (it.next(), it.next()) {
        (Some(m), None) => Ok(m),
        _ => Err(CliError::Usage(format!("{display} must hold exactly one matrix"))),
    }
}
