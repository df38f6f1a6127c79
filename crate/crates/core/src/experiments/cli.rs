use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::{
    oracle_exhaustive_matching, run_scheme, run_sweep, write_sweep, ExperimentError, RunOptions,
    Scheme, SolutionFile, SweepSpec,
};
use crate::matching::{CandidateStart, EnergyBound};
use crate::model::{check_feasibility, Assignment, ScenarioInstance};
use crate::scenario::{self, generate, GeneratorConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "twinsync",
    version,
    about = "Agent dispatching and resource allocation for digital-twin synchronization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundArg {
    Rolling,
    FullSpeed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StartArg {
    Cold,
    Incumbent,
    Best,
}

#[derive(Debug, clap::Args)]
struct SolverArgs {
    /// BCD stopping tolerance on the deviation
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// move energy bound used to prune candidates
    #[arg(long, value_enum, default_value = "rolling")]
    energy_bound: BoundArg,
    /// start point of each candidate's inner solve
    #[arg(long, value_enum, default_value = "incumbent")]
    candidate_start: StartArg,
    /// skip the restarts from restricted baseline allocations
    #[arg(long)]
    no_refine: bool,
}

impl SolverArgs {
    fn options(&self) -> RunOptions {
        let mut o = RunOptions::with_epsilon(self.eps);
        o.matching.energy_bound = match self.energy_bound {
            BoundArg::Rolling => EnergyBound::Rolling,
            BoundArg::FullSpeed => EnergyBound::FullSpeed,
        };
        o.matching.start = match self.candidate_start {
            StartArg::Cold => CandidateStart::Cold,
            StartArg::Incumbent => CandidateStart::Incumbent,
            StartArg::Best => CandidateStart::Best,
        };
        o.refine = !self.no_refine;
        o
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario file
    Generate {
        #[arg(long)]
        seed: u64,
        /// generator configuration (TOML); defaults when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// output path; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one scenario with one scheme and write the allocation
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "proposed")]
        scheme: String,
        #[arg(long, default_value = "allocation.toml")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run a parameter sweep and write CSV plus a JSON sidecar
    Sweep {
        #[arg(long)]
        param: String,
        /// `start:step:stop` or a comma-separated list
        #[arg(long)]
        grid: String,
        /// inclusive range `a..b` or a comma-separated list
        #[arg(long, default_value = "0..4")]
        seeds: String,
        /// comma-separated scheme names
        #[arg(long, default_value = "proposed")]
        schemes: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        /// record per-row wall time in milliseconds
        #[arg(long)]
        timing: bool,
        /// worker threads; all cores when omitted
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Exhaustive search over every covering topology of a small scenario
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Check an allocation file against a scenario
    Validate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        alloc: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

/// Entry point of the `twinsync` binary; returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// [`cli`] with explicit output streams.
pub fn cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(parsed.command, out) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

enum Failure {
    Usage(String),
    Run(ExperimentError),
}

impl<E: Into<ExperimentError>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.into())
    }
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Run(ExperimentError::File {
        path: "<stdout>".to_string(),
        message: e.to_string(),
    })
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Generate {
            seed,
            config,
            out: path,
        } => {
            let cfg = match config {
                Some(p) => GeneratorConfig::load(&p)?,
                None => GeneratorConfig::default(),
            };
            let s = generate(&cfg, seed)?;
            match path {
                Some(p) => scenario::save(&s, &p)?,
                None => out
                    .write_all(scenario::to_toml(&s)?.as_bytes())
                    .map_err(io_failure)?,
            }
            Ok(EXIT_OK)
        }
        Command::Solve {
            scenario: path,
            scheme,
            out: alloc_path,
            solver,
        } => {
            let scheme: Scheme = scheme
                .parse()
                .map_err(|e: ExperimentError| Failure::Usage(e.to_string()))?;
            let s = scenario::load(&path)?;
            let run = run_scheme(scheme, &s, &solver.options());
            match (run.tau, &run.assignment, &run.allocation) {
                (Some(tau), Some(a), Some(alloc)) => {
                    report_solution(out, &s, tau, a, alloc).map_err(io_failure)?;
                    SolutionFile::new(tau, a, alloc).save(&alloc_path)?;
                    Ok(EXIT_OK)
                }
                _ => {
                    let reason = run.error.unwrap_or_else(|| "no feasible allocation".into());
                    writeln!(out, "infeasible: {reason}").map_err(io_failure)?;
                    Ok(EXIT_INFEASIBLE)
                }
            }
        }
        Command::Sweep {
            param,
            grid,
            seeds,
            schemes,
            config,
            out: csv_path,
            timing,
            threads,
            solver,
        } => {
            let grid = parse_grid(&grid).map_err(Failure::Usage)?;
            let seeds = parse_seeds(&seeds).map_err(Failure::Usage)?;
            let schemes = schemes
                .split(',')
                .map(|s| s.trim().parse::<Scheme>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let mut spec = SweepSpec::new(&param, grid, seeds, schemes);
            if let Some(p) = config {
                spec.base = GeneratorConfig::load(&p)?;
            }
            spec.run = solver.options();
            spec.timing = timing;
            if let Err(e) = spec.validate() {
                return Err(Failure::Usage(e.to_string()));
            }
            let rows = match threads {
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Failure::Usage(e.to_string()))?
                    .install(|| run_sweep(&spec))?,
                None => run_sweep(&spec)?,
            };
            write_sweep(&spec, &rows, &csv_path)?;
            let feasible = rows.iter().filter(|r| r.feasible).count();
            writeln!(
                out,
                "{} rows ({} feasible) written to {}",
                rows.len(),
                feasible,
                csv_path.display()
            )
            .map_err(io_failure)?;
            Ok(EXIT_OK)
        }
        Command::Oracle {
            scenario: path,
            eps,
        } => {
            let s = scenario::load(&path)?;
            let opts = RunOptions::with_epsilon(eps).matching.inner;
            let best = oracle_exhaustive_matching(&s, &opts)?;
            writeln!(out, "states = {}", best.states).map_err(io_failure)?;
            if !best.cost.is_finite() {
                writeln!(out, "infeasible: no covering topology admits an allocation")
                    .map_err(io_failure)?;
                return Ok(EXIT_INFEASIBLE);
            }
            writeln!(out, "J = {}", sig6(best.cost)).map_err(io_failure)?;
            writeln!(out, "assignment = {}", format_assignment(&best.assignment))
                .map_err(io_failure)?;
            Ok(EXIT_OK)
        }
        Command::Validate {
            scenario: path,
            alloc,
            tol,
        } => {
            let s = scenario::load(&path)?;
            let file = SolutionFile::load(&alloc)?;
            if file.agents.len() != s.n_agents() {
                return Err(Failure::Run(ExperimentError::File {
                    path: alloc.display().to_string(),
                    message: format!(
                        "{} agents in the allocation, {} in the scenario",
                        file.agents.len(),
                        s.n_agents()
                    ),
                }));
            }
            let violations = check_feasibility(&s, &file.assignment(), &file.allocation(), tol);
            for v in &violations {
                writeln!(out, "{v}").map_err(io_failure)?;
            }
            if violations.is_empty() {
                writeln!(out, "feasible").map_err(io_failure)?;
                Ok(EXIT_OK)
            } else {
                writeln!(out, "{} violations", violations.len()).map_err(io_failure)?;
                Ok(EXIT_INFEASIBLE)
            }
        }
    }
}

fn report_solution(
    out: &mut dyn Write,
    s: &ScenarioInstance,
    tau: f64,
    assignment: &Assignment,
    alloc: &crate::model::ResourceAllocation,
) -> std::io::Result<()> {
    writeln!(out, "J = {}", sig6(tau))?;
    writeln!(out, "assignment = {}", format_assignment(assignment))?;
    let deviations = crate::model::workflow_metrics(s, assignment, alloc)
        .map(|m| m.deviations())
        .unwrap_or_default();
    for (k, d) in deviations.iter().enumerate() {
        writeln!(
            out,
            "region {k}: deviation = {}, agents = {:?}",
            sig6(*d),
            assignment.members(k)
        )?;
    }
    Ok(())
}

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    format!("{x:.*}", (5 - magnitude).max(0) as usize)
}

fn format_assignment(a: &Assignment) -> String {
    let parts: Vec<String> = a
        .targets()
        .iter()
        .map(|t| t.map_or("-".to_string(), |k| k.to_string()))
        .collect();
    format!("[{}]", parts.join(", "))
}

/// `start:step:stop` (inclusive, float-tolerant) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number `{s}` in grid"))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, step, stop] => {
            let (a, h, b) = (num(start)?, num(step)?, num(stop)?);
            if !(h > 0.0) || b < a {
                return Err(format!(
                    "grid `{text}` needs a positive step and start <= stop"
                ));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| a + i as f64 * h).collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => Err(format!(
            "grid `{text}` is neither start:step:stop nor a list"
        )),
    }
}

/// Inclusive range `a..b` or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| format!("bad seed `{s}`"))
    };
    if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b)?);
        if b < a {
            return Err(format!("empty seed range `{text}`"));
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(num).collect()
}
