use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_schemes, ExperimentError, RunOptions, Scheme, SchemeRun};
use crate::inner_solver::bcd_solve;
use crate::matching::{solve_outer, CandidateStart, EnergyBound};
use crate::model::{Assignment, ResourceAllocation};
use crate::scenario::{generate, GeneratorConfig};

/// Parameters a sweep may vary.
pub const SWEEP_PARAMS: [&str; 6] = [
    "b_tot",
    "theta_coop",
    "eta",
    "delta_pl",
    "e_max",
    "n_agents",
];

/// Parameters whose increase only enlarges the feasible set of a fixed
/// topology, so the solution at one grid value is a valid start at the next.
pub const RELAXING_PARAMS: [&str; 2] = ["b_tot", "e_max"];

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: String,
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub schemes: Vec<Scheme>,
    pub base: GeneratorConfig,
    pub run: RunOptions,
    /// record per-row wall time; off by default so reruns are byte-identical
    pub timing: bool,
}

impl SweepSpec {
    pub fn new(param: &str, grid: Vec<f64>, seeds: Vec<u64>, schemes: Vec<Scheme>) -> Self {
        SweepSpec {
            param: param.to_string(),
            grid,
            seeds,
            schemes,
            base: GeneratorConfig::default(),
            run: RunOptions::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSweep(m.to_string()));
        if !SWEEP_PARAMS.contains(&self.param.as_str()) {
            return bad(&format!("unknown parameter `{}`", self.param));
        }
        if self.grid.is_empty() {
            return bad("empty grid");
        }
        if self.seeds.is_empty() {
            return bad("no seeds");
        }
        if self.schemes.is_empty() {
            return bad("no schemes");
        }
        for &v in &self.grid {
            let mut cfg = self.base.clone();
            cfg.set_param(&self.param, v)?;
            cfg.validate()?;
        }
        Ok(())
    }

    /// Inner-parameter sweeps keep the proposed topology of each seed fixed
    /// at the base configuration, so the restricted baselines differ from
    /// the proposed scheme only in the variables they freeze.
    pub fn shares_topology(&self) -> bool {
        self.param != "n_agents" && self.schemes.iter().any(|s| s.uses_proposed_topology())
    }

    fn config_at(&self, value: f64) -> GeneratorConfig {
        let mut cfg = self.base.clone();
        cfg.set_param(&self.param, value)
            .expect("grid validated before the sweep");
        cfg
    }
}

/// One CSV row. The error text and the solution stay in memory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub seed: u64,
    pub param: String,
    pub value: f64,
    pub tau: Option<f64>,
    pub feasible: bool,
    pub outer_iters: usize,
    pub bcd_iters_total: usize,
    pub wall_ms: Option<f64>,
    #[serde(skip)]
    pub error: Option<String>,
    #[serde(skip)]
    pub solution: Option<(Assignment, ResourceAllocation)>,
}

impl ResultRow {
    fn new(run: SchemeRun, seed: u64, param: &str, value: f64, wall_ms: Option<f64>) -> Self {
        let solution = run.assignment.zip(run.allocation);
        ResultRow {
            scheme: run.scheme,
            seed,
            param: param.to_string(),
            value,
            feasible: run.tau.is_some(),
            tau: run.tau,
            outer_iters: run.outer_iters,
            bcd_iters_total: run.bcd_iters_total,
            wall_ms,
            error: run.error,
            solution,
        }
    }
}

/// Runs every (value, seed, scheme) combination. Failures are recorded in
/// their rows; only an invalid spec is an error. Rows are sorted by scheme,
/// parameter, seed and value whatever the completion order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>, ExperimentError> {
    spec.validate()?;
    let topologies: Vec<Option<Assignment>> = if spec.shares_topology() {
        spec.seeds
            .par_iter()
            .map(|&seed| {
                let scenario = generate(&spec.base, seed).ok()?;
                solve_outer(&scenario, &spec.run.matching)
                    .ok()
                    .map(|s| s.assignment)
            })
            .collect()
    } else {
        vec![None; spec.seeds.len()]
    };
    let cells: Vec<(usize, f64)> = spec
        .grid
        .iter()
        .flat_map(|&v| (0..spec.seeds.len()).map(move |i| (i, v)))
        .collect();
    let mut rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|&(i, value)| run_cell(spec, spec.seeds[i], value, topologies[i].as_ref()))
        .collect();
    rows.sort_by(|a, b| {
        (a.scheme, &a.param, a.seed)
            .cmp(&(b.scheme, &b.param, b.seed))
            .then(a.value.total_cmp(&b.value))
    });
    if spec.shares_topology() && RELAXING_PARAMS.contains(&spec.param.as_str()) {
        continuation(spec, &mut rows);
    }
    Ok(rows)
}

/// Walks each (scheme, seed) chain of a relaxing sweep upwards and restarts
/// the scheme's inner solver from the previous grid value's allocation,
/// keeping the result when it beats the independent solve. The inner solver
/// only finds stationary points, so without this a looser budget can land
/// on a worse one.
fn continuation(spec: &SweepSpec, rows: &mut [ResultRow]) {
    let mut chains: Vec<&mut [ResultRow]> = Vec::new();
    let mut rest = rows;
    while !rest.is_empty() {
        let head = (rest[0].scheme, rest[0].seed);
        let len = rest
            .iter()
            .take_while(|r| (r.scheme, r.seed) == head)
            .count();
        let (chain, tail) = rest.split_at_mut(len);
        if head.0.uses_proposed_topology() {
            chains.push(chain);
        }
        rest = tail;
    }
    chains.into_par_iter().for_each(|chain| {
        for i in 1..chain.len() {
            let (done, todo) = chain.split_at_mut(i);
            let (prev, row) = (&done[i - 1], &mut todo[0]);
            let Some((assignment, start)) = prev.solution.as_ref() else {
                continue;
            };
            if row.solution.as_ref().is_some_and(|(a, _)| a != assignment) {
                continue;
            }
            let began = Instant::now();
            let Ok(scenario) = generate(&spec.config_at(row.value), row.seed) else {
                continue;
            };
            let scenario = if row.scheme == Scheme::NoCoop {
                scenario.without_cooperation()
            } else {
                scenario
            };
            let opts = row.scheme.inner_options(&spec.run.matching.inner);
            if let Ok(sol) = bcd_solve(&scenario, assignment, Some(start), &opts) {
                row.bcd_iters_total += sol.trace.iterations;
                if sol.trace.warm_started && row.tau.map_or(true, |t| sol.tau < t) {
                    row.tau = Some(sol.tau);
                    row.feasible = true;
                    row.error = None;
                    row.solution = Some((assignment.clone(), sol.allocation));
                }
            }
            if let Some(ms) = row.wall_ms.as_mut() {
                *ms += began.elapsed().as_secs_f64() * 1e3;
            }
        }
    });
}

fn run_cell(
    spec: &SweepSpec,
    seed: u64,
    value: f64,
    topology: Option<&Assignment>,
) -> Vec<ResultRow> {
    let scenario = match generate(&spec.config_at(value), seed) {
        Ok(s) => s,
        Err(e) => {
            return spec
                .schemes
                .iter()
                .map(|&s| {
                    let mut row =
                        ResultRow::new(SchemeRun::failed(s, &e), seed, &spec.param, value, None);
                    row.wall_ms = spec.timing.then_some(0.0);
                    row
                })
                .collect()
        }
    };
    if !spec.timing {
        return run_schemes(&scenario, &spec.schemes, topology, &spec.run)
            .into_iter()
            .map(|r| ResultRow::new(r, seed, &spec.param, value, None))
            .collect();
    }
    spec.schemes
        .iter()
        .map(|&s| {
            let start = Instant::now();
            let run = run_schemes(&scenario, &[s], topology, &spec.run).remove(0);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            ResultRow::new(run, seed, &spec.param, value, Some(ms))
        })
        .collect()
}

/// CSV body of a sweep; byte-identical for identical inputs when timing is
/// off.
pub fn sweep_csv(rows: &[ResultRow]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(&e))?;
    }
    let bytes = w.into_inner().map_err(|e| csv_error(&e))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_error(e: &dyn std::fmt::Display) -> ExperimentError {
    ExperimentError::File {
        path: "<csv>".to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
struct RowFailure<'a> {
    scheme: Scheme,
    seed: u64,
    value: f64,
    error: &'a str,
}

#[derive(Debug, Clone, Serialize)]
struct SweepMetadata<'a> {
    version: &'static str,
    created_unix: u64,
    param: &'a str,
    grid: &'a [f64],
    seeds: &'a [u64],
    schemes: &'a [Scheme],
    epsilon: f64,
    max_iter: usize,
    energy_bound: EnergyBound,
    candidate_start: CandidateStart,
    refine: bool,
    shared_topology: bool,
    timing: bool,
    config: &'a GeneratorConfig,
    failures: Vec<RowFailure<'a>>,
}

/// Path of the metadata sidecar written next to `csv_path`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the CSV and its JSON sidecar, which carries the full
/// configuration, the code version, a timestamp and the failure messages.
pub fn write_sweep(
    spec: &SweepSpec,
    rows: &[ResultRow],
    csv_path: &Path,
) -> Result<(), ExperimentError> {
    let io = |p: &Path, e: std::io::Error| ExperimentError::File {
        path: p.display().to_string(),
        message: e.to_string(),
    };
    std::fs::write(csv_path, sweep_csv(rows)?).map_err(|e| io(csv_path, e))?;
    let meta = SweepMetadata {
        version: env!("CARGO_PKG_VERSION"),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        param: &spec.param,
        grid: &spec.grid,
        seeds: &spec.seeds,
        schemes: &spec.schemes,
        epsilon: spec.run.matching.inner.epsilon,
        max_iter: spec.run.matching.inner.max_iter,
        energy_bound: spec.run.matching.energy_bound,
        candidate_start: spec.run.matching.start,
        refine: spec.run.refine,
        shared_topology: spec.shares_topology(),
        timing: spec.timing,
        config: &spec.base,
        failures: rows
            .iter()
            .filter_map(|r| {
                r.error.as_deref().map(|error| RowFailure {
                    scheme: r.scheme,
                    seed: r.seed,
                    value: r.value,
                    error,
                })
            })
            .collect(),
    };
    let side = sidecar_path(csv_path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| ExperimentError::File {
        path: side.display().to_string(),
        message: e.to_string(),
    })?;
    std::fs::write(&side, json).map_err(|e| io(&side, e))
}
