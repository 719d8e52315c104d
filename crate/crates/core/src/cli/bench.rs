//! Single runs and benchmark grids.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Common, GridConfig, RunConfig};
use super::trace::{format_f64, rel_subopt, TraceFile};
use crate::core::{Controls, TrajectoryProblem};
use crate::envs::random::random_controls;
use crate::envs::{build_problem, EnvKind};
use crate::error::{Error, Result};
use crate::linesearch::{solve, LineSearchConfig, Rule, SolveTrace, Status};
use crate::oracles::OracleKind;

/// Initial controls: zeros, or seeded uniform noise.
pub fn initial_controls(problem: &TrajectoryProblem, common: &Common) -> Controls {
    match common.seed {
        None => problem.zero_controls(),
        Some(seed) => random_controls(seed, problem.horizon(), problem.ctrl_dim(), common.init_scale),
    }
}

/// Outcome of one solve, successful or not.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: SolveTrace,
    /// Solver error when the run diverged.
    pub error: Option<Error>,
    pub wall_ms: f64,
}

impl RunOutcome {
    pub fn status(&self) -> Status {
        self.trace.status
    }
}

/// Builds the problem and solves it. Configuration errors are returned as `Err`;
/// solver failures end up in [`RunOutcome::error`].
pub fn run_once(
    env: EnvKind,
    algo: OracleKind,
    rule: Rule,
    horizon: usize,
    common: &Common,
) -> Result<RunOutcome> {
    let problem = build_problem(env, horizon, common.discretizer_for(env))?;
    let u0 = initial_controls(&problem, common);
    let clock = Instant::now();
    let result = solve(&problem, &u0, algo, &LineSearchConfig::with_rule(rule), &common.stop);
    let wall_ms = clock.elapsed().as_secs_f64() * 1e3;
    Ok(match result {
        Ok(sol) => RunOutcome {
            trace: sol.trace,
            error: None,
            wall_ms,
        },
        Err(fail) => RunOutcome {
            trace: fail.trace,
            error: Some(fail.error),
            wall_ms,
        },
    })
}

pub fn run_config(cfg: &RunConfig) -> Result<RunOutcome> {
    run_once(cfg.env, cfg.algo, cfg.linesearch, cfg.horizon, &cfg.common)
}

/// Exit code of the solve command for a finished run.
pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged | Status::MaxIters => 0,
        Status::Stalled => 2,
        Status::Diverged => 3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub env: EnvKind,
    pub horizon: usize,
    pub algo: OracleKind,
    pub linesearch: Rule,
}

impl Cell {
    pub fn file_name(&self) -> String {
        format!("{}-T{}-{}-{}.csv", self.env, self.horizon, self.algo, self.linesearch)
    }
}

/// One summary line of a benchmark.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub outcome: std::result::Result<RunOutcome, Error>,
    pub reference_cost: f64,
}

impl CellResult {
    pub fn succeeded(&self) -> bool {
        matches!(&self.outcome, Ok(o) if o.error.is_none())
    }

    pub fn final_cost(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::NAN, |o| o.trace.final_cost())
    }

    pub fn rel_subopt(&self) -> f64 {
        match &self.outcome {
            Ok(o) => rel_subopt(o.trace.final_cost(), o.trace.initial_cost, self.reference_cost),
            Err(_) => f64::NAN,
        }
    }
}

pub fn grid_cells(grid: &GridConfig) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(grid.len());
    for &env in &grid.envs {
        for &horizon in &grid.horizons {
            for &algo in &grid.algos {
                for &linesearch in &grid.linesearches {
                    cells.push(Cell { env, horizon, algo, linesearch });
                }
            }
        }
    }
    cells
}

/// Runs every cell, then fixes each `(env, horizon)` reference cost to the
/// best final cost reached in that group.
pub fn run_grid(grid: &GridConfig) -> Result<Vec<CellResult>> {
    if grid.is_empty() {
        return Err(Error::Config {
            field: "grid".into(),
            msg: "no cells to run (every list must be non-empty)".into(),
        });
    }
    let cells = grid_cells(grid);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.parallel)
        .build()
        .map_err(|e| Error::Config {
            field: "parallel".into(),
            msg: e.to_string(),
        })?;
    let outcomes: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| {
                log::info!("running {}", c.file_name());
                run_once(c.env, c.algo, c.linesearch, c.horizon, &grid.common)
            })
            .collect()
    });
    let mut best: HashMap<(EnvKind, usize), f64> = HashMap::new();
    for (c, o) in cells.iter().zip(&outcomes) {
        if let Ok(o) = o {
            let j = o.trace.final_cost();
            if j.is_finite() {
                let e = best.entry((c.env, c.horizon)).or_insert(j);
                *e = e.min(j);
            }
        }
    }
    Ok(cells
        .into_iter()
        .zip(outcomes)
        .map(|(cell, outcome)| {
            let reference_cost = best.get(&(cell.env, cell.horizon)).copied().unwrap_or(f64::NAN);
            CellResult { cell, outcome, reference_cost }
        })
        .collect())
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "env",
    "horizon",
    "algo",
    "linesearch",
    "status",
    "iterations",
    "final_cost",
    "rel_subopt",
    "wall_ms",
    "error",
];

/// Writes one trace per cell and `summary.csv` into `dir`.
pub fn write_grid(dir: &std::path::Path, results: &[CellResult], seed: Option<u64>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(SUMMARY_HEADER).map_err(io)?;
    for r in results {
        let c = &r.cell;
        let (status, iters, wall, err) = match &r.outcome {
            Ok(o) => {
                TraceFile::from_trace(&o.trace, r.reference_cost, seed).write_atomic(&dir.join(c.file_name()))?;
                (
                    o.status().to_string(),
                    o.trace.iterations.len().to_string(),
                    format!("{:.3}", o.wall_ms),
                    o.error.as_ref().map_or(String::new(), ToString::to_string),
                )
            }
            Err(e) => ("error".into(), String::new(), String::new(), e.to_string()),
        };
        w.write_record([
            c.env.to_string(),
            c.horizon.to_string(),
            c.algo.to_string(),
            c.linesearch.to_string(),
            status,
            iters,
            format_f64(r.final_cost()),
            format_f64(r.rel_subopt()),
            wall,
            err,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    let path = dir.join("summary.csv");
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, &bytes)?;
    tmp.persist(&path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(path)
}
