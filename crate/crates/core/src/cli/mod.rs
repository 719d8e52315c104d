//! Command-line harness: `solve`, `benchmark` and `verify`.
//!
//! Exit codes: 0 success (converged or iteration budget used up), 1 bad
//! configuration or failed verification, 2 stalled line search, 3 diverged run.

pub mod bench;
pub mod config;
pub mod trace;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use bench::{exit_code, run_config, run_grid, write_grid};
use config::{parse_pairs, GridConfig, RunConfig};
use trace::TraceFile;
use verify::{run_verify, Group, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "trajopt", version, about = "Trajectory optimization with iterative linear-quadratic oracles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem and write its convergence trace.
    Solve(RunFlags),
    /// Run a grid of problems and algorithms (list flags take comma-separated values).
    Benchmark {
        #[command(flatten)]
        run: RunFlags,
        /// Number of worker threads.
        #[arg(long)]
        parallel: Option<String>,
    },
    /// Run the built-in consistency checks.
    Verify(VerifyFlags),
}

/// Flags mirroring the keys of the configuration file. They are kept as text
/// and validated by the configuration parser.
#[derive(Debug, Args)]
pub struct RunFlags {
    /// Configuration file with `key=value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// pendulum, cartpole, simple-car or bicycle-car.
    #[arg(long)]
    pub env: Option<String>,
    /// gd, gn, ne, ddp-lq or ddp-q.
    #[arg(long)]
    pub algo: Option<String>,
    /// directional or regularized.
    #[arg(long)]
    pub linesearch: Option<String>,
    /// Number of time steps.
    #[arg(long)]
    pub horizon: Option<String>,
    /// euler, rk4, rk4-varying or auto.
    #[arg(long)]
    pub discretizer: Option<String>,
    /// Seed for random initial controls (`none` starts from zero controls).
    #[arg(long)]
    pub seed: Option<String>,
    /// Amplitude of random initial controls.
    #[arg(long)]
    pub init_scale: Option<String>,
    #[arg(long)]
    pub max_iters: Option<String>,
    /// Stop when the relative cost change falls below this value.
    #[arg(long)]
    pub rel_cost_tol: Option<String>,
    /// Stop when the accepted stepsize falls below this value.
    #[arg(long)]
    pub min_step: Option<String>,
    /// Trace file for `solve`, output directory for `benchmark`.
    #[arg(long)]
    pub out: Option<String>,
}

impl RunFlags {
    fn pairs(&self) -> Vec<(String, String)> {
        [
            ("env", &self.env),
            ("algo", &self.algo),
            ("linesearch", &self.linesearch),
            ("horizon", &self.horizon),
            ("discretizer", &self.discretizer),
            ("seed", &self.seed),
            ("init_scale", &self.init_scale),
            ("max_iters", &self.max_iters),
            ("rel_cost_tol", &self.rel_cost_tol),
            ("min_step", &self.min_step),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
    }

    fn file_pairs(&self) -> Result<Vec<(String, String)>> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
                    field: "config".into(),
                    msg: format!("{}: {e}", path.display()),
                })?;
                parse_pairs(&text)
            }
            None => Ok(Vec::new()),
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply(&self.file_pairs()?)?;
        cfg.apply(&self.pairs())?;
        Ok(cfg)
    }

    pub fn grid_config(&self, parallel: Option<&String>) -> Result<GridConfig> {
        let mut cfg = GridConfig::default();
        cfg.apply(&self.file_pairs()?)?;
        cfg.apply(&self.pairs())?;
        if let Some(p) = parallel {
            cfg.set("parallel", p)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct VerifyFlags {
    /// Random instances per check.
    #[arg(long, default_value_t = 20)]
    pub scale: usize,
    /// Comma-separated groups to run: dense, oracles, lq, scaling, derivatives,
    /// linesearch, counterexample, certificate, smoothness.
    #[arg(long)]
    pub only: Option<String>,
    /// Offset the computed values to check that the harness reports failures.
    #[arg(long)]
    pub inject_perturbation: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Configures `log` from `TRAJOPT_LOG` (`quiet`, `info` or `debug`; warnings otherwise).
pub fn init_logging() {
    let level = match std::env::var("TRAJOPT_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_target(false)
        .try_init();
}

/// Parses `args` (including the program name) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match cli.command {
        Command::Solve(flags) => cmd_solve(&flags, out, err),
        Command::Benchmark { run, parallel } => cmd_benchmark(&run, parallel.as_ref(), out, err),
        Command::Verify(flags) => cmd_verify(&flags, out, err),
    }
}

fn cmd_solve(flags: &RunFlags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = match flags.run_config() {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    log::info!("solve config:\n{}", cfg.serialize());
    let outcome = match run_config(&cfg) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let trace = &outcome.trace;
    let reference = trace.final_cost();
    let file = TraceFile::from_trace(trace, reference, cfg.common.seed);
    let written = match &cfg.out {
        Some(path) => file.write_atomic(path),
        None => file.write(&mut *out),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: writing trace: {e}");
        return 1;
    }
    let _ = writeln!(
        err,
        "status={} iterations={} cost={:.12e} residual={:.3e} wall_ms={:.1}",
        trace.status,
        trace.iterations.len(),
        trace.final_cost(),
        trace.final_residual(),
        outcome.wall_ms
    );
    if let Some(e) = &outcome.error {
        let _ = writeln!(err, "error: {e}");
        return 3;
    }
    exit_code(trace.status)
}

fn cmd_benchmark(flags: &RunFlags, parallel: Option<&String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let grid = match flags.grid_config(parallel) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let results = match run_grid(&grid) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let summary = match write_grid(&grid.out, &results, grid.common.seed) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    for r in &results {
        let status = match &r.outcome {
            Ok(o) if o.error.is_some() => "diverged".to_string(),
            Ok(o) => o.status().to_string(),
            Err(_) => "error".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<40} {:<10} cost={:.6e} rel_subopt={:.3e}",
            r.cell.file_name(),
            status,
            r.final_cost(),
            r.rel_subopt()
        );
    }
    let _ = writeln!(out, "summary: {}", summary.display());
    if results.iter().any(|r| r.succeeded()) {
        0
    } else {
        let _ = writeln!(err, "error: every cell failed");
        3
    }
}

fn cmd_verify(flags: &VerifyFlags, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let only = match &flags.only {
        Some(list) => match list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse::<Group>)
            .collect::<Result<Vec<_>>>()
        {
            Ok(g) => g,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return 1;
            }
        },
        None => Vec::new(),
    };
    if flags.scale == 0 {
        let _ = writeln!(err, "error: config error in `scale`: must be at least 1");
        return 1;
    }
    let opts = VerifyOptions {
        scale: flags.scale,
        only,
        perturbation: if flags.inject_perturbation { 1e-3 } else { 0.0 },
        seed: flags.seed,
    };
    let clock = Instant::now();
    let checks = run_verify(&opts);
    for c in &checks {
        let _ = writeln!(out, "{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(
        out,
        "{} checks, {} failed, {:.1} s",
        checks.len(),
        failed,
        clock.elapsed().as_secs_f64()
    );
    if failed == 0 {
        0
    } else {
        1
    }
}
