//! Step selection and the outer solver loop.
//!
//! Two rules turn an oracle into a descent step:
//! * directional: keep the direction, backtrack `γ` from 1 until
//!   `J(u + v_γ) - J(u) <= γ c_0(0)`, where `c_0(0) = ½∇Jᵀv` for the classical oracles;
//! * regularized: recompute the direction with `ν = 1/γ` until
//!   `J(u + v_γ) - J(u) <= c_0(0)`.
//!
//! In both cases `v_γ` is obtained by rolling the (scaled) policies out, on the
//! linearized dynamics for GD/GN/NE and on the original dynamics for DDP.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::core::{add_controls, controls_dot, Controls, TrajectoryProblem, Vector};
use crate::error::{Error, Result};
use crate::lqsolve::CheckMode;
use crate::oracles::{self, ExpansionBundle, OracleDirection, OracleKind, StepMaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Directional,
    Regularized,
}

impl Rule {
    pub const ALL: [Rule; 2] = [Rule::Directional, Rule::Regularized];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Directional => "directional",
            Rule::Regularized => "regularized",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config {
                field: "linesearch".into(),
                msg: format!("unknown line search `{s}` (expected directional or regularized)"),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchConfig {
    pub rule: Rule,
    pub rho_dec: f64,
    pub rho_inc: f64,
    pub gamma_min: f64,
    /// First nonzero regularization tried when the unregularized direction is rejected.
    pub nu_init: f64,
    /// Largest regularization tried before giving up on a directional step.
    pub nu_max: f64,
    /// Divide the regularized stepsize by the norm of the cost gradient.
    pub gradient_scaled: bool,
    /// Warm-start value of the (unscaled) regularized stepsize before the first iteration.
    pub gamma_init: f64,
    /// Fixed regularization of the gradient oracle in directional mode.
    pub gd_nu: f64,
    pub check_mode: CheckMode,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            rule: Rule::Directional,
            rho_dec: 0.5,
            rho_inc: 10.0,
            gamma_min: 1e-12,
            nu_init: 1e-6,
            nu_max: 1e20,
            gradient_scaled: true,
            gamma_init: 1.0,
            gd_nu: 1.0,
            check_mode: CheckMode::Descent,
        }
    }
}

impl LineSearchConfig {
    pub fn with_rule(rule: Rule) -> Self {
        Self {
            rule,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| {
            Err(Error::Config {
                field: field.into(),
                msg: msg.into(),
            })
        };
        if !(self.rho_dec > 0.0 && self.rho_dec < 1.0) {
            return bad("rho_dec", "must lie in (0, 1)");
        }
        if !(self.rho_inc > 1.0) {
            return bad("rho_inc", "must exceed 1");
        }
        if !(self.gamma_min > 0.0) {
            return bad("gamma_min", "must be positive");
        }
        if !(self.nu_init > 0.0) || !(self.nu_max >= self.nu_init) {
            return bad("nu_init", "must be positive and at most nu_max");
        }
        if !(self.gamma_init > 0.0) {
            return bad("gamma_init", "must be positive");
        }
        if !(self.gd_nu > 0.0) {
            return bad("gd_nu", "gradient oracle needs a positive regularization");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopCriteria {
    pub max_iters: usize,
    pub rel_cost_tol: f64,
    pub min_step: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_iters: 100,
            rel_cost_tol: 1e-12,
            min_step: 1e-20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Stalled,
    MaxIters,
    Diverged,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Stalled => "stalled",
            Status::MaxIters => "max-iters",
            Status::Diverged => "diverged",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Status {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Status::Converged, Status::Stalled, Status::MaxIters, Status::Diverged]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown status `{s}`")))
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `J(u_{k+1})`.
    pub cost: f64,
    /// Accepted `γ`.
    pub stepsize: f64,
    /// `ν` of the backward pass that produced the step.
    pub regularization: f64,
    /// `c_0(0)` of the unscaled direction.
    pub model_decrease: f64,
    /// Right-hand side of the acceptance test that was checked.
    pub bound: f64,
    /// `J(u_{k+1}) - J(u_k)`.
    pub decrease: f64,
    /// `∇J(u_k)ᵀ v` for the unscaled direction `v`.
    pub directional_derivative: f64,
    /// Stationarity residual at `u_{k+1}`.
    pub residual: f64,
    /// Cumulative time in oracle and line-search work.
    pub time_ms: f64,
    /// Whether the acceptance test passed (false only for a fallback step after exhaustion).
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub initial_cost: f64,
    pub initial_residual: f64,
    pub iterations: Vec<IterationRecord>,
    pub status: Status,
}

impl SolveTrace {
    pub fn final_cost(&self) -> f64 {
        self.iterations.last().map_or(self.initial_cost, |r| r.cost)
    }

    pub fn final_residual(&self) -> f64 {
        self.iterations
            .last()
            .map_or(self.initial_residual, |r| r.residual)
    }

    pub fn costs(&self) -> Vec<f64> {
        std::iter::once(self.initial_cost)
            .chain(self.iterations.iter().map(|r| r.cost))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub controls: Controls,
    pub trace: SolveTrace,
}

#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub error: Error,
    pub trace: SolveTrace,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "solve failed after {} iterations: {}", self.trace.iterations.len(), self.error)
    }
}

impl std::error::Error for SolveFailure {}

/// Absolute slack for comparing cost differences with model decreases: a few
/// units of round-off in the cost values themselves. Without it, exact models
/// (where both sides agree mathematically) would be rejected half the time.
pub fn roundoff_slack(j_old: f64, j_new: f64) -> f64 {
    8.0 * f64::EPSILON * j_old.abs().max(j_new.abs())
}

/// Sufficient decrease test `J_new - J_old <= bound` (up to round-off in the
/// cost values), additionally requiring `J_new <= J_old`.
pub fn sufficient_decrease(j_old: f64, j_new: f64, bound: f64) -> bool {
    j_new.is_finite() && j_new <= j_old && j_new - j_old <= bound + roundoff_slack(j_old, j_new)
}

/// A candidate step produced by a search.
#[derive(Debug, Clone)]
pub struct Step {
    pub controls: Controls,
    pub cost: f64,
    pub gamma: f64,
    pub regularization: f64,
    pub model_decrease: f64,
    pub bound: f64,
    /// Unscaled direction (for the directional rule) or accepted increment.
    pub direction: Controls,
}

#[derive(Debug, Clone)]
pub enum SearchOutcome {
    Accepted(Step),
    /// No trial passed before `γ < γ_min`. `fallback` is the last trial if it
    /// decreased the cost.
    Stalled { gamma: f64, fallback: Option<Step> },
}

fn trial(problem: &TrajectoryProblem, u: &[Vector], v: &[Vector]) -> Option<(Controls, f64)> {
    let cand = add_controls(u, v);
    match problem.cost(&cand) {
        Ok(j) => Some((cand, j)),
        Err(e) => {
            log::debug!("trial rejected: {e}");
            None
        }
    }
}

/// Backtracking on `γ` with the policies `y -> γk + Ky` rolled on `maps`.
pub fn directional_search(
    problem: &TrajectoryProblem,
    u: &[Vector],
    cost_u: f64,
    dir: &OracleDirection,
    maps: &StepMaps,
    cfg: &LineSearchConfig,
) -> Result<SearchOutcome> {
    let c0 = dir.model_decrease();
    if !dir.feasible || !(c0 < 0.0) {
        return Err(Error::Parameter(format!(
            "directional search needs a descent direction, got c0(0) = {c0}"
        )));
    }
    let y0 = Vector::zeros(problem.state_dim());
    let mut gamma = 1.0;
    let mut last = None;
    while gamma >= cfg.gamma_min {
        let policies: Vec<_> = dir.policies.iter().map(|p| p.scaled(gamma)).collect();
        if let Ok(v) = oracles::rollout(&y0, &policies, maps) {
            if let Some((cand, j)) = trial(problem, u, &v) {
                let bound = gamma * c0;
                let step = Step {
                    controls: cand,
                    cost: j,
                    gamma,
                    regularization: dir.regularization,
                    model_decrease: c0,
                    bound,
                    direction: dir.direction.clone(),
                };
                if sufficient_decrease(cost_u, j, bound) {
                    return Ok(SearchOutcome::Accepted(step));
                }
                last = (j < cost_u).then_some(step);
            } else {
                last = None;
            }
        } else {
            last = None;
        }
        gamma *= cfg.rho_dec;
    }
    Ok(SearchOutcome::Stalled {
        gamma,
        fallback: last,
    })
}

/// Regularized search: trial `γ` sets `ν = 1/γ` in the backward pass.
/// Returns the outcome and the unscaled stepsize to warm-start the next call.
pub fn regularized_search(
    problem: &TrajectoryProblem,
    bundle: &ExpansionBundle,
    kind: OracleKind,
    cfg: &LineSearchConfig,
    gamma_prev: f64,
) -> Result<(SearchOutcome, f64)> {
    let u = &bundle.controls;
    let cost_u = bundle.total;
    let scale = if cfg.gradient_scaled {
        let s = bundle.cost_gradient_norm()?;
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    } else {
        1.0
    };
    let mut gamma = cfg.rho_inc * gamma_prev / scale;
    let mut last = None;
    while gamma >= cfg.gamma_min {
        let nu = 1.0 / gamma;
        match oracles::direction(bundle, kind, nu, cfg.check_mode) {
            Ok(dir) if dir.feasible && dir.model_decrease() < 0.0 => {
                let c0 = dir.model_decrease();
                if let Some((cand, j)) = trial(problem, u, &dir.direction) {
                    let step = Step {
                        controls: cand,
                        cost: j,
                        gamma,
                        regularization: nu,
                        model_decrease: c0,
                        bound: c0,
                        direction: dir.direction,
                    };
                    if sufficient_decrease(cost_u, j, c0) {
                        return Ok((SearchOutcome::Accepted(step), gamma * scale));
                    }
                    last = (j < cost_u).then_some(step);
                } else {
                    last = None;
                }
            }
            Ok(_) => last = None,
            Err(e @ Error::Divergence { .. }) => {
                log::debug!("regularized trial rejected: {e}");
                last = None;
            }
            Err(e) => return Err(e),
        }
        gamma *= cfg.rho_dec;
    }
    Ok((SearchOutcome::Stalled { gamma, fallback: last }, gamma * scale))
}

/// Direction for the directional rule: the unregularized pass first, then
/// `ν = ν_init, ρ_inc ν_init, ...` until the pass is feasible with `c_0(0) < 0`.
pub fn escalate(
    bundle: &ExpansionBundle,
    kind: OracleKind,
    cfg: &LineSearchConfig,
) -> Result<Option<OracleDirection>> {
    if kind == OracleKind::Gd {
        let d = oracles::direction(bundle, kind, cfg.gd_nu, cfg.check_mode)?;
        return Ok((d.model_decrease() < 0.0).then_some(d));
    }
    let mut nu = 0.0;
    loop {
        match oracles::direction(bundle, kind, nu, cfg.check_mode) {
            Ok(d) if d.feasible && d.model_decrease() < 0.0 => return Ok(Some(d)),
            Ok(_) | Err(Error::Divergence { .. }) => {}
            Err(e) => return Err(e),
        }
        nu = if nu == 0.0 { cfg.nu_init } else { nu * cfg.rho_inc };
        if nu > cfg.nu_max {
            return Ok(None);
        }
    }
}

/// Largest control-gradient component of the Hamiltonian
/// `H_t(x, u, λ) = λᵀ(f_t(x, u) - x) - h_t(x, u)` along the trajectory, with
/// costates `λ_T = -∇h_T(x_T)` and `λ_t = λ_{t+1} + ∇_x H_t(x_t, u_t, λ_{t+1})`.
pub fn stationarity_residual(problem: &TrajectoryProblem, u: &[Vector]) -> Result<f64> {
    let bundle = oracles::forward(problem, u, 1, 1)?;
    residual_from(&bundle)
}

fn residual_from(bundle: &ExpansionBundle) -> Result<f64> {
    let lins = bundle.lin_maps()?;
    let grads = bundle.cost_gradients()?;
    let nx = bundle.problem.state_dim();
    let eye = crate::core::Matrix::identity(nx, nx);
    let mut lambda = -bundle.terminal_gradient()?;
    let mut worst: f64 = 0.0;
    for t in (0..bundle.horizon()).rev() {
        let fx = &lins[t].a - &eye;
        let hu = lins[t].b.transpose() * &lambda - grads[t].1;
        worst = worst.max(hu.amax());
        let hx = fx.transpose() * &lambda - grads[t].0;
        lambda += hx;
    }
    Ok(worst)
}

/// Whether a residual certifies approximate stationarity at cost `j`.
pub fn is_stationary(residual: f64, j: f64) -> bool {
    residual <= 1e-6 * (1.0 + j.abs())
}

fn ended(residual: f64, j: f64) -> Status {
    if is_stationary(residual, j) {
        Status::Converged
    } else {
        Status::Stalled
    }
}

/// Iterates oracle and line search from `u0` until a stop criterion fires.
pub fn solve(
    problem: &TrajectoryProblem,
    u0: &[Vector],
    kind: OracleKind,
    cfg: &LineSearchConfig,
    stop: &StopCriteria,
) -> std::result::Result<Solution, SolveFailure> {
    let mut trace = SolveTrace {
        initial_cost: f64::NAN,
        initial_residual: f64::NAN,
        iterations: Vec::new(),
        status: Status::Diverged,
    };
    let fail = |error: Error, trace: &SolveTrace| SolveFailure {
        error,
        trace: SolveTrace {
            status: Status::Diverged,
            ..trace.clone()
        },
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &trace));
    }
    if u0.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
        return Err(fail(Error::Parameter("initial controls must be finite".into()), &trace));
    }
    let first = match oracles::forward(problem, u0, 1, 1) {
        Ok(b) => b,
        Err(e) => return Err(fail(e, &trace)),
    };
    trace.initial_cost = first.total;
    trace.initial_residual = residual_from(&first).unwrap_or(f64::NAN);
    drop(first);

    let mut u: Controls = u0.to_vec();
    let mut cost = trace.initial_cost;
    let mut residual = trace.initial_residual;
    let mut gamma_prev = cfg.gamma_init;
    let mut elapsed = 0.0;
    let (of, oh) = kind.orders();

    for k in 0..stop.max_iters {
        let clock = Instant::now();
        let bundle = match oracles::forward(problem, &u, of, oh) {
            Ok(b) => b,
            Err(e) => return Err(fail(e, &trace)),
        };
        let grad = match bundle.gradient() {
            Ok(g) => g,
            Err(e) => return Err(fail(e, &trace)),
        };
        if grad.iter().all(|g| g.iter().all(|c| *c == 0.0)) {
            trace.status = Status::Converged;
            return Ok(Solution { controls: u, trace });
        }
        let outcome = match cfg.rule {
            Rule::Directional => match escalate(&bundle, kind, cfg) {
                Ok(Some(dir)) => {
                    let maps = match oracles::step_maps(&bundle, kind) {
                        Ok(m) => m,
                        Err(e) => return Err(fail(e, &trace)),
                    };
                    directional_search(problem, &u, cost, &dir, &maps, cfg)
                }
                Ok(None) => Ok(SearchOutcome::Stalled {
                    gamma: 0.0,
                    fallback: None,
                }),
                Err(e) => Err(e),
            },
            Rule::Regularized => regularized_search(problem, &bundle, kind, cfg, gamma_prev)
                .map(|(o, g)| {
                    gamma_prev = g;
                    o
                }),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => return Err(fail(e, &trace)),
        };
        drop(bundle);
        elapsed += clock.elapsed().as_secs_f64() * 1e3;

        let (step, accepted) = match outcome {
            SearchOutcome::Accepted(s) => (Some(s), true),
            SearchOutcome::Stalled { fallback, gamma } => {
                log::info!("line search exhausted at iteration {k} (gamma {gamma:e})");
                (fallback, false)
            }
        };
        if let Some(step) = step {
            let new_residual = stationarity_residual(problem, &step.controls).unwrap_or(f64::NAN);
            let dd = controls_dot(&grad, &step.direction);
            let rel = (step.cost - cost).abs() / cost.abs().max(f64::MIN_POSITIVE);
            trace.iterations.push(IterationRecord {
                iter: k + 1,
                cost: step.cost,
                stepsize: step.gamma,
                regularization: step.regularization,
                model_decrease: step.model_decrease,
                bound: step.bound,
                decrease: step.cost - cost,
                directional_derivative: dd,
                residual: new_residual,
                time_ms: elapsed,
                accepted,
            });
            log::debug!(
                "iter {:>4} cost {:.12e} step {:.3e} reg {:.3e} residual {:.3e}",
                k + 1,
                step.cost,
                step.gamma,
                step.regularization,
                new_residual
            );
            u = step.controls;
            cost = step.cost;
            residual = new_residual;
            if !accepted || step.gamma < stop.min_step || rel < stop.rel_cost_tol {
                trace.status = ended(residual, cost);
                return Ok(Solution { controls: u, trace });
            }
        } else {
            trace.status = ended(residual, cost);
            return Ok(Solution { controls: u, trace });
        }
    }
    trace.status = Status::MaxIters;
    Ok(Solution { controls: u, trace })
}
