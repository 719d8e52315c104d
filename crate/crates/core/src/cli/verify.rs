//! Self-checks run by the `verify` command.
//!
//! Every check reports the largest error it saw over its cases and the
//! tolerance it was held to.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{self, Component, Differentiable};
use crate::core::{flatten, spectral_norm, Matrix, TrajectoryProblem, Vector};
use crate::envs::integrators::Discretizer;
use crate::envs::random::{
    concave_hamiltonian_problem, random_controls, random_lipschitz_problem, random_problem, RandomSpec,
};
use crate::envs::{build_problem, EnvKind};
use crate::error::{Error, Result};
use crate::linesearch::{
    solve, stationarity_residual, sufficient_decrease, LineSearchConfig, Rule, StopCriteria,
};
use crate::lqsolve::{dynprog, CheckMode};
use crate::oracles::dense::{
    dense_control_jacobian, dense_gauss_newton, dense_gradient, dense_hessian, dense_step,
    smoothness_bounds,
};
use crate::oracles::{self, OracleKind, StepMaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Adjoint gradient and Hessian against the dense expansion.
    Dense,
    /// Oracle directions against dense regularized solves.
    Oracles,
    /// Dynamic programming on linear-quadratic problems.
    Lq,
    /// Scaled affine policies on linearized maps.
    Scaling,
    /// Automatic derivatives of every model against finite differences.
    Derivatives,
    /// Acceptance tests of accepted line-search steps.
    Linesearch,
    /// Strongly convex problem whose Hamiltonian is concave in the controls.
    Counterexample,
    /// Stationarity residual against the dense gradient.
    Certificate,
    /// Lipschitz bound of the control-to-state map.
    Smoothness,
}

impl Group {
    pub const ALL: [Group; 9] = [
        Group::Dense,
        Group::Oracles,
        Group::Lq,
        Group::Scaling,
        Group::Derivatives,
        Group::Linesearch,
        Group::Counterexample,
        Group::Certificate,
        Group::Smoothness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::Dense => "dense",
            Group::Oracles => "oracles",
            Group::Lq => "lq",
            Group::Scaling => "scaling",
            Group::Derivatives => "derivatives",
            Group::Linesearch => "linesearch",
            Group::Counterexample => "counterexample",
            Group::Certificate => "certificate",
            Group::Smoothness => "smoothness",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Group::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| {
            let names: Vec<_> = Group::ALL.iter().map(|g| g.name()).collect();
            Error::Config {
                field: "only".into(),
                msg: format!("unknown group `{s}` (expected one of {})", names.join(", ")),
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    /// Pass when the observed value is at most the threshold.
    AtMost,
    /// Pass when the observed value is strictly above the threshold.
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub group: Group,
    pub name: String,
    pub bound: Bound,
    pub threshold: f64,
    /// Worst value over all cases (largest error, or smallest margin for [`Bound::Above`]).
    pub observed: f64,
    pub cases: usize,
    /// First error that prevented a case from running at all.
    pub failure: Option<String>,
}

impl Check {
    fn new(group: Group, name: &str, bound: Bound, threshold: f64) -> Self {
        let observed = match bound {
            Bound::AtMost => f64::NEG_INFINITY,
            Bound::Above => f64::INFINITY,
        };
        Self {
            group,
            name: name.into(),
            bound,
            threshold,
            observed,
            cases: 0,
            failure: None,
        }
    }

    fn record(&mut self, value: f64) {
        self.cases += 1;
        self.observed = match self.bound {
            _ if value.is_nan() || self.observed.is_nan() => f64::NAN,
            Bound::AtMost => self.observed.max(value),
            Bound::Above => self.observed.min(value),
        };
    }

    fn record_result(&mut self, value: Result<f64>) {
        match value {
            Ok(v) => self.record(v),
            Err(e) => {
                self.cases += 1;
                self.failure.get_or_insert_with(|| e.to_string());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && self.cases > 0
            && match self.bound {
                Bound::AtMost => self.observed <= self.threshold,
                Bound::Above => self.observed > self.threshold,
            }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let rel = match self.bound {
            Bound::AtMost => "max_err",
            Bound::Above => "min",
        };
        let cmp = match self.bound {
            Bound::AtMost => "<=",
            Bound::Above => ">",
        };
        write!(
            f,
            "{verdict} {}/{}: {rel}={:.3e} (need {cmp} {:.1e}, {} cases)",
            self.group, self.name, self.observed, self.threshold, self.cases
        )?;
        if let Some(e) = &self.failure {
            write!(f, " error: {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Random instances per check (derivative checks use five times as many points).
    pub scale: usize,
    pub only: Vec<Group>,
    /// Offset added to computed quantities before comparison, to prove the checks can fail.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            scale: 20,
            only: Vec::new(),
            perturbation: 0.0,
            seed: 0,
        }
    }
}

/// `‖a - b‖ / ‖b‖`.
pub fn rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// `max|a - b| / max(1, max|b|)`.
pub fn scaled_err(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn bump(mut v: Vector, p: f64) -> Vector {
    if p != 0.0 && !v.is_empty() {
        v[0] += p;
    }
    v
}

fn bump_m(mut m: Matrix, p: f64) -> Matrix {
    if p != 0.0 && !m.is_empty() {
        m[(0, 0)] += p;
    }
    m
}

/// Small random instance: horizon 3 or 5, state and control sizes in 1..=3.
pub fn instance_spec(seed: u64, linear_quadratic: bool) -> RandomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let horizon = if rng.random::<bool>() { 3 } else { 5 };
    let nx = rng.random_range(1..=3);
    let nu = rng.random_range(1..=3);
    if linear_quadratic {
        RandomSpec::linear_quadratic(nx, nu, horizon)
    } else {
        RandomSpec::nonlinear(nx, nu, horizon)
    }
}

fn instance(seed: u64, lq: bool) -> Result<(TrajectoryProblem, Vec<Vector>)> {
    let spec = instance_spec(seed, lq);
    let p = random_problem(seed, &spec)?;
    let u = random_controls(seed + 1, spec.horizon, spec.nu, 0.5);
    Ok((p, u))
}

/// Oracle direction at the smallest `ν` in `ν_0, 10ν_0, ...` whose backward pass is feasible.
fn feasible_direction(
    p: &TrajectoryProblem,
    u: &[Vector],
    kind: OracleKind,
    nu0: f64,
) -> Result<(oracles::OracleDirection, f64)> {
    let (of, oh) = kind.orders();
    let bundle = oracles::forward(p, u, of, oh)?;
    let mut nu = nu0;
    for _ in 0..20 {
        let d = oracles::direction(&bundle, kind, nu, CheckMode::StrongConvexity)?;
        if d.feasible {
            return Ok((d, nu));
        }
        nu *= 10.0;
    }
    Err(Error::InfeasibleStage { t: None })
}

fn check_dense(opts: &VerifyOptions) -> Vec<Check> {
    let mut grad = Check::new(Group::Dense, "adjoint-gradient", Bound::AtMost, 1e-8);
    let mut hess = Check::new(Group::Dense, "hessian-vs-finite-differences", Bound::AtMost, 1e-5);
    for i in 0..opts.scale {
        let seed = opts.seed + i as u64;
        grad.record_result((|| {
            let (p, u) = instance(seed, false)?;
            let bundle = oracles::forward(&p, &u, 1, 1)?;
            let adj = bump(flatten(&bundle.gradient()?), opts.perturbation);
            Ok(rel_err(&adj, &dense_gradient(&p, &u)?))
        })());
        hess.record_result((|| {
            let (p, u) = instance(seed, false)?;
            let h = bump_m(dense_hessian(&p, &u)?, opts.perturbation);
            let nu = p.ctrl_dim();
            let flat = flatten(&u);
            let n = flat.len();
            let mut fd = Matrix::zeros(n, n);
            for j in 0..n {
                let step = 1e-5;
                let mut plus = flat.clone();
                plus[j] += step;
                let mut minus = flat.clone();
                minus[j] -= step;
                let gp = dense_gradient(&p, &crate::core::unflatten(&plus, nu))?;
                let gm = dense_gradient(&p, &crate::core::unflatten(&minus, nu))?;
                fd.set_column(j, &((gp - gm) / (2.0 * step)));
            }
            Ok(scaled_err(&h, &fd))
        })());
    }
    vec![grad, hess]
}

fn check_oracles(opts: &VerifyOptions) -> Vec<Check> {
    let mut gd = Check::new(Group::Oracles, "gradient-direction", Bound::AtMost, 1e-8);
    let mut gn = Check::new(Group::Oracles, "gauss-newton-direction", Bound::AtMost, 1e-8);
    let mut ne = Check::new(Group::Oracles, "newton-direction", Bound::AtMost, 1e-8);
    for i in 0..opts.scale {
        let seed = opts.seed + 100 + i as u64;
        gd.record_result((|| {
            let (p, u) = instance(seed, false)?;
            let nu = 0.7;
            let d = oracles::oracle(&p, &u, OracleKind::Gd, nu)?;
            let g = bump(flatten(&d.direction) * -nu, opts.perturbation);
            Ok(rel_err(&g, &dense_gradient(&p, &u)?))
        })());
        for (check, kind) in [(&mut gn, OracleKind::Gn), (&mut ne, OracleKind::Ne)] {
            check.record_result((|| {
                let (p, u) = instance(seed, false)?;
                let (d, nu) = feasible_direction(&p, &u, kind, 1e-3)?;
                let m = match kind {
                    OracleKind::Gn => dense_gauss_newton(&p, &u)?,
                    _ => dense_hessian(&p, &u)?,
                };
                let want = dense_step(&m, &dense_gradient(&p, &u)?, nu)?;
                Ok(rel_err(&bump(flatten(&d.direction), opts.perturbation), &want))
            })());
        }
    }
    vec![gd, gn, ne]
}

fn check_lq(opts: &VerifyOptions) -> Vec<Check> {
    let mut dp = Check::new(Group::Lq, "dynprog-vs-dense-minimizer", Bound::AtMost, 1e-8);
    let mut one = Check::new(Group::Lq, "one-iteration-residual", Bound::AtMost, 1e-9);
    let cfg = LineSearchConfig::with_rule(Rule::Directional);
    let stop = StopCriteria {
        max_iters: 1,
        ..StopCriteria::default()
    };
    for i in 0..opts.scale {
        let seed = opts.seed + 200 + i as u64;
        dp.record_result((|| {
            let (p, _) = instance(seed, true)?;
            let zero = p.zero_controls();
            let star = dense_step(&dense_hessian(&p, &zero)?, &dense_gradient(&p, &zero)?, 0.0)?;
            Ok(rel_err(&bump(flatten(&dynprog(&p)?), opts.perturbation), &star))
        })());
        for kind in [OracleKind::Gn, OracleKind::Ne, OracleKind::DdpLq, OracleKind::DdpQ] {
            one.record_result((|| {
                let (p, _) = instance(seed, true)?;
                let sol = solve(&p, &p.zero_controls(), kind, &cfg, &stop).map_err(|f| f.error)?;
                let first = sol.trace.iterations.first().ok_or(Error::InfeasibleStage { t: None })?;
                if first.regularization != 0.0 {
                    return Err(Error::Parameter(format!("{kind} needed regularization {}", first.regularization)));
                }
                Ok(stationarity_residual(&p, &sol.controls)? + opts.perturbation)
            })());
        }
    }
    vec![dp, one]
}

fn check_scaling(opts: &VerifyOptions) -> Vec<Check> {
    let mut c = Check::new(Group::Scaling, "scaled-policy-rollout", Bound::AtMost, 1e-12);
    for i in 0..opts.scale {
        let seed = opts.seed + 300 + i as u64;
        let res = (|| {
            let (p, u) = instance(seed, false)?;
            let bundle = oracles::forward(&p, &u, 1, 2)?;
            let d = oracles::backward_gn(&bundle, 1.0, CheckMode::Descent)?;
            let maps = StepMaps::Linear(bundle.lin_maps()?);
            let y0 = Vector::zeros(p.state_dim());
            let unit = flatten(&oracles::rollout(&y0, &d.policies, &maps)?);
            let mut worst: f64 = 0.0;
            for gamma in [0.5, 0.25, 0.1] {
                let scaled: Vec<_> = d.policies.iter().map(|q| q.scaled(gamma)).collect();
                let v = bump(flatten(&oracles::rollout(&y0, &scaled, &maps)?), opts.perturbation);
                worst = worst.max((v - &unit * gamma).amax() / unit.amax().max(1.0));
            }
            Ok(worst)
        })();
        c.record_result(res);
    }
    vec![c]
}

/// Central-difference Jacobian.
pub fn fd_jacobian(f: &dyn Differentiable, z: &[f64]) -> Result<Matrix> {
    let m = f.output_dim();
    let mut jac = Matrix::zeros(m, z.len());
    let mut w = z.to_vec();
    for j in 0..z.len() {
        let h = 1e-6 * z[j].abs().max(1.0);
        w[j] = z[j] + h;
        let plus = autodiff::evaluate(f, &w)?;
        w[j] = z[j] - h;
        let minus = autodiff::evaluate(f, &w)?;
        w[j] = z[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    Ok(jac)
}

/// Central differences of the exact gradient of `z -> λᵀ f(z)`.
pub fn fd_lambda_hessian(f: &dyn Differentiable, z: &[f64], lambda: &Vector) -> Result<Matrix> {
    let n = z.len();
    let mut h = Matrix::zeros(n, n);
    let mut w = z.to_vec();
    for j in 0..n {
        let step = 1e-5 * z[j].abs().max(1.0);
        w[j] = z[j] + step;
        let plus = autodiff::jacobian(f, &w)?.transpose() * lambda;
        w[j] = z[j] - step;
        let minus = autodiff::jacobian(f, &w)?.transpose() * lambda;
        w[j] = z[j];
        h.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    Ok(h)
}

/// Every function of an environment with points near a rolled-out trajectory.
fn model_points(
    env: EnvKind,
    scheme: Discretizer,
    seed: u64,
    count: usize,
) -> Result<Vec<(String, std::sync::Arc<dyn Differentiable>, Vec<f64>)>> {
    let horizon = 20;
    let p = build_problem(env, horizon, scheme)?;
    let u = random_controls(seed, horizon, p.ctrl_dim(), 0.1);
    let xs = p.rollout_states(&u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |v: &Vector| -> Vec<f64> { v.iter().map(|c| c + 0.01 * (rng.random::<f64>() * 2.0 - 1.0)).collect() };
    let mut out = Vec::with_capacity(3 * count);
    for k in 0..count {
        let t = horizon / 4 + k % (horizon - horizon / 4);
        let z = jitter(&crate::core::Vector::from_vec(crate::core::concat(&xs[t], &u[t])));
        out.push((format!("{env}/{scheme}/dynamics"), p.dynamics[t].clone(), z.clone()));
        out.push((format!("{env}/{scheme}/stage-cost"), p.costs[t].clone(), z));
        out.push((format!("{env}/{scheme}/final-cost"), p.final_cost.clone(), jitter(&xs[horizon])));
    }
    Ok(out)
}

fn check_derivatives(opts: &VerifyOptions) -> Vec<Check> {
    let mut jac = Check::new(Group::Derivatives, "jacobian-vs-finite-differences", Bound::AtMost, 1e-6);
    let mut hess = Check::new(Group::Derivatives, "hessian-vs-finite-differences", Bound::AtMost, 1e-4);
    let mut lam = Check::new(Group::Derivatives, "lambda-hessian-vs-componentwise", Bound::AtMost, 1e-12);
    let points = 5 * opts.scale;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 400);
    for env in EnvKind::ALL {
        for scheme in Discretizer::ALL {
            if env == EnvKind::BicycleCar && scheme == Discretizer::Rk4Varying {
                continue;
            }
            let list = match model_points(env, scheme, opts.seed + 401, points) {
                Ok(l) => l,
                Err(e) => {
                    jac.record_result(Err(e));
                    continue;
                }
            };
            for (name, f, z) in list {
                let lambda = Vector::from_fn(f.output_dim(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let tag = |e: Error| Error::Parameter(format!("{name}: {e}"));
                jac.record_result((|| {
                    let exact = bump_m(autodiff::jacobian(f.as_ref(), &z)?, opts.perturbation);
                    Ok(scaled_err(&exact, &fd_jacobian(f.as_ref(), &z)?))
                })().map_err(tag));
                hess.record_result((|| {
                    let exact = bump_m(autodiff::lambda_hessian(f.as_ref(), &z, lambda.as_slice())?, opts.perturbation);
                    Ok(scaled_err(&exact, &fd_lambda_hessian(f.as_ref(), &z, &lambda)?))
                })().map_err(tag));
                lam.record_result((|| {
                    let exact = bump_m(autodiff::lambda_hessian(f.as_ref(), &z, lambda.as_slice())?, opts.perturbation);
                    let mut sum = Matrix::zeros(z.len(), z.len());
                    for i in 0..f.output_dim() {
                        let c = Component { inner: f.as_ref(), index: i };
                        sum += autodiff::hessian(&c, &z)? * lambda[i];
                    }
                    Ok(scaled_err(&exact, &sum))
                })().map_err(tag));
            }
        }
    }
    vec![jac, hess, lam]
}

fn check_linesearch(opts: &VerifyOptions) -> Vec<Check> {
    let mut accept = Check::new(Group::Linesearch, "accepted-steps-decrease", Bound::AtMost, 0.0);
    let mut model = Check::new(Group::Linesearch, "model-decrease-is-half-slope", Bound::AtMost, 1e-8);
    let stop = StopCriteria {
        max_iters: 30,
        ..StopCriteria::default()
    };
    let p = match build_problem(EnvKind::Pendulum, 50, Discretizer::Euler) {
        Ok(p) => p,
        Err(e) => {
            accept.record_result(Err(e));
            return vec![accept, model];
        }
    };
    for kind in OracleKind::ALL {
        for rule in Rule::ALL {
            let sol = match solve(&p, &p.zero_controls(), kind, &LineSearchConfig::with_rule(rule), &stop) {
                Ok(s) => s,
                Err(f) => {
                    accept.record_result(Err(f.error));
                    continue;
                }
            };
            let mut prev = sol.trace.initial_cost;
            for r in &sol.trace.iterations {
                if r.accepted {
                    let ok = sufficient_decrease(prev, r.cost, r.bound);
                    accept.record(if ok { 0.0 } else { 1.0 } + opts.perturbation);
                }
                if matches!(kind, OracleKind::Gn | OracleKind::Ne) {
                    let half = 0.5 * r.directional_derivative;
                    model.record((r.model_decrease - half).abs() / half.abs().max(f64::MIN_POSITIVE) + opts.perturbation);
                }
                prev = r.cost;
            }
        }
    }
    vec![accept, model]
}

fn check_counterexample(opts: &VerifyOptions) -> Vec<Check> {
    let mut pd = Check::new(Group::Counterexample, "hessian-min-eigenvalue", Bound::Above, 0.0);
    let mut conv = Check::new(Group::Counterexample, "newton-residual-after-3-iterations", Bound::AtMost, 1e-9);
    let p = match concave_hamiltonian_problem(10, 0.1, 500.0) {
        Ok(p) => p,
        Err(e) => {
            pd.record_result(Err(e));
            return vec![pd, conv];
        }
    };
    pd.record_result((|| {
        let h = dense_hessian(&p, &p.zero_controls())?;
        Ok(h.symmetric_eigenvalues().min() - opts.perturbation)
    })());
    conv.record_result((|| {
        let u0 = random_controls(opts.seed + 500, 10, 1, 1.0);
        let stop = StopCriteria {
            max_iters: 3,
            ..StopCriteria::default()
        };
        let cfg = LineSearchConfig::with_rule(Rule::Directional);
        let sol = solve(&p, &u0, OracleKind::Ne, &cfg, &stop).map_err(|f| f.error)?;
        Ok(sol.trace.final_residual() + opts.perturbation)
    })());
    vec![pd, conv]
}

fn check_certificate(opts: &VerifyOptions) -> Vec<Check> {
    let mut c = Check::new(Group::Certificate, "residual-equals-gradient-max-norm", Bound::AtMost, 1e-8);
    for i in 0..opts.scale {
        let seed = opts.seed + 600 + i as u64;
        c.record_result((|| {
            let (p, u) = instance(seed, false)?;
            let r = stationarity_residual(&p, &u)? + opts.perturbation;
            let g = dense_gradient(&p, &u)?.amax();
            Ok((r - g).abs() / g.max(f64::MIN_POSITIVE))
        })());
    }
    vec![c]
}

fn check_smoothness(opts: &VerifyOptions) -> Vec<Check> {
    let mut c = Check::new(Group::Smoothness, "jacobian-norm-minus-bound", Bound::AtMost, 1e-12);
    for i in 0..opts.scale {
        let seed = opts.seed + 700 + i as u64;
        c.record_result((|| {
            let spec = instance_spec(seed, false);
            let (p, lx, lu) = random_lipschitz_problem(seed, &spec)?;
            let (l, _) = smoothness_bounds(lx, lu, 0.0, 0.0, 0.0, spec.horizon)?;
            let u = random_controls(seed + 1, spec.horizon, spec.nu, 1.0);
            let norm = spectral_norm(&dense_control_jacobian(&p, &u)?);
            Ok(norm - l + opts.perturbation)
        })());
    }
    vec![c]
}

/// Runs the selected groups (all when `opts.only` is empty).
pub fn run_verify(opts: &VerifyOptions) -> Vec<Check> {
    let groups: Vec<Group> = if opts.only.is_empty() {
        Group::ALL.to_vec()
    } else {
        opts.only.clone()
    };
    let mut out = Vec::new();
    for g in groups {
        out.extend(match g {
            Group::Dense => check_dense(opts),
            Group::Oracles => check_oracles(opts),
            Group::Lq => check_lq(opts),
            Group::Scaling => check_scaling(opts),
            Group::Derivatives => check_derivatives(opts),
            Group::Linesearch => check_linesearch(opts),
            Group::Counterexample => check_counterexample(opts),
            Group::Certificate => check_certificate(opts),
            Group::Smoothness => check_smoothness(opts),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(only: Group, perturbation: f64) -> Vec<Check> {
        run_verify(&VerifyOptions {
            scale: 3,
            only: vec![only],
            perturbation,
            seed: 1,
        })
    }

    #[test]
    fn groups_parse() {
        for g in Group::ALL {
            assert_eq!(g.name().parse::<Group>().unwrap(), g);
        }
        assert!("nope".parse::<Group>().is_err());
    }

    #[test]
    fn cheap_groups_pass_and_detect_perturbation() {
        for g in [Group::Dense, Group::Oracles, Group::Lq, Group::Scaling, Group::Certificate, Group::Smoothness] {
            let clean = small(g, 0.0);
            assert!(clean.iter().all(Check::passed), "{clean:#?}");
            if g == Group::Smoothness {
                // The bound is loose, so a small offset leaves it satisfied.
                continue;
            }
            let bad = small(g, 1e-3);
            assert!(bad.iter().any(|c| !c.passed()), "{g} missed the perturbation");
        }
    }
}
