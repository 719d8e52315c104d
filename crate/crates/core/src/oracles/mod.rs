//! Forward pass, backward passes and roll-outs composing the five oracles.
//!
//! | kind    | dynamics info | cost info | backward          | roll-out on        |
//! |---------|---------------|-----------|-------------------|--------------------|
//! | GD      | 1             | 1         | [`backward_gd`]   | (skipped)          |
//! | GN      | 1             | 2         | [`backward_gn`]   | linearized maps    |
//! | NE      | 2             | 2         | [`backward_ne`]   | linearized maps    |
//! | DDP-LQ  | 1             | 2         | [`backward_gn`]   | original dynamics  |
//! | DDP-Q   | 2             | 2         | [`backward_ddp_q`]| original dynamics  |

pub mod dense;

use std::fmt;
use std::str::FromStr;

use crate::autodiff;
use crate::core::{
    concat, finite_difference_from, AffinePolicy, Controls, LinearMap, Matrix,
    QuadraticCostModel, QuadraticValueFunction, TrajectoryProblem, Vector,
};
use crate::error::{Error, Result};
use crate::lqsolve::{backward_sweep, lbp, AffineValue, CheckMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleKind {
    Gd,
    Gn,
    Ne,
    DdpLq,
    DdpQ,
}

impl OracleKind {
    pub const ALL: [OracleKind; 5] = [
        OracleKind::Gd,
        OracleKind::Gn,
        OracleKind::Ne,
        OracleKind::DdpLq,
        OracleKind::DdpQ,
    ];

    /// `(o_f, o_h)` recorded by the forward pass.
    pub fn orders(self) -> (u8, u8) {
        match self {
            OracleKind::Gd => (1, 1),
            OracleKind::Gn | OracleKind::DdpLq => (1, 2),
            OracleKind::Ne | OracleKind::DdpQ => (2, 2),
        }
    }

    /// DDP variants roll out on the original dynamics.
    pub fn rolls_on_dynamics(self) -> bool {
        matches!(self, OracleKind::DdpLq | OracleKind::DdpQ)
    }

    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Gd => "gd",
            OracleKind::Gn => "gn",
            OracleKind::Ne => "ne",
            OracleKind::DdpLq => "ddp-lq",
            OracleKind::DdpQ => "ddp-q",
        }
    }
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OracleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OracleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config {
                field: "algo".into(),
                msg: format!("unknown algorithm `{s}` (expected gd, gn, ne, ddp-lq or ddp-q)"),
            })
    }
}

/// Derivative information collected along one trajectory.
///
/// Second-order dynamics information is not stored: with `o_f = 2` the bundle
/// keeps access to the problem's dynamics so that contractions
/// `∇²f_t[·,·,λ]` are computed on demand during the backward sweep.
pub struct ExpansionBundle<'p> {
    pub problem: &'p TrajectoryProblem,
    /// `x_0..x_T`.
    pub states: Vec<Vector>,
    pub controls: Controls,
    pub stage_costs: Vec<f64>,
    pub terminal_cost: f64,
    pub total: f64,
    pub order_f: u8,
    pub order_h: u8,
    lins: Option<Vec<LinearMap>>,
    costs: Option<Vec<QuadraticCostModel>>,
    terminal: Option<(Vector, Matrix)>,
}

fn missing(what: &str) -> Error {
    Error::Parameter(format!("expansion bundle lacks {what}"))
}

impl<'p> ExpansionBundle<'p> {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn lin_maps(&self) -> Result<&[LinearMap]> {
        self.lins.as_deref().ok_or_else(|| missing("dynamics Jacobians"))
    }

    /// Quadratic (or, for `o_h = 1`, linear) running cost models.
    pub fn quad_costs(&self) -> Result<&[QuadraticCostModel]> {
        if self.order_h < 2 {
            return Err(missing("cost Hessians"));
        }
        self.costs.as_deref().ok_or_else(|| missing("cost Hessians"))
    }

    /// `(p_t, q_t)` for every step.
    pub fn cost_gradients(&self) -> Result<Vec<(&Vector, &Vector)>> {
        let costs = self.costs.as_deref().ok_or_else(|| missing("cost gradients"))?;
        Ok(costs.iter().map(|c| (&c.x, &c.u)).collect())
    }

    pub fn terminal_gradient(&self) -> Result<&Vector> {
        self.terminal
            .as_ref()
            .map(|(g, _)| g)
            .ok_or_else(|| missing("final cost gradient"))
    }

    pub fn terminal_value(&self) -> Result<QuadraticValueFunction> {
        if self.order_h < 2 {
            return Err(missing("final cost Hessian"));
        }
        let (g, h) = self.terminal.as_ref().ok_or_else(|| missing("final cost Hessian"))?;
        Ok(QuadraticValueFunction {
            jm: h.clone(),
            jv: g.clone(),
            j0: 0.0,
        })
    }

    /// `∇²f_t(x_t, u_t)[·,·,λ]` over `(x, u)`.
    pub fn lambda_contraction(&self, t: usize, lambda: &Vector) -> Result<Matrix> {
        if self.order_f < 2 {
            return Err(missing("second-order dynamics access"));
        }
        let z = concat(&self.states[t], &self.controls[t]);
        autodiff::lambda_hessian(self.problem.dynamics[t].as_ref(), &z, lambda.as_slice())
    }

    /// Adjoint variables `λ_1..λ_T`: `λ_T = ∇h_T`, `λ_t = p_t + A_tᵀλ_{t+1}`.
    /// Entry `t` of the result is `λ_t` for `t = 0..=T`.
    pub fn adjoints(&self) -> Result<Vec<Vector>> {
        let lins = self.lin_maps()?;
        let grads = self.cost_gradients()?;
        let tau = self.horizon();
        let mut lambda = vec![Vector::zeros(0); tau + 1];
        lambda[tau] = self.terminal_gradient()?.clone();
        for t in (0..tau).rev() {
            lambda[t] = grads[t].0 + lins[t].a.transpose() * &lambda[t + 1];
        }
        Ok(lambda)
    }

    /// `∇J(u)` by the adjoint recursion: `q_t + B_tᵀλ_{t+1}`.
    pub fn gradient(&self) -> Result<Controls> {
        let lambda = self.adjoints()?;
        let lins = self.lin_maps()?;
        let grads = self.cost_gradients()?;
        Ok((0..self.horizon())
            .map(|t| grads[t].1 + lins[t].b.transpose() * &lambda[t + 1])
            .collect())
    }

    /// Euclidean norm of the gradient of the total cost with respect to all
    /// states and controls taken as independent variables.
    pub fn cost_gradient_norm(&self) -> Result<f64> {
        let grads = self.cost_gradients()?;
        let mut sq = self.terminal_gradient()?.norm_squared();
        for (p, q) in grads {
            sq += p.norm_squared() + q.norm_squared();
        }
        Ok(sq.sqrt())
    }
}

/// Rolls the dynamics under `u` and records the requested derivative orders.
pub fn forward<'p>(
    problem: &'p TrajectoryProblem,
    u: &[Vector],
    order_f: u8,
    order_h: u8,
) -> Result<ExpansionBundle<'p>> {
    if order_f > 2 || order_h > 2 {
        return Err(Error::Parameter("derivative orders are at most 2".into()));
    }
    problem.check_controls(u)?;
    let tau = problem.horizon();
    let nx = problem.state_dim();
    let mut states = Vec::with_capacity(tau + 1);
    states.push(problem.x0.clone());
    let mut stage_costs = Vec::with_capacity(tau);
    let mut lins = (order_f >= 1).then(|| Vec::with_capacity(tau));
    let mut costs = (order_h >= 1).then(|| Vec::with_capacity(tau));
    for t in 0..tau {
        let x = &states[t];
        let z = concat(x, &u[t]);
        let next = match lins.as_mut() {
            Some(lins) => {
                let (value, jac) = autodiff::value_jacobian(problem.dynamics[t].as_ref(), &z)
                    .map_err(|e| numeric_to_divergence(e, t))?;
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { t: t + 1 });
                }
                lins.push(LinearMap::from_jacobian(&jac, nx).map_err(|_| Error::Divergence { t })?);
                value
            }
            None => problem.step(t, x, &u[t])?,
        };
        let cost = match costs.as_mut() {
            Some(costs) => {
                let h = problem.costs[t].as_ref();
                let (value, model) = if order_h == 2 {
                    let (v, g, hs) = autodiff::value_gradient_hessian(h, &z)
                        .map_err(|e| numeric_to_divergence(e, t))?;
                    (v, QuadraticCostModel::from_derivatives(&g, &hs, nx)?)
                } else {
                    let (v, j) = autodiff::value_jacobian(h, &z)
                        .map_err(|e| numeric_to_divergence(e, t))?;
                    let g = j.row(0).transpose();
                    let n = g.len();
                    (v[0], QuadraticCostModel::from_derivatives(&g, &Matrix::zeros(n, n), nx)?)
                };
                costs.push(model);
                value
            }
            None => problem.stage_cost(t, x, &u[t])?,
        };
        if !cost.is_finite() {
            return Err(Error::Divergence { t });
        }
        stage_costs.push(cost);
        states.push(next);
    }
    let xt = &states[tau];
    let (terminal_cost, terminal) = match order_h {
        0 => (problem.terminal_cost(xt)?, None),
        1 => {
            let (v, j) = autodiff::value_jacobian(problem.final_cost.as_ref(), xt.as_slice())
                .map_err(|e| numeric_to_divergence(e, tau))?;
            (v[0], Some((j.row(0).transpose(), Matrix::zeros(nx, nx))))
        }
        _ => {
            let (v, g, h) =
                autodiff::value_gradient_hessian(problem.final_cost.as_ref(), xt.as_slice())
                    .map_err(|e| numeric_to_divergence(e, tau))?;
            (v, Some((g, crate::core::symmetrize(&h))))
        }
    };
    if !terminal_cost.is_finite() {
        return Err(Error::Divergence { t: tau });
    }
    let total = stage_costs.iter().sum::<f64>() + terminal_cost;
    if !total.is_finite() {
        return Err(Error::Divergence { t: tau });
    }
    Ok(ExpansionBundle {
        problem,
        states,
        controls: u.to_vec(),
        stage_costs,
        terminal_cost,
        total,
        order_f,
        order_h,
        lins,
        costs,
        terminal,
    })
}

fn numeric_to_divergence(e: Error, t: usize) -> Error {
    match e {
        Error::Numeric { .. } | Error::Domain(_) => Error::Divergence { t },
        other => other,
    }
}

/// Search direction with the policies and cost-to-go that produced it.
#[derive(Debug, Clone)]
pub struct OracleDirection {
    /// `v_0..v_{T-1}`; empty until rolled out (or when infeasible).
    pub direction: Controls,
    pub policies: Vec<AffinePolicy>,
    /// `c_0`. For the gradient oracle the quadratic part is zero.
    pub c0: QuadraticValueFunction,
    pub feasible: bool,
    pub regularization: f64,
}

impl OracleDirection {
    /// `c_0(0)`, the predicted decrease; `+∞` when infeasible.
    pub fn model_decrease(&self) -> f64 {
        self.c0.j0
    }

    fn infeasible(policies: Vec<AffinePolicy>, nx: usize, nu_reg: f64) -> Self {
        Self {
            direction: Vec::new(),
            policies,
            c0: QuadraticValueFunction {
                jm: Matrix::zeros(nx, nx),
                jv: Vector::zeros(nx),
                j0: f64::INFINITY,
            },
            feasible: false,
            regularization: nu_reg,
        }
    }
}

/// Gradient oracle: returns `-∇J(u)/ν` directly from the constant policies.
pub fn backward_gd(bundle: &ExpansionBundle, nu: f64) -> Result<OracleDirection> {
    backward_gd_with(bundle, nu, false)
}

/// As [`backward_gd`]; with `rollout` the direction is recomputed by rolling
/// the policies on the linearized dynamics instead of read off directly.
pub fn backward_gd_with(bundle: &ExpansionBundle, nu: f64, rollout_check: bool) -> Result<OracleDirection> {
    if !(nu > 0.0) {
        return Err(Error::Parameter(format!(
            "gradient oracle needs a positive regularization, got {nu}"
        )));
    }
    let lins = bundle.lin_maps()?;
    let grads = bundle.cost_gradients()?;
    let tau = bundle.horizon();
    let mut value = AffineValue {
        jv: bundle.terminal_gradient()?.clone(),
        j0: 0.0,
    };
    let mut policies = Vec::with_capacity(tau);
    for t in (0..tau).rev() {
        let (next, policy) = lbp(&lins[t], grads[t].0, grads[t].1, &value, nu)?;
        value = next;
        policies.push(policy);
    }
    policies.reverse();
    let nx = bundle.problem.state_dim();
    let direction = if rollout_check {
        rollout(&Vector::zeros(nx), &policies, &StepMaps::Linear(lins))?
    } else {
        policies.iter().map(|p| p.offset.clone()).collect()
    };
    Ok(OracleDirection {
        direction,
        policies,
        c0: QuadraticValueFunction {
            jm: Matrix::zeros(nx, nx),
            jv: value.jv,
            j0: value.j0,
        },
        feasible: true,
        regularization: nu,
    })
}

/// Which vector contracts the dynamics curvature in the stage quadratics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Curvature {
    None,
    Adjoint,
    ValueSlope,
}

fn lq_backward(
    bundle: &ExpansionBundle,
    nu: f64,
    mode: CheckMode,
    curvature: Curvature,
) -> Result<OracleDirection> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::Parameter(format!("regularization must be finite and >= 0, got {nu}")));
    }
    let lins = bundle.lin_maps()?;
    let quads = bundle.quad_costs()?;
    let adjoints = match curvature {
        Curvature::Adjoint => Some(bundle.adjoints()?),
        _ => None,
    };
    let nx = bundle.problem.state_dim();
    let nu_dim = bundle.problem.ctrl_dim();
    let reg = Matrix::identity(nu_dim, nu_dim) * nu;
    let sweep = backward_sweep(lins, bundle.terminal_value()?, mode, |t, next| {
        let mut model = quads[t].clone();
        model.uu += &reg;
        let contraction = match curvature {
            Curvature::None => None,
            Curvature::Adjoint => Some(&adjoints.as_ref().expect("adjoints computed")[t + 1]),
            Curvature::ValueSlope => Some(&next.jv),
        };
        if let Some(lambda) = contraction {
            model.add_curvature(&bundle.lambda_contraction(t, lambda)?);
        }
        Ok(model)
    })?;
    if sweep.failed_at.is_some() {
        return Ok(OracleDirection::infeasible(sweep.policies, nx, nu));
    }
    Ok(OracleDirection {
        direction: Vec::new(),
        policies: sweep.policies,
        c0: sweep.values.into_iter().next().expect("at least one value"),
        feasible: true,
        regularization: nu,
    })
}

/// Gauss-Newton backward pass: costs expanded to second order, dynamics to first.
pub fn backward_gn(bundle: &ExpansionBundle, nu: f64, mode: CheckMode) -> Result<OracleDirection> {
    lq_backward(bundle, nu, mode, Curvature::None)
}

/// Newton backward pass: Gauss-Newton stages plus the dynamics curvature
/// contracted with the adjoint variables.
pub fn backward_ne(bundle: &ExpansionBundle, nu: f64, mode: CheckMode) -> Result<OracleDirection> {
    lq_backward(bundle, nu, mode, Curvature::Adjoint)
}

/// DDP backward pass with quadratic dynamics models: the curvature is
/// contracted with the slope of the running cost-to-go instead of the adjoint.
pub fn backward_ddp_q(bundle: &ExpansionBundle, nu: f64, mode: CheckMode) -> Result<OracleDirection> {
    lq_backward(bundle, nu, mode, Curvature::ValueSlope)
}

/// Maps followed by a roll-out.
pub enum StepMaps<'a, 'p> {
    Linear(&'a [LinearMap]),
    /// `δ(y, v) = f_t(x_t + y, u_t + v) - f_t(x_t, u_t)` around the bundle's trajectory.
    FiniteDifference(&'a ExpansionBundle<'p>),
}

/// Applies `v_t = π_t(y_t)`, `y_{t+1} = step_t(y_t, v_t)` and returns the `v_t`.
pub fn rollout(y0: &Vector, policies: &[AffinePolicy], maps: &StepMaps) -> Result<Controls> {
    let mut y = y0.clone();
    let mut out = Vec::with_capacity(policies.len());
    for (t, policy) in policies.iter().enumerate() {
        let v = policy.apply(&y);
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { t });
        }
        y = match maps {
            StepMaps::Linear(lins) => lins[t].apply(&y, &v),
            StepMaps::FiniteDifference(b) => finite_difference_from(
                b.problem.dynamics[t].as_ref(),
                &b.states[t + 1],
                &b.states[t],
                &b.controls[t],
                &y,
                &v,
                t + 1,
            )?,
        };
        if y.iter().any(|c| !c.is_finite()) {
            return Err(Error::Divergence { t: t + 1 });
        }
        out.push(v);
    }
    Ok(out)
}

/// Backward pass of `kind` on an existing bundle, without roll-out.
pub fn backward(
    bundle: &ExpansionBundle,
    kind: OracleKind,
    nu: f64,
    mode: CheckMode,
) -> Result<OracleDirection> {
    match kind {
        OracleKind::Gd => backward_gd(bundle, nu),
        OracleKind::Gn | OracleKind::DdpLq => backward_gn(bundle, nu, mode),
        OracleKind::Ne => backward_ne(bundle, nu, mode),
        OracleKind::DdpQ => backward_ddp_q(bundle, nu, mode),
    }
}

/// Step maps matching `kind`.
pub fn step_maps<'a, 'p>(bundle: &'a ExpansionBundle<'p>, kind: OracleKind) -> Result<StepMaps<'a, 'p>> {
    if kind.rolls_on_dynamics() {
        Ok(StepMaps::FiniteDifference(bundle))
    } else {
        Ok(StepMaps::Linear(bundle.lin_maps()?))
    }
}

/// Backward pass plus roll-out.
pub fn direction(
    bundle: &ExpansionBundle,
    kind: OracleKind,
    nu: f64,
    mode: CheckMode,
) -> Result<OracleDirection> {
    let mut out = backward(bundle, kind, nu, mode)?;
    if out.feasible && kind != OracleKind::Gd {
        let y0 = Vector::zeros(bundle.problem.state_dim());
        out.direction = rollout(&y0, &out.policies, &step_maps(bundle, kind)?)?;
    }
    Ok(out)
}

/// Full oracle: forward pass with the orders of `kind`, backward pass, roll-out.
/// Infeasibility is reported through [`OracleDirection::feasible`].
pub fn oracle(
    problem: &TrajectoryProblem,
    u: &[Vector],
    kind: OracleKind,
    nu: f64,
) -> Result<OracleDirection> {
    let (of, oh) = kind.orders();
    let bundle = forward(problem, u, of, oh)?;
    direction(&bundle, kind, nu, CheckMode::default())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::autodiff::{Scalar, VecFn};

    /// `f(x, u) = a x + b u`.
    struct Lin(f64, f64);
    impl VecFn for Lin {
        fn dims(&self) -> (usize, usize) {
            (2, 1)
        }
        fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
            out[0] = z[0] * self.0 + z[1] * self.1;
            Ok(())
        }
    }

    struct Zero;
    impl VecFn for Zero {
        fn dims(&self) -> (usize, usize) {
            (2, 1)
        }
        fn call<S: Scalar>(&self, _z: &[S], out: &mut [S]) -> Result<()> {
            out[0] = S::cst(0.0);
            Ok(())
        }
    }

    struct HalfSquare;
    impl VecFn for HalfSquare {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }
        fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
            out[0] = z[0] * z[0] * 0.5;
            Ok(())
        }
    }

    struct Identity;
    impl VecFn for Identity {
        fn dims(&self) -> (usize, usize) {
            (1, 1)
        }
        fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
            out[0] = z[0];
            Ok(())
        }
    }

    fn v1(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn gradient_oracle_hand_example() {
        let p = TrajectoryProblem::stationary(
            v1(0.0),
            1,
            1,
            Arc::new(Lin(0.0, 1.0)),
            Arc::new(Zero),
            Arc::new(HalfSquare),
        )
        .unwrap();
        let u = vec![v1(3.0)];
        let b = forward(&p, &u, 1, 1).unwrap();
        let d1 = backward_gd(&b, 1.0).unwrap();
        assert_eq!(d1.direction[0][0], -3.0);
        let d2 = backward_gd(&b, 2.0).unwrap();
        assert_eq!(d2.direction[0][0], -1.5);
        let rolled = backward_gd_with(&b, 1.0, true).unwrap();
        assert_eq!(rolled.direction, d1.direction);
        assert!(matches!(backward_gd(&b, 0.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn adjoint_hand_example() {
        let p = TrajectoryProblem::stationary(
            v1(0.0),
            1,
            2,
            Arc::new(Lin(2.0, 1.0)),
            Arc::new(Zero),
            Arc::new(Identity),
        )
        .unwrap();
        let b = forward(&p, &p.zero_controls(), 1, 1).unwrap();
        let l = b.adjoints().unwrap();
        assert_eq!(l[2][0], 1.0);
        assert_eq!(l[1][0], 2.0);
    }

    #[test]
    fn rollout_hand_example() {
        let lin = LinearMap::new(Matrix::identity(1, 1), Matrix::identity(1, 1)).unwrap();
        let lins = vec![lin.clone(), lin];
        let pol = AffinePolicy {
            gain: Matrix::zeros(1, 1),
            offset: v1(1.0),
        };
        let v = rollout(&v1(0.0), &[pol.clone(), pol], &StepMaps::Linear(&lins)).unwrap();
        assert_eq!(v, vec![v1(1.0), v1(1.0)]);
        let zero = vec![AffinePolicy::zeros(1, 1); 2];
        let v = rollout(&v1(0.0), &zero, &StepMaps::Linear(&lins)).unwrap();
        assert_eq!(v, vec![v1(0.0), v1(0.0)]);
    }

    #[test]
    fn kind_round_trip() {
        for k in OracleKind::ALL {
            assert_eq!(k.name().parse::<OracleKind>().unwrap(), k);
        }
        assert!("foo".parse::<OracleKind>().is_err());
    }
}
