//! Problem statement and the small dense values shared by every other module.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::autodiff::{self, Differentiable};
use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Sequence of per-step control (or control increment) vectors.
pub type Controls = Vec<Vector>;

/// Finite-horizon problem `min sum_t h_t(x_t,u_t) + h_T(x_T)` with `x_{t+1} = f_t(x_t,u_t)`.
///
/// Dynamics and running costs take the concatenated input `(x, u)`; the final
/// cost takes `x` only.
#[derive(Clone)]
pub struct TrajectoryProblem {
    nx: usize,
    nu: usize,
    pub x0: Vector,
    pub dynamics: Vec<Arc<dyn Differentiable>>,
    pub costs: Vec<Arc<dyn Differentiable>>,
    pub final_cost: Arc<dyn Differentiable>,
}

impl std::fmt::Debug for TrajectoryProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectoryProblem")
            .field("nx", &self.nx)
            .field("nu", &self.nu)
            .field("horizon", &self.horizon())
            .field("x0", &self.x0.as_slice())
            .finish()
    }
}

impl TrajectoryProblem {
    pub fn new(
        x0: Vector,
        nu: usize,
        dynamics: Vec<Arc<dyn Differentiable>>,
        costs: Vec<Arc<dyn Differentiable>>,
        final_cost: Arc<dyn Differentiable>,
    ) -> Result<Self> {
        let nx = x0.len();
        if dynamics.is_empty() {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        if costs.len() != dynamics.len() {
            return Err(Error::Shape {
                what: "running cost count",
                expected: dynamics.len(),
                got: costs.len(),
            });
        }
        for f in &dynamics {
            shape("dynamics input", nx + nu, f.input_dim())?;
            shape("dynamics output", nx, f.output_dim())?;
        }
        for h in &costs {
            shape("running cost input", nx + nu, h.input_dim())?;
            shape("running cost output", 1, h.output_dim())?;
        }
        shape("final cost input", nx, final_cost.input_dim())?;
        shape("final cost output", 1, final_cost.output_dim())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("initial state must be finite".into()));
        }
        Ok(Self {
            nx,
            nu,
            x0,
            dynamics,
            costs,
            final_cost,
        })
    }

    /// Same model repeated over `horizon` steps.
    pub fn stationary(
        x0: Vector,
        nu: usize,
        horizon: usize,
        dynamics: Arc<dyn Differentiable>,
        cost: Arc<dyn Differentiable>,
        final_cost: Arc<dyn Differentiable>,
    ) -> Result<Self> {
        Self::new(
            x0,
            nu,
            vec![dynamics; horizon],
            vec![cost; horizon],
            final_cost,
        )
    }

    pub fn horizon(&self) -> usize {
        self.dynamics.len()
    }

    pub fn state_dim(&self) -> usize {
        self.nx
    }

    pub fn ctrl_dim(&self) -> usize {
        self.nu
    }

    pub fn zero_controls(&self) -> Controls {
        vec![Vector::zeros(self.nu); self.horizon()]
    }

    pub fn check_controls(&self, u: &[Vector]) -> Result<()> {
        shape("control horizon", self.horizon(), u.len())?;
        for ut in u {
            shape("control dimension", self.nu, ut.len())?;
        }
        Ok(())
    }

    /// `f_t(x, u)`, rejecting non-finite results as divergence at step `t + 1`.
    pub fn step(&self, t: usize, x: &Vector, u: &Vector) -> Result<Vector> {
        let z = concat(x, u);
        let mut out = Vector::zeros(self.nx);
        self.dynamics[t]
            .eval(&z, out.as_mut_slice())
            .map_err(|e| at_step(e, t))?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t + 1 });
        }
        Ok(out)
    }

    pub fn stage_cost(&self, t: usize, x: &Vector, u: &Vector) -> Result<f64> {
        let mut out = [0.0];
        self.costs[t]
            .eval(&concat(x, u), &mut out)
            .map_err(|e| at_step(e, t))?;
        finite_at(out[0], t)
    }

    pub fn terminal_cost(&self, x: &Vector) -> Result<f64> {
        let mut out = [0.0];
        let t = self.horizon();
        self.final_cost
            .eval(x.as_slice(), &mut out)
            .map_err(|e| at_step(e, t))?;
        finite_at(out[0], t)
    }

    /// States `x_0..x_T` visited under `u`.
    pub fn rollout_states(&self, u: &[Vector]) -> Result<Vec<Vector>> {
        self.check_controls(u)?;
        let mut xs = Vec::with_capacity(u.len() + 1);
        xs.push(self.x0.clone());
        for (t, ut) in u.iter().enumerate() {
            let next = self.step(t, &xs[t], ut)?;
            xs.push(next);
        }
        Ok(xs)
    }

    /// Total cost `J(u)`.
    pub fn cost(&self, u: &[Vector]) -> Result<f64> {
        let xs = self.rollout_states(u)?;
        let mut total = 0.0;
        for (t, ut) in u.iter().enumerate() {
            total += self.stage_cost(t, &xs[t], ut)?;
        }
        total += self.terminal_cost(&xs[u.len()])?;
        finite_at(total, u.len())
    }
}

/// Divergence is reported for domain failures inside a model as well, so that
/// line searches can reject such trial points uniformly.
fn at_step(e: Error, t: usize) -> Error {
    match e {
        Error::Numeric { .. } | Error::Domain(_) => {
            log::debug!("model evaluation failed at step {t}: {e}");
            Error::Divergence { t }
        }
        other => other,
    }
}

fn finite_at(v: f64, t: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { t })
    }
}

fn shape(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Shape {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

pub fn concat(x: &Vector, u: &Vector) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + u.len());
    z.extend_from_slice(x.as_slice());
    z.extend_from_slice(u.as_slice());
    z
}

pub fn flatten(u: &[Vector]) -> Vector {
    let n: usize = u.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(n);
    let mut k = 0;
    for v in u {
        out.rows_mut(k, v.len()).copy_from(v);
        k += v.len();
    }
    out
}

pub fn unflatten(flat: &Vector, block: usize) -> Controls {
    assert!(block > 0 && flat.len() % block == 0, "flat length not a multiple of the block size");
    (0..flat.len() / block)
        .map(|t| flat.rows(t * block, block).into_owned())
        .collect()
}

pub fn add_controls(u: &[Vector], v: &[Vector]) -> Controls {
    u.iter().zip(v).map(|(a, b)| a + b).collect()
}

pub fn scale_controls(v: &[Vector], gamma: f64) -> Controls {
    v.iter().map(|a| a * gamma).collect()
}

pub fn controls_dot(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Linear expansion `(y, v) -> A y + B v` of a dynamic, with `A`, `B` the
/// Jacobians of `f` with respect to state and control.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub a: Matrix,
    pub b: Matrix,
}

impl LinearMap {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        shape("linear map columns of A", a.nrows(), a.ncols())?;
        shape("linear map rows of B", a.nrows(), b.nrows())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                primitive: "linear map",
                detail: "non-finite Jacobian entry".into(),
            });
        }
        Ok(Self { a, b })
    }

    /// Splits a full `n x (n + m)` Jacobian of `f(x, u)`.
    pub fn from_jacobian(jac: &Matrix, nx: usize) -> Result<Self> {
        let nu = jac.ncols() - nx;
        Self::new(
            jac.columns(0, nx).into_owned(),
            jac.columns(nx, nu).into_owned(),
        )
    }

    pub fn apply(&self, y: &Vector, v: &Vector) -> Vector {
        &self.a * y + &self.b * v
    }
}

/// Quadratic model `½yᵀH y + ½vᵀQ v + yᵀR v + pᵀy + qᵀv` of a running cost around a point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCostModel {
    /// `H`, state-state block.
    pub xx: Matrix,
    /// `Q`, control-control block.
    pub uu: Matrix,
    /// `R`, state-control block (`n_x x n_u`).
    pub xu: Matrix,
    /// `p`, state gradient.
    pub x: Vector,
    /// `q`, control gradient.
    pub u: Vector,
}

impl QuadraticCostModel {
    /// Builds the model, symmetrizing the diagonal blocks.
    pub fn new(xx: Matrix, uu: Matrix, xu: Matrix, x: Vector, u: Vector) -> Result<Self> {
        let (nx, nu) = (x.len(), u.len());
        shape("H rows", nx, xx.nrows())?;
        shape("H cols", nx, xx.ncols())?;
        shape("Q rows", nu, uu.nrows())?;
        shape("Q cols", nu, uu.ncols())?;
        shape("R rows", nx, xu.nrows())?;
        shape("R cols", nu, xu.ncols())?;
        Ok(Self {
            xx: symmetrize(&xx),
            uu: symmetrize(&uu),
            xu,
            x,
            u,
        })
    }

    pub fn zeros(nx: usize, nu: usize) -> Self {
        Self {
            xx: Matrix::zeros(nx, nx),
            uu: Matrix::zeros(nu, nu),
            xu: Matrix::zeros(nx, nu),
            x: Vector::zeros(nx),
            u: Vector::zeros(nu),
        }
    }

    /// Splits a gradient and Hessian over `(x, u)`.
    pub fn from_derivatives(grad: &Vector, hess: &Matrix, nx: usize) -> Result<Self> {
        let nu = grad.len() - nx;
        Self::new(
            hess.view((0, 0), (nx, nx)).into_owned(),
            hess.view((nx, nx), (nu, nu)).into_owned(),
            hess.view((0, nx), (nx, nu)).into_owned(),
            grad.rows(0, nx).into_owned(),
            grad.rows(nx, nu).into_owned(),
        )
    }

    /// Adds `½ zᵀ M z` for a full `(n_x + n_u)` square `M`.
    pub fn add_curvature(&mut self, m: &Matrix) {
        let nx = self.x.len();
        let nu = self.u.len();
        self.xx += symmetrize(&m.view((0, 0), (nx, nx)).into_owned());
        self.uu += symmetrize(&m.view((nx, nx), (nu, nu)).into_owned());
        self.xu += (m.view((0, nx), (nx, nu)) + m.view((nx, 0), (nu, nx)).transpose()) * 0.5;
    }

    pub fn state_dim(&self) -> usize {
        self.x.len()
    }

    pub fn ctrl_dim(&self) -> usize {
        self.u.len()
    }
}

pub fn evaluate_quadratic(model: &QuadraticCostModel, y: &Vector, v: &Vector) -> Result<f64> {
    shape("state increment", model.state_dim(), y.len())?;
    shape("control increment", model.ctrl_dim(), v.len())?;
    Ok(0.5 * y.dot(&(&model.xx * y))
        + 0.5 * v.dot(&(&model.uu * v))
        + y.dot(&(&model.xu * v))
        + model.x.dot(y)
        + model.u.dot(v))
}

/// Second derivatives of one dynamic: one `(n_x+n_u)` square Hessian per output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DynTensor {
    pub nx: usize,
    pub nu: usize,
    pub blocks: Vec<Matrix>,
}

impl DynTensor {
    pub fn compute(f: &dyn Differentiable, x: &Vector, u: &Vector) -> Result<Self> {
        let z = concat(x, u);
        let blocks = (0..f.output_dim())
            .map(|i| autodiff::hessian(&autodiff::Component { inner: f, index: i }, &z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nx: x.len(),
            nu: u.len(),
            blocks,
        })
    }

    pub fn zeros(nx_out: usize, nx: usize, nu: usize) -> Self {
        Self {
            nx,
            nu,
            blocks: vec![Matrix::zeros(nx + nu, nx + nu); nx_out],
        }
    }

    pub fn xx(&self, i: usize) -> Matrix {
        self.blocks[i].view((0, 0), (self.nx, self.nx)).into_owned()
    }

    pub fn xu(&self, i: usize) -> Matrix {
        self.blocks[i].view((0, self.nx), (self.nx, self.nu)).into_owned()
    }

    pub fn uu(&self, i: usize) -> Matrix {
        self.blocks[i]
            .view((self.nx, self.nx), (self.nu, self.nu))
            .into_owned()
    }

    /// `sum_i λ_i ∇²f_i`, symmetric.
    pub fn contract(&self, lambda: &Vector) -> Result<Matrix> {
        shape("contraction vector", self.blocks.len(), lambda.len())?;
        let n = self.nx + self.nu;
        let mut out = Matrix::zeros(n, n);
        for (b, l) in self.blocks.iter().zip(lambda.iter()) {
            out += b * *l;
        }
        Ok(symmetrize(&out))
    }
}

/// Cost-to-go `c(y) = ½yᵀJ y + jᵀy + j0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValueFunction {
    pub jm: Matrix,
    pub jv: Vector,
    pub j0: f64,
}

impl QuadraticValueFunction {
    pub fn zeros(n: usize) -> Self {
        Self {
            jm: Matrix::zeros(n, n),
            jv: Vector::zeros(n),
            j0: 0.0,
        }
    }

    pub fn eval(&self, y: &Vector) -> f64 {
        0.5 * y.dot(&(&self.jm * y)) + self.jv.dot(y) + self.j0
    }
}

/// Affine feedback `y -> K y + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    pub gain: Matrix,
    pub offset: Vector,
}

impl AffinePolicy {
    pub fn zeros(nu: usize, nx: usize) -> Self {
        Self {
            gain: Matrix::zeros(nu, nx),
            offset: Vector::zeros(nu),
        }
    }

    pub fn apply(&self, y: &Vector) -> Vector {
        &self.gain * y + &self.offset
    }

    /// `y -> γk + K y`.
    pub fn scaled(&self, gamma: f64) -> Self {
        Self {
            gain: self.gain.clone(),
            offset: &self.offset * gamma,
        }
    }
}

/// `f(x + y, u + v) - f(x, u)`, the step map followed by DDP roll-outs.
pub fn finite_difference_dynamic(
    f: &dyn Differentiable,
    x: &Vector,
    u: &Vector,
    y: &Vector,
    v: &Vector,
    t: usize,
) -> Result<Vector> {
    let base = autodiff::evaluate(f, &concat(x, u))?;
    finite_difference_from(f, &base, x, u, y, v, t)
}

/// As [`finite_difference_dynamic`] with `f(x, u)` already known.
pub fn finite_difference_from(
    f: &dyn Differentiable,
    base: &Vector,
    x: &Vector,
    u: &Vector,
    y: &Vector,
    v: &Vector,
    t: usize,
) -> Result<Vector> {
    let moved = autodiff::evaluate(f, &concat(&(x + y), &(u + v))).map_err(|e| match e {
        Error::Numeric { .. } | Error::Domain(_) => Error::Divergence { t },
        other => other,
    })?;
    let d = moved - base;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { t });
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Scalar, VecFn};

    struct Plus;
    impl VecFn for Plus {
        fn dims(&self) -> (usize, usize) {
            (2, 1)
        }
        fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
            out[0] = z[0] + z[1];
            Ok(())
        }
    }

    struct Sq;
    impl VecFn for Sq {
        fn dims(&self) -> (usize, usize) {
            (2, 1)
        }
        fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
            out[0] = z[0] * z[0];
            Ok(())
        }
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn evaluate_quadratic_examples() {
        let zero = QuadraticCostModel::zeros(2, 1);
        assert_eq!(evaluate_quadratic(&zero, &v(&[1.0, -2.0]), &v(&[3.0])).unwrap(), 0.0);
        let mut m = QuadraticCostModel::zeros(2, 1);
        m.xx = Matrix::identity(2, 2);
        m.uu = Matrix::identity(1, 1);
        assert_eq!(evaluate_quadratic(&m, &v(&[1.0, 0.0]), &v(&[2.0])).unwrap(), 2.5);
        let mut lin = QuadraticCostModel::zeros(1, 1);
        lin.x = v(&[1.0]);
        lin.u = v(&[1.0]);
        assert_eq!(evaluate_quadratic(&lin, &v(&[3.0]), &v(&[4.0])).unwrap(), 7.0);
        assert!(matches!(
            evaluate_quadratic(&lin, &v(&[3.0, 1.0]), &v(&[4.0])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn finite_difference_examples() {
        let zero = finite_difference_dynamic(&Sq, &v(&[1.3]), &v(&[0.2]), &v(&[0.0]), &v(&[0.0]), 0)
            .unwrap();
        assert_eq!(zero[0], 0.0);
        let d = finite_difference_dynamic(&Plus, &v(&[1.0]), &v(&[1.0]), &v(&[2.0]), &v(&[3.0]), 0)
            .unwrap();
        assert_eq!(d[0], 5.0);
        let d = finite_difference_dynamic(&Sq, &v(&[1.0]), &v(&[0.0]), &v(&[1.0]), &v(&[0.0]), 0)
            .unwrap();
        assert_eq!(d[0], 3.0);
    }

    #[test]
    fn zero_tensor_contracts_to_zero() {
        let t = DynTensor::zeros(2, 2, 1);
        assert_eq!(t.contract(&v(&[1.0, -3.0])).unwrap(), Matrix::zeros(3, 3));
    }

    #[test]
    fn quadratic_model_is_symmetrized() {
        let h = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let m = QuadraticCostModel::new(
            h,
            Matrix::identity(1, 1),
            Matrix::zeros(2, 1),
            Vector::zeros(2),
            Vector::zeros(1),
        )
        .unwrap();
        assert_eq!(m.xx, m.xx.transpose());
    }
}
