//! Brute-force reference oracles on the stacked formulation.
//!
//! Stack the states `x = (x_1..x_T)` and controls `u = (u_0..u_{T-1})`, and
//! let `F(x, u)` collect `f_t(x_t, u_t)` so the trajectory solves `x = F(x, u)`.
//! With `Fx`, `Fu` the Jacobians of `F`, the trajectory sensitivity is
//! `dx/du = (I - Fx)^{-1} Fu`. Everything here costs `O((T n_x)^3)` and is
//! meant for tests and the `verify` command only.

use crate::autodiff;
use crate::core::{concat, flatten, symmetrize, DynTensor, Matrix, TrajectoryProblem, Vector};
use crate::error::{Error, Result};

/// Refuse stacked state dimensions above this.
pub const DENSE_LIMIT: usize = 256;

/// Stacked first and second derivatives along one trajectory.
pub struct DenseExpansion {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    /// `∂F/∂x`, `T n_x` square.
    pub fx: Matrix,
    /// `∂F/∂u`, `T n_x x T n_u`.
    pub fu: Matrix,
    /// `dx/du`, `T n_x x T n_u`.
    pub sensitivity: Matrix,
    /// Gradients of the running costs over `(x_t, u_t)` and of the final cost.
    pub cost_grads: Vec<Vector>,
    pub cost_hessians: Vec<Matrix>,
    pub final_grad: Vector,
    pub final_hessian: Matrix,
    pub tensors: Vec<DynTensor>,
}

impl DenseExpansion {
    pub fn new(problem: &TrajectoryProblem, u: &[Vector]) -> Result<Self> {
        let (nx, nu, tau) = (problem.state_dim(), problem.ctrl_dim(), problem.horizon());
        if tau * nx > DENSE_LIMIT {
            return Err(Error::Parameter(format!(
                "dense oracle refuses T*n_x = {} > {DENSE_LIMIT}",
                tau * nx
            )));
        }
        let xs = problem.rollout_states(u)?;
        let mut fx = Matrix::zeros(tau * nx, tau * nx);
        let mut fu = Matrix::zeros(tau * nx, tau * nu);
        let mut cost_grads = Vec::with_capacity(tau);
        let mut cost_hessians = Vec::with_capacity(tau);
        let mut tensors = Vec::with_capacity(tau);
        for t in 0..tau {
            let z = concat(&xs[t], &u[t]);
            let f = problem.dynamics[t].as_ref();
            let jac = autodiff::jacobian(f, &z)?;
            if t > 0 {
                fx.view_mut((t * nx, (t - 1) * nx), (nx, nx))
                    .copy_from(&jac.columns(0, nx));
            }
            fu.view_mut((t * nx, t * nu), (nx, nu))
                .copy_from(&jac.columns(nx, nu));
            tensors.push(DynTensor::compute(f, &xs[t], &u[t])?);
            let (_, g, h) = autodiff::value_gradient_hessian(problem.costs[t].as_ref(), &z)?;
            cost_grads.push(g);
            cost_hessians.push(symmetrize(&h));
        }
        let (_, final_grad, final_hessian) =
            autodiff::value_gradient_hessian(problem.final_cost.as_ref(), xs[tau].as_slice())?;
        let eye = Matrix::identity(tau * nx, tau * nx);
        let lu = (&eye - &fx).lu();
        let sensitivity = lu
            .solve(&fu)
            .ok_or_else(|| Error::Numeric {
                primitive: "dense solve",
                detail: "I - Fx is singular".into(),
            })?;
        Ok(Self {
            nx,
            nu,
            horizon: tau,
            fx,
            fu,
            sensitivity,
            cost_grads,
            cost_hessians,
            final_grad,
            final_hessian: symmetrize(&final_hessian),
            tensors,
        })
    }

    /// Gradient of the total cost with respect to the stacked states `x_1..x_T`.
    fn state_gradient(&self) -> Vector {
        let (nx, tau) = (self.nx, self.horizon);
        let mut mu = Vector::zeros(tau * nx);
        for t in 1..tau {
            mu.rows_mut((t - 1) * nx, nx)
                .copy_from(&self.cost_grads[t].rows(0, nx));
        }
        mu.rows_mut((tau - 1) * nx, nx).copy_from(&self.final_grad);
        mu
    }

    /// Rows of `d(x_t, u_t)/du`, a `(n_x + n_u) x T n_u` matrix.
    fn stage_rows(&self, t: usize) -> Matrix {
        let (nx, nu) = (self.nx, self.nu);
        let mut w = Matrix::zeros(nx + nu, self.horizon * nu);
        if t > 0 {
            w.rows_mut(0, nx)
                .copy_from(&self.sensitivity.rows((t - 1) * nx, nx));
        }
        for i in 0..nu {
            w[(nx + i, t * nu + i)] = 1.0;
        }
        w
    }

    /// Jacobian of the control-to-trajectory map in gradient layout,
    /// `∇Φ = Fuᵀ (I - Fxᵀ)^{-1}`, shape `T n_u x T n_x`.
    pub fn control_jacobian(&self) -> Matrix {
        self.sensitivity.transpose()
    }

    pub fn gradient(&self) -> Vector {
        let (nx, nu, tau) = (self.nx, self.nu, self.horizon);
        let mut g = self.sensitivity.transpose() * self.state_gradient();
        for t in 0..tau {
            let mut block = g.rows_mut(t * nu, nu);
            block += self.cost_grads[t].rows(nx, nu);
        }
        g
    }

    /// Costates `(I - Fxᵀ)^{-1} μ` where `μ` is the state gradient; entry
    /// `t - 1` multiplies the output of `f_{t-1}`.
    pub fn costates(&self) -> Result<Vector> {
        let n = self.horizon * self.nx;
        let lu = (Matrix::identity(n, n) - self.fx.transpose()).lu();
        lu.solve(&self.state_gradient()).ok_or_else(|| Error::Numeric {
            primitive: "dense solve",
            detail: "I - Fxᵀ is singular".into(),
        })
    }

    /// Gauss-Newton matrix: cost Hessians pulled back through the trajectory sensitivity.
    pub fn gauss_newton(&self) -> Matrix {
        let (nu, tau) = (self.nu, self.horizon);
        let mut h = Matrix::zeros(tau * nu, tau * nu);
        for t in 0..tau {
            let w = self.stage_rows(t);
            h += w.transpose() * &self.cost_hessians[t] * &w;
        }
        let last = self
            .sensitivity
            .rows((tau - 1) * self.nx, self.nx)
            .into_owned();
        h += last.transpose() * &self.final_hessian * &last;
        symmetrize(&h)
    }

    /// Full Hessian: Gauss-Newton matrix plus the second-order dynamics terms
    /// `∇²_uu F + N∇²_xu F + ∇²_ux F Nᵀ + N∇²_xx F Nᵀ` contracted with the costates.
    pub fn hessian(&self) -> Result<Matrix> {
        let lambda = self.costates()?;
        let nx = self.nx;
        let mut h = self.gauss_newton();
        for t in 0..self.horizon {
            let w = self.stage_rows(t);
            let l = lambda.rows(t * nx, nx).into_owned();
            let c = self.tensors[t].contract(&l)?;
            h += w.transpose() * c * &w;
        }
        Ok(symmetrize(&h))
    }
}

pub fn dense_gradient(problem: &TrajectoryProblem, u: &[Vector]) -> Result<Vector> {
    Ok(DenseExpansion::new(problem, u)?.gradient())
}

pub fn dense_hessian(problem: &TrajectoryProblem, u: &[Vector]) -> Result<Matrix> {
    DenseExpansion::new(problem, u)?.hessian()
}

pub fn dense_gauss_newton(problem: &TrajectoryProblem, u: &[Vector]) -> Result<Matrix> {
    Ok(DenseExpansion::new(problem, u)?.gauss_newton())
}

pub fn dense_control_jacobian(problem: &TrajectoryProblem, u: &[Vector]) -> Result<Matrix> {
    Ok(DenseExpansion::new(problem, u)?.control_jacobian())
}

/// Solves `(M + νI) v = -∇J` densely for the stacked direction.
pub fn dense_step(matrix: &Matrix, gradient: &Vector, nu: f64) -> Result<Vector> {
    let n = matrix.nrows();
    let lhs = matrix + Matrix::identity(n, n) * nu;
    lhs.lu().solve(&(-gradient)).ok_or_else(|| Error::Numeric {
        primitive: "dense solve",
        detail: "regularized matrix is singular".into(),
    })
}

/// Stacks controls for comparison with dense results.
pub fn stack(u: &[Vector]) -> Vector {
    flatten(u)
}

/// Bounds on the Lipschitz constant `l` of the control-to-trajectory map and
/// `L` of its gradient, from uniform per-step bounds on the dynamics:
/// `S = sum_{t<T} (l_x)^t`, `l = l_u S`, `L = S (L_xx l² + 2 L_xu l + L_uu)`.
pub fn smoothness_bounds(
    lx: f64,
    lu: f64,
    lxx: f64,
    lxu: f64,
    luu: f64,
    horizon: usize,
) -> Result<(f64, f64)> {
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    if [lx, lu, lxx, lxu, luu].iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::Parameter("smoothness constants must be non-negative".into()));
    }
    let mut s = 0.0;
    let mut power = 1.0;
    for _ in 0..horizon {
        s += power;
        power *= lx;
    }
    let l = lu * s;
    Ok((l, s * (lxx * l * l + 2.0 * lxu * l + luu)))
}
