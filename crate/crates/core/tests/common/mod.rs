//! Reference computations for the integration tests, written independently of
//! the adjoint, dynamic-programming and dense code paths they check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajopt::autodiff::{self, Differentiable, Scalar, VecFn};
use trajopt::core::{Matrix, Vector};
use trajopt::envs::random::{RandomParts, RandomSpec};
use trajopt::Result;

/// Rolls `parts` out generically over `S`; returns `x_0..x_T`.
fn roll<S: Scalar>(parts: &RandomParts, u: &[S]) -> Result<Vec<Vec<S>>> {
    let nx = parts.x0.len();
    let nu = u.len() / parts.dynamics.len().max(1);
    let mut xs = vec![parts.x0.iter().map(|v| S::cst(*v)).collect::<Vec<S>>()];
    for (t, f) in parts.dynamics.iter().enumerate() {
        let mut z = xs[t].clone();
        z.extend_from_slice(&u[t * nu..(t + 1) * nu]);
        let mut next = vec![S::cst(0.0); nx];
        f.call(&z, &mut next)?;
        xs.push(next);
    }
    Ok(xs)
}

/// Total cost as a function of the stacked controls.
pub struct Objective<'a>(pub &'a RandomParts);

impl VecFn for Objective<'_> {
    fn dims(&self) -> (usize, usize) {
        let tau = self.0.dynamics.len();
        (tau * self.0.dynamics[0].b.ncols(), 1)
    }
    fn call<S: Scalar>(&self, u: &[S], out: &mut [S]) -> Result<()> {
        let parts = self.0;
        let tau = parts.dynamics.len();
        let nu = u.len() / tau;
        let xs = roll(parts, u)?;
        let mut acc = S::cst(0.0);
        let mut one = [S::cst(0.0)];
        for t in 0..tau {
            let mut z = xs[t].clone();
            z.extend_from_slice(&u[t * nu..(t + 1) * nu]);
            parts.costs[t].call(&z, &mut one)?;
            acc += one[0];
        }
        parts.final_cost.call(&xs[tau], &mut one)?;
        out[0] = acc + one[0];
        Ok(())
    }
}

/// Map from stacked controls to stacked states `x_1..x_T`.
pub struct StateMap<'a>(pub &'a RandomParts);

impl VecFn for StateMap<'_> {
    fn dims(&self) -> (usize, usize) {
        let tau = self.0.dynamics.len();
        (tau * self.0.dynamics[0].b.ncols(), tau * self.0.x0.len())
    }
    fn call<S: Scalar>(&self, u: &[S], out: &mut [S]) -> Result<()> {
        let xs = roll(self.0, u)?;
        let nx = self.0.x0.len();
        for (t, x) in xs.iter().skip(1).enumerate() {
            out[t * nx..(t + 1) * nx].copy_from_slice(x);
        }
        Ok(())
    }
}

pub fn stacked(u: &[Vector]) -> Vec<f64> {
    u.iter().flat_map(|v| v.iter().copied()).collect()
}

pub fn objective_gradient(parts: &RandomParts, u: &[Vector]) -> Vector {
    autodiff::gradient(&Objective(parts), &stacked(u)).unwrap()
}

pub fn objective_hessian(parts: &RandomParts, u: &[Vector]) -> Matrix {
    autodiff::hessian(&Objective(parts), &stacked(u)).unwrap()
}

/// `Σ_t Jz_tᵀ ∇²h_t Jz_t + J_Tᵀ ∇²h_T J_T`, with `Jz_t` the Jacobian of
/// `(x_t, u_t)` with respect to the stacked controls.
pub fn gauss_newton_matrix(parts: &RandomParts, u: &[Vector]) -> Matrix {
    let flat = stacked(u);
    let tau = parts.dynamics.len();
    let nx = parts.x0.len();
    let nu = u[0].len();
    let n = flat.len();
    let states = autodiff::jacobian(&StateMap(parts), &flat).unwrap();
    let xs = roll::<f64>(parts, &flat).unwrap();
    let mut out = Matrix::zeros(n, n);
    for t in 0..tau {
        let mut jz = Matrix::zeros(nx + nu, n);
        if t > 0 {
            jz.view_mut((0, 0), (nx, n)).copy_from(&states.rows((t - 1) * nx, nx));
        }
        for i in 0..nu {
            jz[(nx + i, t * nu + i)] = 1.0;
        }
        let mut z = xs[t].clone();
        z.extend_from_slice(&flat[t * nu..(t + 1) * nu]);
        let h = autodiff::hessian(&parts.costs[t], &z).unwrap();
        out += jz.transpose() * h * &jz;
    }
    let jt = states.rows((tau - 1) * nx, nx).into_owned();
    let h = autodiff::hessian(&parts.final_cost, &xs[tau]).unwrap();
    out += jt.transpose() * h * jt;
    out
}

/// Jacobian of the stacked states with respect to the stacked controls.
pub fn state_jacobian(parts: &RandomParts, u: &[Vector]) -> Matrix {
    autodiff::jacobian(&StateMap(parts), &stacked(u)).unwrap()
}

/// Optimal controls of a linear-quadratic instance from the equality-constrained
/// KKT system in the variables `(x_1..x_T, u_0..u_{T-1})`.
pub fn kkt_controls(parts: &RandomParts) -> Vec<Vector> {
    let tau = parts.dynamics.len();
    let nx = parts.x0.len();
    let nu = parts.dynamics[0].b.ncols();
    let n = tau * (nx + nu);
    let xi = |t: usize| (t - 1) * nx;
    let ui = |t: usize| tau * nx + t * nu;
    let mut h = Matrix::zeros(n, n);
    let mut g = Vector::zeros(n);
    // Stage t: z = S w + s0 with s0 carrying the fixed initial state.
    let mut add_stage = |sel: &Matrix, s0: &Vector, p: &Matrix, c: &Vector| {
        h += sel.transpose() * p * sel;
        g += sel.transpose() * p * (s0 - c);
    };
    for t in 0..tau {
        let cost = &parts.costs[t];
        let mut sel = Matrix::zeros(nx + nu, n);
        let mut s0 = Vector::zeros(nx + nu);
        for i in 0..nx {
            if t == 0 {
                s0[i] = parts.x0[i];
            } else {
                sel[(i, xi(t) + i)] = 1.0;
            }
        }
        for i in 0..nu {
            sel[(nx + i, ui(t) + i)] = 1.0;
        }
        add_stage(&sel, &s0, &cost.weight, &cost.center);
    }
    let mut sel = Matrix::zeros(nx, n);
    for i in 0..nx {
        sel[(i, xi(tau) + i)] = 1.0;
    }
    add_stage(&sel, &Vector::zeros(nx), &parts.final_cost.weight, &parts.final_cost.center);

    let m = tau * nx;
    let mut c = Matrix::zeros(m, n);
    let mut d = Vector::zeros(m);
    for t in 0..tau {
        let f = &parts.dynamics[t];
        let row = t * nx;
        for i in 0..nx {
            c[(row + i, xi(t + 1) + i)] = 1.0;
        }
        if t == 0 {
            d.rows_mut(row, nx).copy_from(&(&f.a * &parts.x0));
        } else {
            c.view_mut((row, xi(t)), (nx, nx)).copy_from(&(-&f.a));
        }
        c.view_mut((row, ui(t)), (nx, nu)).copy_from(&(-&f.b));
    }
    let mut kkt = Matrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&h);
    kkt.view_mut((0, n), (n, m)).copy_from(&c.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&c);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    rhs.rows_mut(n, m).copy_from(&d);
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    (0..tau).map(|t| sol.rows(ui(t), nu).into_owned()).collect()
}

/// Random small instance: horizon 3 or 5, state and control sizes in 1..=3.
pub fn small_spec(rng: &mut ChaCha8Rng, nonlinear: bool) -> RandomSpec {
    let horizon = if rng.random::<bool>() { 3 } else { 5 };
    let nx = rng.random_range(1..=3);
    let nu = rng.random_range(1..=3);
    if nonlinear {
        RandomSpec::nonlinear(nx, nu, horizon)
    } else {
        RandomSpec::linear_quadratic(nx, nu, horizon)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_controls(rng: &mut ChaCha8Rng, horizon: usize, nu: usize, scale: f64) -> Vec<Vector> {
    (0..horizon)
        .map(|_| Vector::from_fn(nu, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0)))
        .collect()
}

/// `max_ij |a - b| / max(|b|, 1)`.
pub fn entry_rel_err(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

pub fn vec_rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Central-difference Jacobian with step `h`.
pub fn fd_jacobian(f: &dyn Differentiable, z: &[f64], h: f64) -> Matrix {
    let mut jac = Matrix::zeros(f.output_dim(), z.len());
    let mut w = z.to_vec();
    for j in 0..z.len() {
        w[j] = z[j] + h;
        let plus = autodiff::evaluate(f, &w).unwrap();
        w[j] = z[j] - h;
        let minus = autodiff::evaluate(f, &w).unwrap();
        w[j] = z[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// Central differences (step `h`) of the exact gradient of `z -> λᵀ f(z)`.
pub fn fd_weighted_hessian(f: &dyn Differentiable, z: &[f64], lambda: &Vector, h: f64) -> Matrix {
    let n = z.len();
    let mut out = Matrix::zeros(n, n);
    let mut w = z.to_vec();
    for j in 0..n {
        w[j] = z[j] + h;
        let plus = autodiff::jacobian(f, &w).unwrap().transpose() * lambda;
        w[j] = z[j] - h;
        let minus = autodiff::jacobian(f, &w).unwrap().transpose() * lambda;
        w[j] = z[j];
        out.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    out
}
