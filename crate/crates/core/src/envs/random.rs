//! Seeded random problem instances for tests and the `verify` command.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Differentiable, Scalar, VecFn};
use crate::core::{spectral_norm, Matrix, TrajectoryProblem, Vector};
use crate::error::Result;

/// `x' = A x + B u + α sin(C x + D u) + β (E x + F u)²` (elementwise square).
#[derive(Debug, Clone)]
pub struct RandomDynamics {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub e: Matrix,
    pub f: Matrix,
    pub alpha: f64,
    pub beta: f64,
}

fn affine<S: Scalar>(m: &Matrix, n: &Matrix, x: &[S], u: &[S], row: usize) -> S {
    let mut acc = S::cst(0.0);
    for (j, xj) in x.iter().enumerate() {
        acc += *xj * m[(row, j)];
    }
    for (j, uj) in u.iter().enumerate() {
        acc += *uj * n[(row, j)];
    }
    acc
}

impl VecFn for RandomDynamics {
    fn dims(&self) -> (usize, usize) {
        (self.a.ncols() + self.b.ncols(), self.a.nrows())
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let (x, u) = z.split_at(self.a.ncols());
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = affine(&self.a, &self.b, x, u, i);
            if self.alpha != 0.0 {
                v += affine(&self.c, &self.d, x, u, i).sin() * self.alpha;
            }
            if self.beta != 0.0 {
                v += affine(&self.e, &self.f, x, u, i).square() * self.beta;
            }
            *o = v;
        }
        Ok(())
    }
}

/// `½ (z - c)ᵀ P (z - c) + κ Σ cos(z_i)`.
#[derive(Debug, Clone)]
pub struct RandomCost {
    pub weight: Matrix,
    pub center: Vector,
    pub wiggle: f64,
}

impl VecFn for RandomCost {
    fn dims(&self) -> (usize, usize) {
        (self.center.len(), 1)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let n = self.center.len();
        let d: Vec<S> = (0..n).map(|i| z[i] - self.center[i]).collect();
        let mut acc = S::cst(0.0);
        for i in 0..n {
            for j in 0..n {
                acc += d[i] * d[j] * (0.5 * self.weight[(i, j)]);
            }
            if self.wiggle != 0.0 {
                acc += z[i].cos() * self.wiggle;
            }
        }
        out[0] = acc;
        Ok(())
    }
}

/// Shape and nonlinearity of a random instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpec {
    pub nx: usize,
    pub nu: usize,
    pub horizon: usize,
    /// Amplitude of the sine term in the dynamics.
    pub alpha: f64,
    /// Amplitude of the quadratic term in the dynamics.
    pub beta: f64,
    /// Amplitude of the cosine term in the costs.
    pub wiggle: f64,
    /// Scale of the random linear part of the dynamics.
    pub spread: f64,
}

impl RandomSpec {
    /// Smooth polynomial/trigonometric dynamics with convex quadratic costs.
    pub fn nonlinear(nx: usize, nu: usize, horizon: usize) -> Self {
        Self { nx, nu, horizon, alpha: 0.3, beta: 0.1, wiggle: 0.05, spread: 0.5 }
    }

    /// Linear dynamics with strongly convex quadratic costs.
    pub fn linear_quadratic(nx: usize, nu: usize, horizon: usize) -> Self {
        Self { nx, nu, horizon, alpha: 0.0, beta: 0.0, wiggle: 0.0, spread: 0.5 }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0))
}

/// Symmetric positive definite matrix with eigenvalues at least `floor`.
fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Matrix {
    let g = gaussian_matrix(rng, n, n, 1.0);
    &g * g.transpose() / n as f64 + Matrix::identity(n, n) * floor
}

pub fn random_dynamics(rng: &mut ChaCha8Rng, spec: &RandomSpec) -> RandomDynamics {
    let (nx, nu) = (spec.nx, spec.nu);
    RandomDynamics {
        a: gaussian_matrix(rng, nx, nx, spec.spread),
        b: gaussian_matrix(rng, nx, nu, 1.0),
        c: gaussian_matrix(rng, nx, nx, 1.0),
        d: gaussian_matrix(rng, nx, nu, 1.0),
        e: gaussian_matrix(rng, nx, nx, 0.5),
        f: gaussian_matrix(rng, nx, nu, 0.5),
        alpha: spec.alpha,
        beta: spec.beta,
    }
}

/// Components of a random instance, kept concrete so tests can inspect them.
#[derive(Debug, Clone)]
pub struct RandomParts {
    pub x0: Vector,
    pub dynamics: Vec<RandomDynamics>,
    pub costs: Vec<RandomCost>,
    pub final_cost: RandomCost,
}

impl RandomParts {
    pub fn generate(seed: u64, spec: &RandomSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nx, nu) = (spec.nx, spec.nu);
        let x0 = Vector::from_fn(nx, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mut dynamics = Vec::with_capacity(spec.horizon);
        let mut costs = Vec::with_capacity(spec.horizon);
        for _ in 0..spec.horizon {
            dynamics.push(random_dynamics(&mut rng, spec));
            costs.push(RandomCost {
                weight: spd(&mut rng, nx + nu, 0.5),
                center: Vector::from_fn(nx + nu, |_, _| rng.random::<f64>() - 0.5),
                wiggle: spec.wiggle,
            });
        }
        let final_cost = RandomCost {
            weight: spd(&mut rng, nx, 0.5),
            center: Vector::from_fn(nx, |_, _| rng.random::<f64>() - 0.5),
            wiggle: spec.wiggle,
        };
        Self { x0, dynamics, costs, final_cost }
    }

    pub fn problem(&self) -> Result<TrajectoryProblem> {
        let nu = self.dynamics.first().map_or(0, |f| f.b.ncols());
        let dynamics: Vec<Arc<dyn Differentiable>> = self
            .dynamics
            .iter()
            .map(|f| Arc::new(f.clone()) as Arc<dyn Differentiable>)
            .collect();
        let costs: Vec<Arc<dyn Differentiable>> = self
            .costs
            .iter()
            .map(|h| Arc::new(h.clone()) as Arc<dyn Differentiable>)
            .collect();
        TrajectoryProblem::new(self.x0.clone(), nu, dynamics, costs, Arc::new(self.final_cost.clone()))
    }
}

/// Instance with stage-varying dynamics and costs, and a random initial state.
pub fn random_problem(seed: u64, spec: &RandomSpec) -> Result<TrajectoryProblem> {
    RandomParts::generate(seed, spec).problem()
}

/// Random controls with entries in `[-scale, scale]`.
pub fn random_controls(seed: u64, horizon: usize, nu: usize, scale: f64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..horizon)
        .map(|_| Vector::from_fn(nu, |_, _| scale * (rng.random::<f64>() * 2.0 - 1.0)))
        .collect()
}

/// Instance `x' = A x + B u + α sin(C x + D u)` with its per-step Lipschitz
/// constants in `x` and `u`: `‖A‖ + α‖C‖` and `‖B‖ + α‖D‖` (spectral norms),
/// maximized over steps.
pub fn random_lipschitz_problem(seed: u64, spec: &RandomSpec) -> Result<(TrajectoryProblem, f64, f64)> {
    let parts = RandomParts::generate(seed, &RandomSpec { beta: 0.0, ..*spec });
    let (mut lx, mut lu) = (0.0f64, 0.0f64);
    for f in &parts.dynamics {
        lx = lx.max(spectral_norm(&f.a) + f.alpha * spectral_norm(&f.c));
        lu = lu.max(spectral_norm(&f.b) + f.alpha * spectral_norm(&f.d));
    }
    Ok((parts.problem()?, lx, lu))
}

/// Scalar problem `min sum_t Δ(a x_t² - u_t²) + a x_T²` with `x_{t+1} = x_t + Δu_t`,
/// `x_0 = 0`. Its Hamiltonian is never minimized in `u`, yet for `aΔ²/4 > 1`
/// the problem is strongly convex in the controls.
pub fn concave_hamiltonian_problem(horizon: usize, dt: f64, a: f64) -> Result<TrajectoryProblem> {
    let dynamics = Arc::new(RandomDynamics {
        a: Matrix::identity(1, 1),
        b: Matrix::from_element(1, 1, dt),
        c: Matrix::zeros(1, 1),
        d: Matrix::zeros(1, 1),
        e: Matrix::zeros(1, 1),
        f: Matrix::zeros(1, 1),
        alpha: 0.0,
        beta: 0.0,
    });
    let stage = Arc::new(RandomCost {
        weight: Matrix::from_diagonal(&Vector::from_vec(vec![2.0 * dt * a, -2.0 * dt])),
        center: Vector::zeros(2),
        wiggle: 0.0,
    });
    let terminal = Arc::new(RandomCost {
        weight: Matrix::from_element(1, 1, 2.0 * a),
        center: Vector::zeros(1),
        wiggle: 0.0,
    });
    TrajectoryProblem::stationary(Vector::zeros(1), 1, horizon, dynamics, stage, terminal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_reproducible() {
        let spec = RandomSpec::nonlinear(2, 1, 3);
        let u = random_controls(7, 3, 1, 0.5);
        let a = random_problem(11, &spec).unwrap().cost(&u).unwrap();
        let b = random_problem(11, &spec).unwrap().cost(&u).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn concave_hamiltonian_values() {
        let p = concave_hamiltonian_problem(2, 0.1, 500.0).unwrap();
        let u = vec![Vector::from_vec(vec![1.0]), Vector::from_vec(vec![0.0])];
        // x = (0, 0.1, 0.1)
        let expected = 0.1 * (-1.0) + 0.1 * (500.0 * 0.01) + 500.0 * 0.01;
        assert!((p.cost(&u).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_constants_are_positive() {
        let (_, lx, lu) = random_lipschitz_problem(3, &RandomSpec::nonlinear(2, 2, 4)).unwrap();
        assert!(lx > 0.0 && lu > 0.0);
    }
}
