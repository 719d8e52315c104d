//! Fixed-step discretization of continuous-time dynamics `ż = g(z, u)`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discretizer {
    Euler,
    Rk4,
    /// RK4 with three control samples per step: at the start, one third and two thirds.
    Rk4Varying,
}

impl Discretizer {
    pub const ALL: [Discretizer; 3] = [Discretizer::Euler, Discretizer::Rk4, Discretizer::Rk4Varying];

    pub fn name(self) -> &'static str {
        match self {
            Discretizer::Euler => "euler",
            Discretizer::Rk4 => "rk4",
            Discretizer::Rk4Varying => "rk4-varying",
        }
    }

    /// Number of control samples consumed per step.
    pub fn samples(self) -> usize {
        match self {
            Discretizer::Rk4Varying => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for Discretizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Discretizer {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Discretizer::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config {
                field: "discretizer".into(),
                msg: format!("unknown discretizer `{s}` (expected euler, rk4 or rk4-varying)"),
            })
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("time step must be positive, got {dt}")))
    }
}

fn finite<S: Scalar>(z: Vec<S>) -> Result<Vec<S>> {
    if z.iter().all(|v| v.value().is_finite()) {
        Ok(z)
    } else {
        Err(Error::Numeric {
            primitive: "integrator",
            detail: "non-finite state".into(),
        })
    }
}

fn axpy<S: Scalar>(z: &[S], a: f64, k: &[S]) -> Vec<S> {
    z.iter().zip(k).map(|(zi, ki)| *zi + *ki * a).collect()
}

/// `z + Δ g(z, u)`.
pub fn euler_step<S, G>(g: G, z: &[S], u: &[S], dt: f64) -> Result<Vec<S>>
where
    S: Scalar,
    G: Fn(&[S], &[S], &mut [S]) -> Result<()>,
{
    check_dt(dt)?;
    let mut k = vec![S::cst(0.0); z.len()];
    g(z, u, &mut k)?;
    finite(axpy(z, dt, &k))
}

/// Classical RK4 with the control held constant over the step.
pub fn rk4_step<S, G>(g: G, z: &[S], u: &[S], dt: f64) -> Result<Vec<S>>
where
    S: Scalar,
    G: Fn(&[S], &[S], &mut [S]) -> Result<()>,
{
    rk4_samples(g, z, [u, u, u, u], dt)
}

/// RK4 fed with `v`, `v_{1/3}`, `v_{1/3}`, `v_{2/3}` in its four stages.
pub fn rk4_varying_step<S, G>(g: G, z: &[S], samples: [&[S]; 3], dt: f64) -> Result<Vec<S>>
where
    S: Scalar,
    G: Fn(&[S], &[S], &mut [S]) -> Result<()>,
{
    let [v0, v1, v2] = samples;
    rk4_samples(g, z, [v0, v1, v1, v2], dt)
}

fn rk4_samples<S, G>(g: G, z: &[S], u: [&[S]; 4], dt: f64) -> Result<Vec<S>>
where
    S: Scalar,
    G: Fn(&[S], &[S], &mut [S]) -> Result<()>,
{
    check_dt(dt)?;
    let n = z.len();
    let mut k1 = vec![S::cst(0.0); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    g(z, u[0], &mut k1)?;
    g(&axpy(z, dt / 2.0, &k1), u[1], &mut k2)?;
    g(&axpy(z, dt / 2.0, &k2), u[2], &mut k3)?;
    g(&axpy(z, dt, &k3), u[3], &mut k4)?;
    let out = (0..n)
        .map(|i| z[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
        .collect();
    finite(out)
}

/// Continuous-time model written generically over [`Scalar`].
pub trait ContinuousDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn ctrl_dim(&self) -> usize;
    fn deriv<S: Scalar>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<()>;
}

/// Discrete map `(x, u) -> x_next` obtained from a continuous model.
#[derive(Debug, Clone)]
pub struct Discretized<D> {
    pub model: D,
    pub scheme: Discretizer,
    pub dt: f64,
}

impl<D: ContinuousDynamics> Discretized<D> {
    pub fn new(model: D, scheme: Discretizer, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self { model, scheme, dt })
    }

    /// Control dimension of the discrete map.
    pub fn ctrl_dim(&self) -> usize {
        self.model.ctrl_dim() * self.scheme.samples()
    }

    pub fn step<S: Scalar>(&self, x: &[S], u: &[S]) -> Result<Vec<S>> {
        let g = |z: &[S], v: &[S], out: &mut [S]| self.model.deriv(z, v, out);
        match self.scheme {
            Discretizer::Euler => euler_step(g, x, u, self.dt),
            Discretizer::Rk4 => rk4_step(g, x, u, self.dt),
            Discretizer::Rk4Varying => {
                let m = self.model.ctrl_dim();
                rk4_varying_step(g, x, [&u[..m], &u[m..2 * m], &u[2 * m..]], self.dt)
            }
        }
    }
}

impl<D: ContinuousDynamics> crate::autodiff::VecFn for Discretized<D> {
    fn dims(&self) -> (usize, usize) {
        let n = self.model.state_dim();
        (n + self.ctrl_dim(), n)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let n = self.model.state_dim();
        let next = self.step(&z[..n], &z[n..])?;
        out.copy_from_slice(&next);
        Ok(())
    }
}
