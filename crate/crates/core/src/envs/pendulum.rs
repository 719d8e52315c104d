//! Torque-controlled pendulum swing-up.

use std::f64::consts::PI;

use crate::autodiff::{Scalar, VecFn};
use crate::envs::integrators::ContinuousDynamics;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumParams {
    pub mass: f64,
    pub gravity: f64,
    pub length: f64,
    pub friction: f64,
    /// Weight of the squared control in every running cost.
    pub ctrl_weight: f64,
    /// Weight of the squared angular speed in the final cost.
    pub speed_weight: f64,
    pub duration: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: 10.0,
            length: 1.0,
            friction: 0.01,
            ctrl_weight: 1e-6,
            speed_weight: 0.1,
            duration: 2.0,
        }
    }
}

/// State `(θ, ω)`, control torque `u`.
#[derive(Debug, Clone)]
pub struct Pendulum(pub PendulumParams);

impl ContinuousDynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn ctrl_dim(&self) -> usize {
        1
    }
    fn deriv<S: Scalar>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<()> {
        let p = &self.0;
        let inertia = p.mass * p.length * p.length;
        out[0] = x[1];
        out[1] = x[0].sin() * (-p.gravity / p.length) - x[1] * (p.friction / inertia)
            + u[0] / inertia;
        Ok(())
    }
}

/// `λ‖u‖²` over all control entries of a step.
#[derive(Debug, Clone)]
pub struct PendulumRunningCost {
    pub nx: usize,
    pub nu: usize,
    pub weight: f64,
}

impl VecFn for PendulumRunningCost {
    fn dims(&self) -> (usize, usize) {
        (self.nx + self.nu, 1)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let mut acc = S::cst(0.0);
        for v in &z[self.nx..] {
            acc += v.square();
        }
        out[0] = acc * self.weight;
        Ok(())
    }
}

/// `(π - θ)² + ρ ω²`.
#[derive(Debug, Clone)]
pub struct PendulumFinalCost {
    pub speed_weight: f64,
}

impl VecFn for PendulumFinalCost {
    fn dims(&self) -> (usize, usize) {
        (2, 1)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        out[0] = (S::cst(PI) - z[0]).square() + z[1].square() * self.speed_weight;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: [f64; 2], u: f64) -> [f64; 2] {
        let mut out = [0.0; 2];
        Pendulum(PendulumParams::default()).deriv(&x, &[u], &mut out).unwrap();
        out
    }

    #[test]
    fn dynamics_examples() {
        assert_eq!(d([0.0, 0.0], 0.0), [0.0, 0.0]);
        assert_eq!(d([0.0, 0.0], 1.0), [0.0, 1.0]);
        let inverted = d([PI, 0.0], 0.0);
        assert_eq!(inverted[0], 0.0);
        assert!(inverted[1].abs() < 1e-14);
    }

    #[test]
    fn cost_examples() {
        let f = PendulumFinalCost { speed_weight: 1e-6 };
        let mut out = [0.0];
        f.call(&[PI, 0.0], &mut out).unwrap();
        assert_eq!(out[0], 0.0);
        f.call(&[0.0, 0.0], &mut out).unwrap();
        assert_eq!(out[0], PI * PI);
        let r = PendulumRunningCost { nx: 2, nu: 1, weight: 0.1 };
        r.call(&[0.3, -0.2, 2.0], &mut out).unwrap();
        assert!((out[0] - 0.4).abs() < 1e-15);
    }
}
