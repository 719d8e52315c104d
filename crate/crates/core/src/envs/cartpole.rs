//! Pendulum mounted on a cart, swung up while the cart stays within bounds.

use std::f64::consts::PI;

use crate::autodiff::{Scalar, VecFn, SMOOTH_MAX_SHARPNESS};
use crate::envs::integrators::ContinuousDynamics;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleParams {
    /// Pole mass.
    pub pole_mass: f64,
    pub cart_mass: f64,
    /// Cart friction coefficient.
    pub friction: f64,
    /// Pole inertia.
    pub inertia: f64,
    /// Distance to the pole's center of mass.
    pub length: f64,
    pub gravity: f64,
    /// Weight of the squared angular speed once the pole must stay up.
    pub speed_weight: f64,
    /// Weight of the cart position barrier.
    pub barrier_weight: f64,
    /// Weight of the squared control.
    pub ctrl_weight: f64,
    pub duration: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    /// Final time window over which the pole must stay up.
    pub hold_time: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            pole_mass: 0.2,
            cart_mass: 0.5,
            friction: 0.1,
            inertia: 0.006,
            length: 0.3,
            gravity: 10.0,
            speed_weight: 0.1,
            barrier_weight: 1.0,
            ctrl_weight: 1e-6,
            duration: 2.5,
            upper_bound: 2.0,
            lower_bound: -2.0,
            hold_time: 0.6,
        }
    }
}

/// State `(z, θ, ζ, ω)`: cart position, pole angle, cart speed, pole angular speed.
#[derive(Debug, Clone)]
pub struct CartPole(pub CartPoleParams);

impl ContinuousDynamics for CartPole {
    fn state_dim(&self) -> usize {
        4
    }
    fn ctrl_dim(&self) -> usize {
        1
    }
    fn deriv<S: Scalar>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<()> {
        let p = &self.0;
        let ml = p.pole_mass * p.length;
        let (s, c) = (x[1].sin(), x[1].cos());
        // [[M + m, ml cosθ], [ml cosθ, I + ml²]] [z̈, θ̈]ᵀ = rhs
        let m11 = p.cart_mass + p.pole_mass;
        let m12 = c * ml;
        let m22 = p.inertia + ml * p.length;
        let det = (m12 * m12 - m11 * m22) * -1.0;
        let r1 = x[2] * (-p.friction) + x[3].square() * s * ml + u[0];
        let r2 = s * (-ml * p.gravity);
        out[0] = x[2];
        out[1] = x[3];
        out[2] = (r1 * m22 - m12 * r2) / det;
        out[3] = (r2 * m11 - m12 * r1) / det;
        Ok(())
    }
}

/// Barrier on the cart position, control penalty, and (from the hold step on)
/// the upright target `θ = -π` with an angular speed penalty.
#[derive(Debug, Clone)]
pub struct CartPoleCost {
    pub params: CartPoleParams,
    pub nu: usize,
    pub hold: bool,
    pub terminal: bool,
}

impl VecFn for CartPoleCost {
    fn dims(&self) -> (usize, usize) {
        (if self.terminal { 4 } else { 4 + self.nu }, 1)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let p = &self.params;
        let s = SMOOTH_MAX_SHARPNESS;
        let upper = (z[0] - p.upper_bound).smooth_max(s);
        let lower = (S::cst(p.lower_bound) - z[0]).smooth_max(s);
        let mut cost = (upper + lower) * p.barrier_weight;
        if !self.terminal {
            for v in &z[4..] {
                cost += v.square() * p.ctrl_weight;
            }
        }
        if self.hold || self.terminal {
            cost += (z[1] + PI).square() + z[3].square() * p.speed_weight;
        }
        out[0] = cost;
        Ok(())
    }
}

/// First step at which the upright target is enforced: `τ - floor(hold / Δ)`.
pub fn hold_step(horizon: usize, dt: f64, hold_time: f64) -> usize {
    let window = (hold_time / dt + 1e-9).floor() as usize;
    horizon.saturating_sub(window)
}
