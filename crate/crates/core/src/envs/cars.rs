//! Car racing models: a kinematic car with a tracking cost and a bicycle model
//! with Pacejka tires and a contouring cost.

use std::sync::Arc;

use crate::autodiff::{Scalar, VecFn};
use crate::envs::integrators::{euler_step, rk4_step, ContinuousDynamics, Discretizer};
use crate::envs::track::Track;
use crate::error::{Error, Result};

/// Lower and upper bounds of the squashed acceleration.
pub const ACCEL_MIN: f64 = -0.1;
pub const ACCEL_MAX: f64 = 1.0;

/// Maps unconstrained controls to a steering angle in `(-π/3, π/3)`.
pub fn squash_steering<S: Scalar>(raw: S) -> S {
    raw.atan() * (2.0 / 3.0)
}

/// Maps an unconstrained control to an acceleration in `(ACCEL_MIN, ACCEL_MAX)`.
pub fn squash_accel<S: Scalar>(raw: S) -> S {
    let span = ACCEL_MAX - ACCEL_MIN;
    (raw * (4.0 / span)).sigmoid() * span + ACCEL_MIN
}

/// `(δ̃, ã) -> (δ, a)`.
pub fn squash_controls<S: Scalar>(steer: S, accel: S) -> (S, S) {
    (squash_steering(steer), squash_accel(accel))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleCarParams {
    /// Car length.
    pub length: f64,
    pub ref_speed: f64,
    pub init_speed: f64,
    pub ctrl_weight: f64,
    pub duration: f64,
}

impl Default for SimpleCarParams {
    fn default() -> Self {
        Self {
            length: 1.0,
            ref_speed: 3.0,
            init_speed: 1.0,
            ctrl_weight: 1e-6,
            duration: 2.0,
        }
    }
}

/// State `(x, y, θ, v)`, control `(a, δ)`.
#[derive(Debug, Clone)]
pub struct SimpleCar(pub SimpleCarParams);

impl ContinuousDynamics for SimpleCar {
    fn state_dim(&self) -> usize {
        4
    }
    fn ctrl_dim(&self) -> usize {
        2
    }
    fn deriv<S: Scalar>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<()> {
        let steer = u[1].value();
        if steer.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::Domain(format!("steering angle {steer} outside (-π/2, π/2)")));
        }
        let (theta, v) = (x[2], x[3]);
        out[0] = v * theta.cos();
        out[1] = v * theta.sin();
        out[2] = v * u[1].tan() / self.0.length;
        out[3] = u[0];
        Ok(())
    }
}

/// Kinematic car fed with a raw steering control squashed into `(-π/3, π/3)`,
/// so its steering precondition always holds. The acceleration is used as is.
#[derive(Debug, Clone)]
pub struct SquashedSimpleCar(pub SimpleCar);

impl ContinuousDynamics for SquashedSimpleCar {
    fn state_dim(&self) -> usize {
        4
    }
    fn ctrl_dim(&self) -> usize {
        2
    }
    fn deriv<S: Scalar>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<()> {
        self.0.deriv(x, &[u[0], squash_steering(u[1])], out)
    }
}

/// `‖(x, y) - track(Δ v_ref t)‖² + λ‖u‖²`; the final cost drops the control term.
#[derive(Debug, Clone)]
pub struct TrackingCost {
    pub track: Arc<Track>,
    /// Reference curve parameter for this step.
    pub s_ref: f64,
    pub nx: usize,
    pub nu: usize,
    pub ctrl_weight: f64,
    /// Step 0 has a fixed state, so only the control term is kept there.
    pub track_state: bool,
    pub terminal: bool,
}

impl VecFn for TrackingCost {
    fn dims(&self) -> (usize, usize) {
        (if self.terminal { self.nx } else { self.nx + self.nu }, 1)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let mut cost = S::cst(0.0);
        if self.track_state {
            let f = self.track.frame(S::cst(self.s_ref))?;
            cost += (z[0] - f.x).square() + (z[1] - f.y).square();
        }
        if !self.terminal {
            for v in &z[self.nx..] {
                cost += v.square() * self.ctrl_weight;
            }
        }
        out[0] = cost;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicycleParams {
    pub cm1: f64,
    pub cm2: f64,
    pub cr0: f64,
    pub crd: f64,
    pub br: f64,
    pub cr: f64,
    pub dr: f64,
    /// Distance from the center of gravity to the rear axle.
    pub lr: f64,
    pub bf: f64,
    pub cf: f64,
    pub df: f64,
    /// Distance from the center of gravity to the front axle.
    pub lf: f64,
    pub mass: f64,
    pub inertia: f64,
    pub contouring_weight: f64,
    pub lag_weight: f64,
    pub speed_weight: f64,
    pub border_weight: f64,
    pub ref_speed: f64,
    pub init_speed: f64,
    pub ctrl_weight: f64,
    /// Weight of the log barrier keeping the progress speed positive.
    pub barrier: f64,
    pub duration: f64,
    /// Car width used by the border cost.
    pub car_width: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self {
            cm1: 0.287,
            cm2: 0.0545,
            cr0: 0.0518,
            crd: 0.00035,
            br: 3.3852,
            cr: 1.2691,
            dr: 0.1737,
            lr: 0.033,
            bf: 2.579,
            cf: 1.2,
            df: 0.192,
            lf: 0.029,
            mass: 0.041,
            inertia: 27.8e-6,
            contouring_weight: 0.1,
            lag_weight: 10.0,
            speed_weight: 0.1,
            border_weight: 100.0,
            ref_speed: 3.0,
            init_speed: 1.0,
            ctrl_weight: 1e-6,
            barrier: 1e-6,
            duration: 1.0,
            car_width: 0.05,
        }
    }
}

impl BicycleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("lr", self.lr),
            ("lf", self.lf),
            ("br", self.br),
            ("cr", self.cr),
            ("dr", self.dr),
            ("bf", self.bf),
            ("cf", self.cf),
            ("df", self.df),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("bicycle {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Simplified Pacejka lateral force `D sin(C atan(B α))`.
pub fn pacejka<S: Scalar>(slip: S, b: f64, c: f64, d: f64) -> S {
    ((slip * b).atan() * c).sin() * d
}

/// Longitudinal rear force, front and rear lateral forces.
pub fn tire_forces<S: Scalar>(p: &BicycleParams, x: &[S], accel: S, steer: S) -> Result<(S, S, S)> {
    let (vx, vy, omega) = (x[3], x[4], x[5]);
    if !(vx.value() > 0.0) {
        return Err(Error::Domain(format!(
            "bicycle longitudinal speed must be positive, got {} at state {:?}",
            vx.value(),
            x.iter().map(|v| v.value()).collect::<Vec<_>>()
        )));
    }
    let rear_x = accel * (S::cst(p.cm1) - vx * p.cm2) - p.cr0 - vx.square() * p.crd;
    let slip_f = steer - (omega * p.lf + vy).atan2(vx)?;
    let slip_r = (omega * p.lr - vy).atan2(vx)?;
    let front_y = pacejka(slip_f, p.bf, p.cf, p.df);
    let rear_y = pacejka(slip_r, p.br, p.cr, p.dr);
    Ok((rear_x, front_y, rear_y))
}

/// State `(x, y, θ, v_x, v_y, ω)`, control `(a, δ)` before squashing.
#[derive(Debug, Clone)]
pub struct Bicycle(pub BicycleParams);

impl ContinuousDynamics for Bicycle {
    fn state_dim(&self) -> usize {
        6
    }
    fn ctrl_dim(&self) -> usize {
        2
    }
    fn deriv<S: Scalar>(&self, x: &[S], u: &[S], out: &mut [S]) -> Result<()> {
        let p = &self.0;
        let (accel, steer) = (u[0], u[1]);
        let (rear_x, front_y, rear_y) = tire_forces(p, x, accel, steer)?;
        let (theta, vx, vy, omega) = (x[2], x[3], x[4], x[5]);
        let (s, c) = (theta.sin(), theta.cos());
        let (sd, cd) = (steer.sin(), steer.cos());
        out[0] = vx * c - vy * s;
        out[1] = vx * s + vy * c;
        out[2] = omega;
        out[3] = (rear_x - front_y * sd) / p.mass + vy * omega;
        out[4] = (rear_y + front_y * cd) / p.mass - vx * omega;
        out[5] = (front_y * cd * p.lf - rear_y * p.lr) / p.inertia;
        Ok(())
    }
}

/// Discrete bicycle with progress states: state `(x, y, θ, v_x, v_y, ω, s, ν)`,
/// control `(ã, δ̃, α)`. The car moves by the chosen scheme with squashed
/// controls held over the step; `s` and `ν` follow `s + Δν`, `ν + Δα`.
#[derive(Debug, Clone)]
pub struct BicycleStep {
    pub model: Bicycle,
    pub scheme: Discretizer,
    pub dt: f64,
}

impl BicycleStep {
    pub fn new(model: Bicycle, scheme: Discretizer, dt: f64) -> Result<Self> {
        if scheme == Discretizer::Rk4Varying {
            return Err(Error::Config {
                field: "discretizer".into(),
                msg: "bicycle-car supports euler and rk4 only".into(),
            });
        }
        model.0.validate()?;
        Ok(Self { model, scheme, dt })
    }
}

impl VecFn for BicycleStep {
    fn dims(&self) -> (usize, usize) {
        (11, 8)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let (steer, accel) = squash_controls(z[9], z[8]);
        let ctrl = [accel, steer];
        let g = |x: &[S], u: &[S], d: &mut [S]| self.model.deriv(x, u, d);
        let car = match self.scheme {
            Discretizer::Euler => euler_step(g, &z[..6], &ctrl, self.dt)?,
            _ => rk4_step(g, &z[..6], &ctrl, self.dt)?,
        };
        out[..6].copy_from_slice(&car);
        out[6] = z[6] + z[7] * self.dt;
        out[7] = z[7] + z[10] * self.dt;
        Ok(())
    }
}

/// Contouring cost on the augmented bicycle state:
/// `ρ_c e_c² + ρ_l e_l² + ρ_v (ν - v_ref)² - ε ln ν + ρ_b e_b² + λ‖u‖²`.
/// The final cost keeps the state terms only.
#[derive(Debug, Clone)]
pub struct ContouringCost {
    pub params: BicycleParams,
    pub track: Arc<Track>,
    pub terminal: bool,
}

impl VecFn for ContouringCost {
    fn dims(&self) -> (usize, usize) {
        (if self.terminal { 8 } else { 11 }, 1)
    }
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()> {
        let p = &self.params;
        let (x, y, s, nu) = (z[0], z[1], z[6], z[7]);
        let (ec, el) = self.track.contouring_errors(x, y, s)?;
        let border = self.track.border_cost(x, y, s, p.car_width)?;
        let mut cost = ec.square() * p.contouring_weight
            + el.square() * p.lag_weight
            + (nu - p.ref_speed).square() * p.speed_weight
            - nu.ln()? * p.barrier
            + border.square() * p.border_weight;
        if !self.terminal {
            for v in &z[8..] {
                cost += v.square() * p.ctrl_weight;
            }
        }
        out[0] = cost;
        Ok(())
    }
}
