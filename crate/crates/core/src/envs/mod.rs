//! Benchmark systems, discretizers and the track geometry used by the car costs.

pub mod cars;
pub mod cartpole;
pub mod integrators;
pub mod pendulum;
pub mod random;
pub mod track;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::autodiff::Differentiable;
use crate::core::{TrajectoryProblem, Vector};
use crate::error::{Error, Result};

use cars::{Bicycle, BicycleParams, BicycleStep, ContouringCost, SimpleCar, SimpleCarParams};
use cars::{SquashedSimpleCar, TrackingCost};
use cartpole::{hold_step, CartPole, CartPoleCost, CartPoleParams};
use integrators::{Discretized, Discretizer};
use pendulum::{Pendulum, PendulumFinalCost, PendulumParams, PendulumRunningCost};
use track::Track;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Pendulum,
    CartPole,
    SimpleCar,
    BicycleCar,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [
        EnvKind::Pendulum,
        EnvKind::CartPole,
        EnvKind::SimpleCar,
        EnvKind::BicycleCar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::CartPole => "cartpole",
            EnvKind::SimpleCar => "simple-car",
            EnvKind::BicycleCar => "bicycle-car",
        }
    }

    /// Scheme used by the benchmarks: Euler except for the bicycle, which uses RK4.
    pub fn default_discretizer(self) -> Discretizer {
        match self {
            EnvKind::BicycleCar => Discretizer::Rk4,
            _ => Discretizer::Euler,
        }
    }

    /// Total duration of the movement.
    pub fn duration(self) -> f64 {
        match self {
            EnvKind::Pendulum => PendulumParams::default().duration,
            EnvKind::CartPole => CartPoleParams::default().duration,
            EnvKind::SimpleCar => SimpleCarParams::default().duration,
            EnvKind::BicycleCar => BicycleParams::default().duration,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config {
                field: "env".into(),
                msg: format!("unknown env `{s}` (expected pendulum, cartpole, simple-car or bicycle-car)"),
            })
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Config {
            field: "horizon".into(),
            msg: "horizon must be at least 1".into(),
        });
    }
    Ok(())
}

/// Builds an environment on the bundled simple track (cars only), with step
/// `Δ = duration / horizon`.
pub fn build_problem(env: EnvKind, horizon: usize, scheme: Discretizer) -> Result<TrajectoryProblem> {
    build_problem_on(env, horizon, scheme, Arc::new(Track::bundled("simple")?))
}

/// [`build_problem`] with a chosen track for the car environments.
pub fn build_problem_on(
    env: EnvKind,
    horizon: usize,
    scheme: Discretizer,
    track: Arc<Track>,
) -> Result<TrajectoryProblem> {
    check_horizon(horizon)?;
    let dt = env.duration() / horizon as f64;
    match env {
        EnvKind::Pendulum => pendulum_problem(PendulumParams::default(), horizon, scheme),
        EnvKind::CartPole => cartpole_problem(CartPoleParams::default(), horizon, scheme),
        EnvKind::SimpleCar => {
            simple_car_problem(SimpleCarParams::default(), horizon, scheme, track)
        }
        EnvKind::BicycleCar => {
            let step = BicycleStep::new(Bicycle(BicycleParams::default()), scheme, dt)?;
            bicycle_problem(BicycleParams::default(), horizon, step, track)
        }
    }
}

pub fn pendulum_problem(
    params: PendulumParams,
    horizon: usize,
    scheme: Discretizer,
) -> Result<TrajectoryProblem> {
    check_horizon(horizon)?;
    let dt = params.duration / horizon as f64;
    let f = Discretized::new(Pendulum(params.clone()), scheme, dt)?;
    let nu = f.ctrl_dim();
    let running = PendulumRunningCost { nx: 2, nu, weight: params.ctrl_weight };
    let terminal = PendulumFinalCost { speed_weight: params.speed_weight };
    TrajectoryProblem::stationary(
        Vector::zeros(2),
        nu,
        horizon,
        Arc::new(f),
        Arc::new(running),
        Arc::new(terminal),
    )
}

pub fn cartpole_problem(
    params: CartPoleParams,
    horizon: usize,
    scheme: Discretizer,
) -> Result<TrajectoryProblem> {
    check_horizon(horizon)?;
    if !(params.inertia > 0.0) {
        return Err(Error::Parameter("cart-pole inertia must be positive".into()));
    }
    let dt = params.duration / horizon as f64;
    let f: Arc<dyn Differentiable> = Arc::new(Discretized::new(CartPole(params.clone()), scheme, dt)?);
    let nu = scheme.samples();
    let hold = hold_step(horizon, dt, params.hold_time);
    let early: Arc<dyn Differentiable> = Arc::new(CartPoleCost {
        params: params.clone(),
        nu,
        hold: false,
        terminal: false,
    });
    let late: Arc<dyn Differentiable> = Arc::new(CartPoleCost {
        params: params.clone(),
        nu,
        hold: true,
        terminal: false,
    });
    let costs = (0..horizon)
        .map(|t| if t >= hold { late.clone() } else { early.clone() })
        .collect();
    let terminal = Arc::new(CartPoleCost { params, nu, hold: true, terminal: true });
    TrajectoryProblem::new(Vector::zeros(4), nu, vec![f; horizon], costs, terminal)
}

pub fn simple_car_problem(
    params: SimpleCarParams,
    horizon: usize,
    scheme: Discretizer,
    track: Arc<Track>,
) -> Result<TrajectoryProblem> {
    check_horizon(horizon)?;
    if !(params.length > 0.0) {
        return Err(Error::Parameter("car length must be positive".into()));
    }
    let dt = params.duration / horizon as f64;
    let f = Discretized::new(SquashedSimpleCar(SimpleCar(params.clone())), scheme, dt)?;
    let nu = f.ctrl_dim();
    let start = track.eval(0.0)?;
    let x0 = Vector::from_vec(vec![start.x, start.y, start.theta, params.init_speed]);
    let cost = |t: usize, terminal: bool| -> Arc<dyn Differentiable> {
        Arc::new(TrackingCost {
            track: track.clone(),
            s_ref: dt * params.ref_speed * t as f64,
            nx: 4,
            nu,
            ctrl_weight: params.ctrl_weight,
            track_state: t > 0,
            terminal,
        })
    };
    let costs = (0..horizon).map(|t| cost(t, false)).collect();
    let terminal = cost(horizon, true);
    TrajectoryProblem::new(x0, nu, vec![Arc::new(f) as Arc<dyn Differentiable>; horizon], costs, terminal)
}

pub fn bicycle_problem(
    params: BicycleParams,
    horizon: usize,
    step: BicycleStep,
    track: Arc<Track>,
) -> Result<TrajectoryProblem> {
    check_horizon(horizon)?;
    params.validate()?;
    let start = track.eval(0.0)?;
    let x0 = Vector::from_vec(vec![
        start.x,
        start.y,
        start.theta,
        params.init_speed,
        0.0,
        0.0,
        0.0,
        params.ref_speed,
    ]);
    let running = Arc::new(ContouringCost {
        params: params.clone(),
        track: track.clone(),
        terminal: false,
    });
    let terminal = Arc::new(ContouringCost { params, track, terminal: true });
    TrajectoryProblem::stationary(x0, 3, horizon, Arc::new(step), running, terminal)
}
