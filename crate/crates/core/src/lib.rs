//! Discrete-time nonlinear optimal control with iterative linear-quadratic
//! oracles.
//!
//! A [`core::TrajectoryProblem`] describes `min_u sum_t h_t(x_t, u_t) + h_T(x_T)`
//! subject to `x_{t+1} = f_t(x_t, u_t)`. The [`oracles`] module computes search
//! directions (gradient, Gauss-Newton, Newton, DDP with linear-quadratic or
//! quadratic models) by dynamic programming, [`linesearch`] turns them into a
//! full solver, and [`envs`] ships the pendulum, cart-pole and car models.

pub mod autodiff;
pub mod cli;
pub mod core;
pub mod envs;
pub mod error;
pub mod linesearch;
pub mod lqsolve;
pub mod oracles;

pub use crate::error::{Error, Result};
