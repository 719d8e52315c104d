//! Python bindings: build benchmark problems, evaluate costs, run the solver
//! and the verification checks.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use trajopt::cli::config::RunConfig;
use trajopt::cli::verify::{run_verify, Group, VerifyOptions};
use trajopt::core::{TrajectoryProblem, Vector};
use trajopt::envs::integrators::Discretizer;
use trajopt::envs::{build_problem, EnvKind};
use trajopt::linesearch::{solve, stationarity_residual, LineSearchConfig, Rule, StopCriteria};
use trajopt::oracles::{self, OracleKind};
use trajopt::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Parameter(_) | Error::Shape { .. } | Error::Track(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_controls(rows: Vec<Vec<f64>>) -> Vec<Vector> {
    rows.into_iter().map(Vector::from_vec).collect()
}

fn from_controls(u: &[Vector]) -> Vec<Vec<f64>> {
    u.iter().map(|v| v.iter().copied().collect()).collect()
}

/// A benchmark problem: `Problem("pendulum", horizon=50)`.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: TrajectoryProblem,
    env: EnvKind,
    discretizer: Discretizer,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (env, horizon = 50, discretizer = None))]
    fn new(env: &str, horizon: usize, discretizer: Option<&str>) -> PyResult<Self> {
        let env: EnvKind = env.parse().map_err(to_py)?;
        let discretizer = match discretizer {
            Some(d) => d.parse().map_err(to_py)?,
            None => env.default_discretizer(),
        };
        let inner = build_problem(env, horizon, discretizer).map_err(to_py)?;
        Ok(Self { inner, env, discretizer })
    }

    #[getter]
    fn env(&self) -> &'static str {
        self.env.name()
    }

    #[getter]
    fn discretizer(&self) -> &'static str {
        self.discretizer.name()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    #[getter]
    fn ctrl_dim(&self) -> usize {
        self.inner.ctrl_dim()
    }

    fn zero_controls(&self) -> Vec<Vec<f64>> {
        from_controls(&self.inner.zero_controls())
    }

    /// Total cost of a control sequence (one row per time step).
    fn cost(&self, controls: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner.cost(&to_controls(controls)).map_err(to_py)
    }

    /// States `x_0..x_T` reached under `controls`.
    fn rollout(&self, controls: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let xs = self.inner.rollout_states(&to_controls(controls)).map_err(to_py)?;
        Ok(from_controls(&xs))
    }

    /// Gradient of the total cost with respect to the controls.
    fn gradient(&self, controls: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let u = to_controls(controls);
        let bundle = oracles::forward(&self.inner, &u, 1, 1).map_err(to_py)?;
        Ok(from_controls(&bundle.gradient().map_err(to_py)?))
    }

    /// Largest control-gradient entry of the Hamiltonian along the trajectory.
    fn residual(&self, controls: Vec<Vec<f64>>) -> PyResult<f64> {
        stationarity_residual(&self.inner, &to_controls(controls)).map_err(to_py)
    }

    /// Runs the solver from `controls` (zero controls by default).
    #[pyo3(signature = (algo = "gn", linesearch = "directional", max_iters = 100, controls = None))]
    fn solve(
        &self,
        py: Python<'_>,
        algo: &str,
        linesearch: &str,
        max_iters: usize,
        controls: Option<Vec<Vec<f64>>>,
    ) -> PyResult<SolveResult> {
        let kind: OracleKind = algo.parse().map_err(to_py)?;
        let rule: Rule = linesearch.parse().map_err(to_py)?;
        let u0 = controls.map_or_else(|| self.inner.zero_controls(), to_controls);
        let stop = StopCriteria {
            max_iters,
            ..StopCriteria::default()
        };
        let cfg = LineSearchConfig::with_rule(rule);
        let result = py.detach(|| solve(&self.inner, &u0, kind, &cfg, &stop));
        Ok(match result {
            Ok(sol) => SolveResult {
                status: sol.trace.status.to_string(),
                costs: sol.trace.costs(),
                residual: sol.trace.final_residual(),
                iterations: sol.trace.iterations.len(),
                controls: from_controls(&sol.controls),
                error: None,
            },
            Err(fail) => SolveResult {
                status: fail.trace.status.to_string(),
                costs: fail.trace.costs(),
                residual: fail.trace.final_residual(),
                iterations: fail.trace.iterations.len(),
                controls: Vec::new(),
                error: Some(fail.error.to_string()),
            },
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(env='{}', horizon={}, discretizer='{}')",
            self.env,
            self.inner.horizon(),
            self.discretizer
        )
    }
}

/// Outcome of [`PyProblem::solve`].
#[pyclass(get_all, frozen)]
struct SolveResult {
    status: String,
    /// Cost before the first iteration and after each accepted one.
    costs: Vec<f64>,
    residual: f64,
    iterations: usize,
    /// Final controls; empty when the run diverged.
    controls: Vec<Vec<f64>>,
    error: Option<String>,
}

#[pymethods]
impl SolveResult {
    #[getter]
    fn final_cost(&self) -> f64 {
        self.costs.last().copied().unwrap_or(f64::NAN)
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status='{}', iterations={}, final_cost={:e})",
            self.status,
            self.iterations,
            self.final_cost()
        )
    }
}

/// Run configuration in `key=value` form, as read by the command-line tool.
#[pyclass(name = "RunConfig")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::parse(text).map_err(to_py)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(to_py)
    }

    fn serialize(&self) -> String {
        self.inner.serialize()
    }

    #[getter]
    fn env(&self) -> &'static str {
        self.inner.env.name()
    }

    #[getter]
    fn algo(&self) -> &'static str {
        self.inner.algo.name()
    }

    #[getter]
    fn linesearch(&self) -> &'static str {
        self.inner.linesearch.name()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    /// Builds the configured problem.
    fn problem(&self) -> PyResult<PyProblem> {
        let discretizer = self.inner.discretizer();
        let inner = build_problem(self.inner.env, self.inner.horizon, discretizer).map_err(to_py)?;
        Ok(PyProblem {
            inner,
            env: self.inner.env,
            discretizer,
        })
    }
}

/// Runs the verification checks; returns `(name, passed, observed, threshold)` tuples.
#[pyfunction]
#[pyo3(signature = (only = None, scale = 5))]
fn verify(py: Python<'_>, only: Option<Vec<String>>, scale: usize) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let only = only
        .unwrap_or_default()
        .iter()
        .map(|s| s.parse::<Group>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let opts = VerifyOptions {
        scale: scale.max(1),
        only,
        ..VerifyOptions::default()
    };
    let checks = py.detach(|| run_verify(&opts));
    Ok(checks
        .into_iter()
        .map(|c| {
            let passed = c.passed();
            (format!("{}/{}", c.group, c.name), passed, c.observed, c.threshold)
        })
        .collect())
}

#[pymodule]
fn trajopt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<SolveResult>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("ENVS", EnvKind::ALL.iter().map(|e| e.name()).collect::<Vec<_>>())?;
    m.add("ALGOS", OracleKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    Ok(())
}
