//! Exact dynamic programming for linear dynamics with quadratic (or linear
//! regularized) costs.

use nalgebra::linalg::{Cholesky, SymmetricEigen};

use crate::core::{
    symmetrize, AffinePolicy, Controls, LinearMap, Matrix, QuadraticCostModel,
    QuadraticValueFunction, TrajectoryProblem, Vector,
};
use crate::error::{Error, Result};

/// One Bellman step: minimize `q(y, v) + c_next(A y + B v)` over `v`.
#[derive(Debug, Clone)]
pub struct LqStageProblem {
    pub lin: LinearMap,
    pub cost: QuadraticCostModel,
    pub next: QuadraticValueFunction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckMode {
    /// Valid iff the control Hessian `M` of the stage is positive definite.
    StrongConvexity,
    /// Valid iff the stage strictly decreases the constant term of the cost-to-go.
    #[default]
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    pub valid: bool,
    pub mode: CheckMode,
    /// Minimum eigenvalue of `M` (strong convexity) or `j0_t - j0_{t+1}` (descent).
    pub witness: f64,
}

/// Terms shared by the check and the solve:
/// `M = Q + BᵀJB`, `m = q + Bᵀj`, `G = Rᵀ + BᵀJA`.
struct StageTerms {
    m_mat: Matrix,
    m_vec: Vector,
    g: Matrix,
}

fn stage_terms(stage: &LqStageProblem) -> Result<StageTerms> {
    let LqStageProblem { lin, cost, next } = stage;
    let nx = lin.a.nrows();
    let nu = lin.b.ncols();
    if cost.state_dim() != nx || cost.ctrl_dim() != nu {
        return Err(Error::Shape {
            what: "stage cost model",
            expected: nx + nu,
            got: cost.state_dim() + cost.ctrl_dim(),
        });
    }
    if next.jv.len() != nx {
        return Err(Error::Shape {
            what: "next value function",
            expected: nx,
            got: next.jv.len(),
        });
    }
    let bt_j = lin.b.transpose() * &next.jm;
    Ok(StageTerms {
        m_mat: symmetrize(&(&cost.uu + &bt_j * &lin.b)),
        m_vec: &cost.u + lin.b.transpose() * &next.jv,
        g: cost.xu.transpose() + &bt_j * &lin.a,
    })
}

fn descent_threshold(next_j0: f64) -> f64 {
    -1e-14 * (1.0 + next_j0.abs())
}

pub fn check_subproblem(stage: &LqStageProblem, mode: CheckMode) -> Result<ValidityReport> {
    let terms = stage_terms(stage)?;
    Ok(check_terms(&terms, stage.next.j0, mode).0)
}

fn check_terms(
    terms: &StageTerms,
    next_j0: f64,
    mode: CheckMode,
) -> (ValidityReport, Option<Cholesky<f64, nalgebra::Dyn>>) {
    let chol = Cholesky::new(terms.m_mat.clone());
    let report = match mode {
        CheckMode::StrongConvexity => {
            let witness = if terms.m_mat.nrows() == 0 {
                f64::INFINITY
            } else {
                SymmetricEigen::new(terms.m_mat.clone()).eigenvalues.min()
            };
            ValidityReport {
                valid: witness > 0.0 && chol.is_some(),
                mode,
                witness,
            }
        }
        CheckMode::Descent => match &chol {
            Some(c) => {
                let witness = -0.5 * terms.m_vec.dot(&c.solve(&terms.m_vec));
                ValidityReport {
                    valid: witness < descent_threshold(next_j0),
                    mode,
                    witness,
                }
            }
            None => ValidityReport {
                valid: false,
                mode,
                witness: f64::INFINITY,
            },
        },
    };
    (report, chol)
}

fn solve_with(
    stage: &LqStageProblem,
    terms: &StageTerms,
    chol: &Cholesky<f64, nalgebra::Dyn>,
) -> (QuadraticValueFunction, AffinePolicy) {
    let LqStageProblem { lin, cost, next } = stage;
    let gain = -chol.solve(&terms.g);
    let offset = -chol.solve(&terms.m_vec);
    let at_j = lin.a.transpose() * &next.jm;
    let jm = symmetrize(&(&cost.xx + &at_j * &lin.a + terms.g.transpose() * &gain));
    let jv = &cost.x + lin.a.transpose() * &next.jv + terms.g.transpose() * &offset;
    let j0 = next.j0 + 0.5 * terms.m_vec.dot(&offset);
    (
        QuadraticValueFunction { jm, jv, j0 },
        AffinePolicy { gain, offset },
    )
}

/// Closed-form Bellman step. Fails when `M` is not numerically positive definite.
pub fn lqbp(stage: &LqStageProblem) -> Result<(QuadraticValueFunction, AffinePolicy)> {
    let terms = stage_terms(stage)?;
    let chol = Cholesky::new(terms.m_mat.clone()).ok_or(Error::InfeasibleStage { t: None })?;
    Ok(solve_with(stage, &terms, &chol))
}

/// Check and, when valid, solve one stage with a single factorization.
pub fn lqbp_checked(
    stage: &LqStageProblem,
    mode: CheckMode,
) -> Result<(ValidityReport, Option<(QuadraticValueFunction, AffinePolicy)>)> {
    let terms = stage_terms(stage)?;
    let (report, chol) = check_terms(&terms, stage.next.j0, mode);
    match (report.valid, chol) {
        (true, Some(c)) => Ok((report, Some(solve_with(stage, &terms, &c)))),
        _ => Ok((report, None)),
    }
}

/// Stage step used inside [`backward_sweep`]. In descent mode a stage whose
/// linear term vanishes has a zero decrement and fails the strict check even
/// though its subproblem is well posed, so the sweep only requires `M` to
/// factor; the sum of the decrements (`c_0(0)`) is then checked by the caller.
fn sweep_stage(
    stage: &LqStageProblem,
    mode: CheckMode,
) -> Result<(ValidityReport, Option<(QuadraticValueFunction, AffinePolicy)>)> {
    let terms = stage_terms(stage)?;
    let (report, chol) = check_terms(&terms, stage.next.j0, mode);
    let usable = report.valid || mode == CheckMode::Descent;
    match (usable, chol) {
        (true, Some(c)) => Ok((report, Some(solve_with(stage, &terms, &c)))),
        _ => Ok((report, None)),
    }
}

/// Affine cost-to-go `jᵀy + j0` produced by [`lbp`].
#[derive(Debug, Clone, PartialEq)]
pub struct AffineValue {
    pub jv: Vector,
    pub j0: f64,
}

/// Bellman step for linear dynamics, linear costs `pᵀy + qᵀv` and the
/// regularization `(ν/2)‖v‖²`. The policy is constant: `K = 0`.
pub fn lbp(
    lin: &LinearMap,
    p: &Vector,
    q: &Vector,
    next: &AffineValue,
    nu: f64,
) -> Result<(AffineValue, AffinePolicy)> {
    if !(nu > 0.0) {
        return Err(Error::Parameter(format!("regularization must be positive, got {nu}")));
    }
    let m = q + lin.b.transpose() * &next.jv;
    let value = AffineValue {
        jv: p + lin.a.transpose() * &next.jv,
        j0: next.j0 - m.norm_squared() / (2.0 * nu),
    };
    let policy = AffinePolicy {
        gain: Matrix::zeros(lin.b.ncols(), lin.a.nrows()),
        offset: -m / nu,
    };
    Ok((value, policy))
}

/// Result of a backward sweep over all stages.
#[derive(Debug, Clone)]
pub struct Sweep {
    /// `c_0..c_T`.
    pub values: Vec<QuadraticValueFunction>,
    pub policies: Vec<AffinePolicy>,
    /// First stage (from the end) whose check failed.
    pub failed_at: Option<usize>,
}

/// Runs the checked Bellman step from `t = T-1` down to `0`. The stage cost at `t` is
/// produced by `stage_cost(t, &c_{t+1})`, so curvature terms may depend on the
/// running cost-to-go. On a failed check all policies are zero.
pub fn backward_sweep<F>(
    lins: &[LinearMap],
    terminal: QuadraticValueFunction,
    mode: CheckMode,
    mut stage_cost: F,
) -> Result<Sweep>
where
    F: FnMut(usize, &QuadraticValueFunction) -> Result<QuadraticCostModel>,
{
    let tau = lins.len();
    let mut values = vec![QuadraticValueFunction::zeros(0); tau + 1];
    let mut policies = Vec::with_capacity(tau);
    values[tau] = terminal;
    for t in (0..tau).rev() {
        let stage = LqStageProblem {
            lin: lins[t].clone(),
            cost: stage_cost(t, &values[t + 1])?,
            next: values[t + 1].clone(),
        };
        let (report, solved) = sweep_stage(&stage, mode)?;
        match solved {
            Some((value, policy)) => {
                values[t] = value;
                policies.push(policy);
            }
            None => {
                log::debug!(
                    "stage {t} rejected ({:?} witness {:e})",
                    report.mode,
                    report.witness
                );
                let nu = lins[t].b.ncols();
                let nx = lins[t].a.nrows();
                return Ok(Sweep {
                    values,
                    policies: vec![AffinePolicy::zeros(nu, nx); tau],
                    failed_at: Some(t),
                });
            }
        }
    }
    policies.reverse();
    Ok(Sweep {
        values,
        policies,
        failed_at: None,
    })
}

/// Globally optimal controls of a problem with linear dynamics and costs that
/// are convex quadratic and strongly convex in the controls.
///
/// The problem is expanded once around the zero-control trajectory; since the
/// expansions are exact, the optimal increments are the optimal controls.
pub fn dynprog(problem: &TrajectoryProblem) -> Result<Controls> {
    let u0 = problem.zero_controls();
    let bundle = crate::oracles::forward(problem, &u0, 1, 2)?;
    let lins = bundle.lin_maps()?;
    let quads = bundle.quad_costs()?;
    let sweep = backward_sweep(
        lins,
        bundle.terminal_value()?,
        CheckMode::StrongConvexity,
        |t, _| Ok(quads[t].clone()),
    )?;
    if let Some(t) = sweep.failed_at {
        return Err(Error::InfeasibleStage { t: Some(t) });
    }
    crate::oracles::rollout(
        &Vector::zeros(problem.state_dim()),
        &sweep.policies,
        &crate::oracles::StepMaps::Linear(lins),
    )
}
