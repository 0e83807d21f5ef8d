//! Ground-truth solvers used to check the distributed iterations.
//!
//! Everything here works on the assembled global matrices, not on the
//! per-agent message flow, so it can serve as an independent reference.

use nalgebra::{DMatrix, DVector};

use crate::agents::sync_iteration;
use crate::constants::{constants_for, PhiDenominator};
use crate::error::{Error, Result};
use crate::problem::{dual_value, primal_response, project_onto_cone, DualPoint, Problem};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Kkt,
    LongRun,
}

impl SolveMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Kkt => "kkt",
            Self::LongRun => "long-run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// `‖max(0, ineq)‖ + ‖eq residual‖` at `x*`.
    pub primal: f64,
    /// `‖Hx + q + Gᵀy‖`; only meaningful without boxes.
    pub stationarity: f64,
    /// `‖proj_Ω(y + γ∇q(y)) − y‖ / γ` for the long-run method, zero for KKT.
    pub projected_gradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Vec<DVector<f64>>,
    /// One dual solution; the dual solution set need not be a singleton.
    pub y_star: DualPoint,
    pub f_star: f64,
    pub method: SolveMethod,
    pub residuals: Residuals,
    pub iterations: u64,
    /// Largest `‖y‖` seen along the iteration.
    pub max_dual_norm: f64,
}

fn split(problem: &Problem, v: &DVector<f64>) -> Vec<DVector<f64>> {
    let off = problem.primal_offsets();
    (0..problem.agent_count())
        .map(|i| v.rows(off[i], problem.n(i)).into_owned())
        .collect()
}

fn stationarity(problem: &Problem, x: &[DVector<f64>], y: &DualPoint) -> f64 {
    let (h, q) = problem.global_quadratic();
    let (g, _) = problem.global_coupling();
    let xs = crate::linalg::stack(x);
    (h * xs + q + g.transpose() * y.stacked()).norm()
}

/// Direct solve of the equality-constrained optimality system
/// `[H Aᵀ; A 0]·[x; ν] = [−q; b]`.
pub fn kkt_solve(problem: &Problem) -> Result<ReferenceSolution> {
    if problem.has_inequalities() || problem.has_boxes() {
        return Err(Error::Unsupported("the direct solve needs equality couplings only and no boxes".into()));
    }
    let (h, q) = problem.global_quadratic();
    let (a, b) = problem.global_equality();
    let (n, r) = (h.nrows(), a.nrows());
    let mut k = DMatrix::zeros(n + r, n + r);
    k.view_mut((0, 0), (n, n)).copy_from(&h);
    k.view_mut((n, 0), (r, n)).copy_from(&a);
    k.view_mut((0, n), (n, r)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(n + r);
    rhs.rows_mut(0, n).copy_from(&(-&q));
    rhs.rows_mut(n, r).copy_from(&b);
    let sol = k
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("optimality system is singular; check the rank of A".into()))?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem("optimality system produced non-finite values".into()));
    }
    let x_star = split(problem, &sol.rows(0, n).into_owned());
    let y_star = DualPoint::from_stacked(problem, &sol.rows(n, r).into_owned())?;
    let residuals = Residuals {
        primal: problem.feasibility_residual(&x_star),
        stationarity: stationarity(problem, &x_star, &y_star),
        projected_gradient: 0.0,
    };
    Ok(ReferenceSolution {
        f_star: problem.objective(&x_star),
        max_dual_norm: y_star.stacked().norm(),
        x_star,
        y_star,
        method: SolveMethod::Kkt,
        residuals,
        iterations: 0,
    })
}

/// Step used by the long-run solver: `0.99 / max_i φ_i`, taking the larger of
/// the two φ variants so the step is safe under either reading.
pub fn reference_step(problem: &Problem) -> Result<f64> {
    let mut phi_max = 0.0f64;
    for den in [PhiDenominator::Owner, PhiDenominator::Neighbor] {
        for a in constants_for(problem, den)?.agents {
            phi_max = phi_max.max(a.phi);
        }
    }
    Ok(if phi_max > 0.0 { 0.99 / phi_max } else { 1.0 })
}

/// Long-run synchronous dual ascent until the projected-gradient residual
/// drops to `tol`.
pub fn reference_solve(
    problem: &Problem,
    tol: f64,
    max_iters: u64,
    warm_start: Option<&DualPoint>,
) -> Result<ReferenceSolution> {
    let gamma = reference_step(problem)?;
    let mut y = match warm_start {
        Some(y0) => {
            if !y0.is_in_omega(problem) {
                return Err(Error::InvalidParameter("warm start lies outside the dual cone".into()));
            }
            y0.clone()
        }
        None => DualPoint::zeros(problem),
    };
    let mut max_dual_norm = y.stacked().norm();
    let mut best = f64::INFINITY;
    let mut iterations = 0;
    loop {
        let (_, y_next) = sync_iteration(problem, gamma, &y)?;
        let res = (y_next.stacked() - y.stacked()).norm() / gamma;
        best = best.min(res);
        if !res.is_finite() {
            return Err(Error::NotConverged { iterations, residual: best });
        }
        if res <= tol {
            let x_star = primal_response(problem, &y)?;
            let residuals = Residuals {
                primal: problem.feasibility_residual(&x_star),
                stationarity: stationarity(problem, &x_star, &y),
                projected_gradient: res,
            };
            return Ok(ReferenceSolution {
                f_star: problem.objective(&x_star),
                x_star,
                y_star: y,
                method: SolveMethod::LongRun,
                residuals,
                iterations,
                max_dual_norm,
            });
        }
        if iterations >= max_iters {
            return Err(Error::NotConverged { iterations, residual: best });
        }
        y = y_next;
        max_dual_norm = max_dual_norm.max(y.stacked().norm());
        iterations += 1;
    }
}

/// Direct solve when applicable, long-run iteration otherwise.
pub fn solve_reference(problem: &Problem) -> Result<ReferenceSolution> {
    if problem.has_inequalities() || problem.has_boxes() {
        reference_solve(problem, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS, None)
    } else {
        kkt_solve(problem)
    }
}

/// Central differences of `q` at `y` with step `h`, coordinate by coordinate.
pub fn finite_diff_gradient(problem: &Problem, y: &DualPoint, h: f64) -> Result<DVector<f64>> {
    let base = y.stacked();
    let mut grad = DVector::zeros(base.len());
    for t in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[t] += h;
        minus[t] -= h;
        let qp = dual_value(problem, &DualPoint::from_stacked(problem, &plus)?)?;
        let qm = dual_value(problem, &DualPoint::from_stacked(problem, &minus)?)?;
        grad[t] = (qp - qm) / (2.0 * h);
    }
    Ok(grad)
}

/// `x*(y)` from the global quadratic: boxed coordinates (whose Hessians are
/// diagonal) are clamped elementwise, the remaining coordinates come from one
/// Cholesky solve of their principal block.
pub fn centralized_primal(problem: &Problem, y: &DualPoint) -> Result<DVector<f64>> {
    let (h, q) = problem.global_quadratic();
    let (g, _) = problem.global_coupling();
    let lin = q + g.transpose() * y.stacked();
    let off = problem.primal_offsets();
    let mut x = DVector::zeros(lin.len());
    let mut free = Vec::new();
    for i in 0..problem.agent_count() {
        match problem.cost(i).bounds() {
            Some(b) => {
                for t in 0..problem.n(i) {
                    let at = off[i] + t;
                    x[at] = (-lin[at] / h[(at, at)]).clamp(b.lower[t], b.upper[t]);
                }
            }
            None => free.extend(off[i]..off[i] + problem.n(i)),
        }
    }
    if free.is_empty() {
        return Ok(x);
    }
    let h_ff = h.select_rows(&free).select_columns(&free);
    // couplings to boxed coordinates vanish for separable costs; kept for generality
    let rhs = DVector::from_iterator(free.len(), free.iter().map(|&a| -lin[a] - h.row(a).dot(&x.transpose())));
    let chol = h_ff
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { agent: None, rho: f64::NAN })?;
    let sol = chol.solve(&rhs);
    for (k, &a) in free.iter().enumerate() {
        x[a] = sol[k];
    }
    Ok(x)
}

/// One centralized projected dual ascent step
/// `y⁺ = proj_Ω(y + γ(G x*(y) + h))`, with `x*(y)` alongside.
pub fn centralized_step(problem: &Problem, gamma: f64, y: &DualPoint) -> Result<(DVector<f64>, DualPoint)> {
    let (g, h) = problem.global_coupling();
    let x = centralized_primal(problem, y)?;
    let raw = y.stacked() + (g * &x + h) * gamma;
    let doff = problem.dual_offsets();
    let blocks = (0..problem.agent_count())
        .map(|i| project_onto_cone(problem.p(i), &raw.rows(doff[i], problem.m(i)).into_owned()))
        .collect();
    Ok((x, DualPoint { blocks }))
}
