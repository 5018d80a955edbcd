//! Estimating equations for the finite-dimensional parameters.
//!
//! Both submodels have a partial-likelihood form: the score is the gradient
//! of `sum_e [log rho(N_e) + X_e b - log S(point_e)]` over observed events.
//! Roots are found by damped Newton on the analytic score with a
//! central-difference Jacobian; coordinate-wise bracketing is the fallback.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::riskset::{dot, floored, Prepared, RcrRiskSet, TeRiskSet};
use crate::error::{Error, Result};
use crate::event_model::{Dataset, RepairMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub score_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            score_tol: 1e-6,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSolution {
    pub theta: Vec<f64>,
    /// Max-norm of the score at `theta`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Coordinates with no information in the data; left at their initial value.
    pub fixed: Vec<usize>,
}

pub(crate) trait ScoreProblem: Sync {
    fn dim(&self) -> usize;
    /// Log partial likelihood and score.
    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>);
    fn informative(&self) -> Vec<bool>;
}

pub(crate) struct RcrProblem<'a> {
    pub data: &'a Dataset,
    pub set: &'a RcrRiskSet,
    pub z: &'a [f64],
}

impl ScoreProblem for RcrProblem<'_> {
    fn dim(&self) -> usize {
        1 + self.data.p()
    }

    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (alpha, beta) = (theta[0], &theta[1..]);
        let (dim, agg) = self.set.aggregates(self.data, alpha, beta, self.z, true);
        let mut ll = 0.0;
        let mut u = vec![0.0; dim - 1];
        for e in &self.set.events {
            let row = &agg[e.query * dim..(e.query + 1) * dim];
            let s = row[0];
            let x = self.data.units()[e.unit].covariates();
            let (rho, live) = floored(alpha * e.n as f64);
            if !live {
                return infeasible(dim - 1);
            }
            ll += rho.ln() + dot(x, beta) - s.ln();
            u[0] += e.n as f64 / rho - row[1] / s;
            for k in 0..x.len() {
                u[1 + k] += x[k] - row[2 + k] / s;
            }
        }
        (ll, u)
    }

    fn informative(&self) -> Vec<bool> {
        let mut out = vec![self.set.intervals.iter().any(|iv| iv.n > 0)];
        out.extend(covariate_support(self.data));
        out
    }
}

pub(crate) struct TeProblem<'a> {
    pub data: &'a Dataset,
    pub set: &'a TeRiskSet,
    pub z: &'a [f64],
}

impl ScoreProblem for TeProblem<'_> {
    fn dim(&self) -> usize {
        self.data.q() + self.data.p()
    }

    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let q = self.data.q();
        let (gamma, beta) = theta.split_at(q);
        let (dim, agg) = self.set.aggregates(self.data, gamma, beta, self.z, true);
        let mut ll = 0.0;
        let mut u = vec![0.0; dim - 1];
        for e in &self.set.events {
            let row = &agg[e.query * dim..(e.query + 1) * dim];
            let s = row[0];
            let x = self.data.units()[e.unit].covariates();
            let lin: f64 = e
                .counts
                .iter()
                .zip(gamma)
                .map(|(&n, &g)| n as f64 * g)
                .sum();
            let (rho, live) = floored(lin);
            if !live {
                return infeasible(dim - 1);
            }
            ll += rho.ln() + dot(x, beta) - s.ln();
            for k in 0..q {
                u[k] += e.counts[k] as f64 / rho - row[1 + k] / s;
            }
            for k in 0..x.len() {
                u[q + k] += x[k] - row[1 + q + k] / s;
            }
        }
        (ll, u)
    }

    fn informative(&self) -> Vec<bool> {
        let q = self.data.q();
        let mut out: Vec<bool> = (0..q)
            .map(|k| self.set.intervals.iter().any(|iv| iv.counts[k] > 0))
            .collect();
        out.extend(covariate_support(self.data));
        out
    }
}

fn covariate_support(data: &Dataset) -> Vec<bool> {
    (0..data.p())
        .map(|k| data.units().iter().any(|u| u.covariates()[k] != 0.0))
        .collect()
}

/// An event with a floored count modulator has zero likelihood; such
/// parameter values are outside the domain of the estimating equations.
fn infeasible(dim: usize) -> (f64, Vec<f64>) {
    (f64::NEG_INFINITY, vec![f64::NAN; dim])
}

fn max_abs(u: &[f64], free: &[usize]) -> f64 {
    free.iter()
        .map(|&k| if u[k].is_nan() { f64::INFINITY } else { u[k].abs() })
        .fold(0.0, f64::max)
}

pub(crate) fn solve<P: ScoreProblem>(
    problem: &P,
    init: &[f64],
    cfg: &SolverConfig,
) -> ScoreSolution {
    let informative = problem.informative();
    let free: Vec<usize> = (0..problem.dim()).filter(|&k| informative[k]).collect();
    let fixed: Vec<usize> = (0..problem.dim()).filter(|&k| !informative[k]).collect();
    let mut theta = init.to_vec();
    let (mut ll, mut u) = problem.eval(&theta);
    let mut iterations = 0;

    // Newton keeps polishing well inside the tolerance: stopping anywhere
    // below it would let the root drift by up to the tolerance between
    // outer iterations.
    let polish = cfg.score_tol * 1e-3;
    loop {
        let residual = max_abs(&u, &free);
        if residual < polish || iterations >= cfg.max_iter || !ll.is_finite() {
            break;
        }
        iterations += 1;
        let Some(step) = newton_direction(problem, &theta, &u, &free) else {
            break;
        };
        let slope: f64 = free.iter().zip(&step).map(|(&k, d)| d * u[k]).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = theta.clone();
            for (&k, d) in free.iter().zip(&step) {
                cand[k] += t * d;
            }
            let (cl, cu) = problem.eval(&cand);
            let better_score = max_abs(&cu, &free) < residual;
            if cl.is_finite() && (cl >= ll + 1e-4 * t * slope || (t == 1.0 && better_score && cl >= ll - 1e-9 * ll.abs().max(1.0))) {
                theta = cand;
                ll = cl;
                u = cu;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = max_abs(&u, &free);
    if residual < cfg.score_tol {
        return ScoreSolution {
            theta,
            residual,
            iterations,
            converged: true,
            fixed,
        };
    }

    let (residual, sweeps) = coordinate_fallback(problem, &mut theta, &free, cfg);
    ScoreSolution {
        theta,
        residual,
        iterations: iterations + sweeps,
        converged: residual < cfg.score_tol,
        fixed,
    }
}

/// Newton ascent direction with Levenberg damping until the negated
/// Jacobian is positive definite.
fn newton_direction<P: ScoreProblem>(
    problem: &P,
    theta: &[f64],
    u: &[f64],
    free: &[usize],
) -> Option<Vec<f64>> {
    let m = free.len();
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for (c, &k) in free.iter().enumerate() {
        let h = 1e-6 * theta[k].abs().max(1.0);
        let mut plus = theta.to_vec();
        plus[k] += h;
        let mut minus = theta.to_vec();
        minus[k] -= h;
        let (_, up) = problem.eval(&plus);
        let (_, um) = problem.eval(&minus);
        for (r, &j) in free.iter().enumerate() {
            jac[(r, c)] = (up[j] - um[j]) / (2.0 * h);
        }
    }
    let neg_h = -(&jac + jac.transpose()) * 0.5;
    if neg_h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let rhs = DVector::from_iterator(m, free.iter().map(|&k| u[k]));
    let scale = (0..m).map(|i| neg_h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut lambda = 0.0;
    for _ in 0..60 {
        let mut a = neg_h.clone();
        for i in 0..m {
            a[(i, i)] += lambda;
        }
        if let Some(chol) = a.cholesky() {
            let step = chol.solve(&rhs);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step.iter().copied().collect());
            }
        }
        lambda = if lambda == 0.0 { 1e-10 * scale } else { lambda * 10.0 };
    }
    None
}

/// Cyclic one-dimensional root bracketing of each score component.
fn coordinate_fallback<P: ScoreProblem>(
    problem: &P,
    theta: &mut [f64],
    free: &[usize],
    cfg: &SolverConfig,
) -> (f64, usize) {
    let mut sweeps = 0;
    while sweeps < cfg.max_iter {
        let (_, u) = problem.eval(theta);
        if max_abs(&u, free) < cfg.score_tol {
            break;
        }
        sweeps += 1;
        let before = theta.to_vec();
        for &k in free {
            let g = |x: f64, th: &mut [f64]| {
                th[k] = x;
                problem.eval(th).1[k]
            };
            let x0 = theta[k];
            let g0 = g(x0, theta);
            if g0.abs() < cfg.score_tol * 0.1 {
                theta[k] = x0;
                continue;
            }
            let dir = g0.signum();
            let mut step = 0.1 * x0.abs().max(1.0);
            let (mut a, mut ga) = (x0, g0);
            let mut bracket = None;
            for _ in 0..60 {
                let b = a + dir * step;
                let gb = g(b, theta);
                if !gb.is_finite() {
                    step *= 0.5;
                    continue;
                }
                if gb.signum() != ga.signum() {
                    bracket = Some((a, ga, b));
                    break;
                }
                a = b;
                ga = gb;
                step *= 2.0;
            }
            let Some((mut lo, mut glo, mut hi)) = bracket else {
                theta[k] = x0;
                continue;
            };
            let mut mid = 0.5 * (lo + hi);
            for _ in 0..200 {
                mid = 0.5 * (lo + hi);
                let gm = g(mid, theta);
                if gm.abs() < cfg.score_tol * 0.1 || (hi - lo).abs() < 1e-13 * mid.abs().max(1.0) {
                    break;
                }
                if gm.signum() == glo.signum() {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            theta[k] = mid;
        }
        // a sweep that no longer moves sits on a jump of the score
        let moved = free
            .iter()
            .map(|&k| (theta[k] - before[k]).abs() / before[k].abs().max(1.0))
            .fold(0.0, f64::max);
        if moved < 1e-12 {
            break;
        }
    }
    let (_, u) = problem.eval(theta);
    (max_abs(&u, free), sweeps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcrEstimate {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub alpha_fixed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeEstimate {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Risks whose count coefficient has no information in the data.
    pub gamma_fixed: Vec<usize>,
}

/// Solves the risk-`q` estimating equations for `(alpha_q, beta_q)` given frailties `z`.
pub fn solve_score_rcr(
    data: &Dataset,
    mode: RepairMode,
    q: usize,
    z: &[f64],
    init: (f64, &[f64]),
    cfg: &SolverConfig,
) -> Result<RcrEstimate> {
    if q >= data.q() {
        return Err(Error::InvalidRisk { risk: q, q: data.q() });
    }
    if z.len() != data.len() || init.1.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.len() + data.p(),
            found: z.len() + init.1.len(),
        });
    }
    let prep = Prepared::new(data, mode);
    if prep.rcr[q].events.is_empty() {
        return Err(Error::NoEvents { risk: q });
    }
    let problem = RcrProblem {
        data,
        set: &prep.rcr[q],
        z,
    };
    let mut theta0 = vec![init.0];
    theta0.extend_from_slice(init.1);
    let sol = solve(&problem, &theta0, cfg);
    if !sol.converged {
        return Err(Error::NonConvergence {
            what: format!("score equations for risk {}", q + 1),
            iterations: sol.iterations,
        });
    }
    Ok(RcrEstimate {
        alpha: sol.theta[0],
        beta: sol.theta[1..].to_vec(),
        residual: sol.residual,
        iterations: sol.iterations,
        alpha_fixed: sol.fixed.contains(&0),
    })
}

/// Solves the terminal-event estimating equations for `(gamma, beta_0)`.
pub fn solve_score_te(
    data: &Dataset,
    z: &[f64],
    init: (&[f64], &[f64]),
    cfg: &SolverConfig,
) -> Result<TeEstimate> {
    if z.len() != data.len() || init.0.len() != data.q() || init.1.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.len() + data.q() + data.p(),
            found: z.len() + init.0.len() + init.1.len(),
        });
    }
    let prep = Prepared::new(data, RepairMode::Perfect);
    if prep.te.events.is_empty() {
        return Err(Error::InvalidInput("no terminal events in the dataset".into()));
    }
    let problem = TeProblem {
        data,
        set: &prep.te,
        z,
    };
    let mut theta0 = init.0.to_vec();
    theta0.extend_from_slice(init.1);
    let sol = solve(&problem, &theta0, cfg);
    if !sol.converged {
        return Err(Error::NonConvergence {
            what: "terminal-event score equations".into(),
            iterations: sol.iterations,
        });
    }
    let q = data.q();
    let gamma_fixed: Vec<usize> = sol.fixed.iter().copied().filter(|&k| k < q).collect();
    if !gamma_fixed.is_empty() {
        log::warn!(
            "count coefficients for risks {:?} are not identifiable; kept at their initial values",
            gamma_fixed.iter().map(|k| k + 1).collect::<Vec<_>>()
        );
    }
    Ok(TeEstimate {
        gamma: sol.theta[..q].to_vec(),
        beta: sol.theta[q..].to_vec(),
        residual: sol.residual,
        iterations: sol.iterations,
        gamma_fixed,
    })
}
