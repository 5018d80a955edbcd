//! Semiparametric EM estimation of the joint recurrent/terminal model.

mod baseline;
mod frailty;
pub(crate) mod riskset;
mod score;
mod step;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use baseline::{
    aggregate_at_risk_rcr, aggregate_at_risk_te, baseline_nelson_aalen_rcr,
    baseline_nelson_aalen_te, unit_compensator_rcr, unit_compensator_te,
};
pub use frailty::{
    e_step, update_xi, xi_objective, FrailtyPosterior, UnitFrailty, XiConfig, XiUpdate,
};
pub use score::{
    solve_score_rcr, solve_score_te, RcrEstimate, ScoreSolution, SolverConfig, TeEstimate,
};
pub use step::{ple_survival, StepFunction, SurvivalCurve};

use crate::error::{Error, Result};
use crate::event_model::{Dataset, RepairMode};
use riskset::Prepared;
use score::{solve, RcrProblem, TeProblem};

/// Finite-dimensional model parameters. Risks are indexed from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDimParams {
    pub xi: f64,
    pub alpha: Vec<f64>,
    /// `beta_rcr[q]` has one coefficient per covariate.
    pub beta_rcr: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub beta_te: Vec<f64>,
}

impl FiniteDimParams {
    /// EM starting point: all coefficients zero, `xi = 1`.
    pub fn initial(q: usize, p: usize) -> Self {
        FiniteDimParams {
            xi: 1.0,
            alpha: vec![0.0; q],
            beta_rcr: vec![vec![0.0; p]; q],
            gamma: vec![0.0; q],
            beta_te: vec![0.0; p],
        }
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    pub fn p(&self) -> usize {
        self.beta_te.len()
    }

    pub fn validate(&self, q: usize, p: usize) -> Result<()> {
        let dims_ok = self.alpha.len() == q
            && self.gamma.len() == q
            && self.beta_rcr.len() == q
            && self.beta_rcr.iter().all(|b| b.len() == p)
            && self.beta_te.len() == p;
        if !dims_ok {
            return Err(Error::InvalidInput(format!(
                "parameter dimensions do not match q = {q}, p = {p}"
            )));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(Error::InvalidInput(format!(
                "frailty parameter must be positive, got {}",
                self.xi
            )));
        }
        if self.values().iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter value".into()));
        }
        Ok(())
    }

    /// Flat `(name, value)` listing with 1-based indices.
    pub fn values(&self) -> Vec<(String, f64)> {
        let mut out = vec![("xi".to_string(), self.xi)];
        for (q, a) in self.alpha.iter().enumerate() {
            out.push((format!("alpha_{}", q + 1), *a));
        }
        for (q, b) in self.beta_rcr.iter().enumerate() {
            for (k, v) in b.iter().enumerate() {
                out.push((format!("beta_{}_{}", q + 1, k + 1), *v));
            }
        }
        for (q, g) in self.gamma.iter().enumerate() {
            out.push((format!("gamma_{}", q + 1), *g));
        }
        for (k, v) in self.beta_te.iter().enumerate() {
            out.push((format!("beta0_{}", k + 1), *v));
        }
        out
    }

    pub fn max_abs_diff(&self, other: &FiniteDimParams) -> f64 {
        self.values()
            .iter()
            .zip(other.values())
            .map(|((_, a), (_, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    /// Per-risk cumulative hazards on the effective-age scale.
    pub rcr: Vec<StepFunction>,
    /// Terminal-event cumulative hazard on the calendar scale.
    pub te: StepFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverConfig,
    pub xi: XiConfig,
    #[serde(skip)]
    pub init_params: Option<FiniteDimParams>,
    #[serde(skip)]
    pub init_z: Option<Vec<f64>>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-7,
            max_iter: 500,
            solver: SolverConfig::default(),
            xi: XiConfig::default(),
            init_params: None,
            init_z: None,
        }
    }
}

impl EmConfig {
    /// Warm start from an earlier fit.
    pub fn warm_start(mut self, model: &FittedModel) -> Self {
        self.init_params = Some(model.params.clone());
        self.init_z = Some(model.frailty.means());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub q: usize,
    pub p: usize,
    /// Largest observed calendar time.
    pub max_time: f64,
    pub rcr_events: Vec<usize>,
    pub te_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub xi: f64,
    /// Max-norm change of the finite-dimensional parameters.
    pub change: f64,
    pub max_score_residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
    /// Final score residual per recurrent risk, `None` for dropped risks.
    pub rcr_residuals: Vec<Option<f64>>,
    pub te_residual: Option<f64>,
    pub xi_at_boundary: bool,
    pub dropped_risks: Vec<usize>,
    pub fixed_gamma: Vec<usize>,
}

pub const MODEL_SCHEMA: &str = "rcrte-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub schema: String,
    pub repair_mode: RepairMode,
    pub params: FiniteDimParams,
    pub baselines: Baselines,
    pub frailty: FrailtyPosterior,
    pub meta: TrainingMeta,
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    /// Model assembled from known parameters and baselines, with no
    /// training data behind it.
    pub fn from_parts(
        repair_mode: RepairMode,
        params: FiniteDimParams,
        baselines: Baselines,
    ) -> Result<Self> {
        let (q, p) = (params.q(), params.p());
        let model = FittedModel {
            schema: MODEL_SCHEMA.to_string(),
            repair_mode,
            meta: TrainingMeta {
                n: 0,
                q,
                p,
                max_time: baselines.te.locations().last().copied().unwrap_or(0.0),
                rcr_events: baselines.rcr.iter().map(StepFunction::len).collect(),
                te_events: baselines.te.len(),
            },
            params,
            baselines,
            frailty: FrailtyPosterior { units: Vec::new() },
            diagnostics: FitDiagnostics {
                converged: true,
                ..FitDiagnostics::default()
            },
        };
        model.check()?;
        Ok(model)
    }

    pub fn q(&self) -> usize {
        self.meta.q
    }

    pub fn p(&self) -> usize {
        self.meta.p
    }

    /// Pooled event-age grid of risk `q`.
    pub fn rcr_grid(&self, q: usize) -> &[f64] {
        self.baselines.rcr[q].locations()
    }

    /// Pooled terminal-event time grid.
    pub fn te_grid(&self) -> &[f64] {
        self.baselines.te.locations()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: FittedModel = serde_json::from_str(text)?;
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.schema != MODEL_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "unsupported model schema {:?}",
                self.schema
            )));
        }
        self.params.validate(self.meta.q, self.meta.p)?;
        if self.baselines.rcr.len() != self.meta.q {
            return Err(Error::DimensionMismatch {
                expected: self.meta.q,
                found: self.baselines.rcr.len(),
            });
        }
        Ok(())
    }
}

fn compute_baselines(
    prep: &Prepared<'_>,
    params: &FiniteDimParams,
    z: &[f64],
    active: &[bool],
) -> Result<Baselines> {
    let mut rcr = Vec::with_capacity(active.len());
    for (q, &on) in active.iter().enumerate() {
        rcr.push(if on {
            baseline::na_rcr_prepared(prep, q, params.alpha[q], &params.beta_rcr[q], z)?
        } else {
            StepFunction::empty()
        });
    }
    let te = baseline::na_te_prepared(prep, &params.gamma, &params.beta_te, z)?;
    Ok(Baselines { rcr, te })
}

/// Fits the model by alternating baseline estimation, the frailty E-step,
/// the frailty-parameter update and the score solves until the
/// finite-dimensional parameters settle. A run that hits `max_iter` returns
/// its last iterate with `diagnostics.converged = false`.
pub fn fit_em(data: &Dataset, mode: RepairMode, cfg: &EmConfig) -> Result<FittedModel> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot fit an empty dataset".into()));
    }
    let (q_count, p) = (data.q(), data.p());
    let mut params = match &cfg.init_params {
        Some(init) => {
            init.validate(q_count, p)?;
            init.clone()
        }
        None => FiniteDimParams::initial(q_count, p),
    };
    let mut z = match &cfg.init_z {
        Some(init) if init.len() != data.len() => {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: init.len(),
            })
        }
        Some(init) => init.clone(),
        None => vec![1.0; data.len()],
    };

    let prep = Prepared::new(data, mode);
    let active: Vec<bool> = prep.rcr.iter().map(|r| !r.events.is_empty()).collect();
    let dropped: Vec<usize> = (0..q_count).filter(|&q| !active[q]).collect();
    if !dropped.is_empty() {
        log::warn!(
            "no events for risks {:?}; their submodels are dropped",
            dropped.iter().map(|q| q + 1).collect::<Vec<_>>()
        );
    }
    let te_active = !prep.te.events.is_empty();
    if !te_active {
        log::warn!("no terminal events observed; terminal-event coefficients stay at their initial values");
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut xi_at_boundary = false;
    let mut rcr_residuals = vec![None; q_count];
    let mut te_residual = None;
    let mut fixed_gamma = Vec::new();
    let mut last_posterior = None;

    for iteration in 1..=cfg.max_iter {
        let baselines = compute_baselines(&prep, &params, &z, &active)?;
        let posterior = e_step(data, mode, &params, &baselines)?;
        let z_new = posterior.means();
        let xi_upd = update_xi(&posterior, &cfg.xi)?;
        xi_at_boundary = xi_upd.at_boundary;

        let mut next = params.clone();
        next.xi = xi_upd.xi;
        let mut inner_ok = true;
        let mut max_res: f64 = 0.0;
        for q in (0..q_count).filter(|&q| active[q]) {
            let problem = RcrProblem {
                data,
                set: &prep.rcr[q],
                z: &z_new,
            };
            let mut theta0 = vec![params.alpha[q]];
            theta0.extend_from_slice(&params.beta_rcr[q]);
            let sol = solve(&problem, &theta0, &cfg.solver);
            inner_ok &= sol.converged;
            max_res = max_res.max(sol.residual);
            rcr_residuals[q] = Some(sol.residual);
            next.alpha[q] = sol.theta[0];
            next.beta_rcr[q] = sol.theta[1..].to_vec();
        }
        if te_active {
            let problem = TeProblem {
                data,
                set: &prep.te,
                z: &z_new,
            };
            let mut theta0 = params.gamma.clone();
            theta0.extend_from_slice(&params.beta_te);
            let sol = solve(&problem, &theta0, &cfg.solver);
            inner_ok &= sol.converged;
            max_res = max_res.max(sol.residual);
            te_residual = Some(sol.residual);
            fixed_gamma = sol.fixed.iter().copied().filter(|&k| k < q_count).collect();
            next.gamma = sol.theta[..q_count].to_vec();
            next.beta_te = sol.theta[q_count..].to_vec();
        }
        if !inner_ok {
            log::debug!("iteration {iteration}: score solve did not reach tolerance ({max_res:e})");
        }

        let change = params.max_abs_diff(&next);
        trace.push(IterationRecord {
            iteration,
            xi: next.xi,
            change,
            max_score_residual: max_res,
        });
        log::debug!("iteration {iteration}: change {change:e}, xi {}", next.xi);
        params = next;
        z = z_new;
        last_posterior = Some(posterior);
        if !change.is_finite() {
            return Err(Error::Numerical(format!(
                "parameter update diverged at iteration {iteration}"
            )));
        }
        if change < cfg.tol {
            converged = inner_ok;
            break;
        }
    }
    if !converged {
        log::warn!(
            "EM stopped after {} iterations without converging",
            trace.len()
        );
    }
    if !fixed_gamma.is_empty() {
        log::warn!(
            "count coefficients for risks {:?} are not identifiable",
            fixed_gamma.iter().map(|k| k + 1).collect::<Vec<_>>()
        );
    }

    // The stored posterior is the one whose means are the working z, so a
    // warm start from this model resumes the iteration exactly.
    let baselines = compute_baselines(&prep, &params, &z, &active)?;
    let frailty = match last_posterior {
        Some(p) => p,
        None => e_step(data, mode, &params, &baselines)?,
    };
    let meta = TrainingMeta {
        n: data.len(),
        q: q_count,
        p,
        max_time: data.max_time(),
        rcr_events: prep.rcr.iter().map(|r| r.events.len()).collect(),
        te_events: prep.te.events.len(),
    };
    Ok(FittedModel {
        schema: MODEL_SCHEMA.to_string(),
        repair_mode: mode,
        params,
        baselines,
        frailty,
        meta,
        diagnostics: FitDiagnostics {
            iterations: trace.len(),
            converged,
            trace,
            rcr_residuals,
            te_residual,
            xi_at_boundary,
            dropped_risks: dropped,
            fixed_gamma,
        },
    })
}
