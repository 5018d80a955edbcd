//! Dynamic prediction for a new unit that is still at risk at the end of
//! its monitoring window.

mod summary;
mod walk;

pub use summary::{
    predicted_survival, quantile, survival_curve, DistributionStats, EnsembleSummary,
    PredictiveDistribution,
};
pub use walk::{
    grid_walk, path_seed, simulate_ensemble, simulate_path, simulate_path_from_state,
    simulate_next_rcr, simulate_te_candidate, SimulatedPath, MAX_PATH_EVENTS,
};

use crate::error::{Error, Result};
use crate::estimation::riskset::dot;
use crate::estimation::{unit_compensator_rcr, unit_compensator_te, FittedModel};
use crate::event_model::{rho_rcr, rho_te_unchecked, EventCounts, RepairMode, UnitHistory};

fn check_unit(history: &UnitHistory, fitted: &FittedModel) -> Result<()> {
    if history.has_te() {
        return Err(Error::InvalidInput(format!(
            "unit {} has already experienced the terminal event",
            history.id()
        )));
    }
    if history.q() != fitted.q() {
        return Err(Error::DimensionMismatch {
            expected: fitted.q(),
            found: history.q(),
        });
    }
    if history.p() != fitted.p() {
        return Err(Error::DimensionMismatch {
            expected: fitted.p(),
            found: history.p(),
        });
    }
    Ok(())
}

/// Posterior-mean frailty of a new unit given its history up to its
/// monitoring time, under the fitted model.
pub fn predict_frailty(history: &UnitHistory, fitted: &FittedModel) -> Result<f64> {
    check_unit(history, fitted)?;
    let tau = history.tau();
    let params = &fitted.params;
    let mut comp = unit_compensator_te(history, params, &fitted.baselines.te, 1.0, tau);
    for (q, b) in fitted.baselines.rcr.iter().enumerate() {
        comp += unit_compensator_rcr(history, q, params, fitted.repair_mode, b, 1.0, tau);
    }
    let z = (params.xi + history.events().len() as f64) / (params.xi + comp);
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Numerical(format!(
            "frailty prediction for unit {} is {z}",
            history.id()
        )));
    }
    Ok(z)
}

/// Mutable simulation state of a new unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NewUnitState {
    z_hat: f64,
    clock: f64,
    anchors: Vec<f64>,
    counts: EventCounts,
    mode: RepairMode,
    exb_rcr: Vec<f64>,
    exb_te: f64,
}

impl NewUnitState {
    /// State at the unit's monitoring time with the predicted frailty.
    pub fn new(history: &UnitHistory, fitted: &FittedModel) -> Result<Self> {
        let z_hat = predict_frailty(history, fitted)?;
        let tau = history.tau();
        let mode = fitted.repair_mode;
        let anchors = (0..history.q())
            .map(|q| history.effective_age(q, tau, mode).map(|a| tau - a))
            .collect::<Result<Vec<_>>>()?;
        let x = history.covariates();
        Ok(NewUnitState {
            z_hat,
            clock: tau,
            anchors,
            counts: history.final_counts(),
            mode,
            exb_rcr: fitted.params.beta_rcr.iter().map(|b| dot(x, b).exp()).collect(),
            exb_te: dot(x, &fitted.params.beta_te).exp(),
        })
    }

    /// Replaces the predicted frailty.
    pub fn with_frailty(mut self, z: f64) -> Self {
        self.z_hat = z;
        self
    }

    pub fn z_hat(&self) -> f64 {
        self.z_hat
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn counts(&self) -> &EventCounts {
        &self.counts
    }

    pub fn repair_mode(&self) -> RepairMode {
        self.mode
    }

    pub fn age(&self, q: usize) -> f64 {
        self.clock - self.anchors[q]
    }

    pub fn ages(&self) -> Vec<f64> {
        (0..self.anchors.len()).map(|q| self.age(q)).collect()
    }

    /// Moves the clock to `time` and records a risk-`q` event there.
    pub fn record_event(&mut self, time: f64, q: usize) -> Result<()> {
        if q >= self.anchors.len() {
            return Err(Error::InvalidRisk {
                risk: q,
                q: self.anchors.len(),
            });
        }
        if !(time > self.clock) {
            return Err(Error::InvalidInput(format!(
                "event at {time} does not advance the clock {}",
                self.clock
            )));
        }
        self.clock = time;
        self.counts.increment(q);
        match self.mode {
            RepairMode::Perfect => self.anchors.iter_mut().for_each(|a| *a = time),
            RepairMode::Partial => self.anchors[q] = time,
        }
        Ok(())
    }
}

/// Intensity weight of risk `q` at effective age `w`; zero unless `w` lies
/// beyond the current age.
pub fn generalized_at_risk_new(state: &NewUnitState, fitted: &FittedModel, q: usize, w: f64) -> f64 {
    if w <= state.age(q) {
        return 0.0;
    }
    state.z_hat * rho_rcr(&state.counts, q, fitted.params.alpha[q]) * state.exb_rcr[q]
}

fn jump_at(locations: &[f64], sizes: &[f64], at: f64) -> f64 {
    locations
        .binary_search_by(|x| x.total_cmp(&at))
        .map_or(0.0, |i| sizes[i])
}

/// Bernoulli success probability of a risk-`q` event at grid age `w`.
pub fn rcr_increment(state: &NewUnitState, fitted: &FittedModel, q: usize, w: f64) -> f64 {
    let b = &fitted.baselines.rcr[q];
    let size = jump_at(b.locations(), b.sizes(), w);
    (generalized_at_risk_new(state, fitted, q, w) * size).clamp(0.0, 1.0)
}

/// Bernoulli success probability of the terminal event at grid time `t`.
pub fn te_increment(state: &NewUnitState, fitted: &FittedModel, t: f64) -> f64 {
    if t <= state.clock {
        return 0.0;
    }
    let b = &fitted.baselines.te;
    let size = jump_at(b.locations(), b.sizes(), t);
    let weight = state.z_hat
        * rho_te_unchecked(state.counts.as_slice(), &fitted.params.gamma)
        * state.exb_te;
    (weight * size).clamp(0.0, 1.0)
}
