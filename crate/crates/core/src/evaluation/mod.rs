//! Predictive accuracy: IPCW empirical Brier score and k-fold cross-validation.

mod cv;

pub use cv::{assign_folds, k_fold_cv, CvConfig, CvReport, FoldResult, HorizonAverage};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{FittedModel, SurvivalCurve};
use crate::event_model::{Dataset, UnitHistory};
use crate::par;
use crate::prediction::{predicted_survival, simulate_ensemble};

/// Kaplan–Meier estimate of the monitoring-time survival function, with
/// the terminal event acting as censoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmEstimate {
    pub curve: SurvivalCurve,
}

impl KmEstimate {
    pub fn eval(&self, t: f64) -> f64 {
        self.curve.eval(t)
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        self.curve.eval_left(t)
    }
}

pub fn km_monitoring(units: &[UnitHistory]) -> Result<KmEstimate> {
    if units.is_empty() {
        return Err(Error::InvalidInput("Kaplan-Meier of an empty sample".into()));
    }
    // (time, observed monitoring end)
    let mut obs: Vec<(f64, bool)> = units.iter().map(|u| (u.end_time(), !u.has_te())).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let at_risk = obs.len() - i;
        let mut d = 0;
        while i < obs.len() && obs[i].0 == t {
            d += obs[i].1 as usize;
            i += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            times.push(t);
            values.push(surv);
        }
    }
    Ok(KmEstimate {
        curve: SurvivalCurve { times, values },
    })
}

/// Inverse-probability-of-censoring weight of a unit at risk at `v` for
/// the window `(v, v + t]`.
pub fn ipcw_weight(unit: &UnitHistory, v: f64, t: f64, km: &KmEstimate) -> Result<f64> {
    let horizon = v + t;
    match unit.te_time() {
        Some(te) if te > v && te <= horizon => {
            let denom = km.eval_left(te);
            if !(denom > 0.0) {
                return Err(Error::WeightUndefined { at: te });
            }
            Ok(km.eval(v) / denom)
        }
        _ if unit.end_time() > horizon => {
            let denom = km.eval(horizon);
            if !(denom > 0.0) {
                return Err(Error::WeightUndefined { at: horizon });
            }
            Ok(km.eval(v) / denom)
        }
        _ => Ok(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierResult {
    pub v: f64,
    pub t: f64,
    pub score: f64,
    pub n_at_risk: usize,
    /// At-risk units with a positive weight.
    pub n_effective: usize,
    /// At-risk units dropped because their weight was undefined.
    pub n_dropped: usize,
}

/// Weighted mean squared error of survival predictions over units at risk
/// at `v`. `predictions[i]` is ignored for units not at risk.
pub fn empirical_brier(
    units: &[UnitHistory],
    predictions: &[f64],
    v: f64,
    t: f64,
    km: &KmEstimate,
) -> Result<BrierResult> {
    if predictions.len() != units.len() {
        return Err(Error::DimensionMismatch {
            expected: units.len(),
            found: predictions.len(),
        });
    }
    let mut n_at_risk = 0;
    let mut n_effective = 0;
    let mut n_dropped = 0;
    let mut total = 0.0;
    for (u, &pred) in units.iter().zip(predictions) {
        if !u.at_risk(v) {
            continue;
        }
        let w = match ipcw_weight(u, v, t, km) {
            Ok(w) => w,
            Err(Error::WeightUndefined { at }) => {
                log::warn!("unit {}: censoring weight undefined at {at}; dropped", u.id());
                n_dropped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        n_at_risk += 1;
        if w > 0.0 {
            n_effective += 1;
            let alive = if u.end_time() > v + t { 1.0 } else { 0.0 };
            total += w * (alive - pred).powi(2);
        }
    }
    if n_at_risk == 0 {
        return Err(Error::EmptyAtRiskSet { v });
    }
    Ok(BrierResult {
        v,
        t,
        score: total / n_at_risk as f64,
        n_at_risk,
        n_effective,
        n_dropped,
    })
}

/// Predicted survival beyond `v + s` for each horizon `s`, from an
/// ensemble simulated on the unit's history truncated at `v`. A unit whose
/// truncation point lies beyond all fitted terminal-event support is
/// predicted to survive.
pub fn predict_survival_at(
    fitted: &FittedModel,
    unit: &UnitHistory,
    v: f64,
    horizons: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let truncated = unit.truncated_at(v)?;
    match simulate_ensemble(&truncated, fitted, m, seed) {
        Ok(dist) => Ok(horizons.iter().map(|&s| predicted_survival(&dist, s)).collect()),
        Err(Error::NoTerminalSupport { .. }) => Ok(vec![1.0; horizons.len()]),
        Err(e) => Err(e),
    }
}

/// Brier scores of `fitted` on `test` at base time `v` for each horizon.
/// `seeds[i]` seeds the ensemble of test unit `i`.
pub fn brier_table(
    fitted: &FittedModel,
    test: &Dataset,
    km: &KmEstimate,
    v: f64,
    horizons: &[f64],
    m: usize,
    seeds: &[u64],
) -> Result<Vec<BrierResult>> {
    if seeds.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            found: seeds.len(),
        });
    }
    let units = test.units();
    let preds = par::map_indexed(units.len(), |i| {
        if units[i].at_risk(v) {
            predict_survival_at(fitted, &units[i], v, horizons, m, seeds[i])
        } else {
            Ok(vec![f64::NAN; horizons.len()])
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    horizons
        .iter()
        .enumerate()
        .map(|(h, &s)| {
            let column: Vec<f64> = preds.iter().map(|p| p[h]).collect();
            empirical_brier(units, &column, v, s, km)
        })
        .collect()
}
