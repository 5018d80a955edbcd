//! Gamma frailty posterior and the frailty-parameter update.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::baseline::{unit_compensator_rcr, unit_compensator_te};
use super::{Baselines, FiniteDimParams};
use crate::error::{Error, Result};
use crate::event_model::{Dataset, RepairMode};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitFrailty {
    pub shape: f64,
    pub rate: f64,
    pub mean: f64,
    pub log_mean: f64,
}

impl UnitFrailty {
    pub fn from_shape_rate(shape: f64, rate: f64) -> Self {
        UnitFrailty {
            shape,
            rate,
            mean: shape / rate,
            log_mean: digamma(shape) - rate.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtyPosterior {
    pub units: Vec<UnitFrailty>,
}

impl FrailtyPosterior {
    pub fn means(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.mean).collect()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Posterior `Ga(xi + events, xi + compensator)` of each unit's frailty, with
/// compensators evaluated frailty-free over the whole observed window.
pub fn e_step(
    data: &Dataset,
    mode: RepairMode,
    params: &FiniteDimParams,
    baselines: &Baselines,
) -> Result<FrailtyPosterior> {
    let xi = params.xi;
    let units = par::map_indexed(data.len(), |i| {
        let u = &data.units()[i];
        let end = u.end_time();
        let events = u.events().len() as f64 + if u.has_te() { 1.0 } else { 0.0 };
        let mut comp = unit_compensator_te(u, params, &baselines.te, 1.0, end);
        for (q, b) in baselines.rcr.iter().enumerate() {
            if !b.is_empty() {
                comp += unit_compensator_rcr(u, q, params, mode, b, 1.0, end);
            }
        }
        let (shape, rate) = (xi + events, xi + comp);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::NonPositiveRate { unit: i });
        }
        Ok(UnitFrailty::from_shape_rate(shape, rate))
    });
    Ok(FrailtyPosterior {
        units: units.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiConfig {
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
}

impl Default for XiConfig {
    fn default() -> Self {
        XiConfig {
            lower: 1e-3,
            upper: 1e3,
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiUpdate {
    pub xi: f64,
    pub at_boundary: bool,
}

/// Expected complete-data log-likelihood of the frailty distribution, up to
/// terms free of `xi`.
pub fn xi_objective(frailty: &FrailtyPosterior, xi: f64) -> f64 {
    let n = frailty.len() as f64;
    let sum_log: f64 = frailty.units.iter().map(|u| u.log_mean).sum();
    let sum_mean: f64 = frailty.units.iter().map(|u| u.mean).sum();
    n * xi * xi.ln() - n * ln_gamma(xi) + (xi - 1.0) * sum_log - xi * sum_mean
}

/// Maximiser of [`xi_objective`] by bisection on its derivative over
/// `log xi`. The derivative is strictly decreasing in `xi`, so its sign
/// brackets the unique maximiser; bisecting the sign keeps full precision
/// where the objective itself is flat.
pub fn update_xi(frailty: &FrailtyPosterior, cfg: &XiConfig) -> Result<XiUpdate> {
    if frailty.is_empty() {
        return Err(Error::InvalidInput("empty frailty posterior".into()));
    }
    if !(cfg.lower > 0.0 && cfg.upper > cfg.lower) {
        return Err(Error::InvalidInput(format!(
            "invalid xi bounds [{}, {}]",
            cfg.lower, cfg.upper
        )));
    }
    let n = frailty.len() as f64;
    let excess: f64 = frailty.units.iter().map(|u| u.log_mean - u.mean).sum();
    let slope = |u: f64| {
        let xi = u.exp();
        n * (u + 1.0 - digamma(xi)) + excess
    };
    let (mut a, mut b) = (cfg.lower.ln(), cfg.upper.ln());
    let boundary = if slope(a) <= 0.0 {
        Some(cfg.lower)
    } else if slope(b) >= 0.0 {
        Some(cfg.upper)
    } else {
        None
    };
    if let Some(xi) = boundary {
        log::warn!("frailty parameter update hit the search boundary at {xi}");
        return Ok(XiUpdate {
            xi,
            at_boundary: true,
        });
    }
    while b - a > cfg.tol {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(XiUpdate {
        xi: (0.5 * (a + b)).exp(),
        at_boundary: false,
    })
}
