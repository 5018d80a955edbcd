//! Synthetic data from the joint model with Weibull baseline hazards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::riskset::dot;
use crate::estimation::FiniteDimParams;
use crate::event_model::{rho_rcr, rho_te_unchecked, Dataset, Event, EventCounts, RepairMode, UnitHistory};
use crate::par;

/// Baseline cumulative hazard `(t / scale)^shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

impl Weibull {
    pub fn cumulative(&self, t: f64) -> f64 {
        (t / self.scale).powf(self.shape)
    }

    /// Age reached from `age` once a hazard multiplied by `mult` has
    /// accumulated `target`.
    pub fn advance(&self, age: f64, mult: f64, target: f64) -> f64 {
        if !(mult > 0.0) {
            return f64::INFINITY;
        }
        self.scale * (self.cumulative(age) + target / mult).powf(1.0 / self.shape)
    }

    fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "Weibull shape and scale must be positive, got ({}, {})",
                self.shape, self.scale
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TauDist {
    Uniform { lo: f64, hi: f64 },
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    pub q: usize,
    pub p: usize,
    pub params: FiniteDimParams,
    pub weibull_rcr: Vec<Weibull>,
    pub weibull_te: Weibull,
    pub tau: TauDist,
    /// Covariates are iid normal with this mean and standard deviation.
    pub covariate_mean: f64,
    pub covariate_sd: f64,
    pub repair_mode: RepairMode,
    pub seed: u64,
    /// Cap on events per unit when following a unit past its monitoring
    /// time for the ground truth.
    pub truth_event_cap: usize,
}

/// Parameter values of the four-risk, three-covariate reference design.
pub fn reference_params() -> FiniteDimParams {
    FiniteDimParams {
        xi: 2.0,
        alpha: vec![0.25, 0.2, 0.1, 0.05],
        beta_rcr: vec![
            vec![-0.2, 0.1, 0.30],
            vec![0.3, 0.1, 0.05],
            vec![0.3, -0.1, 0.40],
            vec![0.0, 1.0, -0.5],
        ],
        gamma: vec![0.1, 0.1, 0.05, 0.5],
        beta_te: vec![0.3, -0.4, 0.5],
    }
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 50,
            q: 4,
            p: 3,
            params: reference_params(),
            weibull_rcr: vec![
                Weibull { shape: 1.5, scale: 0.45 },
                Weibull { shape: 1.5, scale: 0.45 },
                Weibull { shape: 1.2, scale: 0.15 },
                Weibull { shape: 1.5, scale: 0.60 },
            ],
            weibull_te: Weibull { shape: 2.0, scale: 1.128 },
            tau: TauDist::Uniform { lo: 0.4, hi: 1.2 },
            covariate_mean: 0.0,
            covariate_sd: 1.0,
            repair_mode: RepairMode::Partial,
            seed: 1,
            truth_event_cap: 100_000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("unit count must be at least 1".into()));
        }
        if self.q == 0 {
            return Err(Error::InvalidInput("at least one recurrent risk is required".into()));
        }
        self.params.validate(self.q, self.p)?;
        if self.weibull_rcr.len() != self.q {
            return Err(Error::DimensionMismatch {
                expected: self.q,
                found: self.weibull_rcr.len(),
            });
        }
        for w in self.weibull_rcr.iter().chain(std::iter::once(&self.weibull_te)) {
            w.validate()?;
        }
        let tau_ok = match self.tau {
            TauDist::Uniform { lo, hi } => lo > 0.0 && hi > lo && hi.is_finite(),
            TauDist::Fixed { value } => value > 0.0 && value.is_finite(),
        };
        if !tau_ok {
            return Err(Error::InvalidInput(format!("invalid monitoring-time law {:?}", self.tau)));
        }
        if !(self.covariate_sd >= 0.0 && self.covariate_mean.is_finite()) {
            return Err(Error::InvalidInput("invalid covariate law".into()));
        }
        Ok(())
    }
}

/// Unobservable quantities behind one generated unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub unit_id: String,
    pub frailty: f64,
    /// Terminal-event time, also when it falls after monitoring ended.
    /// `None` if the unit was still alive when the event cap was reached.
    pub te_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: Vec<GroundTruth>,
}

fn unit_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(4);
    format!("u{:0width$}", i + 1)
}

/// Generates the unit with index `index`. The same `(cfg.seed, index)`
/// always yields the same unit.
pub fn generate_unit(cfg: &GenConfig, index: usize) -> Result<(UnitHistory, GroundTruth)> {
    cfg.validate()?;
    generate_checked(cfg, index)
}

fn generate_checked(cfg: &GenConfig, index: usize) -> Result<(UnitHistory, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(cfg.seed, index as u64));
    let params = &cfg.params;
    let xi = params.xi;
    let z: f64 = Gamma::new(xi, 1.0 / xi)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .sample(&mut rng);
    let normal = Normal::new(cfg.covariate_mean, cfg.covariate_sd)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let x: Vec<f64> = (0..cfg.p).map(|_| normal.sample(&mut rng)).collect();
    let tau = match cfg.tau {
        TauDist::Uniform { lo, hi } => Uniform::new(lo, hi)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .sample(&mut rng),
        TauDist::Fixed { value } => value,
    };
    let exb_rcr: Vec<f64> = params.beta_rcr.iter().map(|b| dot(&x, b).exp()).collect();
    let exb_te = dot(&x, &params.beta_te).exp();

    let mut clock = 0.0;
    let mut anchors = vec![0.0; cfg.q];
    let mut counts = EventCounts::zeros(cfg.q);
    let mut events = Vec::new();
    let mut observed_events = None;
    let te_time = loop {
        // next event of each process by inversion of its cumulative hazard
        let mut next_time = f64::INFINITY;
        let mut next_risk = None;
        for q in 0..cfg.q {
            let e: f64 = rng.sample(Exp1);
            let mult = z * rho_rcr(&counts, q, params.alpha[q]) * exb_rcr[q];
            let age = clock - anchors[q];
            let t = clock + (cfg.weibull_rcr[q].advance(age, mult, e) - age);
            if t < next_time {
                next_time = t;
                next_risk = Some(q);
            }
        }
        let e: f64 = rng.sample(Exp1);
        let mult_te = z * rho_te_unchecked(counts.as_slice(), &params.gamma) * exb_te;
        let te = cfg.weibull_te.advance(clock, mult_te, e);
        if observed_events.is_none() && tau < next_time.min(te) {
            observed_events = Some(events.len());
        }
        if te <= next_time {
            break te.is_finite().then_some(te);
        }
        let q = next_risk.expect("finite candidate has a risk");
        if !(next_time > clock) || events.len() >= cfg.truth_event_cap {
            if observed_events.is_none() {
                return Err(Error::Numerical(format!(
                    "event generation stalled at t = {clock} for unit {}",
                    index + 1
                )));
            }
            break None;
        }
        clock = next_time;
        counts.increment(q);
        match cfg.repair_mode {
            RepairMode::Perfect => anchors.iter_mut().for_each(|a| *a = clock),
            RepairMode::Partial => anchors[q] = clock,
        }
        events.push(Event { time: clock, risk: q });
    };
    let observed = observed_events.unwrap_or(events.len());
    events.truncate(observed);
    let te_obs = te_time.filter(|&t| t <= tau);
    let id = unit_id(index, cfg.n);
    let history = UnitHistory::new(id.clone(), cfg.q, events, tau, te_obs, x)?;
    Ok((
        history,
        GroundTruth {
            unit_id: id,
            frailty: z,
            te_time,
        },
    ))
}

pub fn generate_dataset(cfg: &GenConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let (units, truth): (Vec<_>, Vec<_>) = par::map_indexed(cfg.n, |i| generate_checked(cfg, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(SyntheticData {
        dataset: Dataset::new(cfg.q, cfg.p, units)?,
        truth,
    })
}
