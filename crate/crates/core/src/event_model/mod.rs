//! Event histories and the processes derived from them.
//!
//! A unit is observed on `[0, min(tau, T)]`. Risks are indexed `0..Q` in the
//! API; the file formats in [`io`] use `1..=Q`. Counts and effective ages at a
//! time `v` only see events strictly before `v` (left limits).

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to the event-count modulators.
pub const RHO_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairMode {
    /// Any event resets the effective age of every risk.
    Perfect,
    /// An event resets only the age of its own risk.
    Partial,
}

impl std::fmt::Display for RepairMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RepairMode::Perfect => f.write_str("perfect"),
            RepairMode::Partial => f.write_str("partial"),
        }
    }
}

impl std::str::FromStr for RepairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" => Ok(RepairMode::Perfect),
            "partial" => Ok(RepairMode::Partial),
            other => Err(Error::InvalidInput(format!("unknown repair mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub risk: usize,
}

/// Per-risk event counts `N_q(v-)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EventCounts(Vec<u32>);

impl EventCounts {
    pub fn zeros(q: usize) -> Self {
        EventCounts(vec![0; q])
    }

    pub fn from_vec(counts: Vec<u32>) -> Self {
        EventCounts(counts)
    }

    pub fn get(&self, q: usize) -> u32 {
        self.0[q]
    }

    pub fn increment(&mut self, q: usize) {
        self.0[q] += 1;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// `max(1 + alpha_q * N_q, RHO_FLOOR)`.
#[inline]
pub fn rho_rcr(counts: &EventCounts, q: usize, alpha_q: f64) -> f64 {
    (1.0 + alpha_q * counts.get(q) as f64).max(RHO_FLOOR)
}

/// `max(1 + gamma . N, RHO_FLOOR)`.
pub fn rho_te(counts: &EventCounts, gamma: &[f64]) -> Result<f64> {
    if gamma.len() != counts.len() {
        return Err(Error::DimensionMismatch {
            expected: counts.len(),
            found: gamma.len(),
        });
    }
    Ok(rho_te_unchecked(counts.as_slice(), gamma))
}

#[inline]
pub(crate) fn rho_te_unchecked(counts: &[u32], gamma: &[f64]) -> f64 {
    let lin: f64 = counts
        .iter()
        .zip(gamma)
        .map(|(&n, &g)| n as f64 * g)
        .sum();
    (1.0 + lin).max(RHO_FLOOR)
}

/// One unit's observed history.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitHistory {
    id: String,
    q: usize,
    events: Vec<Event>,
    tau: f64,
    te_time: Option<f64>,
    covariates: Vec<f64>,
}

impl UnitHistory {
    pub fn new(
        id: impl Into<String>,
        q: usize,
        events: Vec<Event>,
        tau: f64,
        te_time: Option<f64>,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if q == 0 {
            return Err(Error::InvalidInput(format!("unit {id}: Q must be positive")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidInput(format!(
                "unit {id}: monitoring time must be positive and finite, got {tau}"
            )));
        }
        if let Some(t) = te_time {
            if !(t.is_finite() && t > 0.0 && t <= tau) {
                return Err(Error::InvalidInput(format!(
                    "unit {id}: terminal time {t} must lie in (0, tau = {tau}]"
                )));
            }
        }
        if let Some(x) = covariates.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "unit {id}: covariate value {x} is missing or not finite"
            )));
        }
        let end = te_time.unwrap_or(tau);
        let mut prev = 0.0;
        for e in &events {
            if e.risk >= q {
                return Err(Error::InvalidRisk { risk: e.risk, q });
            }
            if !(e.time.is_finite() && e.time > prev) {
                return Err(Error::InvalidInput(format!(
                    "unit {id}: event times must be positive and strictly increasing (saw {} after {prev})",
                    e.time
                )));
            }
            if e.time >= end {
                return Err(Error::InvalidInput(format!(
                    "unit {id}: event at {} is not before the end of observation {end}",
                    e.time
                )));
            }
            prev = e.time;
        }
        Ok(UnitHistory {
            id,
            q,
            events,
            tau,
            te_time,
            covariates,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.covariates.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn te_time(&self) -> Option<f64> {
        self.te_time
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    /// Observed end time `T' = min(tau, T)`.
    pub fn end_time(&self) -> f64 {
        self.te_time.unwrap_or(self.tau)
    }

    pub fn has_te(&self) -> bool {
        self.te_time.is_some()
    }

    pub fn counts_at(&self, v: f64) -> EventCounts {
        let mut counts = EventCounts::zeros(self.q);
        for e in self.events.iter().take_while(|e| e.time < v) {
            counts.increment(e.risk);
        }
        counts
    }

    /// Total events by the end of observation, per risk.
    pub fn final_counts(&self) -> EventCounts {
        let mut counts = EventCounts::zeros(self.q);
        for e in &self.events {
            counts.increment(e.risk);
        }
        counts
    }

    pub fn effective_age(&self, q: usize, v: f64, mode: RepairMode) -> Result<f64> {
        if q >= self.q {
            return Err(Error::InvalidRisk { risk: q, q: self.q });
        }
        let before = self.events.iter().take_while(|e| e.time < v);
        let anchor = match mode {
            RepairMode::Perfect => before.last().map_or(0.0, |e| e.time),
            RepairMode::Partial => before
                .filter(|e| e.risk == q)
                .last()
                .map_or(0.0, |e| e.time),
        };
        Ok(v - anchor)
    }

    pub fn at_risk(&self, v: f64) -> bool {
        v <= self.end_time()
    }

    /// History as it would have been seen at time `v`: events before `v` are
    /// kept, the terminal event is dropped and monitoring ends at `v`.
    pub fn truncated_at(&self, v: f64) -> Result<UnitHistory> {
        let events = self
            .events
            .iter()
            .copied()
            .take_while(|e| e.time < v)
            .collect();
        UnitHistory::new(
            self.id.clone(),
            self.q,
            events,
            v,
            None,
            self.covariates.clone(),
        )
    }

    /// Calendar segments `(start, end]` between consecutive events, with
    /// the counts and per-risk age anchors in force on each segment.
    pub fn segments(&self, mode: RepairMode) -> Vec<Segment> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut counts = EventCounts::zeros(self.q);
        let mut anchors = vec![0.0; self.q];
        let mut start = 0.0;
        for e in &self.events {
            out.push(Segment {
                start,
                end: e.time,
                counts: counts.clone(),
                anchors: anchors.clone(),
                closing: Some(e.risk),
            });
            counts.increment(e.risk);
            match mode {
                RepairMode::Perfect => anchors.iter_mut().for_each(|a| *a = e.time),
                RepairMode::Partial => anchors[e.risk] = e.time,
            }
            start = e.time;
        }
        out.push(Segment {
            start,
            end: self.end_time(),
            counts,
            anchors,
            closing: None,
        });
        out
    }
}

/// Inter-event calendar interval of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub counts: EventCounts,
    /// Calendar time at which each risk's effective age was last reset.
    pub anchors: Vec<f64>,
    /// Risk of the event that closes the segment, if any.
    pub closing: Option<usize>,
}

impl Segment {
    /// Effective-age range `(lo, hi]` traversed by risk `q`.
    pub fn age_range(&self, q: usize) -> (f64, f64) {
        (self.start - self.anchors[q], self.end - self.anchors[q])
    }
}

/// A collection of units sharing `Q` and covariate dimension `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    q: usize,
    p: usize,
    units: Vec<UnitHistory>,
}

impl Dataset {
    pub fn new(q: usize, p: usize, units: Vec<UnitHistory>) -> Result<Self> {
        for u in &units {
            if u.q() != q {
                return Err(Error::InvalidInput(format!(
                    "unit {} has Q = {}, dataset has Q = {q}",
                    u.id(),
                    u.q()
                )));
            }
            if u.p() != p {
                return Err(Error::InvalidInput(format!(
                    "unit {} has {} covariates, dataset has p = {p}",
                    u.id(),
                    u.p()
                )));
            }
        }
        Ok(Dataset { q, p, units })
    }

    /// Infers `Q` and `p` from the first unit.
    pub fn from_units(units: Vec<UnitHistory>) -> Result<Self> {
        let first = units
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
        let (q, p) = (first.q(), first.p());
        Dataset::new(q, p, units)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn units(&self) -> &[UnitHistory] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            q: self.q,
            p: self.p,
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
        }
    }

    /// Largest observed end time `T*`.
    pub fn max_time(&self) -> f64 {
        self.units
            .iter()
            .map(UnitHistory::end_time)
            .fold(0.0, f64::max)
    }

    pub fn te_count(&self) -> usize {
        self.units.iter().filter(|u| u.has_te()).count()
    }

    pub fn event_count(&self, q: usize) -> usize {
        self.units
            .iter()
            .map(|u| u.events().iter().filter(|e| e.risk == q).count())
            .sum()
    }
}
