use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::summary::PredictiveDistribution;
use super::{rcr_increment, te_increment, NewUnitState};
use crate::error::{Error, Result};
use crate::estimation::FittedModel;
use crate::event_model::{Event, UnitHistory};
use crate::par;

/// Safety cap on simulated recurrent events per path.
pub const MAX_PATH_EVENTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub seed: u64,
    /// Simulated recurrent events after the monitoring time, calendar scale.
    pub events: Vec<Event>,
    pub te_time: f64,
    /// Time to terminal event measured from the monitoring time.
    pub ttte: f64,
    /// Simulated event count per risk.
    pub counts: Vec<u32>,
}

/// Seed of path `index` in an ensemble started from `base_seed`.
pub fn path_seed(base_seed: u64, index: u64) -> u64 {
    par::derive_seed(base_seed, index)
}

/// Walks success probabilities in order, drawing one Bernoulli trial per
/// point. Returns the first success, or the last index if none succeeds.
pub fn grid_walk<R, I>(probs: I, rng: &mut R) -> Option<usize>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = f64>,
{
    let mut last = None;
    for (i, p) in probs.into_iter().enumerate() {
        last = Some(i);
        if rng.random::<f64>() < p {
            return Some(i);
        }
    }
    last
}

/// Candidate next recurrent event: the risk with the earliest grid-walk
/// success and its calendar time. `None` when every risk's grid is
/// exhausted.
pub fn simulate_next_rcr<R: Rng + ?Sized>(
    state: &NewUnitState,
    fitted: &FittedModel,
    rng: &mut R,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (q, b) in fitted.baselines.rcr.iter().enumerate() {
        let age = state.age(q);
        let grid = &b.locations()[b.first_after(age)..];
        let probs = grid.iter().map(|&w| rcr_increment(state, fitted, q, w));
        if let Some(k) = grid_walk(probs, rng) {
            let t = state.clock() + (grid[k] - age);
            if best.is_none_or(|(_, bt)| t < bt) {
                best = Some((q, t));
            }
        }
    }
    best
}

/// Candidate terminal-event duration beyond the current clock.
pub fn simulate_te_candidate<R: Rng + ?Sized>(
    state: &NewUnitState,
    fitted: &FittedModel,
    rng: &mut R,
) -> Result<f64> {
    let b = &fitted.baselines.te;
    let grid = &b.locations()[b.first_after(state.clock())..];
    let probs = grid.iter().map(|&t| te_increment(state, fitted, t));
    match grid_walk(probs, rng) {
        Some(k) => Ok(grid[k] - state.clock()),
        None => Err(Error::NoTerminalSupport {
            clock: state.clock(),
        }),
    }
}

/// Simulates one path forward from `state` until the terminal event.
pub fn simulate_path_from_state(
    mut state: NewUnitState,
    fitted: &FittedModel,
    seed: u64,
) -> Result<SimulatedPath> {
    let start = state.clock();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut counts = vec![0u32; fitted.q()];
    loop {
        let rcr = simulate_next_rcr(&state, fitted, &mut rng);
        let te_time = state.clock() + simulate_te_candidate(&state, fitted, &mut rng)?;
        match rcr {
            Some((q, t)) if t < te_time => {
                if events.len() >= MAX_PATH_EVENTS {
                    return Err(Error::RunawayPath {
                        limit: MAX_PATH_EVENTS,
                    });
                }
                state.record_event(t, q)?;
                events.push(Event { time: t, risk: q });
                counts[q] += 1;
            }
            _ => {
                return Ok(SimulatedPath {
                    seed,
                    events,
                    te_time,
                    ttte: te_time - start,
                    counts,
                })
            }
        }
    }
}

/// Simulates one path for a unit at risk at the end of its history.
pub fn simulate_path(unit: &UnitHistory, fitted: &FittedModel, seed: u64) -> Result<SimulatedPath> {
    simulate_path_from_state(NewUnitState::new(unit, fitted)?, fitted, seed)
}

/// `m` independent paths with seeds derived from `base_seed`.
pub fn simulate_ensemble(
    unit: &UnitHistory,
    fitted: &FittedModel,
    m: usize,
    base_seed: u64,
) -> Result<PredictiveDistribution> {
    if m == 0 {
        return Err(Error::InvalidInput("ensemble size must be at least 1".into()));
    }
    let state = NewUnitState::new(unit, fitted)?;
    let paths = par::map_indexed(m, |i| {
        simulate_path_from_state(state.clone(), fitted, path_seed(base_seed, i as u64))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveDistribution::new(
        unit.tau(),
        state.z_hat(),
        unit.final_counts().as_slice().to_vec(),
        paths,
    ))
}
