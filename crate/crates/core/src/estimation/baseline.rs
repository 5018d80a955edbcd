//! Nelson–Aalen baselines, aggregate at-risk processes and unit compensators.

use super::riskset::{dot, Prepared};
use super::step::StepFunction;
use super::FiniteDimParams;
use crate::error::{Error, Result};
use crate::event_model::{rho_rcr, rho_te_unchecked, Dataset, RepairMode, UnitHistory};

fn check_frailties(data: &Dataset, z: &[f64]) -> Result<()> {
    if z.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: z.len(),
        });
    }
    if let Some(v) = z.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "frailty values must be positive, got {v}"
        )));
    }
    Ok(())
}

/// Cumulative intensity of risk `q` for one unit over calendar `[0, up_to]`,
/// discretised on the jumps of `baseline` along the unit's effective-age path.
pub fn unit_compensator_rcr(
    history: &UnitHistory,
    q: usize,
    params: &FiniteDimParams,
    mode: RepairMode,
    baseline: &StepFunction,
    z: f64,
    up_to: f64,
) -> f64 {
    let exb = dot(history.covariates(), &params.beta_rcr[q]).exp();
    let mut total = 0.0;
    for seg in history.segments(mode) {
        if seg.start >= up_to {
            break;
        }
        let (lo, _) = seg.age_range(q);
        let hi = seg.end.min(up_to) - seg.anchors[q];
        let dlambda = baseline.eval(hi) - baseline.eval(lo);
        if dlambda > 0.0 {
            total += rho_rcr(&seg.counts, q, params.alpha[q]) * dlambda;
        }
    }
    z * exb * total
}

/// Cumulative intensity of the terminal event for one unit over `[0, up_to]`.
pub fn unit_compensator_te(
    history: &UnitHistory,
    params: &FiniteDimParams,
    baseline: &StepFunction,
    z: f64,
    up_to: f64,
) -> f64 {
    let exb = dot(history.covariates(), &params.beta_te).exp();
    let mut total = 0.0;
    // Mode only affects ages, not calendar segments.
    for seg in history.segments(RepairMode::Perfect) {
        if seg.start >= up_to {
            break;
        }
        let dlambda = baseline.eval(seg.end.min(up_to)) - baseline.eval(seg.start);
        if dlambda > 0.0 {
            total += rho_te_unchecked(seg.counts.as_slice(), &params.gamma) * dlambda;
        }
    }
    z * exb * total
}

/// `S_q0(w)`: frailty- and intensity-weighted count of unit age intervals covering `w`.
pub fn aggregate_at_risk_rcr(
    data: &Dataset,
    mode: RepairMode,
    q: usize,
    alpha_q: f64,
    beta_q: &[f64],
    z: &[f64],
    w: f64,
) -> Result<f64> {
    check_frailties(data, z)?;
    if q >= data.q() {
        return Err(Error::InvalidRisk { risk: q, q: data.q() });
    }
    let mut total = 0.0;
    for (unit, &zi) in data.units().iter().zip(z) {
        let exb = dot(unit.covariates(), beta_q).exp();
        for seg in unit.segments(mode) {
            let (lo, hi) = seg.age_range(q);
            if lo < w && w <= hi {
                total += zi * rho_rcr(&seg.counts, q, alpha_q) * exb;
            }
        }
    }
    Ok(total)
}

/// `S_0(v)`: weighted sum over units still at risk at calendar time `v`.
pub fn aggregate_at_risk_te(
    data: &Dataset,
    gamma: &[f64],
    beta_te: &[f64],
    z: &[f64],
    v: f64,
) -> Result<f64> {
    check_frailties(data, z)?;
    if gamma.len() != data.q() {
        return Err(Error::DimensionMismatch {
            expected: data.q(),
            found: gamma.len(),
        });
    }
    Ok(data
        .units()
        .iter()
        .zip(z)
        .filter(|(u, _)| u.at_risk(v))
        .map(|(u, &zi)| {
            zi * rho_te_unchecked(u.counts_at(v).as_slice(), gamma)
                * dot(u.covariates(), beta_te).exp()
        })
        .sum())
}

fn jumps_from_aggregates(
    queries: &[f64],
    numerators: &[u32],
    agg: &[f64],
    dim: usize,
) -> Result<StepFunction> {
    let mut sizes = Vec::with_capacity(queries.len());
    for (k, &at) in queries.iter().enumerate() {
        let s = agg[k * dim];
        if !(s > 0.0) {
            return Err(Error::ZeroAtRisk { at });
        }
        sizes.push(numerators[k] as f64 / s);
    }
    StepFunction::new(queries.to_vec(), sizes)
}

pub(crate) fn na_rcr_prepared(
    prep: &Prepared<'_>,
    q: usize,
    alpha_q: f64,
    beta_q: &[f64],
    z: &[f64],
) -> Result<StepFunction> {
    let rs = &prep.rcr[q];
    if rs.events.is_empty() {
        return Err(Error::NoEvents { risk: q });
    }
    let (dim, agg) = rs.aggregates(prep.data, alpha_q, beta_q, z, false);
    let mut numerators = vec![0u32; rs.sweep.queries.len()];
    for e in &rs.events {
        numerators[e.query] += 1;
    }
    jumps_from_aggregates(&rs.sweep.queries, &numerators, &agg, dim)
}

pub(crate) fn na_te_prepared(
    prep: &Prepared<'_>,
    gamma: &[f64],
    beta_te: &[f64],
    z: &[f64],
) -> Result<StepFunction> {
    let rs = &prep.te;
    if rs.events.is_empty() {
        return Ok(StepFunction::empty());
    }
    let (dim, agg) = rs.aggregates(prep.data, gamma, beta_te, z, false);
    let mut numerators = vec![0u32; rs.sweep.queries.len()];
    for e in &rs.events {
        numerators[e.query] += 1;
    }
    jumps_from_aggregates(&rs.sweep.queries, &numerators, &agg, dim)
}

/// Nelson–Aalen estimate of the risk-`q` baseline cumulative hazard on the
/// effective-age scale. Jumps sit at the observed event ages.
pub fn baseline_nelson_aalen_rcr(
    data: &Dataset,
    mode: RepairMode,
    q: usize,
    alpha_q: f64,
    beta_q: &[f64],
    z: &[f64],
) -> Result<StepFunction> {
    check_frailties(data, z)?;
    if q >= data.q() {
        return Err(Error::InvalidRisk { risk: q, q: data.q() });
    }
    if beta_q.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: beta_q.len(),
        });
    }
    let prep = Prepared::new(data, mode);
    na_rcr_prepared(&prep, q, alpha_q, beta_q, z)
}

/// Nelson–Aalen estimate of the terminal-event baseline cumulative hazard.
/// Empty when no terminal event was observed.
pub fn baseline_nelson_aalen_te(
    data: &Dataset,
    gamma: &[f64],
    beta_te: &[f64],
    z: &[f64],
) -> Result<StepFunction> {
    check_frailties(data, z)?;
    if gamma.len() != data.q() || beta_te.len() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.q() + data.p(),
            found: gamma.len() + beta_te.len(),
        });
    }
    let prep = Prepared::new(data, RepairMode::Perfect);
    na_te_prepared(&prep, gamma, beta_te, z)
}
