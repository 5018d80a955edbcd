//! Precomputed risk sets for the estimation loops.
//!
//! Each unit contributes weighted intervals `(lo, hi]` on an age scale (one
//! per inter-event segment and risk) or on the calendar scale (terminal
//! event). Sums over intervals covering the sorted event points are
//! accumulated in a single sweep.

use crate::event_model::{Dataset, RepairMode, RHO_FLOOR};

pub(crate) struct Sweep {
    lo: Vec<f64>,
    hi: Vec<f64>,
    by_lo: Vec<usize>,
    by_hi: Vec<usize>,
    /// Distinct query points, ascending.
    pub queries: Vec<f64>,
}

impl Sweep {
    fn new(lo: Vec<f64>, hi: Vec<f64>, mut points: Vec<f64>) -> Self {
        let mut by_lo: Vec<usize> = (0..lo.len()).collect();
        by_lo.sort_by(|&a, &b| lo[a].total_cmp(&lo[b]).then(a.cmp(&b)));
        let mut by_hi: Vec<usize> = (0..hi.len()).collect();
        by_hi.sort_by(|&a, &b| hi[a].total_cmp(&hi[b]).then(a.cmp(&b)));
        points.sort_by(f64::total_cmp);
        points.dedup();
        Sweep {
            lo,
            hi,
            by_lo,
            by_hi,
            queries: points,
        }
    }

    pub fn query_index(&self, point: f64) -> usize {
        self.queries
            .binary_search_by(|q| q.total_cmp(&point))
            .expect("event point registered as query")
    }

    /// For every query `w`, sums `weights[i*dim..(i+1)*dim]` over intervals
    /// with `lo < w <= hi`. Returns a `queries.len() * dim` buffer.
    pub fn accumulate(&self, dim: usize, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.queries.len() * dim];
        let mut active = ActiveSums::new(self.lo.len(), dim, weights);
        let (mut a, mut b) = (0, 0);
        for (k, &w) in self.queries.iter().enumerate() {
            while a < self.by_lo.len() && self.lo[self.by_lo[a]] < w {
                active.insert(self.by_lo[a]);
                a += 1;
            }
            while b < self.by_hi.len() && self.hi[self.by_hi[b]] < w {
                active.remove(self.by_hi[b]);
                b += 1;
            }
            out[k * dim..(k + 1) * dim].copy_from_slice(active.total());
        }
        out
    }
}

/// Running row sums over a changing set of rows.
///
/// Weights can span many orders of magnitude (a floored count modulator, a
/// large covariate effect), and removing a large row from a running sum
/// wipes out the precision of the small rows left behind. The sums track how
/// much mass has passed through them and are recomputed exactly from the
/// active rows once that could have cost more than about 1e-13 relative.
struct ActiveSums<'w> {
    dim: usize,
    weights: &'w [f64],
    rows: Vec<usize>,
    slot: Vec<usize>,
    sums: Vec<f64>,
    /// Absolute first-column mass added or removed since the last exact sum.
    churn: f64,
}

impl<'w> ActiveSums<'w> {
    const MAX_CHURN: f64 = 1e3;

    fn new(n: usize, dim: usize, weights: &'w [f64]) -> Self {
        ActiveSums {
            dim,
            weights,
            rows: Vec::new(),
            slot: vec![usize::MAX; n],
            sums: vec![0.0; dim],
            churn: 0.0,
        }
    }

    fn row(&self, i: usize) -> &'w [f64] {
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }

    fn insert(&mut self, i: usize) {
        self.slot[i] = self.rows.len();
        self.rows.push(i);
        let row = self.row(i);
        for (s, w) in self.sums.iter_mut().zip(row) {
            *s += w;
        }
        self.churn += row[0].abs();
    }

    fn remove(&mut self, i: usize) {
        let at = self.slot[i];
        self.rows.swap_remove(at);
        if let Some(&moved) = self.rows.get(at) {
            self.slot[moved] = at;
        }
        self.slot[i] = usize::MAX;
        let row = self.row(i);
        for (s, w) in self.sums.iter_mut().zip(row) {
            *s -= w;
        }
        self.churn += row[0].abs();
    }

    fn total(&mut self) -> &[f64] {
        if self.churn > Self::MAX_CHURN * self.sums[0].abs() {
            self.sums.fill(0.0);
            for &i in &self.rows {
                let row = &self.weights[i * self.dim..(i + 1) * self.dim];
                for (s, w) in self.sums.iter_mut().zip(row) {
                    *s += w;
                }
            }
            self.churn = self.sums[0].abs();
        }
        &self.sums
    }
}

pub(crate) struct RcrInterval {
    pub unit: usize,
    pub n: u32,
}

pub(crate) struct RcrEvent {
    pub unit: usize,
    pub n: u32,
    pub query: usize,
}

/// Risk set of one recurrent risk on its effective-age scale.
pub(crate) struct RcrRiskSet {
    pub intervals: Vec<RcrInterval>,
    pub events: Vec<RcrEvent>,
    pub sweep: Sweep,
}

pub(crate) struct TeInterval {
    pub unit: usize,
    pub counts: Vec<u32>,
}

pub(crate) struct TeEvent {
    pub unit: usize,
    pub counts: Vec<u32>,
    pub query: usize,
}

/// Risk set of the terminal event on the calendar scale.
pub(crate) struct TeRiskSet {
    pub intervals: Vec<TeInterval>,
    pub events: Vec<TeEvent>,
    pub sweep: Sweep,
}

pub(crate) struct Prepared<'a> {
    pub data: &'a Dataset,
    pub rcr: Vec<RcrRiskSet>,
    pub te: TeRiskSet,
}

/// Interval bounds, intervals and events of one risk, gathered per unit.
type RcrParts = (Vec<f64>, Vec<f64>, Vec<RcrInterval>, Vec<(usize, u32, f64)>);

impl<'a> Prepared<'a> {
    pub fn new(data: &'a Dataset, mode: RepairMode) -> Self {
        let q_count = data.q();
        let mut rcr_parts: Vec<RcrParts> = (0..q_count).map(|_| Default::default()).collect();
        let (mut te_lo, mut te_hi, mut te_iv) = (Vec::new(), Vec::new(), Vec::new());
        let mut te_ev: Vec<(usize, Vec<u32>, f64)> = Vec::new();

        for (ui, unit) in data.units().iter().enumerate() {
            let segments = unit.segments(mode);
            for seg in &segments {
                for (q, part) in rcr_parts.iter_mut().enumerate() {
                    let (lo, hi) = seg.age_range(q);
                    let n = seg.counts.get(q);
                    part.0.push(lo);
                    part.1.push(hi);
                    part.2.push(RcrInterval { unit: ui, n });
                    if seg.closing == Some(q) {
                        part.3.push((ui, n, hi));
                    }
                }
                te_lo.push(seg.start);
                te_hi.push(seg.end);
                te_iv.push(TeInterval {
                    unit: ui,
                    counts: seg.counts.as_slice().to_vec(),
                });
            }
            if let Some(t) = unit.te_time() {
                let last = segments.last().expect("at least one segment");
                te_ev.push((ui, last.counts.as_slice().to_vec(), t));
            }
        }

        let rcr = rcr_parts
            .into_iter()
            .map(|(lo, hi, intervals, raw)| {
                let sweep = Sweep::new(lo, hi, raw.iter().map(|e| e.2).collect());
                let events = raw
                    .into_iter()
                    .map(|(unit, n, age)| RcrEvent {
                        unit,
                        n,
                        query: sweep.query_index(age),
                    })
                    .collect();
                RcrRiskSet {
                    intervals,
                    events,
                    sweep,
                }
            })
            .collect();

        let sweep = Sweep::new(te_lo, te_hi, te_ev.iter().map(|e| e.2).collect());
        let events = te_ev
            .into_iter()
            .map(|(unit, counts, t)| TeEvent {
                unit,
                counts,
                query: sweep.query_index(t),
            })
            .collect();
        Prepared {
            data,
            rcr,
            te: TeRiskSet {
                intervals: te_iv,
                events,
                sweep,
            },
        }
    }

}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(rho, d rho / d coefficient-scale)` of `1 + lin`, zero slope when floored.
#[inline]
pub(crate) fn floored(lin: f64) -> (f64, bool) {
    let raw = 1.0 + lin;
    if raw > RHO_FLOOR {
        (raw, true)
    } else {
        (RHO_FLOOR, false)
    }
}

impl RcrRiskSet {
    /// Aggregate at-risk sums at each query: `[S, dS/dalpha, dS/dbeta_1..p]`.
    pub fn aggregates(
        &self,
        data: &Dataset,
        alpha: f64,
        beta: &[f64],
        z: &[f64],
        with_derivatives: bool,
    ) -> (usize, Vec<f64>) {
        let p = beta.len();
        let dim = if with_derivatives { 2 + p } else { 1 };
        let units = data.units();
        let exb: Vec<f64> = units
            .iter()
            .map(|u| dot(u.covariates(), beta).exp())
            .collect();
        let mut weights = vec![0.0; self.intervals.len() * dim];
        for (i, iv) in self.intervals.iter().enumerate() {
            let (rho, live) = floored(alpha * iv.n as f64);
            let base = z[iv.unit] * exb[iv.unit];
            let c = base * rho;
            let row = &mut weights[i * dim..(i + 1) * dim];
            row[0] = c;
            if with_derivatives {
                row[1] = if live { base * iv.n as f64 } else { 0.0 };
                for (k, x) in units[iv.unit].covariates().iter().enumerate() {
                    row[2 + k] = c * x;
                }
            }
        }
        (dim, self.sweep.accumulate(dim, &weights))
    }
}

impl TeRiskSet {
    /// Aggregate at-risk sums at each query: `[S, dS/dgamma_1..Q, dS/dbeta_1..p]`.
    pub fn aggregates(
        &self,
        data: &Dataset,
        gamma: &[f64],
        beta: &[f64],
        z: &[f64],
        with_derivatives: bool,
    ) -> (usize, Vec<f64>) {
        let (q, p) = (gamma.len(), beta.len());
        let dim = if with_derivatives { 1 + q + p } else { 1 };
        let units = data.units();
        let exb: Vec<f64> = units
            .iter()
            .map(|u| dot(u.covariates(), beta).exp())
            .collect();
        let mut weights = vec![0.0; self.intervals.len() * dim];
        for (i, iv) in self.intervals.iter().enumerate() {
            let lin: f64 = iv
                .counts
                .iter()
                .zip(gamma)
                .map(|(&n, &g)| n as f64 * g)
                .sum();
            let (rho, live) = floored(lin);
            let base = z[iv.unit] * exb[iv.unit];
            let c = base * rho;
            let row = &mut weights[i * dim..(i + 1) * dim];
            row[0] = c;
            if with_derivatives {
                for k in 0..q {
                    row[1 + k] = if live { base * iv.counts[k] as f64 } else { 0.0 };
                }
                for (k, x) in units[iv.unit].covariates().iter().enumerate() {
                    row[1 + q + k] = c * x;
                }
            }
        }
        (dim, self.sweep.accumulate(dim, &weights))
    }
}
