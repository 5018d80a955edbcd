//! Brute-force reference computations, written directly from the model
//! definitions and sharing no code with the library.

use rcrte_core::estimation::{Baselines, StepFunction};
use rcrte_core::{Dataset, FiniteDimParams, RepairMode, UnitHistory};

pub const FLOOR: f64 = 1e-8;

pub fn rho(lin: f64) -> f64 {
    (1.0 + lin).max(FLOOR)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Events of each risk strictly before `v`.
pub fn counts_before(u: &UnitHistory, v: f64) -> Vec<u32> {
    let mut c = vec![0; u.q()];
    for e in u.events().iter().filter(|e| e.time < v) {
        c[e.risk] += 1;
    }
    c
}

/// One inter-event interval seen on the age scale of a single risk.
pub struct AgeInterval {
    pub lo: f64,
    pub hi: f64,
    /// Risk-`q` events before the interval.
    pub n: u32,
    /// Risk of the event closing the interval.
    pub closing: Option<usize>,
}

pub fn age_intervals(u: &UnitHistory, q: usize, mode: RepairMode) -> Vec<AgeInterval> {
    let ev = u.events();
    let mut out = Vec::new();
    for j in 0..=ev.len() {
        let start = if j == 0 { 0.0 } else { ev[j - 1].time };
        let end = if j < ev.len() { ev[j].time } else { u.end_time() };
        let anchor = match mode {
            RepairMode::Perfect => start,
            RepairMode::Partial => ev[..j]
                .iter()
                .rev()
                .find(|e| e.risk == q)
                .map_or(0.0, |e| e.time),
        };
        out.push(AgeInterval {
            lo: start - anchor,
            hi: end - anchor,
            n: ev[..j].iter().filter(|e| e.risk == q).count() as u32,
            closing: ev.get(j).map(|e| e.risk),
        });
    }
    out
}

/// Weighted at-risk sum of risk `q` at age `w` and its derivatives in
/// `(alpha, beta)`.
pub fn rcr_at_risk(
    data: &Dataset,
    mode: RepairMode,
    q: usize,
    alpha: f64,
    beta: &[f64],
    z: &[f64],
    w: f64,
) -> (f64, Vec<f64>) {
    let mut s = 0.0;
    let mut ds = vec![0.0; 1 + beta.len()];
    for (u, &zi) in data.units().iter().zip(z) {
        let x = u.covariates();
        let exb = dot(x, beta).exp();
        for iv in age_intervals(u, q, mode) {
            if iv.lo < w && w <= iv.hi {
                let lin = alpha * iv.n as f64;
                let r = rho(lin);
                let weight = zi * r * exb;
                s += weight;
                if 1.0 + lin > FLOOR {
                    ds[0] += zi * iv.n as f64 * exb;
                }
                for k in 0..x.len() {
                    ds[1 + k] += weight * x[k];
                }
            }
        }
    }
    (s, ds)
}

/// Risk-`q` events as (unit, age at the event, risk-`q` count before it).
pub fn rcr_events(data: &Dataset, mode: RepairMode, q: usize) -> Vec<(usize, f64, u32)> {
    let mut out = Vec::new();
    for (i, u) in data.units().iter().enumerate() {
        for iv in age_intervals(u, q, mode) {
            if iv.closing == Some(q) {
                out.push((i, iv.hi, iv.n));
            }
        }
    }
    out
}

/// Score of the risk-`q` partial likelihood in `(alpha, beta)`.
pub fn score_rcr(
    data: &Dataset,
    mode: RepairMode,
    q: usize,
    alpha: f64,
    beta: &[f64],
    z: &[f64],
) -> Vec<f64> {
    let mut u = vec![0.0; 1 + beta.len()];
    for (i, w, n) in rcr_events(data, mode, q) {
        let x = data.units()[i].covariates();
        let (s, ds) = rcr_at_risk(data, mode, q, alpha, beta, z, w);
        u[0] += n as f64 / rho(alpha * n as f64) - ds[0] / s;
        for k in 0..x.len() {
            u[1 + k] += x[k] - ds[1 + k] / s;
        }
    }
    u
}

/// Weighted terminal-event at-risk sum at calendar time `v` and its
/// derivatives in `(gamma, beta)`.
pub fn te_at_risk(data: &Dataset, gamma: &[f64], beta: &[f64], z: &[f64], v: f64) -> (f64, Vec<f64>) {
    let q = gamma.len();
    let mut s = 0.0;
    let mut ds = vec![0.0; q + beta.len()];
    for (u, &zi) in data.units().iter().zip(z) {
        if u.end_time() < v {
            continue;
        }
        let x = u.covariates();
        let c = counts_before(u, v);
        let lin: f64 = c.iter().zip(gamma).map(|(&n, g)| n as f64 * g).sum();
        let exb = dot(x, beta).exp();
        let weight = zi * rho(lin) * exb;
        s += weight;
        if 1.0 + lin > FLOOR {
            for k in 0..q {
                ds[k] += zi * c[k] as f64 * exb;
            }
        }
        for k in 0..x.len() {
            ds[q + k] += weight * x[k];
        }
    }
    (s, ds)
}

pub fn score_te(data: &Dataset, gamma: &[f64], beta: &[f64], z: &[f64]) -> Vec<f64> {
    let q = gamma.len();
    let mut u = vec![0.0; q + beta.len()];
    for unit in data.units() {
        let Some(t) = unit.te_time() else { continue };
        let x = unit.covariates();
        let c = counts_before(unit, t);
        let lin: f64 = c.iter().zip(gamma).map(|(&n, g)| n as f64 * g).sum();
        let (s, ds) = te_at_risk(data, gamma, beta, z, t);
        for k in 0..q {
            u[k] += c[k] as f64 / rho(lin) - ds[k] / s;
        }
        for k in 0..x.len() {
            u[q + k] += x[k] - ds[q + k] / s;
        }
    }
    u
}

/// Textbook Nelson–Aalen estimator of the terminal-event hazard: at each
/// distinct event time, events over units still under observation.
pub fn nelson_aalen_textbook(data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let mut times: Vec<f64> = data.units().iter().filter_map(|u| u.te_time()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sizes = times
        .iter()
        .map(|&t| {
            let d = data.units().iter().filter(|u| u.te_time() == Some(t)).count();
            let r = data.units().iter().filter(|u| u.end_time() >= t).count();
            d as f64 / r as f64
        })
        .collect();
    (times, sizes)
}

pub fn nelson_aalen_te(data: &Dataset, gamma: &[f64], beta: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (times, _) = nelson_aalen_textbook(data);
    let sizes = times
        .iter()
        .map(|&t| {
            let d = data.units().iter().filter(|u| u.te_time() == Some(t)).count();
            d as f64 / te_at_risk(data, gamma, beta, z, t).0
        })
        .collect();
    (times, sizes)
}

pub fn nelson_aalen_rcr(
    data: &Dataset,
    mode: RepairMode,
    q: usize,
    alpha: f64,
    beta: &[f64],
    z: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let events = rcr_events(data, mode, q);
    let mut ages: Vec<f64> = events.iter().map(|e| e.1).collect();
    ages.sort_by(f64::total_cmp);
    ages.dedup();
    let sizes = ages
        .iter()
        .map(|&w| {
            let d = events.iter().filter(|e| e.1 == w).count();
            d as f64 / rcr_at_risk(data, mode, q, alpha, beta, z, w).0
        })
        .collect();
    (ages, sizes)
}

fn jumps_in(b: &StepFunction, lo: f64, hi: f64) -> f64 {
    b.locations()
        .iter()
        .zip(b.sizes())
        .filter(|(&w, _)| lo < w && w <= hi)
        .map(|(_, s)| s)
        .sum()
}

/// Frailty-free cumulative intensity of all processes over the unit's
/// whole observation window.
pub fn compensator(u: &UnitHistory, mode: RepairMode, params: &FiniteDimParams, b: &Baselines) -> f64 {
    let x = u.covariates();
    let mut total = 0.0;
    for (q, base) in b.rcr.iter().enumerate() {
        let exb = dot(x, &params.beta_rcr[q]).exp();
        for iv in age_intervals(u, q, mode) {
            total += rho(params.alpha[q] * iv.n as f64) * exb * jumps_in(base, iv.lo, iv.hi);
        }
    }
    let exb = dot(x, &params.beta_te).exp();
    for (&v, &size) in b.te.locations().iter().zip(b.te.sizes()) {
        if v <= u.end_time() {
            let lin: f64 = counts_before(u, v)
                .iter()
                .zip(&params.gamma)
                .map(|(&n, g)| n as f64 * g)
                .sum();
            total += rho(lin) * exb * size;
        }
    }
    total
}

/// Mean and mean log of the density proportional to
/// `z^(shape - 1) exp(-rate z)`, by quadrature on the log scale.
pub fn gamma_moments_by_quadrature(shape: f64, rate: f64) -> (f64, f64) {
    use quadrature::double_exponential::integrate;
    let m = (shape / rate).ln();
    // log density in s = ln z, shifted to 0 at its mode
    let log_f = move |s: f64| shape * (s - m) - rate * (s.exp() - (shape / rate));
    let lo = m - 60.0 / shape - 5.0;
    let hi = m + (1.0 + 80.0 / shape).ln() + 2.0;
    let i0 = integrate(|s| log_f(s).exp(), lo, hi, 1e-14).integral;
    let i1 = integrate(|s| (log_f(s) + s).exp(), lo, hi, 1e-14).integral;
    let il = integrate(|s| s * log_f(s).exp(), lo, hi, 1e-14).integral;
    (i1 / i0, il / i0)
}

/// Asymptotic Kolmogorov p-value of a one-sample KS statistic `d` from `n`
/// draws.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Largest gap between the empirical CDF of `sample` and `cdf`.
pub fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}
