use serde::{Deserialize, Serialize};

use super::walk::SimulatedPath;
use crate::estimation::SurvivalCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub p025: f64,
    pub p975: f64,
    pub min: f64,
    pub max: f64,
}

impl DistributionStats {
    fn from_values(mut v: Vec<f64>) -> Self {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        DistributionStats {
            mean,
            sd,
            median: quantile(&v, 0.5),
            p025: quantile(&v, 0.025),
            p975: quantile(&v, 0.975),
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

/// Linearly interpolated sample quantile of sorted data (R type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub paths: usize,
    pub ttte: DistributionStats,
    pub te_time: DistributionStats,
    /// Per-risk mean and median of simulated counts per path.
    pub risk_mean: Vec<f64>,
    pub risk_median: Vec<f64>,
    pub observed_total: u32,
    pub mean_simulated_total: f64,
    /// Observed plus mean simulated recurrent events.
    pub mean_total: f64,
}

impl EnsembleSummary {
    pub fn from_paths(observed_counts: &[u32], paths: &[SimulatedPath]) -> Self {
        let q = observed_counts.len();
        let m = paths.len() as f64;
        let mut risk_mean = Vec::with_capacity(q);
        let mut risk_median = Vec::with_capacity(q);
        for k in 0..q {
            let mut c: Vec<f64> = paths.iter().map(|p| p.counts[k] as f64).collect();
            risk_mean.push(c.iter().sum::<f64>() / m);
            c.sort_by(f64::total_cmp);
            risk_median.push(quantile(&c, 0.5));
        }
        let mean_simulated_total = paths
            .iter()
            .map(|p| p.counts.iter().sum::<u32>() as f64)
            .sum::<f64>()
            / m;
        let observed_total: u32 = observed_counts.iter().sum();
        EnsembleSummary {
            paths: paths.len(),
            ttte: DistributionStats::from_values(paths.iter().map(|p| p.ttte).collect()),
            te_time: DistributionStats::from_values(paths.iter().map(|p| p.te_time).collect()),
            risk_mean,
            risk_median,
            observed_total,
            mean_simulated_total,
            mean_total: observed_total as f64 + mean_simulated_total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    /// Monitoring time the simulation started from.
    pub tau0: f64,
    pub z_hat: f64,
    pub observed_counts: Vec<u32>,
    pub paths: Vec<SimulatedPath>,
    pub summary: EnsembleSummary,
}

impl PredictiveDistribution {
    pub fn new(tau0: f64, z_hat: f64, observed_counts: Vec<u32>, paths: Vec<SimulatedPath>) -> Self {
        let summary = EnsembleSummary::from_paths(&observed_counts, &paths);
        PredictiveDistribution {
            tau0,
            z_hat,
            observed_counts,
            paths,
            summary,
        }
    }

    pub fn ttte_values(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.ttte).collect()
    }
}

/// Fraction of paths whose terminal event falls later than `s` past the
/// monitoring time.
pub fn predicted_survival(dist: &PredictiveDistribution, s: f64) -> f64 {
    let alive = dist.paths.iter().filter(|p| p.ttte > s).count();
    alive as f64 / dist.paths.len() as f64
}

/// Predicted survival as a step function of the horizon.
pub fn survival_curve(dist: &PredictiveDistribution) -> SurvivalCurve {
    let mut t = dist.ttte_values();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let values = t.iter().map(|&s| predicted_survival(dist, s)).collect();
    SurvivalCurve { times: t, values }
}
