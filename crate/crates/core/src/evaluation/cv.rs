use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{brier_table, km_monitoring, BrierResult};
use crate::error::{Error, Result};
use crate::estimation::{fit_em, EmConfig};
use crate::event_model::{Dataset, RepairMode};
use crate::par;
use crate::prediction::path_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    /// Base time: test histories are truncated here.
    pub v: f64,
    pub horizons: Vec<f64>,
    /// Paths per test unit.
    pub paths: usize,
    pub seed: u64,
    pub repair_mode: RepairMode,
    pub em: EmConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            v: 0.8,
            horizons: (0..7).map(|i| (45 + 5 * i) as f64 / 100.0).collect(),
            paths: 500,
            seed: 0,
            repair_mode: RepairMode::Partial,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: bool,
    /// Why a skipped fold produced no scores.
    pub note: Option<String>,
    pub converged: bool,
    pub results: Vec<BrierResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonAverage {
    pub t: f64,
    pub mean_score: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub averaged: Vec<HorizonAverage>,
}

/// Fold label of every unit. Units are ordered by id, shuffled with `seed`
/// and cut into `k` contiguous blocks whose sizes differ by at most one.
pub fn assign_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > data.len() {
        return Err(Error::InvalidInput(format!(
            "fold count {k} must lie in [2, {}]",
            data.len()
        )));
    }
    let order = id_order(data);
    let mut shuffled = order.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = data.len();
    let mut folds = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &shuffled[pos..pos + size] {
            folds[i] = f;
        }
        pos += size;
    }
    Ok(folds)
}

fn id_order(data: &Dataset) -> Vec<usize> {
    let units = data.units();
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| units[a].id().cmp(units[b].id()).then(a.cmp(&b)));
    order
}

fn run_fold(
    data: &Dataset,
    cfg: &CvConfig,
    folds: &[usize],
    rank: &[u64],
    fold: usize,
) -> Result<FoldResult> {
    let test_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == fold).collect();
    let train_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != fold).collect();
    let train = data.subset(&train_idx);
    let test = data.subset(&test_idx);
    let mut result = FoldResult {
        fold,
        n_train: train.len(),
        n_test: test.len(),
        skipped: true,
        note: None,
        converged: false,
        results: Vec::new(),
    };
    let mut skip = |note: String| {
        log::warn!("fold {}: {note}; skipped", fold + 1);
        result.note = Some(note);
    };
    if train.te_count() == 0 {
        skip("no terminal events in the training split".into());
        return Ok(result);
    }
    let fitted = match fit_em(&train, cfg.repair_mode, &cfg.em) {
        Ok(m) => m,
        Err(e) if !e.is_input_error() => {
            skip(format!("fit failed: {e}"));
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    if !fitted.diagnostics.converged {
        log::warn!("fold {}: EM did not converge; using the last iterate", fold + 1);
    }
    let km = km_monitoring(train.units())?;
    let fold_seed = path_seed(cfg.seed, fold as u64);
    let seeds: Vec<u64> = test_idx.iter().map(|&i| path_seed(fold_seed, rank[i])).collect();
    match brier_table(&fitted, &test, &km, cfg.v, &cfg.horizons, cfg.paths, &seeds) {
        Ok(results) => {
            result.skipped = false;
            result.converged = fitted.diagnostics.converged;
            result.results = results;
        }
        Err(Error::EmptyAtRiskSet { .. }) => skip(format!("no test unit at risk at {}", cfg.v)),
        Err(e) if !e.is_input_error() => skip(format!("prediction failed: {e}")),
        Err(e) => return Err(e),
    }
    Ok(result)
}

/// Fits on each training split and scores predictions for the held-out
/// units. Folds without terminal events in training, or whose fit or
/// prediction fails numerically, are skipped with a note.
pub fn k_fold_cv(data: &Dataset, cfg: &CvConfig) -> Result<CvReport> {
    if cfg.horizons.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidInput("horizons must be finite and nonnegative".into()));
    }
    if !(cfg.v.is_finite() && cfg.v > 0.0) {
        return Err(Error::InvalidInput(format!("invalid base time {}", cfg.v)));
    }
    let folds = assign_folds(data, cfg.k, cfg.seed)?;
    let mut rank = vec![0u64; data.len()];
    for (r, i) in id_order(data).into_iter().enumerate() {
        rank[i] = r as u64;
    }

    let out = par::map_indexed(cfg.k, |fold| run_fold(data, cfg, &folds, &rank, fold))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let averaged = cfg
        .horizons
        .iter()
        .enumerate()
        .map(|(h, &t)| {
            let scores: Vec<f64> = out
                .iter()
                .filter(|f| !f.skipped)
                .map(|f| f.results[h].score)
                .collect();
            HorizonAverage {
                t,
                mean_score: if scores.is_empty() {
                    f64::NAN
                } else {
                    scores.iter().sum::<f64>() / scores.len() as f64
                },
                folds: scores.len(),
            }
        })
        .collect();
    Ok(CvReport {
        folds: out,
        averaged,
    })
}
