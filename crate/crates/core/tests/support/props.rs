//! Invariant properties. Each runs a deterministic proptest runner for a
//! given number of cases and reports the first failure.

use std::fmt::Debug;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rcrte_core::estimation::{
    baseline_nelson_aalen_rcr, baseline_nelson_aalen_te, e_step, ple_survival, solve_score_rcr,
    solve_score_te, update_xi, xi_objective, FrailtyPosterior, SolverConfig, SurvivalCurve,
    UnitFrailty, XiConfig,
};
use rcrte_core::evaluation::{empirical_brier, ipcw_weight, km_monitoring, predict_survival_at, KmEstimate};
use rcrte_core::event_model::{rho_rcr, rho_te, RHO_FLOOR};
use rcrte_core::par;
use rcrte_core::prediction::{
    predicted_survival, quantile, simulate_ensemble, simulate_path, survival_curve, NewUnitState,
};
use rcrte_core::synthgen::{generate_dataset, generate_unit};
use rcrte_core::{fit_em, Dataset, EmConfig, Event, EventCounts, RepairMode, UnitHistory};

use super::oracle;
use super::strategies::*;

pub type Property = fn(u32) -> Result<(), String>;

/// Every invariant with its name.
pub const ALL: &[(&str, Property)] = &[
    ("effective age is bounded with unit slope", age_bounded_with_unit_slope),
    ("effective age resets by repair mode", age_resets_by_mode),
    ("perfect-repair age never exceeds partial", perfect_age_not_above_partial),
    ("count modulators are floored and monotone", rho_floor_and_monotone),
    ("counts are monotone left limits", counts_at_monotone_and_exact),
    ("recurrent baseline matches brute force", nelson_aalen_rcr_matches_brute_force),
    ("terminal baseline matches brute force", nelson_aalen_te_matches_brute_force),
    ("terminal baseline reduces to the textbook estimator", nelson_aalen_te_textbook),
    ("posterior identities hold", e_step_identities),
    ("product-limit survival is a survival curve", ple_is_survival_curve),
    ("returned score solutions meet tolerance", score_solutions_meet_tolerance),
    ("frailty update is a local maximum", xi_update_is_local_max),
    ("EM is deterministic", fit_em_is_deterministic),
    ("paths start after monitoring and increase", paths_are_ordered),
    ("simulated ages follow the repair mode", age_traces_follow_repair_mode),
    ("predicted survival is one minus the ECDF", survival_is_one_minus_ecdf),
    ("summaries recompute from raw paths", summaries_recompute_from_paths),
    ("ensembles are deterministic", ensembles_are_deterministic),
    ("prediction ignores events after the base time", prediction_ignores_future),
    ("Kaplan-Meier without censoring is empirical", km_without_censoring_is_empirical),
    ("censoring weights are one under flat censoring", ipcw_is_one_under_flat_censoring),
    ("Brier score closed forms", brier_closed_forms),
    ("Brier score ignores unit order", brier_ignores_unit_order),
    ("generated histories are valid", generated_histories_are_valid),
];

fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn history_and_mode() -> impl Strategy<Value = (UnitHistory, RepairMode)> {
    (1usize..=3, 0usize..=1).prop_flat_map(|(q, p)| (unit(q, p, true), mode()))
}

/// Calendar boundaries `0, t_1, ..., end` of a history.
fn boundaries(u: &UnitHistory) -> Vec<f64> {
    let mut b = vec![0.0];
    b.extend(u.events().iter().map(|e| e.time));
    b.push(u.end_time());
    b
}

pub fn age_bounded_with_unit_slope(cases: u32) -> Result<(), String> {
    check(cases, (history_and_mode(), 0.05f64..0.95, 0.05f64..0.95), |((u, mode), f1, f2)| {
        let b = boundaries(&u);
        for w in b.windows(2) {
            let (a, c) = (w[0], w[1]);
            let (v1, v2) = (a + f1.min(f2) * (c - a), a + f1.max(f2) * (c - a));
            for q in 0..u.q() {
                let (e1, e2) = (u.effective_age(q, v1, mode).unwrap(), u.effective_age(q, v2, mode).unwrap());
                prop_assert!(e1 <= v1 && e2 <= v2);
                prop_assert!(e1 >= 0.0);
                prop_assert!(((e2 - e1) - (v2 - v1)).abs() < 1e-12, "slope {}", (e2 - e1) / (v2 - v1));
            }
        }
        Ok(())
    })
}

pub fn age_resets_by_mode(cases: u32) -> Result<(), String> {
    check(cases, history_and_mode(), |(u, mode)| {
        let b = boundaries(&u);
        for (j, e) in u.events().iter().enumerate() {
            let eps = 1e-3 * (b[j + 2] - b[j + 1]);
            let after = e.time + eps;
            for q in 0..u.q() {
                let age = u.effective_age(q, after, mode).unwrap();
                let before = u.effective_age(q, e.time, mode).unwrap();
                if mode == RepairMode::Perfect || q == e.risk {
                    prop_assert!((age - eps).abs() < 1e-12, "age {age} just after a reset");
                } else {
                    prop_assert!((age - before - eps).abs() < 1e-12, "age of risk {q} jumped");
                }
            }
        }
        Ok(())
    })
}

pub fn perfect_age_not_above_partial(cases: u32) -> Result<(), String> {
    check(cases, (history_and_mode(), prop::collection::vec(0.0f64..1.0, 8)), |((u, _), fr)| {
        for f in fr {
            let v = f * u.end_time();
            for q in 0..u.q() {
                let perfect = u.effective_age(q, v, RepairMode::Perfect).unwrap();
                let partial = u.effective_age(q, v, RepairMode::Partial).unwrap();
                prop_assert!(perfect <= partial, "q {q} v {v}: {perfect} > {partial}");
            }
        }
        Ok(())
    })
}

pub fn rho_floor_and_monotone(cases: u32) -> Result<(), String> {
    let strategy = (1usize..=4).prop_flat_map(|q| {
        (
            prop::collection::vec(0u32..20, q),
            prop::collection::vec(-5.0f64..5.0, q),
            0..q,
        )
    });
    check(cases, strategy, |(counts, coef, k)| {
        let c = EventCounts::from_vec(counts.clone());
        let mut up = counts.clone();
        up[k] += 1;
        let c_up = EventCounts::from_vec(up);
        let r = rho_rcr(&c, k, coef[k]);
        prop_assert!(r >= RHO_FLOOR && RHO_FLOOR > 0.0);
        prop_assert_eq!(r, oracle::rho(coef[k] * counts[k] as f64));
        let t = rho_te(&c, &coef).unwrap();
        prop_assert!(t >= RHO_FLOOR);
        if coef[k] >= 0.0 {
            prop_assert!(rho_rcr(&c_up, k, coef[k]) >= r);
        }
        let nonneg: Vec<f64> = coef.iter().map(|g| g.abs()).collect();
        prop_assert!(rho_te(&c_up, &nonneg).unwrap() >= rho_te(&c, &nonneg).unwrap());
        Ok(())
    })
}

pub fn counts_at_monotone_and_exact(cases: u32) -> Result<(), String> {
    check(cases, (history_and_mode(), 0.0f64..1.2, 0.0f64..1.2), |((u, _), a, b)| {
        let (v1, v2) = (a.min(b) * u.end_time(), a.max(b) * u.end_time());
        let (c1, c2) = (u.counts_at(v1), u.counts_at(v2));
        for q in 0..u.q() {
            prop_assert!(c1.get(q) <= c2.get(q));
        }
        for v in [v1, v2] {
            prop_assert_eq!(u.counts_at(v).as_slice().to_vec(), oracle::counts_before(&u, v));
            let before = u.events().iter().filter(|e| e.time < v).count() as u32;
            prop_assert_eq!(u.counts_at(v).total(), before);
        }
        // an event time itself is not yet counted
        for e in u.events() {
            prop_assert_eq!(u.counts_at(e.time).as_slice().to_vec(), oracle::counts_before(&u, e.time));
        }
        Ok(())
    })
}

fn data_params_mode() -> impl Strategy<Value = (Dataset, Vec<f64>, rcrte_core::FiniteDimParams, RepairMode)> {
    dataset_with_frailties(8).prop_flat_map(|(d, z)| {
        let (q, p) = (d.q(), d.p());
        (Just(d), Just(z), params(q, p), mode())
    })
}

fn assert_steps(found: (&[f64], &[f64]), expected: (Vec<f64>, Vec<f64>), rel: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(found.0, expected.0.as_slice());
    for (a, b) in found.1.iter().zip(&expected.1) {
        prop_assert!(close(*a, *b, rel), "jump {a} vs {b}");
        prop_assert!(*a > 0.0);
    }
    Ok(())
}

pub fn nelson_aalen_rcr_matches_brute_force(cases: u32) -> Result<(), String> {
    check(cases, data_params_mode(), |(d, z, pr, mode)| {
        for q in 0..d.q() {
            let est = baseline_nelson_aalen_rcr(&d, mode, q, pr.alpha[q], &pr.beta_rcr[q], &z);
            if d.event_count(q) == 0 {
                prop_assert!(est.map_or(true, |b| b.is_empty()));
                continue;
            }
            let est = est.map_err(|e| TestCaseError::fail(e.to_string()))?;
            let expected = oracle::nelson_aalen_rcr(&d, mode, q, pr.alpha[q], &pr.beta_rcr[q], &z);
            assert_steps((est.locations(), est.sizes()), expected, 1e-12)?;
        }
        Ok(())
    })
}

pub fn nelson_aalen_te_matches_brute_force(cases: u32) -> Result<(), String> {
    check(cases, data_params_mode(), |(d, z, pr, _)| {
        let est = baseline_nelson_aalen_te(&d, &pr.gamma, &pr.beta_te, &z).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let expected = oracle::nelson_aalen_te(&d, &pr.gamma, &pr.beta_te, &z);
        assert_steps((est.locations(), est.sizes()), expected, 1e-12)
    })
}

/// Unit frailties, no count or covariate effects.
pub fn nelson_aalen_te_textbook(cases: u32) -> Result<(), String> {
    check(cases, dataset(10, true), |d| {
        let (z, gamma, beta) = (vec![1.0; d.len()], vec![0.0; d.q()], vec![0.0; d.p()]);
        let est = baseline_nelson_aalen_te(&d, &gamma, &beta, &z).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (times, sizes) = oracle::nelson_aalen_textbook(&d);
        prop_assert_eq!(est.locations(), times.as_slice());
        for (a, b) in est.sizes().iter().zip(&sizes) {
            prop_assert!((a - b).abs() <= 1e-12, "jump {a} vs {b}");
        }
        Ok(())
    })
}

pub fn e_step_identities(cases: u32) -> Result<(), String> {
    let strategy = data_params_mode().prop_flat_map(|(d, _, pr, mode)| {
        let q = d.q();
        (Just(d), Just(pr), Just(mode), baselines(q))
    });
    check(cases, strategy, |(d, pr, mode, b)| {
        let post = e_step(&d, mode, &pr, &b).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(post.len(), d.len());
        for (u, f) in d.units().iter().zip(&post.units) {
            prop_assert_eq!(f.mean, f.shape / f.rate);
            let count = u.events().len() + usize::from(u.has_te());
            prop_assert_eq!((f.shape - pr.xi).round() as usize, count);
            prop_assert!((f.shape - pr.xi - count as f64).abs() < 1e-12);
            prop_assert!(f.shape >= pr.xi && f.rate >= pr.xi);
            let comp = oracle::compensator(u, mode, &pr, &b);
            prop_assert!(close(f.rate, pr.xi + comp, 1e-12), "rate {} vs {}", f.rate, pr.xi + comp);
        }
        Ok(())
    })
}

pub fn ple_is_survival_curve(cases: u32) -> Result<(), String> {
    check(cases, step(10, 1.0), |b| {
        let s = ple_survival(&b).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(s.eval(0.0), 1.0);
        if let Some(&first) = b.locations().first() {
            prop_assert_eq!(s.eval_left(first), 1.0);
        }
        let mut product = 1.0;
        let mut prev = 1.0;
        for (k, &t) in b.locations().iter().enumerate() {
            product *= 1.0 - b.sizes()[k];
            let v = s.eval(t);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= prev);
            prop_assert!((v - product).abs() < 1e-12);
            prev = v;
        }
        Ok(())
    })
}

fn informative_rcr(d: &Dataset, q: usize) -> Vec<bool> {
    let mut out = vec![d.event_count(q) > 0];
    out.extend((0..d.p()).map(|k| d.units().iter().any(|u| u.covariates()[k] != 0.0)));
    out
}

fn informative_te(d: &Dataset) -> Vec<bool> {
    let mut out: Vec<bool> = (0..d.q())
        .map(|k| d.units().iter().any(|u| u.events().iter().any(|e| e.risk == k)))
        .collect();
    out.extend((0..d.p()).map(|k| d.units().iter().any(|u| u.covariates()[k] != 0.0)));
    out
}

pub fn score_solutions_meet_tolerance(cases: u32) -> Result<(), String> {
    let cfg = SolverConfig::default();
    // room for summation-order differences between two exact evaluations
    let slack = 1e-9;
    check(cases, (dataset_with_frailties(8), mode()), |((d, z), mode)| {
        for q in 0..d.q() {
            let init = vec![0.0; d.p()];
            let Ok(est) = solve_score_rcr(&d, mode, q, &z, (0.0, &init), &cfg) else { continue };
            let u = oracle::score_rcr(&d, mode, q, est.alpha, &est.beta, &z);
            let theta: Vec<f64> = std::iter::once(est.alpha).chain(est.beta.iter().copied()).collect();
            for (k, free) in informative_rcr(&d, q).into_iter().enumerate() {
                if free {
                    prop_assert!(u[k].abs() < cfg.score_tol + slack, "risk {q} coordinate {k}: score {}", u[k]);
                } else {
                    prop_assert_eq!(theta[k], 0.0);
                }
            }
        }
        let (g0, b0) = (vec![0.0; d.q()], vec![0.0; d.p()]);
        if let Ok(est) = solve_score_te(&d, &z, (&g0, &b0), &cfg) {
            let u = oracle::score_te(&d, &est.gamma, &est.beta, &z);
            let theta: Vec<f64> = est.gamma.iter().chain(&est.beta).copied().collect();
            for (k, free) in informative_te(&d).into_iter().enumerate() {
                if free {
                    prop_assert!(u[k].abs() < cfg.score_tol + slack, "terminal coordinate {k}: score {}", u[k]);
                } else {
                    prop_assert_eq!(theta[k], 0.0);
                }
            }
        }
        Ok(())
    })
}

pub fn xi_update_is_local_max(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::vec((0.3f64..20.0, 0.3f64..20.0), 1..30);
    check(cases, strategy, |units| {
        let post = FrailtyPosterior {
            units: units.iter().map(|&(a, b)| UnitFrailty::from_shape_rate(a, b)).collect(),
        };
        let cfg = XiConfig::default();
        let up = update_xi(&post, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let g = xi_objective(&post, up.xi);
        let tol = 1e-9 * g.abs().max(1.0);
        let delta: f64 = 1e-3;
        if up.xi * delta.exp() <= cfg.upper {
            prop_assert!(g >= xi_objective(&post, up.xi * delta.exp()) - tol);
        }
        if up.xi * (-delta).exp() >= cfg.lower {
            prop_assert!(g >= xi_objective(&post, up.xi * (-delta).exp()) - tol);
        }
        Ok(())
    })
}

pub fn fit_em_is_deterministic(cases: u32) -> Result<(), String> {
    let cfg = EmConfig {
        max_iter: 15,
        ..EmConfig::default()
    };
    check(cases, (dataset(6, true), mode()), |(d, mode)| {
        let render = |threads: usize| {
            par::with_threads(threads, || match fit_em(&d, mode, &cfg) {
                Ok(m) => m.to_json().unwrap(),
                Err(e) => e.to_string(),
            })
        };
        let a = render(1);
        prop_assert_eq!(&a, &render(1));
        prop_assert_eq!(&a, &render(3));
        Ok(())
    })
}

pub fn paths_are_ordered(cases: u32) -> Result<(), String> {
    check(cases, (model_and_unit(), any::<u64>()), |((m, u), seed)| {
        let path = simulate_path(&u, &m, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let tau = u.tau();
        prop_assert!(path.te_time > tau);
        prop_assert_eq!(path.ttte, path.te_time - tau);
        prop_assert!(path.events.iter().all(|e| e.time > tau && e.time < path.te_time));
        prop_assert!(path.events.windows(2).all(|w| w[0].time < w[1].time));
        let mut counts = vec![0; u.q()];
        path.events.iter().for_each(|e| counts[e.risk] += 1);
        prop_assert_eq!(counts, path.counts);
        Ok(())
    })
}

pub fn age_traces_follow_repair_mode(cases: u32) -> Result<(), String> {
    check(cases, (model_and_unit(), any::<u64>()), |((m, u), seed)| {
        let path = simulate_path(&u, &m, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut state = NewUnitState::new(&u, &m).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for e in &path.events {
            let (before, clock) = (state.ages(), state.clock());
            state.record_event(e.time, e.risk).unwrap();
            let after = state.ages();
            for q in 0..u.q() {
                let expected = match m.repair_mode {
                    RepairMode::Perfect => 0.0,
                    RepairMode::Partial if q == e.risk => 0.0,
                    RepairMode::Partial => before[q] + (e.time - clock),
                };
                prop_assert!((after[q] - expected).abs() < 1e-12, "risk {q}: {} vs {expected}", after[q]);
            }
            if m.repair_mode == RepairMode::Perfect {
                prop_assert!(after.iter().all(|&a| a == after[0]));
            }
        }
        Ok(())
    })
}

pub fn survival_is_one_minus_ecdf(cases: u32) -> Result<(), String> {
    check(cases, (model_and_unit(), 1usize..40, any::<u64>(), 0.0f64..5.0), |((m, u), n, seed, extra)| {
        let dist = simulate_ensemble(&u, &m, n, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let ttte = dist.ttte_values();
        let alive = |s: f64| (n - ttte.iter().filter(|&&t| t <= s).count()) as f64 / n as f64;
        prop_assert_eq!(predicted_survival(&dist, 0.0), 1.0);
        let mut grid: Vec<f64> = ttte.iter().flat_map(|&t| [t, t * (1.0 - 1e-9), t * (1.0 + 1e-9)]).collect();
        grid.extend([0.0, extra]);
        grid.sort_by(f64::total_cmp);
        let mut prev = 1.0;
        for &s in &grid {
            let p = predicted_survival(&dist, s);
            prop_assert_eq!(p, alive(s));
            prop_assert!((0.0..=1.0).contains(&p) && p <= prev);
            prev = p;
        }
        let curve: SurvivalCurve = survival_curve(&dist);
        prop_assert!(curve.times.windows(2).all(|w| w[0] < w[1]));
        for (&t, &v) in curve.times.iter().zip(&curve.values) {
            prop_assert_eq!(v, alive(t));
            prop_assert_eq!(curve.eval(t), v);
        }
        Ok(())
    })
}

fn type7(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn summaries_recompute_from_paths(cases: u32) -> Result<(), String> {
    check(cases, (model_and_unit(), 1usize..40, any::<u64>()), |((m, u), n, seed)| {
        let dist = simulate_ensemble(&u, &m, n, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let s = &dist.summary;
        prop_assert_eq!(s.paths, n);
        let ttte = dist.ttte_values();
        let mean = ttte.iter().sum::<f64>() / n as f64;
        prop_assert!(close(s.ttte.mean, mean, 1e-12));
        if n > 1 {
            let var = ttte.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            prop_assert!(close(s.ttte.sd, var.sqrt(), 1e-9));
        } else {
            prop_assert_eq!(s.ttte.sd, 0.0);
        }
        for (stat, p) in [(s.ttte.median, 0.5), (s.ttte.p025, 0.025), (s.ttte.p975, 0.975)] {
            prop_assert_eq!(stat, type7(ttte.clone(), p));
        }
        prop_assert_eq!(s.ttte.min, ttte.iter().copied().fold(f64::INFINITY, f64::min));
        prop_assert_eq!(s.ttte.max, ttte.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        prop_assert_eq!(quantile(&[2.0], 0.3), 2.0);
        let te: Vec<f64> = dist.paths.iter().map(|p| p.te_time).collect();
        prop_assert_eq!(s.te_time.median, type7(te, 0.5));
        let mut total = 0u64;
        for k in 0..u.q() {
            let c: Vec<f64> = dist.paths.iter().map(|p| p.counts[k] as f64).collect();
            let sum: u64 = dist.paths.iter().map(|p| p.counts[k] as u64).sum();
            total += sum;
            prop_assert_eq!(s.risk_mean[k], sum as f64 / n as f64);
            prop_assert_eq!(s.risk_median[k], type7(c, 0.5));
        }
        let observed = u.final_counts().total();
        prop_assert_eq!(s.observed_total, observed);
        prop_assert!(close(s.mean_simulated_total, total as f64 / n as f64, 1e-12));
        prop_assert!(close(s.mean_total, observed as f64 + total as f64 / n as f64, 1e-12));
        Ok(())
    })
}

pub fn ensembles_are_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (model_and_unit(), 1usize..30, any::<u64>()), |((m, u), n, seed)| {
        let run = |threads| par::with_threads(threads, || simulate_ensemble(&u, &m, n, seed).map_err(|e| e.to_string()));
        let a = run(1);
        prop_assert_eq!(&a, &run(1));
        prop_assert_eq!(&a, &run(4));
        Ok(())
    })
}

pub fn prediction_ignores_future(cases: u32) -> Result<(), String> {
    let strategy = (1usize..=3, 0usize..=1).prop_flat_map(|(q, p)| (model(q, p), unit(q, p, true), 0.05f64..0.95, any::<u64>()));
    check(cases, strategy, |(m, u, f, seed)| {
        let v = f * u.end_time();
        if u.events().iter().any(|e| e.time == v) {
            return Ok(());
        }
        // same past, different future: one more event after v and a later end
        let mut events: Vec<Event> = u.events().iter().copied().filter(|e| e.time < v).collect();
        events.push(Event {
            time: v + 0.5,
            risk: 0,
        });
        let other = UnitHistory::new(u.id(), u.q(), events, v + 2.0, None, u.covariates().to_vec()).unwrap();
        let horizons = [0.1, 0.5, 1.0];
        let a = predict_survival_at(&m, &u, v, &horizons, 20, seed).map_err(|e| e.to_string());
        let b = predict_survival_at(&m, &other, v, &horizons, 20, seed).map_err(|e| e.to_string());
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn km_without_censoring_is_empirical(cases: u32) -> Result<(), String> {
    check(cases, prop::collection::vec(unit(1, 0, false), 1..20), |units| {
        let km = km_monitoring(&units).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut taus: Vec<f64> = units.iter().map(|u| u.tau()).collect();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        prop_assert_eq!(&km.curve.times, &taus);
        let n = units.len() as f64;
        for &t in &taus {
            let empirical = units.iter().filter(|u| u.tau() > t).count() as f64 / n;
            prop_assert!((km.eval(t) - empirical).abs() < 1e-12, "{} vs {empirical}", km.eval(t));
        }
        Ok(())
    })
}

fn units_and_window() -> impl Strategy<Value = (Vec<UnitHistory>, f64, f64)> {
    (prop::collection::vec(unit(1, 0, true), 1..20), 0.0f64..3.0, 0.05f64..2.0)
}

pub fn ipcw_is_one_under_flat_censoring(cases: u32) -> Result<(), String> {
    check(cases, (units_and_window(), step(6, 0.9)), |((units, v, t), jumps)| {
        // a censoring curve with no jump in [v, v + t]
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut surv = 1.0;
        for (&at, &size) in jumps.locations().iter().zip(jumps.sizes()) {
            if at < v || at > v + t {
                surv *= 1.0 - size;
                times.push(at);
                values.push(surv);
            }
        }
        let km = KmEstimate {
            curve: SurvivalCurve { times, values },
        };
        for u in units.iter().filter(|u| u.at_risk(v)) {
            let w = ipcw_weight(u, v, t, &km).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let contributes = u.end_time() > v + t || u.te_time().is_some_and(|te| te > v && te <= v + t);
            prop_assert_eq!(w, if contributes { 1.0 } else { 0.0 });
        }
        Ok(())
    })
}

pub fn brier_closed_forms(cases: u32) -> Result<(), String> {
    check(cases, (units_and_window(), 0.0f64..=1.0), |((units, v, t), c)| {
        // drop units censored inside the window so that every weight is one
        let units: Vec<UnitHistory> = units
            .into_iter()
            .filter(|u| !(u.te_time().is_none() && u.end_time() > v && u.end_time() <= v + t))
            .collect();
        let at_risk: Vec<&UnitHistory> = units.iter().filter(|u| u.at_risk(v)).collect();
        if at_risk.is_empty() {
            return Ok(());
        }
        let km = KmEstimate {
            curve: SurvivalCurve::constant_one(),
        };
        let alive = |u: &UnitHistory| if u.end_time() > v + t { 1.0 } else { 0.0 };
        let exact: Vec<f64> = units.iter().map(alive).collect();
        let r = empirical_brier(&units, &exact, v, t, &km).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(r.score, 0.0);
        let flat = vec![c; units.len()];
        let r = empirical_brier(&units, &flat, v, t, &km).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let expected = at_risk.iter().map(|u| (alive(u) - c).powi(2)).sum::<f64>() / at_risk.len() as f64;
        prop_assert!(close(r.score, expected, 1e-14), "{} vs {expected}", r.score);
        prop_assert_eq!(r.n_at_risk, at_risk.len());
        Ok(())
    })
}

pub fn brier_ignores_unit_order(cases: u32) -> Result<(), String> {
    check(cases, (units_and_window(), any::<u64>()), |((units, v, t), seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<f64> = units.iter().map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let mut order: Vec<usize> = (0..units.len()).collect();
        order.shuffle(&mut rng);
        let shuffled: Vec<UnitHistory> = order.iter().map(|&i| units[i].clone()).collect();
        let shuffled_preds: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
        let km = km_monitoring(&units).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let a = empirical_brier(&units, &preds, v, t, &km);
        let b = empirical_brier(&shuffled, &shuffled_preds, v, t, &km);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert!(close(a.score, b.score, 1e-12), "{} vs {}", a.score, b.score);
                prop_assert_eq!((a.n_at_risk, a.n_effective, a.n_dropped), (b.n_at_risk, b.n_effective, b.n_dropped));
            }
            (a, b) => prop_assert_eq!(a.map_err(|e| e.to_string()).err(), b.map_err(|e| e.to_string()).err()),
        }
        Ok(())
    })
}

pub fn generated_histories_are_valid(cases: u32) -> Result<(), String> {
    check(cases, gen_config(), |cfg| {
        let data = generate_dataset(&cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(data.dataset.len(), cfg.n);
        for (i, (u, truth)) in data.dataset.units().iter().zip(&data.truth).enumerate() {
            let end = u.tau().min(u.te_time().unwrap_or(f64::INFINITY));
            prop_assert!(u.events().windows(2).all(|w| w[0].time < w[1].time));
            prop_assert!(u.events().iter().all(|e| e.time > 0.0 && e.time < end));
            prop_assert!(u.events().len() <= cfg.truth_event_cap);
            prop_assert!(truth.frailty > 0.0);
            if let Some(te) = u.te_time() {
                prop_assert_eq!(truth.te_time, Some(te));
            } else if let Some(te) = truth.te_time {
                prop_assert!(te > u.tau());
            }
            let (again, _) = generate_unit(&cfg, i).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(&again, u);
        }
        Ok(())
    })
}
