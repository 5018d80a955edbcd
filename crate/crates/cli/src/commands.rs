use std::fs;
use std::path::{Path, PathBuf};

use rcrte_core::evaluation::{brier_table, k_fold_cv, km_monitoring, BrierResult};
use rcrte_core::event_model::io;
use rcrte_core::prediction::{path_seed, predicted_survival, simulate_ensemble, DistributionStats};
use rcrte_core::synthgen::generate_dataset;
use rcrte_core::{estimation::ple_survival, fit_em, Dataset, EmConfig, FittedModel};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{num, Provenance, Table};

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub hash: String,
}

impl Context {
    fn prov(&self, seed: Option<u64>) -> Provenance {
        Provenance {
            seed,
            config_hash: self.hash.clone(),
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Input(format!("no {what} given")))
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!("{} does not exist", path.display())));
    }
    Ok(io::load(path)?)
}

fn load_model(path: &Path) -> Result<FittedModel, CliError> {
    if !path.exists() {
        return Err(CliError::Input(format!("{} does not exist", path.display())));
    }
    Ok(FittedModel::load(path)?)
}

pub fn generate(ctx: &Context) -> Result<(), CliError> {
    let g = &ctx.cfg.generate;
    let data = generate_dataset(g)?;
    let path = ctx.out.join("data.jsonl");
    io::save(&path, &data.dataset)?;

    let mut truth = Table::new(["unit_id", "frailty", "te_time"]);
    for t in &data.truth {
        truth.push(vec![
            t.unit_id.clone(),
            num(t.frailty),
            t.te_time.map_or_else(|| "NA".into(), num),
        ]);
    }
    truth.write(&ctx.out, "truth.csv", &ctx.prov(Some(g.seed)))?;

    let d = &data.dataset;
    let events: usize = (0..d.q()).map(|q| d.event_count(q)).sum();
    println!("wrote {}", path.display());
    println!("n = {}, Q = {}, p = {}", d.len(), d.q(), d.p());
    println!("terminal-event fraction = {}", num(d.te_count() as f64 / d.len() as f64));
    println!("mean recurrent events per unit = {}", num(events as f64 / d.len() as f64));
    Ok(())
}

pub fn fit(ctx: &Context) -> Result<(), CliError> {
    let f = &ctx.cfg.fit;
    let data = load_data(required(&f.data, "training data (fit.data)")?)?;
    let mut em: EmConfig = f.em.clone();
    if let Some(init) = &f.init_model {
        em = em.warm_start(&load_model(init)?);
    }
    let model = fit_em(&data, f.repair_mode, &em)?;
    let model_path = ctx.out.join("model.json");
    model.save(&model_path)?;
    let prov = ctx.prov(None);

    let mut params = Table::new(["name", "value"]);
    for (name, v) in model.params.values() {
        params.push(vec![name, num(v)]);
    }
    params.write(&ctx.out, "fit_params.csv", &prov)?;

    let mut trace = Table::new(["iteration", "xi", "change", "max_score_residual"]);
    for r in &model.diagnostics.trace {
        trace.push(vec![
            r.iteration.to_string(),
            num(r.xi),
            num(r.change),
            num(r.max_score_residual),
        ]);
    }
    trace.write(&ctx.out, "fit_trace.csv", &prov)?;

    let mut base = Table::new(["process", "location", "size", "cumulative", "ple_survival"]);
    let processes = model
        .baselines
        .rcr
        .iter()
        .enumerate()
        .map(|(q, b)| (format!("risk_{}", q + 1), b))
        .chain(std::iter::once(("terminal".to_string(), &model.baselines.te)));
    for (name, b) in processes {
        let ple = match ple_survival(b) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("{name}: product-limit survival not available ({e})");
                None
            }
        };
        let mut cum = 0.0;
        for (i, (loc, size)) in b.jumps().enumerate() {
            cum += size;
            base.push(vec![
                name.clone(),
                num(loc),
                num(size),
                num(cum),
                ple.as_ref().map_or_else(|| "NA".into(), |c| num(c.values[i])),
            ]);
        }
    }
    base.write(&ctx.out, "fit_baselines.csv", &prov)?;

    let mut frailty = Table::new(["unit_id", "shape", "rate", "mean", "log_mean"]);
    for (u, z) in data.units().iter().zip(&model.frailty.units) {
        frailty.push(vec![u.id().to_string(), num(z.shape), num(z.rate), num(z.mean), num(z.log_mean)]);
    }
    frailty.write(&ctx.out, "fit_frailty.csv", &prov)?;

    let d = &model.diagnostics;
    let mut diag = Table::new(["key", "value"]);
    diag.push(vec!["iterations".into(), d.iterations.to_string()]);
    diag.push(vec!["converged".into(), d.converged.to_string()]);
    diag.push(vec!["xi".into(), num(model.params.xi)]);
    diag.push(vec!["xi_at_boundary".into(), d.xi_at_boundary.to_string()]);
    for (q, r) in d.rcr_residuals.iter().enumerate() {
        diag.push(vec![format!("score_residual_risk_{}", q + 1), r.map_or_else(|| "NA".into(), num)]);
    }
    diag.push(vec!["score_residual_terminal".into(), d.te_residual.map_or_else(|| "NA".into(), num)]);
    let list = |v: &[usize]| v.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(" ");
    diag.push(vec!["dropped_risks".into(), list(&d.dropped_risks)]);
    diag.push(vec!["fixed_gamma".into(), list(&d.fixed_gamma)]);
    diag.write(&ctx.out, "fit_diagnostics.csv", &prov)?;

    println!("wrote {}", model_path.display());
    println!("iterations = {}, converged = {}", d.iterations, d.converged);
    println!("xi = {}", num(model.params.xi));
    if !d.converged {
        return Err(CliError::NotConverged(format!(
            "EM did not converge after {} iterations; the last iterate was saved",
            d.iterations
        )));
    }
    Ok(())
}

pub fn predict(ctx: &Context) -> Result<(), CliError> {
    let p = &ctx.cfg.predict;
    let mut model = load_model(required(&p.model, "model (predict.model)")?)?;
    if let Some(mode) = p.repair_mode {
        model.repair_mode = mode;
    }
    let data = load_data(required(&p.history, "new-unit history (predict.history)")?)?;
    let unit = match (&p.unit, data.units()) {
        (Some(id), units) => units
            .iter()
            .find(|u| u.id() == id)
            .ok_or_else(|| CliError::Input(format!("unit '{id}' not in the history file")))?,
        (None, [only]) => only,
        (None, _) => {
            return Err(CliError::Input(
                "the history file holds several units; choose one with predict.unit".into(),
            ))
        }
    };
    if p.horizons.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(CliError::Input("horizons must be finite and nonnegative".into()));
    }
    let dist = simulate_ensemble(unit, &model, p.paths, p.seed)?;
    let prov = ctx.prov(Some(p.seed));
    let q = model.q();

    let mut header: Vec<String> = ["path", "seed", "ttte", "te_time"].map(String::from).to_vec();
    header.extend((1..=q).map(|k| format!("n_{k}")));
    header.push("events".into());
    let mut paths = Table::new(header);
    for (i, path) in dist.paths.iter().enumerate() {
        let mut row = vec![i.to_string(), path.seed.to_string(), num(path.ttte), num(path.te_time)];
        row.extend(path.counts.iter().map(u32::to_string));
        row.push(
            path.events
                .iter()
                .map(|e| format!("{}@{}", num(e.time), e.risk + 1))
                .collect::<Vec<_>>()
                .join(";"),
        );
        paths.push(row);
    }
    paths.write(&ctx.out, "predict_paths.csv", &prov)?;

    let s = &dist.summary;
    let mut summary = Table::new(["quantity", "mean", "sd", "median", "p025", "p975", "min", "max"]);
    let stat_row = |name: &str, d: &DistributionStats| {
        vec![
            name.to_string(),
            num(d.mean),
            num(d.sd),
            num(d.median),
            num(d.p025),
            num(d.p975),
            num(d.min),
            num(d.max),
        ]
    };
    summary.push(stat_row("ttte", &s.ttte));
    summary.push(stat_row("te_time", &s.te_time));
    summary.write(&ctx.out, "predict_summary.csv", &prov)?;

    let mut counts = Table::new(["risk", "observed", "simulated_mean", "simulated_median", "expected_total"]);
    for k in 0..q {
        let observed = dist.observed_counts[k];
        counts.push(vec![
            (k + 1).to_string(),
            observed.to_string(),
            num(s.risk_mean[k]),
            num(s.risk_median[k]),
            num(observed as f64 + s.risk_mean[k]),
        ]);
    }
    let mut totals: Vec<f64> = dist.paths.iter().map(|p| p.counts.iter().sum::<u32>() as f64).collect();
    totals.sort_by(f64::total_cmp);
    counts.push(vec![
        "all".into(),
        s.observed_total.to_string(),
        num(s.mean_simulated_total),
        num(rcrte_core::prediction::quantile(&totals, 0.5)),
        num(s.mean_total),
    ]);
    counts.write(&ctx.out, "predict_counts.csv", &prov)?;

    let mut surv = Table::new(["s", "survival"]);
    for &h in &p.horizons {
        surv.push(vec![num(h), num(predicted_survival(&dist, h))]);
    }
    surv.write(&ctx.out, "predict_survival.csv", &prov)?;

    let mut ttte = dist.ttte_values();
    ttte.sort_by(f64::total_cmp);
    let mut hist = Table::new(["ttte"]);
    for t in ttte {
        hist.push(vec![num(t)]);
    }
    hist.write(&ctx.out, "predict_ttte.csv", &prov)?;

    println!("unit {} at tau0 = {}, z_hat = {}", unit.id(), num(dist.tau0), num(dist.z_hat));
    println!(
        "TTTE mean = {}, 2.5% = {}, 97.5% = {} over {} paths",
        num(s.ttte.mean),
        num(s.ttte.p025),
        num(s.ttte.p975),
        s.paths
    );
    Ok(())
}

fn brier_rows(table: &mut Table, prefix: &[String], results: &[BrierResult], note: bool) {
    for r in results {
        let mut row = prefix.to_vec();
        row.extend([
            num(r.v),
            num(r.t),
            num(r.score),
            r.n_at_risk.to_string(),
            r.n_effective.to_string(),
            r.n_dropped.to_string(),
        ]);
        if note {
            row.push(String::new());
        }
        table.push(row);
    }
}

const BRIER_COLUMNS: [&str; 6] = ["v", "t", "score", "n_at_risk", "n_effective", "n_dropped"];

pub fn evaluate(ctx: &Context) -> Result<(), CliError> {
    let e = &ctx.cfg.evaluate;
    if e.horizons.is_empty() {
        return Err(CliError::Input("evaluate.horizons is empty".into()));
    }
    let model = load_model(required(&e.model, "model (evaluate.model)")?)?;
    let data = load_data(required(&e.data, "test data (evaluate.data)")?)?;
    let km = match &e.km_data {
        Some(path) => km_monitoring(load_data(path)?.units())?,
        None => km_monitoring(data.units())?,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.units()[a].id().cmp(data.units()[b].id()).then(a.cmp(&b)));
    let mut seeds = vec![0; data.len()];
    for (rank, i) in order.into_iter().enumerate() {
        seeds[i] = path_seed(e.seed, rank as u64);
    }
    let results = brier_table(&model, &data, &km, e.v, &e.horizons, e.paths, &seeds)?;
    let mut table = Table::new(BRIER_COLUMNS);
    brier_rows(&mut table, &[], &results, false);
    table.write(&ctx.out, "brier.csv", &ctx.prov(Some(e.seed)))?;
    for r in &results {
        println!("t = {}: Brier = {} ({} at risk)", num(r.t), num(r.score), r.n_at_risk);
    }
    Ok(())
}

pub fn cv(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.cfg.cv;
    if c.horizons.is_empty() {
        return Err(CliError::Input("cv.horizons is empty".into()));
    }
    let data = load_data(required(&c.data, "dataset (cv.data)")?)?;
    let report = k_fold_cv(&data, &c.to_core())?;
    let prov = ctx.prov(Some(c.seed));

    let mut header: Vec<&str> = vec!["fold", "n_train", "n_test", "skipped", "converged"];
    header.extend(BRIER_COLUMNS);
    header.push("note");
    let mut folds = Table::new(header);
    for f in &report.folds {
        let prefix = vec![
            (f.fold + 1).to_string(),
            f.n_train.to_string(),
            f.n_test.to_string(),
            f.skipped.to_string(),
            f.converged.to_string(),
        ];
        if f.skipped {
            let mut row = prefix;
            row.extend(std::iter::repeat_n("NA".to_string(), BRIER_COLUMNS.len()));
            row.push(f.note.clone().unwrap_or_default());
            folds.push(row);
        } else {
            brier_rows(&mut folds, &prefix, &f.results, true);
        }
    }
    folds.write(&ctx.out, "cv_folds.csv", &prov)?;

    let mut avg = Table::new(["t", "mean_score", "folds"]);
    for a in &report.averaged {
        avg.push(vec![num(a.t), num(a.mean_score), a.folds.to_string()]);
        println!("t = {}: mean Brier = {} over {} folds", num(a.t), num(a.mean_score), a.folds);
    }
    avg.write(&ctx.out, "cv_summary.csv", &prov)?;

    if report.folds.iter().all(|f| f.skipped) {
        return Err(CliError::Core(rcrte_core::Error::Numerical(
            "no fold produced Brier scores".into(),
        )));
    }
    let unconverged = report.folds.iter().filter(|f| !f.skipped && !f.converged).count();
    if unconverged > 0 {
        return Err(CliError::NotConverged(format!(
            "EM did not converge in {unconverged} fold(s); tables were written from the last iterates"
        )));
    }
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}
