use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use super::{create_out_dir, obtain_kernel, read_table, to_json_pretty, write_text, KernelMeta, MatrixSource};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_pvalue, c_index, km_csv, km_estimate, logrank_test, oob_split, optimal_threshold, per_run_csv,
    EvalReport, KmCurve, RunRecord,
};
use crate::ksurv::{comparable_pairs, fit, pairs_untruncated, risk_scores, truncate, SurvModel, DEFAULT_ALPHA, DEFAULT_CENSOR_HORIZON};
use crate::mmd::KernelMatrix;
use crate::util::{derive_seed, fmt_f64, median};

pub const DEFAULT_OOB_RUNS: usize = 50;

#[derive(Debug, Clone)]
pub struct SurvivalConfig {
    pub kernel: MatrixSource,
    /// CSV with `id,time,event`; defaults to the manifest.
    pub outcomes: Option<PathBuf>,
    pub alpha: f64,
    pub runs: usize,
    pub censor_horizon: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl SurvivalConfig {
    pub fn new(kernel: MatrixSource, seed: u64, out: PathBuf) -> Self {
        Self {
            kernel,
            outcomes: None,
            alpha: DEFAULT_ALPHA,
            runs: DEFAULT_OOB_RUNS,
            censor_horizon: DEFAULT_CENSOR_HORIZON,
            seed,
            out,
        }
    }
}

/// Result of one out-of-bag run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub model: SurvModel,
    pub c_index: f64,
    pub threshold: Option<f64>,
    /// Test-set log-rank p between the high and low risk groups; 1.0 when
    /// the split or the test is undefined.
    pub p_value: f64,
    pub small_sample: bool,
}

#[derive(Debug)]
pub struct SurvivalOutcome {
    pub runs: Vec<RunResult>,
    pub representative: usize,
    pub report: EvalReport,
}

#[derive(Serialize)]
struct ModelFile<'a> {
    run: usize,
    #[serde(flatten)]
    model: &'a SurvModel,
    censor_horizon: f64,
    threshold: Option<f64>,
    kernel: &'a KernelMeta,
}

fn outcomes_for(cfg: &SurvivalConfig, kernel: &KernelMatrix, manifest: Option<&crate::dataio::Manifest>) -> Result<(Vec<f64>, Vec<bool>)> {
    let table;
    let m = match (&cfg.outcomes, manifest) {
        (Some(p), _) => {
            table = read_table(p)?;
            &table
        }
        (None, Some(m)) => m,
        (None, None) => return Err(Error::validation("an outcomes file is required when the kernel is read from disk")),
    };
    let by_id: HashMap<&str, (Option<f64>, Option<u8>)> =
        m.entries.iter().map(|e| (e.id.as_str(), (e.time, e.event))).collect();
    let mut times = Vec::with_capacity(kernel.len());
    let mut events = Vec::with_capacity(kernel.len());
    for id in kernel.ids() {
        match by_id.get(id.as_str()) {
            Some((Some(t), Some(e))) => {
                times.push(*t);
                events.push(*e == 1);
            }
            _ => return Err(Error::validation(format!("{id}: survival outcome (time and event) required"))),
        }
    }
    Ok((times, events))
}

fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

fn one_run(kernel: &KernelMatrix, times: &[f64], events: &[bool], cfg: &SurvivalConfig, r: usize) -> Result<RunResult> {
    let (train, test) = oob_split(times, events, derive_seed(cfg.seed, r as u64))?;
    let (t_tr, e_tr) = (pick(times, &train), pick(events, &train));
    let (t_te, e_te) = (pick(times, &test), pick(events, &test));
    let pairs = comparable_pairs(&t_tr, &e_tr, cfg.censor_horizon)?;
    let train_ids: Vec<String> = train.iter().map(|&i| kernel.ids()[i].clone()).collect();
    let model = fit(&kernel.block(&train, &train), &pairs, cfg.alpha, &train_ids)?;
    let risk_tr = risk_scores(&model, &kernel.block(&train, &train))?;
    let risk_te = risk_scores(&model, &kernel.block(&test, &train))?;
    let c = c_index(&t_te, &e_te, &risk_te)?;

    let threshold = optimal_threshold(&risk_tr, &t_tr, &e_tr).ok();
    let (p_value, small_sample) = match threshold {
        Some(thr) => {
            let (high, low) = crate::eval::split_by_threshold(&risk_te, &t_te, &e_te, thr);
            match logrank_test((&high.0, &high.1), (&low.0, &low.1)) {
                Ok(lr) => (lr.p_value, lr.small_sample),
                Err(_) => (1.0, true),
            }
        }
        None => (1.0, true),
    };
    Ok(RunResult {
        train,
        test,
        model,
        c_index: c,
        threshold,
        p_value,
        small_sample,
    })
}

/// Run whose C-index is closest to the median (lowest index on ties).
fn representative_run(values: &[f64]) -> usize {
    let m = median(values).expect("at least one run");
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - m).abs() < (values[best] - m).abs() {
            best = i;
        }
    }
    best
}

/// Runs `R` stratified out-of-bag fits and writes `per_run.csv`, `km.csv`,
/// `report.json`, `model.json` and `risk_scores.csv`.
pub fn cmd_survival(cfg: &SurvivalConfig) -> Result<SurvivalOutcome> {
    if cfg.runs == 0 {
        return Err(Error::validation("at least one out-of-bag run is required"));
    }
    if !(cfg.censor_horizon > 0.0) {
        return Err(Error::validation("censor horizon must be positive"));
    }
    let loaded = obtain_kernel(&cfg.kernel)?;
    let kernel = &loaded.kernel;
    let (raw_t, raw_e) = outcomes_for(cfg, kernel, loaded.manifest.as_ref())?;
    comparable_pairs(&raw_t, &raw_e, cfg.censor_horizon)?;
    let (times, events) = truncate(&raw_t, &raw_e, cfg.censor_horizon);
    if pairs_untruncated(&times, &events).is_empty() {
        return Err(Error::NoComparablePairs(
            "no subject has an observed event before another subject's time; nothing to fit".into(),
        ));
    }

    let runs: Vec<RunResult> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| one_run(kernel, &times, &events, cfg, r))
        .collect::<Result<_>>()?;

    let cs: Vec<f64> = runs.iter().map(|r| r.c_index).collect();
    let ps: Vec<f64> = runs.iter().map(|r| r.p_value).collect();
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let std_dev = (cs.len() > 1)
        .then(|| (cs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (cs.len() - 1) as f64).sqrt());
    let p = aggregate_pvalue(&ps)?;
    let rep = representative_run(&cs);
    let rr = &runs[rep];

    let mut report = EvalReport::new("c_index", mean)
        .with_meta("seed", cfg.seed)
        .with_meta("oob_runs", cfg.runs)
        .with_meta("alpha", cfg.alpha)
        .with_meta("censor_horizon", cfg.censor_horizon)
        .with_meta("n", kernel.len())
        .with_meta("n_events", events.iter().filter(|&&e| e).count())
        .with_meta("representative_run", rep)
        .with_meta("pvalue_aggregation", "min(1, 2 * median of per-run log-rank p)")
        .with_meta("std_dev_definition", "sample standard deviation of per-run test C-index")
        .with_meta("runs_with_small_sample_logrank", runs.iter().filter(|r| r.small_sample).count())
        .with_meta("kernel", serde_json::to_value(&loaded.meta).expect("serializable"));
    report.std_dev = std_dev;
    report.p_value = Some(p);
    report.per_run = cs;

    let records: Vec<RunRecord> = runs
        .iter()
        .enumerate()
        .map(|(i, r)| RunRecord {
            run: i,
            metric: "c_index".into(),
            value: r.c_index,
            p: Some(r.p_value),
        })
        .collect();

    let (t_te, e_te) = (pick(&times, &rr.test), pick(&events, &rr.test));
    let risk_te = risk_scores(&rr.model, &kernel.block(&rr.test, &rr.train))?;
    let curves: Vec<KmCurve> = match rr.threshold {
        Some(thr) => {
            let (high, low) = crate::eval::split_by_threshold(&risk_te, &t_te, &e_te, thr);
            [("high", high), ("low", low)]
                .into_iter()
                .filter(|(_, g)| !g.0.is_empty())
                .map(|(name, g)| km_estimate(&g.0, &g.1, name))
                .collect::<Result<_>>()?
        }
        None => vec![km_estimate(&t_te, &e_te, "all")?],
    };

    let all: Vec<usize> = (0..kernel.len()).collect();
    let all_risk = risk_scores(&rr.model, &kernel.block(&all, &rr.train))?;
    let mut risk_csv = String::from("id,score\n");
    for (id, s) in kernel.ids().iter().zip(&all_risk) {
        risk_csv.push_str(&format!("{id},{}\n", fmt_f64(*s)));
    }

    create_out_dir(&cfg.out)?;
    write_text(&cfg.out.join("per_run.csv"), &per_run_csv(&records))?;
    write_text(&cfg.out.join("km.csv"), &km_csv(&curves))?;
    write_text(&cfg.out.join("report.json"), &report.to_json())?;
    let file = ModelFile {
        run: rep,
        model: &rr.model,
        censor_horizon: cfg.censor_horizon,
        threshold: rr.threshold,
        kernel: &loaded.meta,
    };
    write_text(&cfg.out.join("model.json"), &to_json_pretty(&file))?;
    write_text(&cfg.out.join("risk_scores.csv"), &risk_csv)?;
    log::info!("survival: mean C-index {mean:.4}, aggregated p {p:.4e} over {} runs", cfg.runs);
    Ok(SurvivalOutcome {
        runs,
        representative: rep,
        report,
    })
}
