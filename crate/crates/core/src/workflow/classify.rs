use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use serde::Serialize;

use super::{create_out_dir, obtain_kernel, read_id_list, read_table, resolve_ids, to_json_pretty, write_text, KernelMeta, MatrixSource};
use crate::error::{Error, Result};
use crate::eval::{auc_roc, bootstrap_auc_ci, EvalReport, DEFAULT_BOOTSTRAP_RUNS, DEFAULT_CI_LEVEL};
use crate::ksvm::{decision_function, fit_smo, to_signed, SvmModel, SvmParams};
use crate::util::fmt_f64;

#[derive(Debug, Clone)]
pub struct ClassifyConfig {
    pub kernel: MatrixSource,
    /// CSV with `id,label` columns; defaults to the manifest when the kernel
    /// is computed from one.
    pub labels: Option<PathBuf>,
    pub train: PathBuf,
    pub test: PathBuf,
    pub svm: SvmParams,
    pub bootstrap_runs: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl ClassifyConfig {
    pub fn new(kernel: MatrixSource, train: PathBuf, test: PathBuf, seed: u64, out: PathBuf) -> Self {
        Self {
            kernel,
            labels: None,
            train,
            test,
            svm: SvmParams::default(),
            bootstrap_runs: DEFAULT_BOOTSTRAP_RUNS,
            seed,
            out,
        }
    }
}

#[derive(Serialize)]
struct ModelFile<'a> {
    #[serde(flatten)]
    model: &'a SvmModel,
    train_ids: &'a [String],
    support_ids: Vec<&'a str>,
    kernel: &'a KernelMeta,
}

#[derive(Debug)]
pub struct ClassifyOutcome {
    pub model: SvmModel,
    pub test_ids: Vec<String>,
    pub test_scores: Vec<f64>,
    pub report: EvalReport,
}

fn label_map(cfg: &ClassifyConfig, manifest: Option<&crate::dataio::Manifest>) -> Result<HashMap<String, u8>> {
    let table;
    let m = match (&cfg.labels, manifest) {
        (Some(p), _) => {
            table = read_table(p)?;
            &table
        }
        (None, Some(m)) => m,
        (None, None) => return Err(Error::validation("a labels file is required when the kernel is read from disk")),
    };
    Ok(m.entries.iter().filter_map(|e| e.label.map(|l| (e.id.clone(), l))).collect())
}

fn labels_for(ids: &[String], map: &HashMap<String, u8>) -> Result<Vec<u8>> {
    ids.iter()
        .map(|id| map.get(id).copied().ok_or_else(|| Error::validation(format!("{id}: no label"))))
        .collect()
}

/// Fits on the training ids, scores the test ids, and writes `model.json`,
/// `scores.csv` and `report.json`.
pub fn cmd_classify(cfg: &ClassifyConfig) -> Result<ClassifyOutcome> {
    let loaded = obtain_kernel(&cfg.kernel)?;
    let labels = label_map(cfg, loaded.manifest.as_ref())?;
    let train_ids = read_id_list(&cfg.train)?;
    let test_ids = read_id_list(&cfg.test)?;
    let train_set: HashSet<&String> = train_ids.iter().collect();
    if let Some(dup) = test_ids.iter().find(|id| train_set.contains(id)) {
        return Err(Error::validation(format!("{dup} appears in both the train and the test list")));
    }
    let tr = resolve_ids(&loaded.kernel, &train_ids)?;
    let te = resolve_ids(&loaded.kernel, &test_ids)?;
    let y_train = labels_for(&train_ids, &labels)?;
    let y_test = labels_for(&test_ids, &labels)?;

    let model = fit_smo(&loaded.kernel.block(&tr, &tr), &to_signed(&y_train), &cfg.svm)?;
    log::info!(
        "SVM: {} support vectors, {} iterations, KKT violation {:e}",
        model.support_indices.len(),
        model.iterations,
        model.violation
    );
    let train_scores = decision_function(&model, &loaded.kernel.block(&tr, &tr))?;
    let test_scores = decision_function(&model, &loaded.kernel.block(&te, &tr))?;
    let pos_train: Vec<bool> = y_train.iter().map(|&l| l == 1).collect();
    let pos_test: Vec<bool> = y_test.iter().map(|&l| l == 1).collect();
    let ci = bootstrap_auc_ci(&pos_test, &test_scores, cfg.bootstrap_runs, DEFAULT_CI_LEVEL, cfg.seed)?;

    let mut report = EvalReport::new("auc_roc", ci.point)
        .with_meta("seed", cfg.seed)
        .with_meta("bootstrap_runs", cfg.bootstrap_runs)
        .with_meta("n_train", train_ids.len())
        .with_meta("n_test", test_ids.len())
        .with_meta("svm_c", cfg.svm.c)
        .with_meta("class_weight", serde_json::to_value(cfg.svm.class_weight).expect("serializable"))
        .with_meta("n_support", model.support_indices.len())
        .with_meta("train_auc_roc", auc_roc(&pos_train, &train_scores)?)
        .with_meta("kernel", serde_json::to_value(&loaded.meta).expect("serializable"));
    report.ci_lower = Some(ci.lower);
    report.ci_upper = Some(ci.upper);
    report.ci_level = Some(ci.level);
    report.per_run = ci.runs;

    create_out_dir(&cfg.out)?;
    let file = ModelFile {
        model: &model,
        train_ids: &train_ids,
        support_ids: model.support_indices.iter().map(|&i| train_ids[i].as_str()).collect(),
        kernel: &loaded.meta,
    };
    write_text(&cfg.out.join("model.json"), &to_json_pretty(&file))?;
    write_text(&cfg.out.join("scores.csv"), &scores_csv(&test_ids, &y_test, &test_scores))?;
    write_text(&cfg.out.join("report.json"), &report.to_json())?;
    Ok(ClassifyOutcome {
        model,
        test_ids,
        test_scores,
        report,
    })
}

fn scores_csv(ids: &[String], labels: &[u8], scores: &[f64]) -> String {
    let mut out = String::from("id,label,score\n");
    for ((id, l), s) in ids.iter().zip(labels).zip(scores) {
        out.push_str(&format!("{id},{l},{}\n", fmt_f64(*s)));
    }
    out
}

