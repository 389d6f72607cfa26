use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::util::fmt_f64;

/// Summary of one evaluated metric. Contains no wall-clock data so reruns
/// serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ci_level: Option<f64>,
    /// Sample standard deviation across runs, when the estimate is a mean.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_dev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_value: Option<f64>,
    pub per_run: Vec<f64>,
    /// Run configuration and diagnostics (seed, hyperparameters, counts).
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl EvalReport {
    pub fn new(metric: &str, estimate: f64) -> Self {
        Self {
            metric: metric.to_string(),
            estimate,
            ci_lower: None,
            ci_upper: None,
            ci_level: None,
            std_dev: None,
            p_value: None,
            per_run: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// One row of the per-run CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub metric: String,
    pub value: f64,
    pub p: Option<f64>,
}

/// `run,metric,value,p`; an absent p is an empty cell.
pub fn per_run_csv(rows: &[RunRecord]) -> String {
    let mut out = String::from("run,metric,value,p\n");
    for r in rows {
        let p = r.p.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.run, r.metric, fmt_f64(r.value), p));
    }
    out
}
