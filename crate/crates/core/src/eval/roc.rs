use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::complementary_ratio;
use crate::error::{Error, Result};
use crate::util::{derive_seed, quantile_sorted, rng_from_seed};

pub const DEFAULT_BOOTSTRAP_RUNS: usize = 1000;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
/// Resamples allowed per bootstrap run before giving up on drawing both classes.
const MAX_REDRAWS: usize = 10_000;

/// Doubled Mann-Whitney count: `2 * #(pos > neg) + #(pos == neg)`, and the
/// doubled number of pairs.
fn doubled_counts(labels: &[bool], scores: &[f64]) -> (u64, u64) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut neg_below, mut wins) = (0u64, 0u64);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos = order[start..end].iter().filter(|&&i| labels[i]).count() as u64;
        let neg = (end - start) as u64 - pos;
        wins += pos * (2 * neg_below + neg);
        neg_below += neg;
        start = end;
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    (wins, 2 * n_pos * n_neg)
}

/// Area under the ROC curve in its Mann-Whitney form, ties counting one half.
pub fn auc_roc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::validation("scores contain NaN"));
    }
    let (wins, total) = doubled_counts(labels, scores);
    if total == 0 {
        return Err(Error::SingleClass);
    }
    Ok(complementary_ratio(wins, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// AUC of every bootstrap run, in run order.
    pub runs: Vec<f64>,
}

/// Percentile bootstrap interval for the AUC.
pub fn bootstrap_auc_ci(labels: &[bool], scores: &[f64], runs: usize, level: f64, seed: u64) -> Result<BootstrapCi> {
    let point = auc_roc(labels, scores)?;
    if runs == 0 {
        return Err(Error::validation("bootstrap needs at least one run"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!("confidence level {level} is outside (0, 1)")));
    }
    let n = labels.len();
    let values: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, r as u64));
            let mut l = vec![false; n];
            let mut s = vec![0.0; n];
            for _ in 0..MAX_REDRAWS {
                for t in 0..n {
                    let pick = rng.random_range(0..n);
                    l[t] = labels[pick];
                    s[t] = scores[pick];
                }
                if l.iter().any(|&v| v) && l.iter().any(|&v| !v) {
                    return auc_roc(&l, &s);
                }
            }
            Err(Error::Degenerate(format!("bootstrap run {r} never drew both classes")))
        })
        .collect::<Result<_>>()?;
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lower = quantile_sorted(&sorted, tail);
    let upper = quantile_sorted(&sorted, 1.0 - tail);
    assert!(lower <= upper);
    Ok(BootstrapCi {
        point,
        lower,
        upper,
        level,
        runs: values,
    })
}
