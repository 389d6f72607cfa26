//! Evaluation statistics: ROC AUC with bootstrap intervals, concordance,
//! out-of-bag resampling, Kaplan-Meier curves and log-rank testing.
//!
//! Everything stochastic takes an explicit 64-bit seed.

mod report;
mod roc;
mod survival;

pub use report::{per_run_csv, EvalReport, RunRecord};
pub use roc::{auc_roc, bootstrap_auc_ci, BootstrapCi, DEFAULT_BOOTSTRAP_RUNS, DEFAULT_CI_LEVEL};
pub use survival::{
    aggregate_pvalue, c_index, km_csv, km_estimate, logrank_test, oob_split, optimal_threshold,
    split_by_threshold, KmCurve, KmPoint, LogRank, MIN_GROUP_FRACTION, OOB_MAX_ATTEMPTS, SMALL_SAMPLE_EVENTS,
};

/// `num / den` for integer counts with `num <= den`, arranged so that
/// `ratio(a, d) + ratio(d - a, d) == 1.0` holds exactly in floating point.
pub(crate) fn complementary_ratio(num: u64, den: u64) -> f64 {
    debug_assert!(num <= den && den > 0);
    if 2 * num <= den {
        num as f64 / den as f64
    } else {
        1.0 - (den - num) as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::complementary_ratio;

    #[test]
    fn complements_sum_to_one() {
        for den in 1..200u64 {
            for a in 0..=den {
                assert_eq!(complementary_ratio(a, den) + complementary_ratio(den - a, den), 1.0);
            }
        }
    }
}
