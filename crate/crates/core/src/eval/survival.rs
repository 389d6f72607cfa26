use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::complementary_ratio;
use crate::error::{Error, Result};
use crate::ksurv::pairs_untruncated;
use crate::util::{fmt_f64, median, rng_from_seed};

pub const MIN_GROUP_FRACTION: f64 = 0.1;
pub const OOB_MAX_ATTEMPTS: usize = 100;
/// Below this many events the asymptotic log-rank p-value is flagged.
pub const SMALL_SAMPLE_EVENTS: usize = 10;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Harrell's concordance over comparable pairs; tied risks count one half.
pub fn c_index(times: &[f64], events: &[bool], risks: &[f64]) -> Result<f64> {
    check_lengths(times.len(), events.len())?;
    check_lengths(times.len(), risks.len())?;
    let pairs = pairs_untruncated(times, events);
    if pairs.is_empty() {
        return Err(Error::NoComparablePairs("no pair with an observed earlier event".into()));
    }
    let wins: u64 = pairs
        .iter()
        .map(|&(i, j)| {
            if risks[i] > risks[j] {
                2
            } else if risks[i] == risks[j] {
                1
            } else {
                0
            }
        })
        .sum();
    Ok(complementary_ratio(wins, 2 * pairs.len() as u64))
}

fn has_comparable_pair(idx: &[usize], times: &[f64], events: &[bool]) -> bool {
    let min_event = idx
        .iter()
        .filter(|&&i| events[i])
        .map(|&i| times[i])
        .fold(f64::INFINITY, f64::min);
    idx.iter().any(|&j| times[j] > min_event)
}

/// Out-of-bag split stratified by event status.
///
/// Each stratum of size `m` is resampled `m` times with replacement; the
/// distinct drawn indices form the training set and the rest the test set.
/// Splits where either side has no comparable pair are redrawn.
pub fn oob_split(times: &[f64], events: &[bool], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    check_lengths(times.len(), events.len())?;
    let strata: [Vec<usize>; 2] = [
        (0..events.len()).filter(|&i| events[i]).collect(),
        (0..events.len()).filter(|&i| !events[i]).collect(),
    ];
    if strata.iter().any(|s| s.is_empty()) {
        return Err(Error::Degenerate("stratified resampling needs both event and censored subjects".into()));
    }
    let mut rng = rng_from_seed(seed);
    for _ in 0..OOB_MAX_ATTEMPTS {
        let mut drawn = BTreeSet::new();
        for stratum in &strata {
            for _ in 0..stratum.len() {
                drawn.insert(stratum[rng.random_range(0..stratum.len())]);
            }
        }
        let train: Vec<usize> = drawn.iter().copied().collect();
        let test: Vec<usize> = (0..times.len()).filter(|i| !drawn.contains(i)).collect();
        if has_comparable_pair(&train, times, events) && has_comparable_pair(&test, times, events) {
            return Ok((train, test));
        }
    }
    Err(Error::Degenerate(format!(
        "no out-of-bag split with comparable pairs on both sides after {OOB_MAX_ATTEMPTS} attempts"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmPoint {
    pub time: f64,
    pub survival: f64,
    pub at_risk: usize,
}

/// Product-limit curve. The first point is `(0, 1, n)`; each later point is
/// an event time with the survival just after it and the number at risk
/// just before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub group: String,
    pub points: Vec<KmPoint>,
}

impl KmCurve {
    /// Survival probability at time `t` (right-continuous step function).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.points
            .iter()
            .skip(1)
            .take_while(|p| p.time <= t)
            .last()
            .map_or(1.0, |p| p.survival)
    }
}

pub fn km_estimate(times: &[f64], events: &[bool], group: &str) -> Result<KmCurve> {
    check_lengths(times.len(), events.len())?;
    if times.is_empty() {
        return Err(Error::validation("Kaplan-Meier estimate of an empty group"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut points = vec![KmPoint {
        time: 0.0,
        survival: 1.0,
        at_risk: times.len(),
    }];
    let mut at_risk = times.len();
    let mut surv = 1.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        while end < order.len() && times[order[end]] == t {
            end += 1;
        }
        let d = order[k..end].iter().filter(|&&i| events[i]).count();
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            points.push(KmPoint {
                time: t,
                survival: surv,
                at_risk,
            });
        }
        at_risk -= end - k;
        k = end;
    }
    Ok(KmCurve {
        group: group.to_string(),
        points,
    })
}

/// `group,time,survival,at_risk` CSV for one or more curves.
pub fn km_csv(curves: &[KmCurve]) -> String {
    let mut out = String::from("group,time,survival,at_risk\n");
    for c in curves {
        for p in &c.points {
            out.push_str(&format!("{},{},{},{}\n", c.group, fmt_f64(p.time), fmt_f64(p.survival), p.at_risk));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub statistic: f64,
    pub p_value: f64,
    pub events: usize,
    /// Fewer than [`SMALL_SAMPLE_EVENTS`] events: the chi-square
    /// approximation is rough.
    pub small_sample: bool,
}

/// Two-group log-rank test with the chi-square(1) approximation.
pub fn logrank_test(a: (&[f64], &[bool]), b: (&[f64], &[bool])) -> Result<LogRank> {
    check_lengths(a.0.len(), a.1.len())?;
    check_lengths(b.0.len(), b.1.len())?;
    if a.0.is_empty() || b.0.is_empty() {
        return Err(Error::UndefinedTest("log-rank test needs two nonempty groups".into()));
    }
    let event_times: BTreeSet<u64> = a
        .0
        .iter()
        .zip(a.1)
        .chain(b.0.iter().zip(b.1))
        .filter(|(_, &e)| e)
        .map(|(t, _)| t.to_bits())
        .collect();
    let count = |g: (&[f64], &[bool]), t: f64| {
        let at_risk = g.0.iter().filter(|&&x| x >= t).count() as f64;
        let died = g.0.iter().zip(g.1).filter(|(&x, &e)| e && x == t).count() as f64;
        (at_risk, died)
    };
    let mut num = 0.0;
    let mut var = 0.0;
    let mut events = 0usize;
    let mut times: Vec<f64> = event_times.into_iter().map(f64::from_bits).collect();
    times.sort_by(f64::total_cmp);
    for t in times {
        let (na, da) = count(a, t);
        let (nb, db) = count(b, t);
        let n = na + nb;
        let d = da + db;
        events += d as usize;
        // (O_A - E_A) written antisymmetrically in the two groups
        num += (da * nb - db * na) / n;
        if n > 1.0 {
            var += d * (na * nb) * (n - d) / (n * n * (n - 1.0));
        }
    }
    if !(var > 0.0) {
        return Err(Error::UndefinedTest("log-rank variance is zero (no informative events)".into()));
    }
    let statistic = num * num / var;
    let p_value = erfc((statistic / 2.0).sqrt()).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(LogRank {
        statistic,
        p_value,
        events,
        small_sample: events < SMALL_SAMPLE_EVENTS,
    })
}

/// Splits by `risk > threshold` (high) versus `risk <= threshold` (low).
pub fn split_by_threshold(
    risks: &[f64],
    times: &[f64],
    events: &[bool],
    threshold: f64,
) -> ((Vec<f64>, Vec<bool>), (Vec<f64>, Vec<bool>)) {
    let mut high = (Vec::new(), Vec::new());
    let mut low = (Vec::new(), Vec::new());
    for i in 0..risks.len() {
        let g = if risks[i] > threshold { &mut high } else { &mut low };
        g.0.push(times[i]);
        g.1.push(events[i]);
    }
    (high, low)
}

/// Midpoint between consecutive distinct training risks maximizing the
/// log-rank statistic, with at least 10% of samples on each side.
pub fn optimal_threshold(risks: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    check_lengths(risks.len(), times.len())?;
    check_lengths(risks.len(), events.len())?;
    let mut uniq: Vec<f64> = risks.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let n = risks.len() as f64;
    let mut best: Option<(f64, f64)> = None;
    for w in uniq.windows(2) {
        let thr = 0.5 * (w[0] + w[1]);
        let (high, low) = split_by_threshold(risks, times, events, thr);
        if (high.0.len() as f64) < MIN_GROUP_FRACTION * n || (low.0.len() as f64) < MIN_GROUP_FRACTION * n {
            continue;
        }
        let Ok(lr) = logrank_test((&high.0, &high.1), (&low.0, &low.1)) else {
            continue;
        };
        if best.is_none_or(|(s, _)| lr.statistic > s) {
            best = Some((lr.statistic, thr));
        }
    }
    best.map(|(_, t)| t).ok_or(Error::NoAdmissibleThreshold)
}

/// `min(1, 2 * median(p))`.
pub fn aggregate_pvalue(p_runs: &[f64]) -> Result<f64> {
    if let Some(p) = p_runs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::validation(format!("p-value {p} is outside [0, 1]")));
    }
    let m = median(p_runs).ok_or_else(|| Error::validation("no p-values to aggregate"))?;
    Ok((2.0 * m).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn concordance_fixtures() {
        let t = [1.0, 2.0, 3.0];
        let e = [true; 3];
        assert_eq!(c_index(&t, &e, &[3.0, 2.0, 1.0]).unwrap(), 1.0);
        assert_eq!(c_index(&t, &e, &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(c_index(&t, &e, &[1.0, 1.0, 1.0]).unwrap(), 0.5);
        assert!(matches!(c_index(&t, &[false; 3], &[1.0; 3]), Err(Error::NoComparablePairs(_))));
    }

    #[test]
    fn km_fixtures() {
        let c = km_estimate(&[1.0, 2.0, 3.0], &[true; 3], "all").unwrap();
        let s: Vec<_> = c.points.iter().map(|p| (p.time, p.survival, p.at_risk)).collect();
        assert_eq!(s[0], (0.0, 1.0, 3));
        assert!((s[1].1 - 2.0 / 3.0).abs() < 1e-12 && s[1].0 == 1.0);
        assert!((s[2].1 - 1.0 / 3.0).abs() < 1e-12 && s[2].0 == 2.0);
        assert_eq!(s[3].1, 0.0);
        let cens = km_estimate(&[1.0, 4.0], &[false, false], "c").unwrap();
        assert_eq!(cens.points.len(), 1);
        assert_eq!(cens.survival_at(100.0), 1.0);
        let one = km_estimate(&[5.0], &[true], "x").unwrap();
        assert_eq!(one.survival_at(4.9), 1.0);
        assert_eq!(one.survival_at(5.0), 0.0);
        // censoring only shrinks the risk set
        let mixed = km_estimate(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, false], "m").unwrap();
        assert_eq!(mixed.survival_at(3.5), 0.75 * 0.5);
        assert!(km_csv(&[one]).starts_with("group,time,survival,at_risk\nx,0.0000000000000000e0,1.0000000000000000e0,1\n"));
    }

    #[test]
    fn logrank_fixtures() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [true, false, true, true];
        let lr = logrank_test((&t, &e), (&t, &e)).unwrap();
        assert_eq!(lr.statistic, 0.0);
        assert_eq!(lr.p_value, 1.0);
        assert!(lr.small_sample);
        assert!(logrank_test((&t, &[false; 4]), (&t, &[false; 4])).is_err());
        assert!(logrank_test((&[], &[]), (&t, &e)).is_err());
    }

    /// Textbook observed-minus-expected table built independently.
    fn oe_table(a: &[(f64, bool)], b: &[(f64, bool)]) -> f64 {
        let mut times: Vec<f64> = a.iter().chain(b).filter(|x| x.1).map(|x| x.0).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let (mut o_minus_e, mut v) = (0.0, 0.0);
        for t in times {
            let n1 = a.iter().filter(|x| x.0 >= t).count() as f64;
            let n2 = b.iter().filter(|x| x.0 >= t).count() as f64;
            let d1 = a.iter().filter(|x| x.0 == t && x.1).count() as f64;
            let d2 = b.iter().filter(|x| x.0 == t && x.1).count() as f64;
            let (n, d) = (n1 + n2, d1 + d2);
            o_minus_e += d1 - d * n1 / n;
            if n > 1.0 {
                v += d * (n1 / n) * (1.0 - n1 / n) * (n - d) / (n - 1.0);
            }
        }
        o_minus_e * o_minus_e / v
    }

    #[test]
    fn separated_groups() {
        let ta: Vec<f64> = (0..20).map(|i| 0.05 * (i + 1) as f64).collect();
        let tb: Vec<f64> = (0..20).map(|i| 10.0 + i as f64).collect();
        let e = vec![true; 20];
        let lr = logrank_test((&ta, &e), (&tb, &e)).unwrap();
        assert!(lr.p_value < 0.001);
        let a: Vec<_> = ta.iter().map(|&t| (t, true)).collect();
        let b: Vec<_> = tb.iter().map(|&t| (t, true)).collect();
        assert!((lr.statistic - oe_table(&a, &b)).abs() < 1e-10 * lr.statistic);
    }

    #[test]
    fn threshold_fixtures() {
        assert_eq!(optimal_threshold(&[0.0, 1.0], &[1.0, 2.0], &[true, true]).unwrap(), 0.5);
        assert!(matches!(
            optimal_threshold(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &[true; 4]),
            Err(Error::NoAdmissibleThreshold)
        ));
        // high-risk group dies early, low-risk group late
        let risks: Vec<f64> = (0..20).map(|i| if i < 10 { 5.0 + i as f64 * 0.1 } else { -5.0 + i as f64 * 0.1 }).collect();
        let times: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 + i as f64 * 0.01 } else { 10.0 + i as f64 }).collect();
        let thr = optimal_threshold(&risks, &times, &[true; 20]).unwrap();
        assert!(risks[..10].iter().all(|&r| r > thr));
        assert!(risks[10..].iter().all(|&r| r <= thr));
    }

    #[test]
    fn pvalue_aggregation() {
        assert!((aggregate_pvalue(&[0.01, 0.02, 0.03]).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(aggregate_pvalue(&[0.9, 0.9]).unwrap(), 1.0);
        assert!((aggregate_pvalue(&[0.5, 0.022, 0.001]).unwrap() - 0.044).abs() < 1e-15);
        assert!(aggregate_pvalue(&[]).is_err());
        assert!(aggregate_pvalue(&[1.5]).is_err());
    }

    #[test]
    fn oob_properties() {
        let n = 1000;
        let times: Vec<f64> = (0..n).map(|i| (i % 97) as f64 + 1.0).collect();
        let events: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let mut fractions = Vec::new();
        for seed in 0..10 {
            let (train, test) = oob_split(&times, &events, seed).unwrap();
            assert_eq!(train.len() + test.len(), n);
            assert!(test.iter().all(|i| train.binary_search(i).is_err()));
            fractions.push(test.len() as f64 / n as f64);
        }
        let expected = (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!(fractions.iter().all(|f| (f - expected).abs() < 0.05));
        assert_eq!(oob_split(&times, &events, 3).unwrap(), oob_split(&times, &events, 3).unwrap());
    }

    #[test]
    fn oob_single_event_stratum() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let events = [true, false, false, false, false, false];
        // the lone event always lands in training, so test never has a pair
        assert!(matches!(oob_split(&times, &events, 0), Err(Error::Degenerate(_))));
        assert!(oob_split(&times, &[true; 6], 0).is_err());
    }

    proptest! {
        #[test]
        fn negated_risks_complement(
            (t, e, r) in (3usize..25).prop_flat_map(|n| (
                proptest::collection::vec(0u8..12, n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<u8>(), n),
            ))
        ) {
            let t: Vec<f64> = t.into_iter().map(f64::from).collect();
            let r: Vec<f64> = r.into_iter().map(f64::from).collect();
            if let Ok(c) = c_index(&t, &e, &r) {
                let neg: Vec<f64> = r.iter().map(|v| -v).collect();
                prop_assert_eq!(c + c_index(&t, &e, &neg).unwrap(), 1.0);
            }
        }

        #[test]
        fn km_monotone(
            (t, e) in (1usize..30).prop_flat_map(|n| (
                proptest::collection::vec(0u8..20, n),
                proptest::collection::vec(any::<bool>(), n),
            ))
        ) {
            let t: Vec<f64> = t.into_iter().map(f64::from).collect();
            let c = km_estimate(&t, &e, "g").unwrap();
            prop_assert_eq!(c.points[0].survival, 1.0);
            for w in c.points.windows(2) {
                prop_assert!(w[1].survival <= w[0].survival && w[1].survival >= 0.0);
            }
            if e.iter().all(|&x| x) {
                for p in c.points.iter().skip(1) {
                    let emp = t.iter().filter(|&&x| x > p.time).count() as f64 / t.len() as f64;
                    prop_assert!((p.survival - emp).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn logrank_symmetric(
            (ta, ea, tb, eb) in (1usize..15, 1usize..15).prop_flat_map(|(n, m)| (
                proptest::collection::vec(0u8..10, n),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(0u8..10, m),
                proptest::collection::vec(any::<bool>(), m),
            ))
        ) {
            let ta: Vec<f64> = ta.into_iter().map(f64::from).collect();
            let tb: Vec<f64> = tb.into_iter().map(f64::from).collect();
            match (logrank_test((&ta, &ea), (&tb, &eb)), logrank_test((&tb, &eb), (&ta, &ea))) {
                (Ok(x), Ok(y)) => {
                    prop_assert_eq!(x, y);
                    prop_assert!(x.statistic >= 0.0);
                    prop_assert!(x.p_value > 0.0 && x.p_value <= 1.0);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric definedness"),
            }
        }
    }
}
