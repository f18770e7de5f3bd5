//! Train/validation/test splits, per-horizon RMSE, benchmarking and reports.

mod bench;
mod report;

pub use bench::{
    audit_leakage, benchmark, grid_search, BenchmarkOutput, EvalConfig, GridOutcome, LeakageAudit,
};
pub use report::{write_report, ReportFiles};

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictors::{MethodKind, ModelCountClass};
use crate::roadnet::{LinkId, SeriesSet, STEPS_PER_WEEK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_weeks: usize,
    pub val_weeks: usize,
    pub test_weeks: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_weeks: 12,
            val_weeks: 1,
            test_weeks: 1,
        }
    }
}

/// Contiguous step ranges on the series axis, in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Partitions the first `train + val + test` weeks of the axis.
pub fn split(set: &SeriesSet, spec: &SplitSpec) -> Result<Split> {
    if spec.train_weeks == 0 || spec.test_weeks == 0 {
        return Err(Error::Config(
            "train_weeks and test_weeks must be positive".into(),
        ));
    }
    let weeks = spec.train_weeks + spec.val_weeks + spec.test_weeks;
    let need = weeks * STEPS_PER_WEEK;
    if set.axis().count() < need {
        return Err(Error::InsufficientHistory(format!(
            "a {}/{}/{} week split needs {need} steps, the set has {}",
            spec.train_weeks,
            spec.val_weeks,
            spec.test_weeks,
            set.axis().count()
        )));
    }
    let a = spec.train_weeks * STEPS_PER_WEEK;
    let b = a + spec.val_weeks * STEPS_PER_WEEK;
    Ok(Split {
        train: 0..a,
        val: a..b,
        test: b..need,
    })
}

/// Forecast origins in `range` whose `h` targets also fall inside it.
pub fn evaluation_origins(range: &Range<usize>, h: usize) -> Result<Vec<usize>> {
    let end = range.end.saturating_sub(h);
    if end <= range.start {
        return Err(Error::InsufficientHistory(format!(
            "range {range:?} is too short for horizon {h}"
        )));
    }
    Ok((range.start..end).collect())
}

/// Uniform sample of `n` links without replacement, returned in id order.
pub fn sample_links(set: &SeriesSet, n: usize, seed: u64) -> Result<Vec<LinkId>> {
    let all = set.link_ids();
    if n == 0 || n > all.len() {
        return Err(Error::Config(format!(
            "cannot sample {n} of {} links",
            all.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LinkId> = all.choose_multiple(&mut rng, n).copied().collect();
    out.sort();
    Ok(out)
}

/// Forecasts keyed by (link, origin), each holding `h` values.
pub type Forecasts = BTreeMap<(LinkId, usize), Vec<f64>>;

/// Collects `[origin][link][step]` predictions into a keyed table.
pub fn to_forecasts(origins: &[usize], links: &[LinkId], preds: Vec<Vec<Vec<f64>>>) -> Forecasts {
    let mut out = Forecasts::new();
    for (&t, row) in origins.iter().zip(preds) {
        for (&l, p) in links.iter().zip(row) {
            out.insert((l, t), p);
        }
    }
    out
}

/// RMSE per horizon step, pooling squared errors over every link and origin.
/// Every (link, origin) pair must have a forecast of at least `h` steps.
pub fn rmse_h(
    preds: &Forecasts,
    truth: &SeriesSet,
    links: &[LinkId],
    origins: &[usize],
    h: usize,
) -> Result<Vec<f64>> {
    if links.is_empty() || origins.is_empty() || h == 0 {
        return Err(Error::Validation(
            "RMSE needs at least one link, origin and step".into(),
        ));
    }
    let mut sq = vec![0.0; h];
    for &l in links {
        let values = truth.values(l)?;
        for &t in origins {
            let p = preds.get(&(l, t)).ok_or_else(|| {
                Error::Validation(format!("no forecast for link {l} at origin {t}"))
            })?;
            if p.len() < h {
                return Err(Error::Validation(format!(
                    "forecast for link {l} at origin {t} has {} steps",
                    p.len()
                )));
            }
            if t + h >= values.len() {
                return Err(Error::OutOfRange {
                    index: t + h,
                    count: values.len(),
                });
            }
            for k in 0..h {
                let e = p[k] - values[t + 1 + k];
                sq[k] += e * e;
            }
        }
    }
    let n = (links.len() * origins.len()) as f64;
    Ok(sq.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// One row of the benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: MethodKind,
    pub label: String,
    pub rmse_h: Vec<f64>,
    /// Mean wall-clock training seconds per model.
    pub train_time_s: f64,
    /// Serialised size divided by the model count.
    pub size_bytes: f64,
    pub model_count: usize,
    pub model_count_class: String,
}

impl MethodResult {
    pub fn mean_rmse(&self) -> f64 {
        self.rmse_h.iter().sum::<f64>() / self.rmse_h.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub h: usize,
    pub split: Split,
    pub sampled_links: Vec<LinkId>,
    pub test_origins: usize,
    pub results: Vec<MethodResult>,
}

pub(crate) fn count_class_label(c: ModelCountClass) -> String {
    c.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::{SpeedSeries, TimeAxis};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn set(weeks: usize, links: usize) -> SeriesSet {
        let axis = TimeAxis::new(
            Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap(),
            weeks * STEPS_PER_WEEK,
        )
        .unwrap();
        SeriesSet::new(
            axis,
            (0..links).map(|l| {
                SpeedSeries::observed(
                    LinkId(l as u64 + 1),
                    (0..axis.count()).map(|t| 30.0 + (t % 7) as f64).collect(),
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn fourteen_week_split() {
        let s = split(&set(14, 1), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8064, 672, 672));
        assert_eq!(s.train.end, s.val.start);
        assert_eq!(s.val.end, s.test.start);
        assert!(split(&set(2, 1), &SplitSpec::default()).is_err());
        let c = split(
            &set(5, 1),
            &SplitSpec {
                train_weeks: 3,
                val_weeks: 1,
                test_weeks: 1,
            },
        )
        .unwrap();
        assert_eq!(c.test, 4 * 672..5 * 672);
        assert_eq!(evaluation_origins(&c.test, 12).unwrap().len(), 660);
    }

    #[test]
    fn link_sampling() {
        let s = set(1, 30);
        assert_eq!(sample_links(&s, 30, 1).unwrap(), s.link_ids());
        let a = sample_links(&s, 10, 5).unwrap();
        assert_eq!(a, sample_links(&s, 10, 5).unwrap());
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 10);
        assert!(sample_links(&s, 31, 1).is_err());
    }

    #[test]
    fn rmse_hand_example() {
        let s = set(1, 1);
        let l = LinkId(1);
        let v = s.values(l).unwrap();
        let mut p = Forecasts::new();
        p.insert((l, 10), vec![v[11] + 1.0]);
        p.insert((l, 20), vec![v[21] - 2.0]);
        let r = rmse_h(&p, &s, &[l], &[10, 20], 1).unwrap();
        assert!((r[0] - (2.5f64).sqrt()).abs() < 1e-15);
        assert!(rmse_h(&p, &s, &[l], &[10, 30], 1).is_err());
    }

    #[test]
    fn constant_bias_gives_constant_rmse() {
        let s = set(1, 2);
        let links = s.link_ids();
        let origins: Vec<usize> = (0..50).collect();
        let mut p = Forecasts::new();
        for &l in &links {
            let v = s.values(l).unwrap();
            for &t in &origins {
                p.insert((l, t), (1..=12).map(|k| v[t + k] + 3.5).collect());
            }
        }
        for r in rmse_h(&p, &s, &links, &origins, 12).unwrap() {
            assert!((r - 3.5).abs() < 1e-12);
        }
    }

    /// Naive triple loop over (step, link, origin).
    fn oracle(
        p: &Forecasts,
        s: &SeriesSet,
        links: &[LinkId],
        origins: &[usize],
        h: usize,
    ) -> Vec<f64> {
        (0..h)
            .map(|k| {
                let mut acc = 0.0;
                for l in links {
                    for t in origins {
                        let d = p[&(*l, *t)][k] - s.values(*l).unwrap()[t + k + 1];
                        acc += d * d;
                    }
                }
                (acc / (links.len() * origins.len()) as f64).sqrt()
            })
            .collect()
    }

    proptest! {
        #[test]
        fn rmse_matches_double_loop(noise in proptest::collection::vec(-20.0f64..20.0, 3 * 40 * 12)) {
            let s = set(1, 3);
            let links = s.link_ids();
            let origins: Vec<usize> = (100..140).collect();
            let mut p = Forecasts::new();
            let mut it = noise.iter();
            for &l in &links {
                for &t in &origins {
                    p.insert((l, t), (0..12).map(|_| 40.0 + it.next().unwrap()).collect());
                }
            }
            let got = rmse_h(&p, &s, &links, &origins, 12).unwrap();
            for (a, b) in got.iter().zip(oracle(&p, &s, &links, &origins, 12)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
