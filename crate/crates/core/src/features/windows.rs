use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roadnet::{LinkId, SeriesSet, TimeAxis, STEPS_PER_DAY, STEPS_PER_WEEK};

/// Number of cyclic calendar features appended to every input vector.
pub const CONTEXT_LEN: usize = 4;

/// Window lengths, in 15-minute steps, for the recent, day-lagged and
/// week-lagged observation windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowParams {
    pub w_n: usize,
    pub w_d: usize,
    pub w_w: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            w_n: 24,
            w_d: 8,
            w_w: 4,
        }
    }
}

impl WindowParams {
    pub fn new(w_n: usize, w_d: usize, w_w: usize) -> Result<Self> {
        let p = Self { w_n, w_d, w_w };
        p.validate()?;
        Ok(p)
    }

    /// The day and week windows extend `w_d` and `w_w` steps past the lagged
    /// time, so they must stay within one day and one week respectively.
    pub fn validate(&self) -> Result<()> {
        if self.w_n == 0 || self.w_d == 0 || self.w_w == 0 {
            return Err(Error::Config(format!(
                "window lengths must be positive, got {self:?}"
            )));
        }
        if self.w_d > STEPS_PER_DAY || self.w_w > STEPS_PER_WEEK {
            return Err(Error::Config(format!(
                "w_d must be <= {STEPS_PER_DAY} and w_w <= {STEPS_PER_WEEK}, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of speed values in one feature vector.
    pub fn speed_len(&self) -> usize {
        self.w_n + 2 * self.w_d + 2 * self.w_w
    }

    /// Length of the flattened input `[x_w, x_d, x_n, context]`.
    pub fn input_len(&self) -> usize {
        self.speed_len() + CONTEXT_LEN
    }

    /// Smallest origin whose windows all start at or after step 0.
    pub fn earliest_origin(&self) -> usize {
        (self.w_n - 1)
            .max(STEPS_PER_DAY + self.w_d - 1)
            .max(STEPS_PER_WEEK + self.w_w - 1)
    }

    /// Start index and length of the (week, day, recent) windows for origin `t`.
    pub fn spans(&self, t: usize) -> Result<[(usize, usize); 3]> {
        if t < self.earliest_origin() {
            return Err(Error::InsufficientHistory(format!(
                "origin {t} is before the earliest usable origin {}",
                self.earliest_origin()
            )));
        }
        Ok([
            (t - STEPS_PER_WEEK + 1 - self.w_w, 2 * self.w_w),
            (t - STEPS_PER_DAY + 1 - self.w_d, 2 * self.w_d),
            (t + 1 - self.w_n, self.w_n),
        ])
    }
}

/// Cyclic encoding of time of day and day of week at step `t`:
/// `[sin, cos]` of `2π·slot/96` followed by `[sin, cos]` of `2π·day/7`.
pub fn context(axis: &TimeAxis, t: usize) -> Result<[f64; CONTEXT_LEN]> {
    let (day, slot) = axis.weekday_slot(t)?;
    let a = 2.0 * PI * slot as f64 / STEPS_PER_DAY as f64;
    let b = 2.0 * PI * day as f64 / 7.0;
    Ok([a.sin(), a.cos(), b.sin(), b.cos()])
}

/// Read access to link speeds by window.
pub trait SeriesSource {
    fn axis(&self) -> &TimeAxis;
    fn link_ids(&self) -> Vec<LinkId>;
    /// `len` values of `link` starting at step `start`.
    fn window(&self, link: LinkId, start: usize, len: usize) -> Result<&[f64]>;
}

impl SeriesSource for SeriesSet {
    fn axis(&self) -> &TimeAxis {
        SeriesSet::axis(self)
    }

    fn link_ids(&self) -> Vec<LinkId> {
        SeriesSet::link_ids(self)
    }

    fn window(&self, link: LinkId, start: usize, len: usize) -> Result<&[f64]> {
        let v = self.values(link)?;
        let end = start.checked_add(len).filter(|&e| e <= v.len());
        match end {
            Some(end) => Ok(&v[start..end]),
            None => Err(Error::OutOfRange {
                index: start.saturating_add(len).saturating_sub(1),
                count: v.len(),
            }),
        }
    }
}

/// A view of a series set that refuses reads past a prediction origin.
/// Every test-time feature is built through one of these.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    set: &'a SeriesSet,
    origin: usize,
}

impl<'a> History<'a> {
    pub fn new(set: &'a SeriesSet, origin: usize) -> Result<Self> {
        if origin >= set.axis().count() {
            return Err(Error::OutOfRange {
                index: origin,
                count: set.axis().count(),
            });
        }
        Ok(Self { set, origin })
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn set(&self) -> &'a SeriesSet {
        self.set
    }
}

impl SeriesSource for History<'_> {
    fn axis(&self) -> &TimeAxis {
        self.set.axis()
    }

    fn link_ids(&self) -> Vec<LinkId> {
        self.set.link_ids()
    }

    fn window(&self, link: LinkId, start: usize, len: usize) -> Result<&[f64]> {
        if len > 0 && start + len - 1 > self.origin {
            return Err(Error::Leakage {
                requested: start + len - 1,
                origin: self.origin,
            });
        }
        self.set.window(link, start, len)
    }
}

/// Windowed features of one link at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub x_w: Vec<f64>,
    pub x_d: Vec<f64>,
    pub x_n: Vec<f64>,
    pub context: [f64; CONTEXT_LEN],
}

impl FeatureVector {
    /// Flattened input in the order `[x_w, x_d, x_n, context]`.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v =
            Vec::with_capacity(self.x_w.len() + self.x_d.len() + self.x_n.len() + CONTEXT_LEN);
        self.write_input(&mut v);
        v
    }

    pub fn write_input(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.x_w);
        out.extend_from_slice(&self.x_d);
        out.extend_from_slice(&self.x_n);
        out.extend_from_slice(&self.context);
    }
}

pub fn build_windows<S: SeriesSource + ?Sized>(
    src: &S,
    link: LinkId,
    t: usize,
    params: &WindowParams,
) -> Result<FeatureVector> {
    params.validate()?;
    let [w, d, n] = params.spans(t)?;
    let grab = |(start, len): (usize, usize)| -> Result<Vec<f64>> {
        let v = src.window(link, start, len)?;
        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "link {link} has a non-finite speed at step {}",
                start + bad
            )));
        }
        Ok(v.to_vec())
    };
    Ok(FeatureVector {
        x_w: grab(w)?,
        x_d: grab(d)?,
        x_n: grab(n)?,
        context: context(src.axis(), t)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::SpeedSeries;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn ramp_set(count: usize) -> SeriesSet {
        let axis =
            TimeAxis::new(Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap(), count).unwrap();
        let values: Vec<f64> = (0..count).map(|i| i as f64 * 0.01).collect();
        SeriesSet::new(axis, [SpeedSeries::observed(LinkId(1), values)]).unwrap()
    }

    #[test]
    fn default_lengths() {
        let p = WindowParams::default();
        assert_eq!(p.speed_len(), 48);
        assert_eq!(p.input_len(), 52);
        assert_eq!(p.earliest_origin(), 675);
        let set = ramp_set(2000);
        let f = build_windows(&set, LinkId(1), 700, &p).unwrap();
        assert_eq!((f.x_w.len(), f.x_d.len(), f.x_n.len()), (8, 16, 24));
        assert!(build_windows(&set, LinkId(1), 674, &p).is_err());
    }

    #[test]
    fn index_ranges_follow_the_window_formulas() {
        let set = ramp_set(2000);
        let p = WindowParams::new(3, 2, 1).unwrap();
        let t = 1000;
        let f = build_windows(&set, LinkId(1), t, &p).unwrap();
        let at = |i: usize| i as f64 * 0.01;
        assert_eq!(f.x_n, vec![at(t - 2), at(t - 1), at(t)]);
        assert_eq!(f.x_d, vec![at(t - 97), at(t - 96), at(t - 95), at(t - 94)]);
        assert_eq!(f.x_w, vec![at(t - 672), at(t - 671)]);
    }

    #[test]
    fn constant_series_and_midnight_context() {
        let axis =
            TimeAxis::new(Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap(), 2016).unwrap();
        let set =
            SeriesSet::new(axis, [SpeedSeries::observed(LinkId(4), vec![30.0; 2016])]).unwrap();
        // step 1344 is Sunday 00:00 two weeks later
        let f = build_windows(&set, LinkId(4), 1344, &WindowParams::default()).unwrap();
        assert!(f.to_input()[..48].iter().all(|v| *v == 30.0));
        let c = f.context;
        assert!(c[0].abs() < 1e-15 && c[1] == 1.0 && c[2].abs() < 1e-15 && c[3] == 1.0);
    }

    #[test]
    fn history_refuses_future_reads() {
        let set = ramp_set(2000);
        let h = History::new(&set, 900).unwrap();
        assert!(h.window(LinkId(1), 890, 11).is_ok());
        match h.window(LinkId(1), 890, 12) {
            Err(Error::Leakage { requested, origin }) => {
                assert_eq!((requested, origin), (901, 900))
            }
            other => panic!("{other:?}"),
        }
        assert!(build_windows(&h, LinkId(1), 900, &WindowParams::default()).is_ok());
        assert!(build_windows(&h, LinkId(1), 901, &WindowParams::default()).is_err());
    }

    #[test]
    fn lagged_windows_limited_to_one_period() {
        assert!(WindowParams::new(24, 97, 4).is_err());
        assert!(WindowParams::new(0, 8, 4).is_err());
    }

    proptest! {
        #[test]
        fn last_recent_value_is_origin_value(t in 675usize..1999, w_n in 1usize..48) {
            let set = ramp_set(2000);
            let p = WindowParams::new(w_n, 8, 4).unwrap();
            let f = build_windows(&set, LinkId(1), t, &p).unwrap();
            prop_assert_eq!(*f.x_n.last().unwrap(), set.values(LinkId(1)).unwrap()[t]);
            let c = f.context;
            prop_assert!((c[0] * c[0] + c[1] * c[1] - 1.0).abs() < 1e-12);
            prop_assert!((c[2] * c[2] + c[3] * c[3] - 1.0).abs() < 1e-12);
        }
    }
}
