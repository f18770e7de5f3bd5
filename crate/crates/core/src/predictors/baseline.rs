//! Contextual average: the mean of past values at the same weekday and slot.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::roadnet::{TimeAxis, STEPS_PER_DAY, STEPS_PER_WEEK};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    /// Mean speed per weekly slot, indexed `day * 96 + slot` with Sunday as day 0.
    pub profile: Vec<f64>,
}

/// Index of step `t` within the week.
pub fn week_slot(axis: &TimeAxis, t: usize) -> Result<usize> {
    let (day, slot) = axis.weekday_slot(t)?;
    Ok(day * STEPS_PER_DAY + slot)
}

pub fn fit_baseline(
    values: &[f64],
    axis: &TimeAxis,
    range: &Range<usize>,
) -> Result<BaselineModel> {
    if range.end > values.len() || range.len() < STEPS_PER_WEEK {
        return Err(Error::InsufficientHistory(format!(
            "the contextual average needs a full training week, got {} steps",
            range.len()
        )));
    }
    let mut sum = vec![0.0; STEPS_PER_WEEK];
    let mut count = vec![0usize; STEPS_PER_WEEK];
    let first = week_slot(axis, range.start)?;
    for (i, &v) in values[range.clone()].iter().enumerate() {
        let s = (first + i) % STEPS_PER_WEEK;
        sum[s] += v;
        count[s] += 1;
    }
    let profile = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    BaselineModel::new(profile)
}

impl BaselineModel {
    pub fn new(profile: Vec<f64>) -> Result<Self> {
        if profile.len() != STEPS_PER_WEEK || profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "weekly profile needs {STEPS_PER_WEEK} finite values"
            )));
        }
        Ok(Self { profile })
    }

    /// Forecasts for `t + 1 ..= t + h`; only the calendar position of `t` is used.
    pub fn predict(&self, axis: &TimeAxis, t: usize, h: usize) -> Result<Vec<f64>> {
        let s = week_slot(axis, t)?;
        Ok((1..=h)
            .map(|k| self.profile[(s + k) % STEPS_PER_WEEK])
            .collect())
    }
}
