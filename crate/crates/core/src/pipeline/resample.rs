use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::pipeline::RawObservation;
use crate::roadnet::{LinkId, SeriesSet, SpeedSeries, TimeAxis};

/// Widest distance (seconds) to a raw reading on either side of a grid point.
pub const INTERPOLATION_REACH_SECONDS: i64 = 1800;

/// Resamples raw readings onto `axis` by linear interpolation between the
/// two nearest raw readings. Grid points lacking a reading within 30 minutes
/// on both sides stay missing (NaN, mask false).
pub fn regularize(obs: &[RawObservation], axis: &TimeAxis) -> Result<SeriesSet> {
    let mut per_link: BTreeMap<LinkId, Vec<(i64, f64)>> = BTreeMap::new();
    for o in obs {
        per_link
            .entry(o.link_id)
            .or_default()
            .push((o.timestamp.timestamp(), o.speed_kmh));
    }
    let start = axis.start().timestamp();
    let step = axis.step_seconds();
    let series = per_link
        .into_iter()
        .map(|(link, mut pts)| {
            pts.sort_by_key(|p| p.0);
            let pts = average_duplicates(pts);
            let mut values = vec![f64::NAN; axis.count()];
            let mut mask = vec![false; axis.count()];
            let mut next = 0usize;
            for (g, (v, m)) in values.iter_mut().zip(mask.iter_mut()).enumerate() {
                let ts = start + g as i64 * step;
                while next < pts.len() && pts[next].0 < ts {
                    next += 1;
                }
                if next < pts.len() && pts[next].0 == ts {
                    *v = pts[next].1;
                    *m = true;
                    continue;
                }
                if next == 0 || next == pts.len() {
                    continue;
                }
                let (t0, v0) = pts[next - 1];
                let (t1, v1) = pts[next];
                if ts - t0 <= INTERPOLATION_REACH_SECONDS && t1 - ts <= INTERPOLATION_REACH_SECONDS
                {
                    let w = (ts - t0) as f64 / (t1 - t0) as f64;
                    *v = v0 + w * (v1 - v0);
                    *m = true;
                }
            }
            if !mask.iter().any(|&m| m) {
                warn!("link {link} has no readings on the axis");
            }
            SpeedSeries {
                link_id: link,
                values,
                mask,
            }
        })
        .collect::<Vec<_>>();
    SeriesSet::new(*axis, series)
}

fn average_duplicates(pts: Vec<(i64, f64)>) -> Vec<(i64, f64)> {
    let mut out: Vec<(i64, f64, usize)> = Vec::with_capacity(pts.len());
    for (t, v) in pts {
        match out.last_mut() {
            Some(last) if last.0 == t => {
                last.1 += v;
                last.2 += 1;
            }
            _ => out.push((t, v, 1)),
        }
    }
    out.into_iter().map(|(t, s, n)| (t, s / n as f64)).collect()
}

/// Fills missing steps: linear between the nearest observed neighbours inside
/// the series, nearest observed value at either end. Masks are left unchanged.
pub fn fill_missing(set: &SeriesSet) -> Result<SeriesSet> {
    let series = set
        .iter()
        .map(|s| {
            let values = fill_series(&s.values, &s.mask).ok_or_else(|| {
                Error::Degenerate(format!("series {} has no observed values", s.link_id))
            })?;
            Ok(SpeedSeries {
                link_id: s.link_id,
                values,
                mask: s.mask.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SeriesSet::new(*set.axis(), series)
}

fn fill_series(values: &[f64], mask: &[bool]) -> Option<Vec<f64>> {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| mask[i]).collect();
    let (&first, &last) = (observed.first()?, observed.last()?);
    let mut out = values.to_vec();
    out[..first].fill(values[first]);
    out[last + 1..].fill(values[last]);
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (values[a], values[b]);
        for (i, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = (i - a) as f64 / (b - a) as f64;
            *slot = va + w * (vb - va);
        }
    }
    Some(out)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageReport {
    pub kept: usize,
    /// Dropped links with their missing fraction.
    pub dropped: Vec<(LinkId, f64)>,
}

/// Keeps links whose missing share is strictly below `threshold`. Must run on
/// masks computed before filling.
pub fn filter_coverage(set: &SeriesSet, threshold: f64) -> Result<(SeriesSet, CoverageReport)> {
    let mut report = CoverageReport::default();
    let mut kept = Vec::new();
    for s in set.iter() {
        let frac = s.missing_fraction();
        if frac >= threshold {
            report.dropped.push((s.link_id, frac));
        } else {
            kept.push(s.clone());
        }
    }
    report.kept = kept.len();
    Ok((SeriesSet::new(*set.axis(), kept)?, report))
}
