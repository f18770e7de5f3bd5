use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::features::gcnn::{build_gcnn_tensors, gcnn_payload_len};
use crate::features::neighbors::NeighborSet;
use crate::features::windows::{build_windows, History, WindowParams};
use crate::roadnet::{LinkId, SeriesSet};

const DATASET_MAGIC: &[u8] = b"TFDS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Per link: `[x_w, x_d, x_n, context]`.
    Windows,
    /// Per sample: flattened [`GcnnTensorBatch`](crate::features::GcnnTensorBatch).
    Gcnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetScope {
    Link(LinkId),
    AllLinks,
}

/// Feature/target pairs, one per origin in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedDataset {
    pub kind: DatasetKind,
    pub links: Vec<LinkId>,
    pub params: WindowParams,
    /// Neighbourhood size; 0 for window datasets.
    pub k: usize,
    pub h: usize,
    pub origins: Vec<usize>,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Origins in `range` that have full history and `h` future steps inside `range`.
pub fn origins_in(range: &Range<usize>, params: &WindowParams, h: usize) -> Result<Range<usize>> {
    if h == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if range.end < range.start + h + 1 {
        return Err(Error::Validation(format!(
            "range {range:?} leaves no room for {h} future steps"
        )));
    }
    let start = range.start.max(params.earliest_origin());
    let end = range.end - h;
    if start >= end {
        return Err(Error::InsufficientHistory(format!(
            "no origin in {range:?} has {} steps of history",
            params.earliest_origin()
        )));
    }
    Ok(start..end)
}

fn check_range(set: &SeriesSet, range: &Range<usize>) -> Result<()> {
    if range.end > set.axis().count() {
        return Err(Error::OutOfRange {
            index: range.end,
            count: set.axis().count(),
        });
    }
    Ok(())
}

fn push_targets(
    set: &SeriesSet,
    links: &[LinkId],
    t: usize,
    h: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    for &l in links {
        out.extend_from_slice(&set.values(l)?[t + 1..t + 1 + h]);
    }
    Ok(())
}

impl SupervisedDataset {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        match self.kind {
            DatasetKind::Windows => self.links.len() * self.params.input_len(),
            DatasetKind::Gcnn => gcnn_payload_len(self.links.len(), self.k, &self.params),
        }
    }

    pub fn target_len(&self) -> usize {
        self.links.len() * self.h
    }

    pub fn sample_features(&self, i: usize) -> &[f64] {
        let f = self.feature_len();
        &self.features[i * f..(i + 1) * f]
    }

    pub fn sample_targets(&self, i: usize) -> &[f64] {
        let f = self.target_len();
        &self.targets[i * f..(i + 1) * f]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(DATASET_MAGIC);
        w.u8(match self.kind {
            DatasetKind::Windows => 0,
            DatasetKind::Gcnn => 1,
        });
        for v in [
            self.links.len(),
            self.k,
            self.params.w_n,
            self.params.w_d,
            self.params.w_w,
            self.h,
            self.origins.len(),
        ] {
            w.usize(v);
        }
        for l in &self.links {
            w.u64(l.0);
        }
        for i in 0..self.len() {
            w.usize(self.origins[i]);
            w.f64s(self.sample_features(i));
            w.f64s(self.sample_targets(i));
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(DATASET_MAGIC)?;
        let kind = match r.u8()? {
            0 => DatasetKind::Windows,
            1 => DatasetKind::Gcnn,
            t => return Err(Error::Format(format!("unknown dataset kind {t}"))),
        };
        let n = r.count(8)?;
        let k = r.usize()?;
        let params = WindowParams::new(r.usize()?, r.usize()?, r.usize()?)
            .map_err(|e| Error::Format(format!("bad window header: {e}")))?;
        let h = r.usize()?;
        let count = r.usize()?;
        let widest = params.w_n.max(params.w_d).max(params.w_w);
        if h == 0
            || n == 0
            || (kind == DatasetKind::Windows && k != 0)
            || k > 1 << 16
            || h > 1 << 16
            || widest > 1 << 20
        {
            return Err(Error::Format("inconsistent dataset header".into()));
        }
        let mut links = Vec::with_capacity(n);
        for _ in 0..n {
            links.push(LinkId(r.u64()?));
        }
        let mut ds = Self {
            kind,
            links,
            params,
            k,
            h,
            origins: vec![],
            features: vec![],
            targets: vec![],
        };
        let (fl, tl) = (ds.feature_len(), ds.target_len());
        let per = fl
            .checked_add(tl)
            .and_then(|v| v.checked_add(1))
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| Error::Format("dataset sample size overflows".into()))?;
        r.check_room(count, per)?;
        ds.origins.reserve(count);
        for _ in 0..count {
            let t = r.usize()?;
            if ds.origins.last().is_some_and(|&p| p >= t) {
                return Err(Error::Format(
                    "dataset origins are not strictly ascending".into(),
                ));
            }
            ds.origins.push(t);
            ds.features.extend(r.f64s(fl)?);
            ds.targets.extend(r.f64s(tl)?);
        }
        r.finish()?;
        Ok(ds)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Window features for every origin in `range` (see [`origins_in`]).
/// Features are read through a [`History`] bounded at each origin.
pub fn build_dataset(
    set: &SeriesSet,
    range: Range<usize>,
    params: &WindowParams,
    h: usize,
    scope: TargetScope,
) -> Result<SupervisedDataset> {
    params.validate()?;
    check_range(set, &range)?;
    let links = match scope {
        TargetScope::Link(l) => {
            set.get(l)?;
            vec![l]
        }
        TargetScope::AllLinks => set.link_ids(),
    };
    let origins: Vec<usize> = origins_in(&range, params, h)?.collect();
    let mut features = Vec::with_capacity(origins.len() * links.len() * params.input_len());
    let mut targets = Vec::with_capacity(origins.len() * links.len() * h);
    for &t in &origins {
        let hist = History::new(set, t)?;
        for &l in &links {
            build_windows(&hist, l, t, params)?.write_input(&mut features);
        }
        push_targets(set, &links, t, h, &mut targets)?;
    }
    Ok(SupervisedDataset {
        kind: DatasetKind::Windows,
        links,
        params: *params,
        k: 0,
        h,
        origins,
        features,
        targets,
    })
}

/// GCNN tensors for every origin in `range`, for all links of `set`.
pub fn build_gcnn_dataset(
    set: &SeriesSet,
    neighbors: &BTreeMap<LinkId, NeighborSet>,
    k: usize,
    range: Range<usize>,
    params: &WindowParams,
    h: usize,
) -> Result<SupervisedDataset> {
    params.validate()?;
    check_range(set, &range)?;
    let links = set.link_ids();
    let origins: Vec<usize> = origins_in(&range, params, h)?.collect();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for &t in &origins {
        let hist = History::new(set, t)?;
        let batch = build_gcnn_tensors(&hist, neighbors, &links, t, params)?;
        if batch.t_n.shape()[1] != 2 * k + 1 {
            return Err(Error::Shape(format!("neighbour sets do not match k = {k}")));
        }
        batch.flatten_into(&mut features);
        push_targets(set, &links, t, h, &mut targets)?;
    }
    Ok(SupervisedDataset {
        kind: DatasetKind::Gcnn,
        links,
        params: *params,
        k,
        h,
        origins,
        features,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::{SpeedSeries, TimeAxis};
    use chrono::{TimeZone, Utc};

    fn set(weeks: usize) -> SeriesSet {
        let n = weeks * 672;
        let axis = TimeAxis::new(Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap(), n).unwrap();
        let s = (1..=2).map(|i| {
            SpeedSeries::observed(
                LinkId(i),
                (0..n).map(|t| (t % 97) as f64 + i as f64).collect(),
            )
        });
        SeriesSet::new(axis, s).unwrap()
    }

    #[test]
    fn one_week_gives_660_samples() {
        let s = set(3);
        let ds = build_dataset(
            &s,
            672..1344,
            &WindowParams::default(),
            12,
            TargetScope::Link(LinkId(1)),
        )
        .unwrap();
        // the first three origins lack a full week-lagged window
        assert_eq!(ds.len(), 657);
        assert_eq!(ds.origins[0], 675);
        let ds = build_dataset(
            &s,
            1344..2016,
            &WindowParams::default(),
            12,
            TargetScope::Link(LinkId(1)),
        )
        .unwrap();
        assert_eq!(ds.len(), 660);
        assert!(ds.origins.windows(2).all(|w| w[0] < w[1]));
        let v = s.values(LinkId(1)).unwrap();
        assert_eq!(ds.sample_targets(0), &v[1345..1357]);
    }

    #[test]
    fn horizon_one_and_short_ranges() {
        let s = set(3);
        let ds = build_dataset(
            &s,
            1344..1400,
            &WindowParams::default(),
            1,
            TargetScope::AllLinks,
        )
        .unwrap();
        assert_eq!(ds.target_len(), 2);
        assert!(build_dataset(
            &s,
            1344..1350,
            &WindowParams::default(),
            12,
            TargetScope::AllLinks
        )
        .is_err());
        assert!(build_dataset(
            &s,
            0..600,
            &WindowParams::default(),
            12,
            TargetScope::AllLinks
        )
        .is_err());
    }

    #[test]
    fn binary_round_trip() {
        let s = set(2);
        let ds = build_dataset(
            &s,
            1000..1100,
            &WindowParams::default(),
            3,
            TargetScope::AllLinks,
        )
        .unwrap();
        let bytes = ds.to_bytes();
        assert_eq!(SupervisedDataset::from_bytes(&bytes).unwrap(), ds);
        assert!(SupervisedDataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SupervisedDataset::from_bytes(&bad).is_err());
        // w_n field sized so that the feature length overflows
        let mut huge = bytes.clone();
        huge[22..30].copy_from_slice(&(u64::MAX / 3).to_le_bytes());
        assert!(SupervisedDataset::from_bytes(&huge).is_err());
    }

    #[test]
    fn gcnn_dataset_round_trip() {
        use crate::features::neighbors::neighbor_sets;
        use crate::roadnet::{LinkRecord, NodeId, RoadGraph};
        let g = RoadGraph::new(
            (1..=2)
                .map(|i| LinkRecord {
                    link_id: LinkId(i),
                    from_node: NodeId(i),
                    to_node: NodeId(i + 1),
                    length_m: 100.0,
                    free_flow_kmh: 50.0,
                })
                .collect(),
        )
        .unwrap();
        let s = set(2);
        let nb = neighbor_sets(&g, 1);
        let ds = build_gcnn_dataset(&s, &nb, 1, 1000..1020, &WindowParams::default(), 2).unwrap();
        assert_eq!(ds.feature_len(), 2 * (3 * 48 + 4));
        assert_eq!(SupervisedDataset::from_bytes(&ds.to_bytes()).unwrap(), ds);
    }
}
