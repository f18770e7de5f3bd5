//! Road graph, time axis and speed series shared by every other module.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};

/// Seconds between two consecutive grid points.
pub const STEP_SECONDS: i64 = 900;
pub const STEPS_PER_DAY: usize = 96;
pub const STEPS_PER_WEEK: usize = 672;
/// Default upper bound for a plausible observed speed.
pub const SPEED_CEILING_KMH: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u64);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub link_id: LinkId,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub length_m: f64,
    pub free_flow_kmh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Upstream,
    Downstream,
}

/// Directed link graph. Edge weights are the link lengths.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    links: Vec<LinkRecord>,
    nodes: BTreeSet<NodeId>,
    index: HashMap<LinkId, usize>,
    into_node: HashMap<NodeId, Vec<usize>>,
    out_of_node: HashMap<NodeId, Vec<usize>>,
}

impl RoadGraph {
    pub fn new(links: Vec<LinkRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(links.len());
        let mut nodes = BTreeSet::new();
        let mut into_node: HashMap<NodeId, Vec<usize>> = HashMap::new();
        let mut out_of_node: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, l) in links.iter().enumerate() {
            if index.insert(l.link_id, i).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate link_id {}",
                    l.link_id
                )));
            }
            if !(l.length_m.is_finite() && l.length_m > 0.0) {
                return Err(Error::Validation(format!(
                    "link {} has non-positive length {}",
                    l.link_id, l.length_m
                )));
            }
            if !(l.free_flow_kmh.is_finite() && l.free_flow_kmh > 0.0) {
                return Err(Error::Validation(format!(
                    "link {} has non-positive free-flow speed {}",
                    l.link_id, l.free_flow_kmh
                )));
            }
            nodes.insert(l.from_node);
            nodes.insert(l.to_node);
            out_of_node.entry(l.from_node).or_default().push(i);
            into_node.entry(l.to_node).or_default().push(i);
        }
        Ok(Self {
            links,
            nodes,
            index,
            into_node,
            out_of_node,
        })
    }

    pub fn links(&self) -> &[LinkRecord] {
        &self.links
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn link(&self, id: LinkId) -> Option<&LinkRecord> {
        self.index.get(&id).map(|&i| &self.links[i])
    }

    pub fn contains(&self, id: LinkId) -> bool {
        self.index.contains_key(&id)
    }

    /// Links whose head is this link's tail: traffic on them flows into `id`.
    /// The reverse twin of `id` (a U-turn) is not adjacent.
    pub fn upstream(&self, id: LinkId) -> impl Iterator<Item = &LinkRecord> {
        let this = self.link(id);
        this.and_then(|l| self.into_node.get(&l.from_node))
            .into_iter()
            .flatten()
            .map(|&i| &self.links[i])
            .filter(move |l| {
                let t = this.expect("present when iterating");
                l.link_id != id && l.from_node != t.to_node
            })
    }

    /// Links leaving this link's head, U-turn excluded.
    pub fn downstream(&self, id: LinkId) -> impl Iterator<Item = &LinkRecord> {
        let this = self.link(id);
        this.and_then(|l| self.out_of_node.get(&l.to_node))
            .into_iter()
            .flatten()
            .map(|&i| &self.links[i])
            .filter(move |l| {
                let t = this.expect("present when iterating");
                l.link_id != id && l.to_node != t.from_node
            })
    }

    /// Links reachable from `id` in `direction`, ordered by (cumulative path
    /// length, link id). A neighbour's distance includes its own length and
    /// excludes the length of `id`. Stops after `limit` links or past `max_dist`.
    pub fn reach(
        &self,
        id: LinkId,
        direction: Direction,
        limit: usize,
        max_dist: f64,
    ) -> Vec<(LinkId, f64)> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        #[derive(PartialEq)]
        struct Key(f64, LinkId);
        impl Eq for Key {}
        impl PartialOrd for Key {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Key {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
            }
        }

        let mut out = Vec::new();
        if !self.contains(id) || limit == 0 {
            return out;
        }
        let mut settled = std::collections::HashSet::new();
        settled.insert(id);
        let mut heap = BinaryHeap::new();
        let push_next = |from: LinkId, dist: f64, heap: &mut BinaryHeap<Reverse<Key>>| {
            let next: Vec<&LinkRecord> = match direction {
                Direction::Upstream => self.upstream(from).collect(),
                Direction::Downstream => self.downstream(from).collect(),
            };
            for l in next {
                heap.push(Reverse(Key(dist + l.length_m, l.link_id)));
            }
        };
        push_next(id, 0.0, &mut heap);
        while let Some(Reverse(Key(dist, link))) = heap.pop() {
            if dist > max_dist {
                break;
            }
            if !settled.insert(link) {
                continue;
            }
            out.push((link, dist));
            if out.len() == limit {
                break;
            }
            push_next(link, dist, &mut heap);
        }
        out
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = [
            "link_id",
            "from_node",
            "to_node",
            "length_m",
            "free_flow_kmh",
        ];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Validation(format!(
                "graph header must be `{}`, found `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let links = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<LinkRecord>, _>>()?;
        Self::new(links)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for l in &self.links {
            w.serialize(l)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_csv_writer(std::fs::File::create(path)?)
    }
}

/// Regular 15-minute time grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeAxis {
    start: DateTime<Utc>,
    count: usize,
}

impl TimeAxis {
    pub fn new(start: DateTime<Utc>, count: usize) -> Result<Self> {
        if start.timestamp().rem_euclid(STEP_SECONDS) != 0 || start.timestamp_subsec_nanos() != 0 {
            return Err(Error::Validation(format!(
                "axis start {start} is not on a 15-minute boundary"
            )));
        }
        Ok(Self { start, count })
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn step_seconds(&self) -> i64 {
        STEP_SECONDS
    }

    pub fn timestamp(&self, index: usize) -> Result<DateTime<Utc>> {
        if index >= self.count {
            return Err(Error::OutOfRange {
                index,
                count: self.count,
            });
        }
        Ok(self.start + chrono::Duration::seconds(index as i64 * STEP_SECONDS))
    }

    pub fn index_of(&self, ts: DateTime<Utc>) -> Result<usize> {
        let delta = ts.timestamp() - self.start.timestamp();
        if delta < 0 || delta % STEP_SECONDS != 0 || ts.timestamp_subsec_nanos() != 0 {
            return Err(Error::Validation(format!(
                "{ts} is not a grid point of this axis"
            )));
        }
        let index = (delta / STEP_SECONDS) as usize;
        if index >= self.count {
            return Err(Error::OutOfRange {
                index,
                count: self.count,
            });
        }
        Ok(index)
    }

    /// (day of week with Sunday = 0, 15-minute slot of the day).
    pub fn weekday_slot(&self, index: usize) -> Result<(usize, usize)> {
        let ts = self.timestamp(index)?;
        let day = ts.weekday().num_days_from_sunday() as usize;
        let slot = (ts.hour() * 60 + ts.minute()) as usize / 15;
        Ok((day, slot))
    }

    /// The sub-axis covering `range`.
    pub fn sub(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.count {
            return Err(Error::OutOfRange {
                index: range.end,
                count: self.count,
            });
        }
        let start = self.start + chrono::Duration::seconds(range.start as i64 * STEP_SECONDS);
        Ok(Self {
            start,
            count: range.end - range.start,
        })
    }
}

/// Steps of the same time one day and one week before `t`.
pub fn lag_indices(t: usize) -> Result<(usize, usize)> {
    if t < STEPS_PER_WEEK {
        return Err(Error::InsufficientHistory(format!(
            "index {t} has less than one week ({STEPS_PER_WEEK} steps) of history"
        )));
    }
    Ok((t - STEPS_PER_DAY, t - STEPS_PER_WEEK))
}

/// Speeds of one link on a [`TimeAxis`]. `mask[t]` is true where the value was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSeries {
    pub link_id: LinkId,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl SpeedSeries {
    pub fn observed(link_id: LinkId, values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        Self {
            link_id,
            values,
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|m| !**m).count() as f64 / self.mask.len() as f64
    }

    fn validate(&self, count: usize, ceiling: f64) -> Result<()> {
        if self.values.len() != count || self.mask.len() != count {
            return Err(Error::Validation(format!(
                "series {} has {} values and {} mask entries, axis has {count}",
                self.link_id,
                self.values.len(),
                self.mask.len()
            )));
        }
        for (t, (&v, &m)) in self.values.iter().zip(&self.mask).enumerate() {
            if m && !(v.is_finite() && (0.0..=ceiling).contains(&v)) {
                return Err(Error::Validation(format!(
                    "series {} has out-of-range speed {v} at step {t}",
                    self.link_id
                )));
            }
        }
        Ok(())
    }
}

/// All link series on one common axis, keyed and iterated in link-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    axis: TimeAxis,
    series: BTreeMap<LinkId, SpeedSeries>,
}

const SERIES_MAGIC: &[u8] = b"TFSS1";

impl SeriesSet {
    pub fn new(axis: TimeAxis, series: impl IntoIterator<Item = SpeedSeries>) -> Result<Self> {
        Self::with_ceiling(axis, series, SPEED_CEILING_KMH)
    }

    pub fn with_ceiling(
        axis: TimeAxis,
        series: impl IntoIterator<Item = SpeedSeries>,
        ceiling: f64,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in series {
            s.validate(axis.count(), ceiling)?;
            let id = s.link_id;
            if map.insert(id, s).is_some() {
                return Err(Error::Validation(format!("duplicate series for link {id}")));
            }
        }
        Ok(Self { axis, series: map })
    }

    pub fn axis(&self) -> &TimeAxis {
        &self.axis
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn link_ids(&self) -> Vec<LinkId> {
        self.series.keys().copied().collect()
    }

    pub fn get(&self, id: LinkId) -> Result<&SpeedSeries> {
        self.series
            .get(&id)
            .ok_or_else(|| Error::UnknownLinks(vec![id]))
    }

    pub fn values(&self, id: LinkId) -> Result<&[f64]> {
        Ok(&self.get(id)?.values)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SpeedSeries> {
        self.series.values()
    }

    pub fn into_series(self) -> impl Iterator<Item = SpeedSeries> {
        self.series.into_values()
    }

    /// Copy of the steps in `range`, on the matching sub-axis.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        let axis = self.axis.sub(range.clone())?;
        let series = self
            .series
            .iter()
            .map(|(&id, s)| {
                (
                    id,
                    SpeedSeries {
                        link_id: id,
                        values: s.values[range.clone()].to_vec(),
                        mask: s.mask[range.clone()].to_vec(),
                    },
                )
            })
            .collect();
        Ok(Self { axis, series })
    }

    /// Subset restricted to `links`.
    pub fn select(&self, links: &[LinkId]) -> Result<Self> {
        let missing: Vec<LinkId> = links
            .iter()
            .copied()
            .filter(|l| !self.series.contains_key(l))
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnknownLinks(missing));
        }
        let series = links.iter().map(|l| (*l, self.series[l].clone())).collect();
        Ok(Self {
            axis: self.axis,
            series,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_magic(SERIES_MAGIC);
        w.i64(self.axis.start.timestamp());
        w.usize(self.axis.count);
        w.usize(self.series.len());
        for s in self.series.values() {
            w.u64(s.link_id.0);
            w.f64s(&s.values);
            let mask: Vec<u8> = s.mask.iter().map(|&m| m as u8).collect();
            w.bytes(&mask);
        }
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_magic(SERIES_MAGIC)?;
        let start_secs = r.i64()?;
        let start = Utc
            .timestamp_opt(start_secs, 0)
            .single()
            .ok_or_else(|| Error::Format(format!("start timestamp {start_secs} out of range")))?;
        let count = r.usize()?;
        let per_series = count
            .checked_mul(9)
            .and_then(|b| b.checked_add(8))
            .ok_or_else(|| Error::Format("series length overflows".into()))?;
        let n = r.count(per_series)?;
        let axis = TimeAxis::new(start, count).map_err(|e| Error::Format(e.to_string()))?;
        let mut series = Vec::with_capacity(n);
        for _ in 0..n {
            let link_id = LinkId(r.u64()?);
            let values = r.f64s(count)?;
            let mask = r
                .bytes(count)?
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Format(format!("mask byte {other} is not 0 or 1"))),
                })
                .collect::<Result<Vec<_>>>()?;
            series.push(SpeedSeries {
                link_id,
                values,
                mask,
            });
        }
        r.finish()?;
        Self::new(axis, series).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sunday() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap()
    }

    #[test]
    fn weekday_slot_examples() {
        let axis = TimeAxis::new(sunday(), 2000).unwrap();
        assert_eq!(axis.weekday_slot(0).unwrap(), (0, 0));
        assert_eq!(axis.weekday_slot(96).unwrap(), (1, 0));
        assert_eq!(axis.weekday_slot(100).unwrap(), (1, 4));
        assert!(matches!(
            axis.weekday_slot(2000),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn lag_examples() {
        assert_eq!(lag_indices(672).unwrap(), (576, 0));
        assert_eq!(lag_indices(1000).unwrap(), (904, 328));
        assert!(matches!(
            lag_indices(100),
            Err(Error::InsufficientHistory(_))
        ));
    }

    #[test]
    fn unaligned_start_rejected() {
        let ts = Utc.with_ymd_and_hms(2018, 7, 22, 0, 7, 0).unwrap();
        assert!(TimeAxis::new(ts, 10).is_err());
    }

    #[test]
    fn graph_validation() {
        let rec = |id, a, b, len| LinkRecord {
            link_id: LinkId(id),
            from_node: NodeId(a),
            to_node: NodeId(b),
            length_m: len,
            free_flow_kmh: 50.0,
        };
        assert!(RoadGraph::new(vec![rec(1, 0, 1, 10.0), rec(1, 1, 2, 10.0)]).is_err());
        assert!(RoadGraph::new(vec![rec(1, 0, 1, 0.0)]).is_err());
        let g = RoadGraph::new(vec![
            rec(1, 0, 1, 10.0),
            rec(2, 1, 2, 10.0),
            rec(3, 2, 3, 5.0),
        ])
        .unwrap();
        assert_eq!(g.nodes().len(), 4);
        assert_eq!(
            g.upstream(LinkId(2)).map(|l| l.link_id).collect::<Vec<_>>(),
            vec![LinkId(1)]
        );
        assert_eq!(
            g.downstream(LinkId(2))
                .map(|l| l.link_id)
                .collect::<Vec<_>>(),
            vec![LinkId(3)]
        );
    }

    #[test]
    fn graph_csv_round_trip() {
        let csv = "link_id,from_node,to_node,length_m,free_flow_kmh\n7,1,2,120.5,50\n8,2,3,80,40\n";
        let g = RoadGraph::from_csv_reader(csv.as_bytes()).unwrap();
        let mut out = Vec::new();
        g.to_csv_writer(&mut out).unwrap();
        let g2 = RoadGraph::from_csv_reader(out.as_slice()).unwrap();
        assert_eq!(g.links(), g2.links());
        let bad = "id,from,to\n1,2,3\n";
        assert!(RoadGraph::from_csv_reader(bad.as_bytes()).is_err());
    }

    #[test]
    fn series_validation_rejects_bad_speeds() {
        let axis = TimeAxis::new(sunday(), 3).unwrap();
        let s = SpeedSeries::observed(LinkId(1), vec![10.0, 300.0, 20.0]);
        assert!(SeriesSet::new(axis, [s.clone()]).is_err());
        let mut s2 = s;
        s2.mask[1] = false;
        assert!(SeriesSet::new(axis, [s2]).is_ok());
        let short = SpeedSeries::observed(LinkId(2), vec![1.0]);
        assert!(SeriesSet::new(axis, [short]).is_err());
    }

    #[test]
    fn series_set_binary_round_trip_and_slice() {
        let axis = TimeAxis::new(sunday(), 4).unwrap();
        let mut s = SpeedSeries::observed(LinkId(3), vec![1.0, 2.0, 3.0, 4.0]);
        s.mask[2] = false;
        let set = SeriesSet::new(axis, [s]).unwrap();
        let back = SeriesSet::from_bytes(&set.to_bytes()).unwrap();
        assert_eq!(set, back);
        let sl = set.slice(1..3).unwrap();
        assert_eq!(sl.values(LinkId(3)).unwrap(), &[2.0, 3.0]);
        assert_eq!(sl.axis().start(), axis.timestamp(1).unwrap());
        let mut bytes = set.to_bytes();
        bytes.truncate(bytes.len() - 2);
        assert!(SeriesSet::from_bytes(&bytes).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn timestamp_index_round_trip(t in 0usize..20_000) {
                let axis = TimeAxis::new(sunday(), 20_000).unwrap();
                let ts = axis.timestamp(t).unwrap();
                prop_assert_eq!(axis.index_of(ts).unwrap(), t);
            }

            #[test]
            fn lag_shifts_are_exact(t in 672usize..100_000) {
                let (d, w) = lag_indices(t).unwrap();
                prop_assert_eq!(t - d, 96);
                prop_assert_eq!(t - w, 672);
            }
        }
    }
}
