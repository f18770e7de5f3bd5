use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::pipeline::RawObservation;
use crate::roadnet::{LinkId, RoadGraph};

pub const DEFAULT_MIN_RUN: usize = 4;

#[derive(Debug, Clone, Default)]
pub struct DefaultSpeedRemoval {
    /// Surviving observations, in input order.
    pub kept: Vec<RawObservation>,
    pub removed: Vec<RawObservation>,
}

/// Drops placeholder readings: values exactly equal to the link's free-flow
/// speed that repeat over at least `min_run` consecutive observations.
pub fn remove_default_speeds(
    obs: &[RawObservation],
    graph: &RoadGraph,
    min_run: usize,
) -> Result<DefaultSpeedRemoval> {
    let unknown: BTreeSet<LinkId> = obs
        .iter()
        .map(|o| o.link_id)
        .filter(|l| !graph.contains(*l))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownLinks(unknown.into_iter().collect()));
    }

    let mut per_link: BTreeMap<LinkId, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.iter().enumerate() {
        per_link.entry(o.link_id).or_default().push(i);
    }

    let mut drop = vec![false; obs.len()];
    for (link, mut idx) in per_link {
        let ff = graph.link(link).expect("checked above").free_flow_kmh;
        idx.sort_by_key(|&i| obs[i].timestamp);
        let mut run_start = 0;
        for pos in 0..=idx.len() {
            let is_default = pos < idx.len() && obs[idx[pos]].speed_kmh == ff;
            if is_default {
                continue;
            }
            if pos - run_start >= min_run.max(1) {
                for &i in &idx[run_start..pos] {
                    drop[i] = true;
                }
            }
            run_start = pos + 1;
        }
    }

    let mut out = DefaultSpeedRemoval::default();
    for (o, d) in obs.iter().zip(drop) {
        if d {
            out.removed.push(*o);
        } else {
            out.kept.push(*o);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::{LinkRecord, NodeId};
    use chrono::{Duration, TimeZone, Utc};

    fn graph() -> RoadGraph {
        RoadGraph::new(vec![LinkRecord {
            link_id: LinkId(1),
            from_node: NodeId(0),
            to_node: NodeId(1),
            length_m: 100.0,
            free_flow_kmh: 50.0,
        }])
        .unwrap()
    }

    fn series(values: &[f64]) -> Vec<RawObservation> {
        let t0 = Utc.with_ymd_and_hms(2018, 7, 22, 0, 0, 0).unwrap();
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| RawObservation {
                link_id: LinkId(1),
                timestamp: t0 + Duration::minutes(15 * i as i64),
                speed_kmh: v,
            })
            .collect()
    }

    #[test]
    fn run_of_six_removed() {
        let obs = series(&[30.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 31.0]);
        let r = remove_default_speeds(&obs, &graph(), 4).unwrap();
        assert_eq!(r.removed.len(), 6);
        assert_eq!(r.kept.len(), 2);
    }

    #[test]
    fn isolated_value_kept() {
        let obs = series(&[30.0, 50.0, 31.0, 50.0, 50.0, 50.0]);
        let r = remove_default_speeds(&obs, &graph(), 4).unwrap();
        assert!(r.removed.is_empty());
    }

    #[test]
    fn unsorted_input_handled_and_order_preserved() {
        let mut obs = series(&[50.0, 50.0, 50.0, 50.0, 12.0]);
        obs.reverse();
        let r = remove_default_speeds(&obs, &graph(), 4).unwrap();
        assert_eq!(r.removed.len(), 4);
        assert_eq!(r.kept[0].speed_kmh, 12.0);
    }

    #[test]
    fn unknown_links_listed() {
        let mut obs = series(&[1.0]);
        obs[0].link_id = LinkId(77);
        match remove_default_speeds(&obs, &graph(), 4) {
            Err(Error::UnknownLinks(ids)) => assert_eq!(ids, vec![LinkId(77)]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
