use std::collections::{BTreeMap, BTreeSet};

use crate::roadnet::{Direction, LinkId, RoadGraph};

/// The `k` nearest upstream and downstream links of one link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub link_id: LinkId,
    pub incoming: Vec<LinkId>,
    pub outgoing: Vec<LinkId>,
}

impl NeighborSet {
    /// Tensor row order: self, incoming 1..k, outgoing 1..k.
    pub fn rows(&self) -> Vec<LinkId> {
        let mut r = Vec::with_capacity(1 + self.incoming.len() + self.outgoing.len());
        r.push(self.link_id);
        r.extend_from_slice(&self.incoming);
        r.extend_from_slice(&self.outgoing);
        r
    }
}

/// Neighbour sets for every link in the graph.
pub fn neighbor_sets(graph: &RoadGraph, k: usize) -> BTreeMap<LinkId, NeighborSet> {
    let all: BTreeSet<LinkId> = graph.links().iter().map(|l| l.link_id).collect();
    neighbor_sets_within(graph, k, &all)
}

/// Neighbour sets for the links in `allowed`, where only links in `allowed`
/// may appear as neighbours. Paths may still pass through other links.
pub fn neighbor_sets_within(
    graph: &RoadGraph,
    k: usize,
    allowed: &BTreeSet<LinkId>,
) -> BTreeMap<LinkId, NeighborSet> {
    let nearest = |id: LinkId, dir: Direction| -> Vec<LinkId> {
        let mut v: Vec<LinkId> = graph
            .reach(id, dir, usize::MAX, f64::INFINITY)
            .into_iter()
            .map(|(l, _)| l)
            .filter(|l| allowed.contains(l))
            .take(k)
            .collect();
        v.resize(k, id);
        v
    };
    allowed
        .iter()
        .filter(|id| graph.contains(**id))
        .map(|&id| {
            let set = NeighborSet {
                link_id: id,
                incoming: nearest(id, Direction::Upstream),
                outgoing: nearest(id, Direction::Downstream),
            };
            (id, set)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::{LinkRecord, NodeId};

    fn link(id: u64, from: u64, to: u64) -> LinkRecord {
        LinkRecord {
            link_id: LinkId(id),
            from_node: NodeId(from),
            to_node: NodeId(to),
            length_m: 100.0,
            free_flow_kmh: 50.0,
        }
    }

    #[test]
    fn chain_by_hand() {
        // A..G = links 1..7 on nodes 0 -> 1 -> ... -> 7
        let g = RoadGraph::new((1..=7).map(|i| link(i, i - 1, i)).collect()).unwrap();
        let n = neighbor_sets(&g, 2);
        let d = &n[&LinkId(4)];
        assert_eq!(d.incoming, vec![LinkId(3), LinkId(2)]);
        assert_eq!(d.outgoing, vec![LinkId(5), LinkId(6)]);
        assert_eq!(
            d.rows(),
            vec![LinkId(4), LinkId(3), LinkId(2), LinkId(5), LinkId(6)]
        );
        // start of the chain pads with itself
        assert_eq!(n[&LinkId(1)].incoming, vec![LinkId(1), LinkId(1)]);
    }

    #[test]
    fn isolated_link_is_all_self() {
        let g = RoadGraph::new(vec![link(9, 0, 1)]).unwrap();
        let n = neighbor_sets(&g, 5);
        assert_eq!(n[&LinkId(9)].incoming, vec![LinkId(9); 5]);
        assert_eq!(n[&LinkId(9)].outgoing, vec![LinkId(9); 5]);
    }

    #[test]
    fn excluded_links_are_skipped_not_padded() {
        let g = RoadGraph::new((1..=7).map(|i| link(i, i - 1, i)).collect()).unwrap();
        let allowed: BTreeSet<LinkId> = [1, 2, 4, 5, 6, 7].into_iter().map(LinkId).collect();
        let n = neighbor_sets_within(&g, 2, &allowed);
        assert_eq!(n[&LinkId(4)].incoming, vec![LinkId(2), LinkId(1)]);
        assert!(!n.contains_key(&LinkId(3)));
    }

    #[test]
    fn deterministic() {
        let spec = crate::pipeline::SynthSpec {
            n_links: 60,
            n_weeks: 3,
            ..Default::default()
        };
        let g = crate::pipeline::generate_synthetic(&spec).unwrap().graph;
        let a = neighbor_sets(&g, 5);
        assert_eq!(a, neighbor_sets(&g, 5));
        assert!(a.values().all(|s| s.rows().len() == 11));
    }
}
