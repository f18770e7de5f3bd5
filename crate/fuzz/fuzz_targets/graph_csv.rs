#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_core::roadnet::RoadGraph;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = RoadGraph::from_csv_reader(data) {
        for l in g.links() {
            assert!(g.contains(l.link_id));
        }
    }
});
