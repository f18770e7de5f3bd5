#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_core::roadnet::SeriesSet;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = SeriesSet::from_bytes(data) {
        let again = SeriesSet::from_bytes(&set.to_bytes()).expect("re-encoded set decodes");
        assert_eq!(set.link_ids(), again.link_ids());
    }
});
