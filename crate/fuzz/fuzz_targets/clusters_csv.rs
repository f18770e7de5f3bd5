#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_core::wavelet::ClusterAssignment;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = ClusterAssignment::from_csv_reader(data) {
        let mut out = Vec::new();
        c.to_csv_writer(&mut out).expect("in-memory write");
        let again = ClusterAssignment::from_csv_reader(&out[..]).expect("round trip");
        assert_eq!((again.k, &again.assignment), (c.k, &c.assignment));
    }
});
