#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_core::pipeline::{axis_for, ingest_reader};

fuzz_target!(|data: &[u8]| {
    if let Ok(ing) = ingest_reader(data) {
        assert!(ing.malformed <= ing.rows);
        for o in &ing.observations {
            assert!(o.speed_kmh.is_finite());
        }
        let _ = axis_for(&ing.observations);
    }
});
