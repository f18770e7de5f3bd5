#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_core::features::SupervisedDataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = SupervisedDataset::from_bytes(data) {
        let again = SupervisedDataset::from_bytes(&ds.to_bytes()).expect("re-encoded dataset decodes");
        assert_eq!(ds.len(), again.len());
        for i in 0..ds.len() {
            assert_eq!(ds.sample_features(i).len(), ds.feature_len());
        }
    }
});
