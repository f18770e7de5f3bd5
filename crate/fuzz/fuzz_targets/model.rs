#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_core::predictors::FittedModel;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = FittedModel::from_bytes(data) {
        let bytes = m.to_bytes();
        let again = FittedModel::from_bytes(&bytes).expect("re-encoded model decodes");
        assert_eq!(m.model_count(), again.model_count());
    }
});
