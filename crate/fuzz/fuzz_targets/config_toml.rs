#![no_main]

use libfuzzer_sys::fuzz_target;
use trafficast_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_toml(text) {
            let again = RunConfig::from_toml(&cfg.to_toml()).expect("dumped config loads");
            assert_eq!(cfg, again);
        }
    }
});
