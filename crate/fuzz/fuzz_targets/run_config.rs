#![no_main]

use ccbm_cli::config::{parse_assignment, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = toml::from_str::<RunConfig>(text) {
        let again: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
    for line in text.lines() {
        let _ = parse_assignment(line);
    }
});
