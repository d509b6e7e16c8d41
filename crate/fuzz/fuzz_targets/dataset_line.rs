#![no_main]

use ccbm_core::data::{parse_dataset, parse_dataset_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        for line in text.lines() {
            if let Ok(obs) = parse_dataset_line(line) {
                assert!(!obs.id.is_empty());
                assert!(obs.label.is_none_or(|l| l <= 1));
            }
        }
    }
    let _ = parse_dataset(data);
});
