#![no_main]

use ccbm_core::oracle::{parse_record_log, AnnotationRecord, KeyphraseRecord};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let lines = text.lines().count();
    let (annotations, skipped) = parse_record_log::<AnnotationRecord>(&text);
    assert!(annotations.len() + skipped <= lines);
    let (bags, skipped) = parse_record_log::<KeyphraseRecord>(&text);
    assert!(bags.len() + skipped <= lines);
});
