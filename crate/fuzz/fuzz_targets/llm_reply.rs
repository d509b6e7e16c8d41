#![no_main]

use ccbm_llm::parse::{json_payload, parse_annotations, parse_concepts, parse_keyphrases, parse_proposal};
use ccbm_llm::reply_content;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&count, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let _ = reply_content(text);
    let _ = json_payload(text);
    let _ = parse_keyphrases(text);
    let _ = parse_concepts(text);
    if let Ok(p) = parse_proposal(text) {
        for (_, w) in &p.candidates {
            assert!(w.is_none_or(|w| w.is_finite() && w >= 0.0));
        }
    }
    let count = usize::from(count % 16);
    if let Ok(values) = parse_annotations(text, count) {
        assert_eq!(values.len(), count);
    }
});
