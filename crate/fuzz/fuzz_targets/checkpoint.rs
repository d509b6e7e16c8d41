#![no_main]

use ccbm_core::sampler::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cp) = serde_json::from_slice::<Checkpoint>(data) {
        // a decoded checkpoint re-encodes to something that decodes again
        let again = serde_json::to_vec(&cp).unwrap();
        serde_json::from_slice::<Checkpoint>(&again).unwrap();
    }
});
