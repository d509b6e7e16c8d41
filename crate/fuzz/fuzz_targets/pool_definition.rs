#![no_main]

use ccbm_core::oracle::{parse_pool_definition, PoolOracle, PoolProposalStyle};
use ccbm_core::ModelConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(def) = parse_pool_definition(text) {
        // anything that validates must also build an oracle
        PoolOracle::new(def, PoolProposalStyle::Uniform, ModelConfig::new(1.0, 1).unwrap()).unwrap();
    }
});
