use std::path::Path;

use ccbm_core::oracle::{parse_pool_definition, AnnotationCache, Annotator, ConceptOracle, KeyphraseCache, PoolOracle};
use ccbm_llm::LlmOracle;

use crate::config::{OracleSettings, RunConfig};
use crate::CliError;

pub fn build(cfg: &RunConfig) -> Result<Box<dyn ConceptOracle>, CliError> {
    match &cfg.oracle {
        OracleSettings::Pool(p) => {
            let text = std::fs::read_to_string(&p.pool).map_err(|e| CliError::io(&p.pool, e))?;
            let def = parse_pool_definition(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.pool.display())))?;
            let oracle = PoolOracle::new(def, p.style, cfg.sampler.model_config())
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(oracle))
        }
        OracleSettings::Llm(l) => {
            let oracle = LlmOracle::from_config(l.clone()).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(oracle))
        }
    }
}

pub fn annotator(cache_dir: &Path) -> Result<Annotator, CliError> {
    std::fs::create_dir_all(cache_dir).map_err(|e| CliError::io(cache_dir, e))?;
    let ann_path = cache_dir.join("annotations.jsonl");
    let kp_path = cache_dir.join("keyphrases.jsonl");
    let annotations = AnnotationCache::open(&ann_path).map_err(|e| CliError::io(&ann_path, e))?;
    let keyphrases = KeyphraseCache::open(&kp_path).map_err(|e| CliError::io(&kp_path, e))?;
    for (name, skipped) in [("annotation", annotations.skipped_on_load()), ("keyphrase", keyphrases.skipped_on_load())] {
        if skipped > 0 {
            log::warn!("skipped {skipped} unreadable {name} cache lines");
        }
    }
    Ok(Annotator::new(annotations, keyphrases))
}
