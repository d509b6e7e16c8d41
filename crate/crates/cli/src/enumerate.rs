use std::collections::HashMap;
use std::path::PathBuf;

use ccbm_core::data::{labels, read_dataset};
use ccbm_core::eval::enumerate_posterior;
use ccbm_core::model::ModelConfig;
use ccbm_core::oracle::parse_pool_definition;
use serde::{Deserialize, Serialize};

use crate::rundir::write_json;
use crate::CliError;

#[derive(Clone, Debug)]
pub struct EnumerateArgs {
    pub pool: PathBuf,
    pub dataset: PathBuf,
    pub k: usize,
    pub gamma: f64,
    pub include_intercept: bool,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportEntry {
    pub questions: Vec<String>,
    pub probability: f64,
    pub log_marginal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionEntry {
    pub question: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub k: usize,
    pub log_normalizer: f64,
    /// Most probable first.
    pub supports: Vec<SupportEntry>,
    pub inclusion: Vec<InclusionEntry>,
}

/// Exact posterior over every `k`-subset of a pool, with the pool columns
/// taken on the dataset's observations.
pub fn cmd_enumerate(args: &EnumerateArgs) -> Result<EnumerationReport, CliError> {
    let text = std::fs::read_to_string(&args.pool).map_err(|e| CliError::Config(format!("{}: {e}", args.pool.display())))?;
    let def = parse_pool_definition(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.pool.display())))?;
    let observations = read_dataset(&args.dataset).map_err(|e| CliError::Config(e.to_string()))?;
    let y = labels(&observations).map_err(|e| CliError::Config(e.to_string()))?;

    let rows: HashMap<&str, usize> = def.rows.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let index: Vec<usize> = observations
        .iter()
        .map(|o| {
            rows.get(o.id.as_str())
                .copied()
                .ok_or_else(|| CliError::Config(format!("observation {:?} is not in the pool", o.id)))
        })
        .collect::<Result<_, _>>()?;
    let columns: Vec<Vec<f64>> = (0..def.concepts.len())
        .map(|j| index.iter().map(|&i| def.rows[i].values[j]).collect())
        .collect();

    let cfg = ModelConfig { gamma: args.gamma, k: args.k, include_intercept: args.include_intercept, solver: Default::default() };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let post = enumerate_posterior(&columns, args.k, &y, &cfg, None).map_err(|e| CliError::Config(e.to_string()))?;

    let question = |j: usize| def.concepts[j].question.clone();
    let mut supports: Vec<SupportEntry> = post
        .supports
        .iter()
        .map(|s| SupportEntry {
            questions: s.support.iter().map(|&j| question(j)).collect(),
            probability: s.probability,
            log_marginal: s.log_marginal,
        })
        .collect();
    supports.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    let inclusion = post
        .inclusion_probabilities(def.concepts.len())
        .into_iter()
        .enumerate()
        .map(|(j, probability)| InclusionEntry { question: question(j), probability })
        .collect();
    let report = EnumerationReport { k: args.k, log_normalizer: post.log_normalizer, supports, inclusion };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(report)
}
