use std::collections::BTreeSet;

use ccbm_core::oracle::OracleStats;
use ccbm_core::sampler::{ChainTrace, SamplerConfig};
use ccbm_core::{Concept, ConceptSet};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Stopped early on request; resumable.
    Halted,
    /// Oracle failure; resumable from the checkpoint.
    Failed,
}

/// Expected annotation traffic of the run on a cold cache: every distinct
/// concept the chain ever held or was offered is annotated once on every
/// observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub epochs: usize,
    /// `n·K` for the initial state.
    pub initial_calls: u64,
    /// Candidates first seen during updates, after deduplication.
    pub new_candidates: usize,
    /// `n·(K + new_candidates)`.
    pub expected_cold_calls: u64,
    /// `n·(T + warm_start)·K·(M+1) + n`.
    pub upper_bound: u64,
}

impl Accounting {
    pub fn from_trace(n: usize, initial: &ConceptSet, trace: &ChainTrace, cfg: &SamplerConfig) -> Self {
        let mut seen: BTreeSet<_> = initial.ids().into_iter().collect();
        let k = initial.len();
        for update in &trace.updates {
            for q in &update.candidates {
                seen.insert(Concept::new(q.clone()).id().clone());
            }
        }
        let epochs = cfg.t_epochs + cfg.warm_start_epochs;
        let new_candidates = seen.len() - k;
        Accounting {
            n,
            k,
            m: cfg.m_candidates,
            epochs,
            initial_calls: (n * k) as u64,
            new_candidates,
            expected_cold_calls: (n * seen.len()) as u64,
            upper_bound: (n * epochs * k * (cfg.m_candidates + 1) + n) as u64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheCounts {
    pub annotations_at_start: usize,
    pub annotations_at_end: usize,
    pub keyphrases_at_start: usize,
    pub keyphrases_at_end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMarginal {
    pub epoch: usize,
    pub log_marginal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub status: RunStatus,
    pub started_at: String,
    pub finished_at: String,
    /// Epoch this invocation started from; nonzero after a resume.
    pub first_epoch: usize,
    pub next_epoch: usize,
    pub config: serde_json::Value,
    pub oracle: serde_json::Value,
    pub n_observations: usize,
    pub initial_state: Vec<String>,
    /// Oracle traffic of this invocation up to the end of sampling.
    pub oracle_calls: OracleStats,
    /// Extra traffic for the recovery report's annotation panel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_oracle_calls: Option<OracleStats>,
    pub cache: CacheCounts,
    pub accounting: Accounting,
    pub proposals: u64,
    pub acceptances: u64,
    pub acceptance_rate: Option<f64>,
    pub posterior_samples: usize,
    pub log_marginal_trace: Vec<EpochMarginal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
