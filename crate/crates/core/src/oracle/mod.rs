//! The concept-oracle contract.
//!
//! An oracle extracts keyphrases, proposes initial and candidate concepts, and
//! annotates concept values on observations. Two implementations exist: the
//! remote LLM client (in the `ccbm-llm` crate) and [`PoolOracle`], a
//! deterministic finite pool used for offline runs and enumeration checks.
//!
//! Callers go through an [`Annotator`], which consults the persistent caches
//! before asking the oracle and keeps the call accounting.

mod annotator;
mod cache;
mod pool;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{Concept, ConceptId, ConceptSet};
use crate::data::Observation;
use crate::keyphrase::KeyphraseSummary;

pub use annotator::{AnnotatedColumn, Annotator, OracleStats};
pub use cache::{
    parse_record_log, AnnotationCache, KeyphraseCache, KeyphraseRecord, LogRecord, RecordLog,
};
pub use pool::{
    parse_pool_definition, PoolConceptSpec, PoolDefinition, PoolOracle, PoolProposalStyle, PoolRow,
};

/// What data the oracle's proposal distribution has seen, which fixes the
/// held-out set used in the acceptance step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Proposals ignore the data: acceptance uses the full-data Bayes factor.
    PriorOnly,
    /// Proposals condition on the subset `S`: acceptance uses the partial
    /// Bayes factor on `Sᶜ`.
    #[default]
    PartialPosterior,
    /// Proposals condition on all data: every proposal is accepted.
    FullPosterior,
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("could not parse oracle {what} response: {message}")]
    Unparseable { what: &'static str, message: String },
    #[error("concept initialization failed: {0}")]
    Initialization(String),
    #[error("concept {0:?} is not known to this oracle")]
    UnknownConcept(String),
    #[error("observation {0:?} is not known to this oracle")]
    UnknownObservation(String),
    #[error("oracle contract violated: {0}")]
    Contract(String),
    #[error("cache io error: {0}")]
    Cache(#[from] std::io::Error),
}

impl OracleError {
    /// Errors after which the sampler skips the update and keeps the
    /// incumbent instead of aborting the run.
    pub fn is_skippable(&self) -> bool {
        matches!(self, OracleError::Unparseable { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyphraseBag {
    pub observation_id: String,
    pub phrases: BTreeSet<String>,
}

impl KeyphraseBag {
    /// Normalizes every phrase and drops the ones that normalize to nothing.
    pub fn from_raw<I, S>(observation_id: impl Into<String>, raw: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        KeyphraseBag {
            observation_id: observation_id.into(),
            phrases: raw
                .into_iter()
                .filter_map(|p| normalize_keyphrase(p.as_ref()))
                .collect(),
        }
    }
}

/// Lowercase, strip punctuation, collapse whitespace and keep at most two
/// tokens. Returns `None` for phrases with no word characters.
pub fn normalize_keyphrase(raw: &str) -> Option<String> {
    let cleaned: String = raw
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_lowercase().next().unwrap_or(c)
            } else if c == '\'' {
                '\0'
            } else {
                ' '
            }
        })
        .filter(|c| *c != '\0')
        .collect();
    let tokens: Vec<&str> = cleaned.split_whitespace().take(2).collect();
    if tokens.is_empty() {
        None
    } else {
        Some(tokens.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnotationSource {
    Llm,
    Pool,
    HumanOverride,
}

/// One annotated value `φ_c(x)`, also the line format of the annotation cache.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub observation_id: String,
    pub concept_id: ConceptId,
    pub value: f64,
    pub source: AnnotationSource,
    /// Set when the oracle could not produce a value and 0.5 was imputed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub imputed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Candidates for one Gibbs slot with their proposal weights `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleProposal {
    pub candidates: Vec<Concept>,
    pub q_weights: Vec<f64>,
    /// Proposal weight of the incumbent concept. `None` when the oracle did
    /// not score it; the sampler then floors it.
    pub q_current: Option<f64>,
    /// The oracle reported no usable weights and uniform ones were imputed.
    #[serde(default)]
    pub weights_imputed: bool,
}

/// Floor for missing or zero proposal weights, relative to the total
/// candidate mass.
pub const WEIGHT_FLOOR: f64 = 1e-3;

impl OracleProposal {
    pub fn uniform(candidates: Vec<Concept>) -> Self {
        let m = candidates.len().max(1) as f64;
        OracleProposal {
            q_weights: vec![1.0 / m; candidates.len()],
            q_current: Some(1.0 / m),
            candidates,
            weights_imputed: false,
        }
    }

    /// Incumbent weight, floored at [`WEIGHT_FLOOR`] of the candidate mass
    /// when missing.
    pub fn incumbent_weight(&self) -> f64 {
        match self.q_current {
            Some(q) => q,
            None => WEIGHT_FLOOR * self.q_weights.iter().sum::<f64>(),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.candidates.is_empty() {
            return Err(OracleError::Contract("proposal has no candidates".into()));
        }
        if self.candidates.len() != self.q_weights.len() {
            return Err(OracleError::Contract(format!(
                "{} candidates but {} weights",
                self.candidates.len(),
                self.q_weights.len()
            )));
        }
        let bad = |w: f64| !w.is_finite() || w < 0.0;
        if self.q_weights.iter().any(|&w| bad(w)) || self.q_current.is_some_and(bad) {
            return Err(OracleError::Contract(
                "proposal weights must be finite and nonnegative".into(),
            ));
        }
        if self.q_weights.iter().all(|&w| w == 0.0) {
            return Err(OracleError::Contract("all proposal weights are zero".into()));
        }
        Ok(())
    }
}

/// Everything an oracle may use to propose candidates for one slot.
#[derive(Clone, Debug)]
pub struct ProposalRequest {
    pub slot: usize,
    /// `c_{−k}`, in state order.
    pub others: Vec<Concept>,
    pub incumbent: Concept,
    /// Observation ids and labels of the subset `S`.
    pub subset_ids: Vec<String>,
    pub subset_labels: Vec<u8>,
    /// Keyphrase-model summary fitted on `S`, when the oracle asked for one.
    pub summary: Option<KeyphraseSummary>,
    pub m: usize,
    /// Seed for any randomness the oracle needs, drawn from the chain RNG.
    pub seed: u64,
}

pub trait ConceptOracle: Sync {
    fn mode(&self) -> OracleMode;

    /// Whether proposals need the keyphrase summary. Fitting it is the
    /// expensive part of an update for oracles that ignore it.
    fn needs_keyphrase_summary(&self) -> bool {
        true
    }

    fn extract_keyphrases(
        &self,
        observations: &[Observation],
    ) -> Result<Vec<KeyphraseBag>, OracleError>;

    fn initialize_concepts(
        &self,
        summary: &KeyphraseSummary,
        k: usize,
    ) -> Result<ConceptSet, OracleError>;

    fn propose(&self, request: &ProposalRequest) -> Result<OracleProposal, OracleError>;

    /// One record per (observation, concept) pair.
    fn annotate(
        &self,
        observations: &[Observation],
        concepts: &[Concept],
    ) -> Result<Vec<AnnotationRecord>, OracleError>;

    /// Settings worth recording in a run manifest.
    fn describe(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
}
