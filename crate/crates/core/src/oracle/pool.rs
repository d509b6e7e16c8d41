//! Deterministic finite-pool oracle.
//!
//! The pool is a fixed list of concepts with known annotation values on a
//! known set of observations. Keyphrases are the names attached to each row.
//! Proposals come in three styles:
//!
//! * `uniform`: `M` concepts drawn uniformly without replacement from the pool
//!   minus `c_{−k}` and the incumbent, equal weights. The proposal never looks
//!   at data, so the oracle reports [`OracleMode::PriorOnly`].
//! * `exact-sampled`: candidates drawn successively without replacement from
//!   the exact conditional partial posterior `p(C_k | c_{−k}, y_S, X)` under a
//!   uniform prior, weights equal to those probabilities. With `M = 1` this is
//!   an exact draw from the partial posterior.
//! * `exact-top`: the `M` most probable concepts under the same distribution.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concept::{Concept, ConceptId, ConceptSet};
use crate::data::Observation;
use crate::eval::pearson;
use crate::keyphrase::KeyphraseSummary;
use crate::model::{log_marginal_likelihood, AnnotationMatrix, ModelConfig};

use super::{
    normalize_keyphrase, AnnotationRecord, AnnotationSource, ConceptOracle, KeyphraseBag,
    OracleError, OracleMode, OracleProposal, ProposalRequest,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConceptSpec {
    pub question: String,
    /// Keyphrase naming the feature behind this concept, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyphrase: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolRow {
    pub id: String,
    /// One value per pool concept, in pool order.
    pub values: Vec<f64>,
    #[serde(default)]
    pub keyphrases: Vec<String>,
}

/// On-disk pool definition (`pool.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolDefinition {
    pub concepts: Vec<PoolConceptSpec>,
    pub rows: Vec<PoolRow>,
}

impl PoolDefinition {
    pub fn validate(&self) -> Result<(), String> {
        if self.concepts.is_empty() {
            return Err("pool has no concepts".into());
        }
        let mut seen_concepts = HashMap::new();
        for (j, c) in self.concepts.iter().enumerate() {
            let concept = Concept::new(c.question.clone());
            if let Some(prev) = seen_concepts.insert(concept.id().clone(), j) {
                return Err(format!("pool concepts {prev} and {j} are the same question"));
            }
        }
        let mut seen_rows = HashMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            if seen_rows.insert(row.id.as_str(), i).is_some() {
                return Err(format!("duplicate pool row id {:?}", row.id));
            }
            if row.values.len() != self.concepts.len() {
                return Err(format!(
                    "row {:?} has {} values for {} concepts",
                    row.id,
                    row.values.len(),
                    self.concepts.len()
                ));
            }
            if let Some(v) = row.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(format!("row {:?} has value {v} outside [0, 1]", row.id));
            }
        }
        Ok(())
    }
}

pub fn parse_pool_definition(text: &str) -> Result<PoolDefinition, String> {
    let def: PoolDefinition = serde_json::from_str(text).map_err(|e| e.to_string())?;
    def.validate()?;
    Ok(def)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PoolProposalStyle {
    #[default]
    Uniform,
    ExactSampled,
    ExactTop,
}

pub struct PoolOracle {
    concepts: Vec<Concept>,
    by_id: HashMap<ConceptId, usize>,
    row_index: HashMap<String, usize>,
    /// `columns[j][i]`: value of concept `j` on pool row `i`.
    columns: Vec<Vec<f64>>,
    keyphrases: Vec<Vec<String>>,
    style: PoolProposalStyle,
    model: ModelConfig,
}

impl PoolOracle {
    pub fn new(
        def: PoolDefinition,
        style: PoolProposalStyle,
        model: ModelConfig,
    ) -> Result<Self, OracleError> {
        def.validate().map_err(OracleError::Contract)?;
        let concepts: Vec<Concept> = def
            .concepts
            .iter()
            .map(|c| Concept::new(c.question.clone()))
            .collect();
        let by_id = concepts
            .iter()
            .enumerate()
            .map(|(j, c)| (c.id().clone(), j))
            .collect();
        let row_index = def
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        let columns = (0..concepts.len())
            .map(|j| def.rows.iter().map(|r| r.values[j]).collect())
            .collect();
        let keyphrases = def
            .rows
            .iter()
            .map(|r| {
                r.keyphrases
                    .iter()
                    .filter_map(|p| normalize_keyphrase(p))
                    .collect()
            })
            .collect();
        Ok(PoolOracle {
            concepts,
            by_id,
            row_index,
            columns,
            keyphrases,
            style,
            model,
        })
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn style(&self) -> PoolProposalStyle {
        self.style
    }

    pub fn index_of(&self, concept: &Concept) -> Option<usize> {
        self.by_id.get(concept.id()).copied()
    }

    fn rows_for(&self, ids: &[String]) -> Result<Vec<usize>, OracleError> {
        ids.iter()
            .map(|id| {
                self.row_index
                    .get(id)
                    .copied()
                    .ok_or_else(|| OracleError::UnknownObservation(id.clone()))
            })
            .collect()
    }

    fn concept_index(&self, concept: &Concept) -> Result<usize, OracleError> {
        self.index_of(concept)
            .ok_or_else(|| OracleError::UnknownConcept(concept.question().to_string()))
    }

    /// Values of a pool concept on the given observations.
    pub fn column(&self, concept: &Concept, observation_ids: &[String]) -> Result<Vec<f64>, OracleError> {
        let j = self.concept_index(concept)?;
        let rows = self.rows_for(observation_ids)?;
        Ok(rows.iter().map(|&i| self.columns[j][i]).collect())
    }

    /// `p(C_k = c | c_{−k}, y_S, X)` for every pool concept `c` outside
    /// `others`, with `c` placed at `slot` among `others`. Returns pool
    /// indices with probabilities in pool order.
    pub fn conditional_partial_posterior(
        &self,
        others: &[Concept],
        slot: usize,
        subset_ids: &[String],
        subset_labels: &[u8],
    ) -> Result<Vec<(usize, f64)>, OracleError> {
        let rows = self.rows_for(subset_ids)?;
        let other_idx: Vec<usize> = others
            .iter()
            .map(|c| self.concept_index(c))
            .collect::<Result<_, _>>()?;
        let other_cols: Vec<Vec<f64>> = other_idx
            .iter()
            .map(|&j| rows.iter().map(|&i| self.columns[j][i]).collect())
            .collect();
        let slot = slot.min(others.len());

        let mut log_probs = Vec::new();
        for j in 0..self.concepts.len() {
            if other_idx.contains(&j) {
                continue;
            }
            let cand: Vec<f64> = rows.iter().map(|&i| self.columns[j][i]).collect();
            let mut cols: Vec<&[f64]> = other_cols.iter().map(|c| c.as_slice()).collect();
            cols.insert(slot, &cand);
            let phi = AnnotationMatrix::from_columns(
                subset_ids.to_vec(),
                &cols,
                self.model.include_intercept,
            )
            .map_err(|e| OracleError::Contract(e.to_string()))?;
            let lm = log_marginal_likelihood(&phi, subset_labels, &self.model)
                .map_err(|e| OracleError::Contract(e.to_string()))?;
            log_probs.push((j, lm.value));
        }
        let max = log_probs
            .iter()
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_probs.iter().map(|(_, v)| (v - max).exp()).sum();
        let log_norm = max + total.ln();
        Ok(log_probs
            .into_iter()
            .map(|(j, v)| (j, (v - log_norm).exp()))
            .collect())
    }

    fn exact_proposal(&self, req: &ProposalRequest) -> Result<OracleProposal, OracleError> {
        let probs = self.conditional_partial_posterior(
            &req.others,
            req.slot,
            &req.subset_ids,
            &req.subset_labels,
        )?;
        let q_current = self
            .index_of(&req.incumbent)
            .and_then(|j| probs.iter().find(|(i, _)| *i == j).map(|(_, p)| *p));
        let m = req.m.min(probs.len()).max(1);
        let chosen: Vec<(usize, f64)> = match self.style {
            PoolProposalStyle::ExactTop => {
                let mut sorted = probs.clone();
                sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                sorted.truncate(m);
                sorted
            }
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
                let mut remaining = probs.clone();
                let mut out = Vec::with_capacity(m);
                while out.len() < m && !remaining.is_empty() {
                    let total: f64 = remaining.iter().map(|(_, p)| p).sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = remaining.len() - 1;
                    for (idx, (_, p)) in remaining.iter().enumerate() {
                        if u < *p {
                            pick = idx;
                            break;
                        }
                        u -= p;
                    }
                    out.push(remaining.remove(pick));
                }
                out
            }
        };
        Ok(OracleProposal {
            candidates: chosen.iter().map(|(j, _)| self.concepts[*j].clone()).collect(),
            q_weights: chosen.iter().map(|(_, p)| *p).collect(),
            q_current,
            weights_imputed: false,
        })
    }

    fn uniform_proposal(&self, req: &ProposalRequest) -> OracleProposal {
        let mut available: Vec<usize> = (0..self.concepts.len())
            .filter(|&j| {
                let c = &self.concepts[j];
                !req.others.contains(c) && *c != req.incumbent
            })
            .collect();
        if available.is_empty() {
            // only the incumbent is left
            return OracleProposal::uniform(vec![req.incumbent.clone()]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let m = req.m.min(available.len()).max(1);
        let mut picked = Vec::with_capacity(m);
        for _ in 0..m {
            let idx = rng.random_range(0..available.len());
            picked.push(self.concepts[available.remove(idx)].clone());
        }
        OracleProposal::uniform(picked)
    }
}

impl ConceptOracle for PoolOracle {
    fn mode(&self) -> OracleMode {
        match self.style {
            PoolProposalStyle::Uniform => OracleMode::PriorOnly,
            PoolProposalStyle::ExactSampled | PoolProposalStyle::ExactTop => {
                OracleMode::PartialPosterior
            }
        }
    }

    fn needs_keyphrase_summary(&self) -> bool {
        false
    }

    fn extract_keyphrases(
        &self,
        observations: &[Observation],
    ) -> Result<Vec<KeyphraseBag>, OracleError> {
        observations
            .iter()
            .map(|obs| {
                if obs.text.trim().is_empty() {
                    return Ok(KeyphraseBag::from_raw(&obs.id, Vec::<String>::new()));
                }
                let i = *self
                    .row_index
                    .get(&obs.id)
                    .ok_or_else(|| OracleError::UnknownObservation(obs.id.clone()))?;
                Ok(KeyphraseBag::from_raw(&obs.id, &self.keyphrases[i]))
            })
            .collect()
    }

    /// Picks the `k` pool concepts whose columns correlate most (in absolute
    /// value) with the indicator column of some summary keyphrase. Ties keep
    /// pool order.
    fn initialize_concepts(
        &self,
        summary: &KeyphraseSummary,
        k: usize,
    ) -> Result<ConceptSet, OracleError> {
        if summary.is_empty() {
            return Err(OracleError::Initialization("keyphrase summary is empty".into()));
        }
        if k > self.concepts.len() {
            return Err(OracleError::Initialization(format!(
                "pool has {} concepts, {k} requested",
                self.concepts.len()
            )));
        }
        let indicators: Vec<Vec<f64>> = summary
            .phrases()
            .map(|phrase| {
                self.keyphrases
                    .iter()
                    .map(|bag| if bag.iter().any(|p| p == phrase) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut scored: Vec<(usize, f64)> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                let score = indicators
                    .iter()
                    .filter_map(|ind| pearson(col, ind))
                    .map(f64::abs)
                    .fold(0.0, f64::max);
                (j, score)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let chosen = scored
            .iter()
            .take(k)
            .map(|(j, _)| self.concepts[*j].clone())
            .collect();
        ConceptSet::new(chosen).map_err(|e| OracleError::Initialization(e.to_string()))
    }

    fn propose(&self, request: &ProposalRequest) -> Result<OracleProposal, OracleError> {
        match self.style {
            PoolProposalStyle::Uniform => Ok(self.uniform_proposal(request)),
            _ => self.exact_proposal(request),
        }
    }

    fn annotate(
        &self,
        observations: &[Observation],
        concepts: &[Concept],
    ) -> Result<Vec<AnnotationRecord>, OracleError> {
        let concept_idx: Vec<usize> = concepts
            .iter()
            .map(|c| self.concept_index(c))
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(observations.len() * concepts.len());
        for obs in observations {
            let i = *self
                .row_index
                .get(&obs.id)
                .ok_or_else(|| OracleError::UnknownObservation(obs.id.clone()))?;
            for (c, &j) in concepts.iter().zip(&concept_idx) {
                out.push(AnnotationRecord {
                    observation_id: obs.id.clone(),
                    concept_id: c.id().clone(),
                    value: self.columns[j][i],
                    source: AnnotationSource::Pool,
                    imputed: false,
                    timestamp: None,
                });
            }
        }
        Ok(out)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "pool",
            "style": self.style,
            "concepts": self.concepts.len(),
            "rows": self.row_index.len(),
            "gamma": self.model.gamma,
        })
    }
}
