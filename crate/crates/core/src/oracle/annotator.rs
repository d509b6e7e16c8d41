use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::concept::{Concept, ConceptId};
use crate::data::Observation;

use super::cache::{AnnotationCache, KeyphraseCache, KeyphraseRecord};
use super::{ConceptOracle, KeyphraseBag, OracleError};

/// Oracle call accounting for a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    /// (observation, concept) pairs sent to the oracle, i.e. cache misses.
    pub annotation_calls: u64,
    /// Per-observation annotation queries; each batches all missing concepts.
    pub annotation_requests: u64,
    pub annotation_cache_hits: u64,
    pub keyphrase_calls: u64,
    pub keyphrase_cache_hits: u64,
    pub proposal_calls: u64,
    pub init_calls: u64,
    pub clamp_events: u64,
    pub imputed_values: u64,
}

/// A concept's values over a batch of observations.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedColumn {
    pub concept: Concept,
    pub values: Vec<f64>,
    /// Entries that the oracle could not answer and were imputed as 0.5.
    pub imputed: Vec<bool>,
}

impl AnnotatedColumn {
    pub fn imputed_count(&self) -> usize {
        self.imputed.iter().filter(|b| **b).count()
    }

    pub fn fully_failed(&self) -> bool {
        !self.values.is_empty() && self.imputed.iter().all(|b| *b)
    }
}

/// Cache-first front end to an oracle.
pub struct Annotator {
    annotations: AnnotationCache,
    keyphrases: KeyphraseCache,
    stats: OracleStats,
}

impl Default for Annotator {
    fn default() -> Self {
        Self::in_memory()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Annotator {
    pub fn new(annotations: AnnotationCache, keyphrases: KeyphraseCache) -> Self {
        Annotator {
            annotations,
            keyphrases,
            stats: OracleStats::default(),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(AnnotationCache::in_memory(), KeyphraseCache::in_memory())
    }

    pub fn stats(&self) -> &OracleStats {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut OracleStats {
        &mut self.stats
    }

    pub fn annotation_cache(&self) -> &AnnotationCache {
        &self.annotations
    }

    pub fn keyphrase_cache(&self) -> &KeyphraseCache {
        &self.keyphrases
    }

    /// Values of every concept on every observation, querying the oracle only
    /// for cache misses. Observations missing the same concepts share one
    /// oracle call; inside it the oracle issues one query per observation.
    pub fn annotate_columns(
        &mut self,
        oracle: &dyn ConceptOracle,
        observations: &[Observation],
        concepts: &[Concept],
    ) -> Result<Vec<AnnotatedColumn>, OracleError> {
        let n = observations.len();
        let mut values = vec![vec![f64::NAN; n]; concepts.len()];
        let mut imputed = vec![vec![false; n]; concepts.len()];
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();

        for (i, obs) in observations.iter().enumerate() {
            let mut missing = Vec::new();
            for (j, concept) in concepts.iter().enumerate() {
                let key = (obs.id.clone(), concept.id().clone());
                match self.annotations.get(&key) {
                    Some(rec) => {
                        values[j][i] = rec.value;
                        imputed[j][i] = rec.imputed;
                        self.stats.annotation_cache_hits += 1;
                    }
                    None => missing.push(j),
                }
            }
            if !missing.is_empty() {
                groups.entry(missing).or_default().push(i);
            }
        }

        for (concept_idx, obs_idx) in groups {
            let batch_obs: Vec<Observation> =
                obs_idx.iter().map(|&i| observations[i].clone()).collect();
            let batch_concepts: Vec<Concept> =
                concept_idx.iter().map(|&j| concepts[j].clone()).collect();
            let records = oracle.annotate(&batch_obs, &batch_concepts)?;
            self.stats.annotation_requests += batch_obs.len() as u64;

            let mut by_key: BTreeMap<(String, ConceptId), _> = records
                .into_iter()
                .map(|r| ((r.observation_id.clone(), r.concept_id.clone()), r))
                .collect();
            for &i in &obs_idx {
                for &j in &concept_idx {
                    let key = (observations[i].id.clone(), concepts[j].id().clone());
                    let Some(mut rec) = by_key.remove(&key) else {
                        return Err(OracleError::Contract(format!(
                            "oracle returned no annotation for observation {:?}, concept {:?}",
                            key.0,
                            concepts[j].question()
                        )));
                    };
                    let raw = if rec.value.is_nan() { 0.5 } else { rec.value };
                    let clamped = raw.clamp(0.0, 1.0);
                    if clamped != rec.value {
                        self.stats.clamp_events += 1;
                    }
                    rec.value = clamped;
                    if rec.imputed {
                        self.stats.imputed_values += 1;
                    }
                    if rec.timestamp.is_none() {
                        rec.timestamp = Some(now());
                    }
                    values[j][i] = rec.value;
                    imputed[j][i] = rec.imputed;
                    self.stats.annotation_calls += 1;
                    self.annotations.insert(rec)?;
                }
            }
        }

        Ok(concepts
            .iter()
            .zip(values.into_iter().zip(imputed))
            .map(|(c, (values, imputed))| AnnotatedColumn {
                concept: c.clone(),
                values,
                imputed,
            })
            .collect())
    }

    /// Keyphrase bags for each observation, cached per observation.
    pub fn extract_keyphrases(
        &mut self,
        oracle: &dyn ConceptOracle,
        observations: &[Observation],
    ) -> Result<Vec<KeyphraseBag>, OracleError> {
        let mut bags: Vec<Option<KeyphraseBag>> = Vec::with_capacity(observations.len());
        let mut missing = Vec::new();
        for (i, obs) in observations.iter().enumerate() {
            match self.keyphrases.get(&obs.id) {
                Some(rec) => {
                    self.stats.keyphrase_cache_hits += 1;
                    bags.push(Some(KeyphraseBag {
                        observation_id: obs.id.clone(),
                        phrases: rec.phrases.into_iter().collect(),
                    }));
                }
                None => {
                    bags.push(None);
                    missing.push(i);
                }
            }
        }
        if !missing.is_empty() {
            let batch: Vec<Observation> = missing.iter().map(|&i| observations[i].clone()).collect();
            let fresh = oracle.extract_keyphrases(&batch)?;
            if fresh.len() != batch.len() {
                return Err(OracleError::Contract(format!(
                    "asked for {} keyphrase bags, got {}",
                    batch.len(),
                    fresh.len()
                )));
            }
            self.stats.keyphrase_calls += batch.len() as u64;
            for (&i, bag) in missing.iter().zip(fresh) {
                self.keyphrases.insert(KeyphraseRecord {
                    observation_id: observations[i].id.clone(),
                    phrases: bag.phrases.iter().cloned().collect(),
                    timestamp: Some(now()),
                })?;
                bags[i] = Some(KeyphraseBag {
                    observation_id: observations[i].id.clone(),
                    phrases: bag.phrases,
                });
            }
        }
        Ok(bags.into_iter().map(|b| b.expect("every bag filled")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::ConceptSet;
    use crate::keyphrase::KeyphraseSummary;
    use crate::oracle::{
        AnnotationRecord, AnnotationSource, OracleMode, OracleProposal, ProposalRequest,
    };
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Answers with out-of-range values to exercise clamping and counts calls.
    struct Loud {
        calls: AtomicUsize,
    }

    impl ConceptOracle for Loud {
        fn mode(&self) -> OracleMode {
            OracleMode::PriorOnly
        }
        fn extract_keyphrases(&self, obs: &[Observation]) -> Result<Vec<KeyphraseBag>, OracleError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(obs.iter().map(|o| KeyphraseBag::from_raw(&o.id, o.text.split(','))).collect())
        }
        fn initialize_concepts(&self, _: &KeyphraseSummary, _: usize) -> Result<ConceptSet, OracleError> {
            unreachable!()
        }
        fn propose(&self, _: &ProposalRequest) -> Result<OracleProposal, OracleError> {
            unreachable!()
        }
        fn annotate(&self, obs: &[Observation], concepts: &[Concept]) -> Result<Vec<AnnotationRecord>, OracleError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(obs
                .iter()
                .flat_map(|o| {
                    concepts.iter().map(move |c| AnnotationRecord {
                        observation_id: o.id.clone(),
                        concept_id: c.id().clone(),
                        value: if o.id == "b" { 1.5 } else { 0.25 },
                        source: AnnotationSource::Llm,
                        imputed: o.id == "c",
                        timestamp: None,
                    })
                })
                .collect())
        }
    }

    #[test]
    fn cache_first_and_accounting() {
        let oracle = Loud { calls: AtomicUsize::new(0) };
        let obs = vec![
            Observation::new("a", "x", Some(0)),
            Observation::new("b", "y", Some(1)),
            Observation::new("c", "z", Some(1)),
        ];
        let c1 = Concept::new("One?");
        let c2 = Concept::new("Two?");
        let mut ann = Annotator::in_memory();
        let cols = ann.annotate_columns(&oracle, &obs, std::slice::from_ref(&c1)).unwrap();
        assert_eq!(cols[0].values, vec![0.25, 1.0, 0.25]);
        assert_eq!(cols[0].imputed_count(), 1);
        assert_eq!(ann.stats().annotation_calls, 3);
        assert_eq!(ann.stats().clamp_events, 1);
        assert_eq!(ann.stats().imputed_values, 1);

        let cols = ann.annotate_columns(&oracle, &obs, &[c1.clone(), c2.clone()]).unwrap();
        assert_eq!(cols.len(), 2);
        assert_eq!(ann.stats().annotation_calls, 6);
        assert_eq!(ann.stats().annotation_requests, 6);
        assert_eq!(ann.stats().annotation_cache_hits, 3);

        // fully cached batch issues no oracle call
        let before = oracle.calls.load(Ordering::SeqCst);
        ann.annotate_columns(&oracle, &obs, &[c2, c1]).unwrap();
        assert_eq!(oracle.calls.load(Ordering::SeqCst), before);
        assert_eq!(ann.stats().annotation_calls, 6);
    }

    #[test]
    fn keyphrases_are_cached() {
        let oracle = Loud { calls: AtomicUsize::new(0) };
        let obs = vec![Observation::new("a", "Alcohol use, smoking", None), Observation::new("e", "", None)];
        let mut ann = Annotator::in_memory();
        let first = ann.extract_keyphrases(&oracle, &obs).unwrap();
        let second = ann.extract_keyphrases(&oracle, &obs).unwrap();
        assert_eq!(first, second);
        assert!(first[1].phrases.is_empty());
        assert_eq!(oracle.calls.load(Ordering::SeqCst), 1);
        assert_eq!(ann.stats().keyphrase_calls, 2);
        assert_eq!(ann.stats().keyphrase_cache_hits, 2);
    }
}
