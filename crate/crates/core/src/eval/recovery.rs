use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::concept::{Concept, ConceptId, ConceptSet};

use super::matching::{
    borderline_pairs, AnnotationPanel, BorderlinePair, ConceptMatchRule, MatchError,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptFrequency {
    pub question: String,
    pub concept_id: ConceptId,
    /// Fraction of samples containing the concept.
    pub frequency: f64,
    /// True concepts it matches.
    pub matches: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecovery {
    pub question: String,
    /// Fraction of samples containing a concept that matches it.
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub sampled: String,
    pub truth: String,
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub concept_precision: f64,
    pub concept_recall: f64,
    pub n_samples: usize,
    pub frequencies: Vec<ConceptFrequency>,
    pub truth: Vec<TruthRecovery>,
    pub matched_pairs: Vec<MatchedPair>,
    /// Pairs near the threshold, listed for human review.
    pub borderline: Vec<BorderlinePair>,
    /// Pairs that could not be decided and were counted as non-matches.
    pub warnings: Vec<String>,
}

/// Concept precision and recall of posterior samples against a true concept
/// list, under the correlation matching rule on `panel`.
pub fn recovery_report(
    samples: &[ConceptSet],
    truth: &[Concept],
    rule: &ConceptMatchRule,
    panel: &AnnotationPanel,
) -> Result<RecoveryReport, MatchError> {
    rule.validate()?;
    if samples.is_empty() {
        return Err(MatchError::NoSamples);
    }
    // distinct sampled concepts, in first-appearance order
    let mut distinct: Vec<Concept> = Vec::new();
    let mut counts: HashMap<ConceptId, usize> = HashMap::new();
    for set in samples {
        for c in set.concepts() {
            let n = counts.entry(c.id().clone()).or_insert(0);
            if *n == 0 {
                distinct.push(c.clone());
            }
            *n += 1;
        }
    }

    let mut warnings = Vec::new();
    let mut matched_pairs = Vec::new();
    // matches[concept id] = indices of true concepts it matches
    let mut matches: HashMap<ConceptId, Vec<usize>> = HashMap::new();
    for c in &distinct {
        let mut hit = Vec::new();
        for (t, truth_c) in truth.iter().enumerate() {
            let corr = if c == truth_c {
                panel.correlation(c, truth_c, rule.min_shared).or_else(|e| match e {
                    MatchError::MissingAnnotations(_) | MatchError::Inconclusive { .. } => Ok(Some(1.0)),
                    other => Err(other),
                })
            } else {
                panel.correlation(c, truth_c, rule.min_shared)
            };
            match corr {
                Ok(Some(r)) if r.abs() > rule.threshold => {
                    hit.push(t);
                    matched_pairs.push(MatchedPair {
                        sampled: c.question().to_string(),
                        truth: truth_c.question().to_string(),
                        correlation: r,
                    });
                }
                Ok(_) => {}
                Err(e @ (MatchError::Inconclusive { .. } | MatchError::MissingAnnotations(_))) => {
                    warnings.push(format!("{:?} vs {:?}: {e}", c.question(), truth_c.question()));
                }
                Err(e) => return Err(e),
            }
        }
        matches.insert(c.id().clone(), hit);
    }

    let n = samples.len() as f64;
    let mut slot_hits = 0usize;
    let mut slots = 0usize;
    let mut truth_hits = vec![0usize; truth.len()];
    for set in samples {
        let mut covered = vec![false; truth.len()];
        for c in set.concepts() {
            slots += 1;
            let hit = &matches[c.id()];
            if !hit.is_empty() {
                slot_hits += 1;
            }
            for &t in hit {
                covered[t] = true;
            }
        }
        for (t, cov) in covered.into_iter().enumerate() {
            truth_hits[t] += usize::from(cov);
        }
    }
    let concept_recall = if truth.is_empty() {
        0.0
    } else {
        truth_hits.iter().map(|&h| h as f64 / n).sum::<f64>() / truth.len() as f64
    };

    let frequencies = distinct
        .iter()
        .map(|c| ConceptFrequency {
            question: c.question().to_string(),
            concept_id: c.id().clone(),
            frequency: counts[c.id()] as f64 / n,
            matches: matches[c.id()]
                .iter()
                .map(|&t| truth[t].question().to_string())
                .collect(),
        })
        .collect();

    let evaluable: Vec<Concept> = distinct.iter().filter(|c| panel.contains(c)).cloned().collect();
    let truth_evaluable: Vec<Concept> = truth.iter().filter(|c| panel.contains(c)).cloned().collect();
    let borderline = borderline_pairs(&evaluable, &truth_evaluable, rule, panel)?;

    Ok(RecoveryReport {
        concept_precision: slot_hits as f64 / slots as f64,
        concept_recall,
        n_samples: samples.len(),
        frequencies,
        truth: truth
            .iter()
            .zip(&truth_hits)
            .map(|(c, &h)| TruthRecovery {
                question: c.question().to_string(),
                recall: h as f64 / n,
            })
            .collect(),
        matched_pairs,
        borderline,
        warnings,
    })
}

impl RecoveryReport {
    /// Per-concept posterior frequencies as CSV, most frequent first.
    pub fn frequencies_csv(&self) -> String {
        let mut rows: Vec<&ConceptFrequency> = self.frequencies.iter().collect();
        rows.sort_by(|a, b| b.frequency.total_cmp(&a.frequency).then(a.question.cmp(&b.question)));
        let mut out = String::from("concept_id,question,frequency,matches_truth\n");
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.concept_id.as_str(),
                csv_field(&r.question),
                r.frequency,
                !r.matches.is_empty()
            ));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fraction of samples whose unordered support equals each observed support.
pub fn support_frequencies(samples: &[ConceptSet]) -> BTreeMap<Vec<ConceptId>, f64> {
    let mut counts: BTreeMap<Vec<ConceptId>, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.support_key()).or_default() += 1;
    }
    let n = samples.len().max(1) as f64;
    counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect()
}
