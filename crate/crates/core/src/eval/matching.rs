use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{Concept, ConceptId};

use super::metrics::pearson;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("only {shared} shared annotated observations, at least {required} needed")]
    Inconclusive { shared: usize, required: usize },
    #[error("concept {0:?} has no annotations on the panel")]
    MissingAnnotations(String),
    #[error("match threshold {0} is outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("annotation column has {found} values for a panel of {expected}")]
    ColumnLength { expected: usize, found: usize },
    #[error("no posterior samples")]
    NoSamples,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConceptMatchRule {
    /// Concepts match when the absolute correlation exceeds this.
    pub threshold: f64,
    /// Minimum number of observations annotated for both concepts.
    pub min_shared: usize,
    /// Absolute correlations in this closed band are listed for review.
    pub borderline: (f64, f64),
}

impl Default for ConceptMatchRule {
    fn default() -> Self {
        ConceptMatchRule {
            threshold: 0.5,
            min_shared: 10,
            borderline: (0.45, 0.55),
        }
    }
}

impl ConceptMatchRule {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(MatchError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// Annotation values of many concepts over one fixed observation set.
/// Missing values are NaN and are dropped pairwise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationPanel {
    observation_ids: Vec<String>,
    columns: HashMap<ConceptId, Vec<f64>>,
}

impl AnnotationPanel {
    pub fn new(observation_ids: Vec<String>) -> Self {
        AnnotationPanel {
            observation_ids,
            columns: HashMap::new(),
        }
    }

    pub fn observation_ids(&self) -> &[String] {
        &self.observation_ids
    }

    pub fn insert(&mut self, concept: &Concept, values: Vec<f64>) -> Result<(), MatchError> {
        if values.len() != self.observation_ids.len() {
            return Err(MatchError::ColumnLength {
                expected: self.observation_ids.len(),
                found: values.len(),
            });
        }
        self.columns.insert(concept.id().clone(), values);
        Ok(())
    }

    pub fn column(&self, concept: &Concept) -> Option<&[f64]> {
        self.columns.get(concept.id()).map(Vec::as_slice)
    }

    pub fn contains(&self, concept: &Concept) -> bool {
        self.columns.contains_key(concept.id())
    }

    /// Correlation over the observations annotated for both concepts.
    /// `Ok(None)` means a constant column.
    pub fn correlation(
        &self,
        a: &Concept,
        b: &Concept,
        min_shared: usize,
    ) -> Result<Option<f64>, MatchError> {
        let ca = self
            .column(a)
            .ok_or_else(|| MatchError::MissingAnnotations(a.question().to_string()))?;
        let cb = self
            .column(b)
            .ok_or_else(|| MatchError::MissingAnnotations(b.question().to_string()))?;
        let (xa, xb): (Vec<f64>, Vec<f64>) = ca
            .iter()
            .zip(cb)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| (*x, *y))
            .unzip();
        if xa.len() < min_shared {
            return Err(MatchError::Inconclusive {
                shared: xa.len(),
                required: min_shared,
            });
        }
        Ok(pearson(&xa, &xb))
    }
}

pub fn concepts_match(
    a: &Concept,
    b: &Concept,
    rule: &ConceptMatchRule,
    panel: &AnnotationPanel,
) -> Result<bool, MatchError> {
    rule.validate()?;
    Ok(panel
        .correlation(a, b, rule.min_shared)?
        .is_some_and(|r| r.abs() > rule.threshold))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BorderlinePair {
    pub left: String,
    pub right: String,
    pub correlation: f64,
}

/// Pairs `(l, r)` whose absolute correlation lies in the rule's borderline
/// band. Self-pairs are skipped and each unordered pair is listed once.
/// Pairs with too few shared observations are not listed.
pub fn borderline_pairs(
    left: &[Concept],
    right: &[Concept],
    rule: &ConceptMatchRule,
    panel: &AnnotationPanel,
) -> Result<Vec<BorderlinePair>, MatchError> {
    let (lo, hi) = rule.borderline;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in left {
        for b in right {
            if a == b {
                continue;
            }
            let key = if a.id() < b.id() {
                (a.id().clone(), b.id().clone())
            } else {
                (b.id().clone(), a.id().clone())
            };
            if !seen.insert(key) {
                continue;
            }
            let corr = match panel.correlation(a, b, rule.min_shared) {
                Ok(c) => c,
                Err(MatchError::Inconclusive { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some(r) = corr.filter(|r| (lo..=hi).contains(&r.abs())) {
                out.push(BorderlinePair {
                    left: a.question().to_string(),
                    right: b.question().to_string(),
                    correlation: r,
                });
            }
        }
    }
    Ok(out)
}
