//! Concepts and concept sets.
//!
//! A concept is a natural-language yes/no question. Its identity is a content
//! hash of the normalized question text, so rephrasings that differ only in
//! case or spacing collapse to the same concept.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Stable identity of a concept: 16 hex characters of the SHA-256 of the
/// normalized question.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(String);

impl ConceptId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercase and collapse runs of whitespace.
pub fn normalize_question(question: &str) -> String {
    question
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn hash_question(question: &str) -> ConceptId {
    let digest = Sha256::digest(normalize_question(question).as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    ConceptId(hex)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ConceptRepr", into = "ConceptRepr")]
pub struct Concept {
    question: String,
    id: ConceptId,
}

#[derive(Serialize, Deserialize)]
struct ConceptRepr {
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<ConceptId>,
}

impl TryFrom<ConceptRepr> for Concept {
    type Error = String;

    fn try_from(repr: ConceptRepr) -> Result<Self, Self::Error> {
        let concept = Concept::new(repr.question);
        match repr.id {
            Some(id) if id != concept.id => Err(format!(
                "concept id {id} does not match question hash {}",
                concept.id
            )),
            _ => Ok(concept),
        }
    }
}

impl From<Concept> for ConceptRepr {
    fn from(c: Concept) -> Self {
        ConceptRepr {
            question: c.question,
            id: Some(c.id),
        }
    }
}

impl Concept {
    pub fn new(question: impl Into<String>) -> Self {
        let question = question.into().trim().to_string();
        let id = hash_question(&question);
        Concept { question, id }
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn id(&self) -> &ConceptId {
        &self.id
    }

    /// A usable concept is a non-empty question ending in `?`.
    pub fn is_well_formed(&self) -> bool {
        let q = self.question.trim();
        q.len() > 1 && q.ends_with('?')
    }
}

impl PartialEq for Concept {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Concept {}

impl std::hash::Hash for Concept {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.id.hash(state);
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.question)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConceptSetError {
    #[error("a concept set needs at least one concept")]
    Empty,
    #[error("duplicate concept {question:?} (id {id})")]
    Duplicate { id: ConceptId, question: String },
    #[error("slot {slot} out of range for a set of {k} concepts")]
    SlotOutOfRange { slot: usize, k: usize },
}

/// The chain state: an ordered list of `K` distinct concepts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Concept>", into = "Vec<Concept>")]
pub struct ConceptSet {
    concepts: Vec<Concept>,
}

impl TryFrom<Vec<Concept>> for ConceptSet {
    type Error = ConceptSetError;

    fn try_from(concepts: Vec<Concept>) -> Result<Self, Self::Error> {
        ConceptSet::new(concepts)
    }
}

impl From<ConceptSet> for Vec<Concept> {
    fn from(set: ConceptSet) -> Self {
        set.concepts
    }
}

impl ConceptSet {
    pub fn new(concepts: Vec<Concept>) -> Result<Self, ConceptSetError> {
        if concepts.is_empty() {
            return Err(ConceptSetError::Empty);
        }
        for (i, c) in concepts.iter().enumerate() {
            if concepts[..i].contains(c) {
                return Err(ConceptSetError::Duplicate {
                    id: c.id.clone(),
                    question: c.question.clone(),
                });
            }
        }
        Ok(ConceptSet { concepts })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn get(&self, slot: usize) -> Option<&Concept> {
        self.concepts.get(slot)
    }

    pub fn contains(&self, concept: &Concept) -> bool {
        self.concepts.contains(concept)
    }

    pub fn ids(&self) -> Vec<ConceptId> {
        self.concepts.iter().map(|c| c.id.clone()).collect()
    }

    /// Sorted ids: the identity of the set as an unordered support.
    pub fn support_key(&self) -> Vec<ConceptId> {
        let mut ids = self.ids();
        ids.sort();
        ids
    }

    /// Concepts other than the one in `slot`, in order.
    pub fn others(&self, slot: usize) -> Vec<Concept> {
        self.concepts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != slot)
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// Copy of the set with `slot` replaced by `concept`.
    pub fn with_replaced(&self, slot: usize, concept: Concept) -> Result<Self, ConceptSetError> {
        if slot >= self.concepts.len() {
            return Err(ConceptSetError::SlotOutOfRange {
                slot,
                k: self.concepts.len(),
            });
        }
        let mut concepts = self.concepts.clone();
        concepts[slot] = concept;
        ConceptSet::new(concepts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_ignores_case_and_spacing() {
        let a = Concept::new("Does the note mention smoking?");
        let b = Concept::new("  does the NOTE   mention smoking? ");
        assert_eq!(a, b);
        assert_eq!(a.id().as_str().len(), 16);
        assert_ne!(a, Concept::new("Does the note mention alcohol?"));
    }

    #[test]
    fn set_rejects_duplicates_and_empty() {
        let a = Concept::new("Is it red?");
        assert_eq!(ConceptSet::new(vec![]), Err(ConceptSetError::Empty));
        assert!(matches!(
            ConceptSet::new(vec![a.clone(), Concept::new("is it  red?")]),
            Err(ConceptSetError::Duplicate { .. })
        ));
    }

    #[test]
    fn replace_and_others() {
        let set = ConceptSet::new(vec![
            Concept::new("A?"),
            Concept::new("B?"),
            Concept::new("C?"),
        ])
        .unwrap();
        assert_eq!(set.others(1), vec![Concept::new("A?"), Concept::new("C?")]);
        let replaced = set.with_replaced(1, Concept::new("D?")).unwrap();
        assert_eq!(replaced.get(1), Some(&Concept::new("D?")));
        assert!(set.with_replaced(1, Concept::new("A?")).is_err());
        // replacing a slot with its own concept is legal
        assert_eq!(set.with_replaced(2, Concept::new("C?")).unwrap(), set);
    }

    #[test]
    fn serde_checks_id() {
        let c = Concept::new("Is the patient retired?");
        let json = serde_json::to_string(&c).unwrap();
        let back: Concept = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let forged = r#"{"question":"Is the patient retired?","id":"0000000000000000"}"#;
        assert!(serde_json::from_str::<Concept>(forged).is_err());
        let bare: Concept = serde_json::from_str(r#"{"question":"Is the patient retired?"}"#).unwrap();
        assert_eq!(bare, c);
    }

    #[test]
    fn well_formed() {
        assert!(Concept::new("Is it?").is_well_formed());
        assert!(!Concept::new("no question mark").is_well_formed());
        assert!(!Concept::new("?").is_well_formed());
    }
}
