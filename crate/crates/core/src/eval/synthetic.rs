//! Synthetic labelled corpora generated from a known logistic model over
//! binary features.
//!
//! Each pool concept is backed by one binary feature. The label follows
//! `logit P(Y=1) = intercept + Σ_j coefficient_j · feature_{true_j}`. Every
//! observation's text lists its active feature names in a fixed template, and
//! its keyphrase bag holds the same names, so both the pool oracle and a real
//! LLM can run on the corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::Concept;
use crate::data::Observation;
use crate::model::sigmoid;
use crate::oracle::{KeyphraseBag, PoolConceptSpec, PoolDefinition, PoolRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFeature {
    /// Short keyphrase-style name, e.g. "alcohol use".
    pub name: String,
    pub question: String,
    pub prevalence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub pool: Vec<SyntheticFeature>,
    /// Pool indices of the features that enter the label model.
    pub true_support: Vec<usize>,
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub intercept: f64,
    /// With this probability a feature copies a shared latent draw instead of
    /// being drawn independently, which correlates features while keeping
    /// each marginal prevalence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_correlation: Option<f64>,
    pub seed: u64,
    /// Prefix for observation ids.
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "obs".to_string()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("{support} true features but {coefficients} coefficients")]
    CoefficientCount { support: usize, coefficients: usize },
    #[error("true feature index {0} is outside the pool")]
    SupportOutOfRange(usize),
    #[error("true feature index {0} is repeated")]
    DuplicateSupport(usize),
    #[error("prevalence {value} of feature {name:?} is outside [0, 1]")]
    Prevalence { name: String, value: f64 },
    #[error("feature correlation {0} is outside [0, 1]")]
    Correlation(f64),
    #[error("pool has two features asking the same question: {0:?}")]
    DuplicateQuestion(String),
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.true_support.len() != self.coefficients.len() {
            return Err(SyntheticError::CoefficientCount {
                support: self.true_support.len(),
                coefficients: self.coefficients.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for &j in &self.true_support {
            if j >= self.pool.len() {
                return Err(SyntheticError::SupportOutOfRange(j));
            }
            if !seen.insert(j) {
                return Err(SyntheticError::DuplicateSupport(j));
            }
        }
        let mut questions = std::collections::HashSet::new();
        for f in &self.pool {
            if !(0.0..=1.0).contains(&f.prevalence) {
                return Err(SyntheticError::Prevalence {
                    name: f.name.clone(),
                    value: f.prevalence,
                });
            }
            if !questions.insert(Concept::new(f.question.clone()).id().clone()) {
                return Err(SyntheticError::DuplicateQuestion(f.question.clone()));
            }
        }
        if let Some(rho) = self.feature_correlation {
            if !(0.0..=1.0).contains(&rho) {
                return Err(SyntheticError::Correlation(rho));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub observations: Vec<Observation>,
    pub keyphrases: Vec<KeyphraseBag>,
    /// Feature values, `features[i][j]` for observation `i`, pool feature `j`.
    pub features: Vec<Vec<u8>>,
    pub pool: PoolDefinition,
    pub truth: Vec<Concept>,
}

impl SyntheticData {
    pub fn labels(&self) -> Vec<u8> {
        self.observations
            .iter()
            .map(|o| o.label.expect("synthetic observations are labelled"))
            .collect()
    }

    /// Column of pool feature `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.iter().map(|row| f64::from(row[j])).collect()
    }
}

fn note_text(names: &[&str]) -> String {
    if names.is_empty() {
        "Social history: nothing notable reported.".to_string()
    } else {
        format!("Social history: {}.", names.join(", "))
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, SyntheticError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.pool.len();
    let mut observations = Vec::with_capacity(spec.n);
    let mut keyphrases = Vec::with_capacity(spec.n);
    let mut features = Vec::with_capacity(spec.n);
    let mut rows = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let latent: f64 = rng.random();
        let row: Vec<u8> = spec
            .pool
            .iter()
            .map(|f| {
                let shared = spec
                    .feature_correlation
                    .is_some_and(|rho| rng.random_bool(rho));
                let u = if shared { latent } else { rng.random() };
                u8::from(u < f.prevalence)
            })
            .collect();
        let logit = spec.intercept
            + spec
                .true_support
                .iter()
                .zip(&spec.coefficients)
                .map(|(&j, b)| b * f64::from(row[j]))
                .sum::<f64>();
        let label = u8::from(rng.random::<f64>() < sigmoid(logit));
        let names: Vec<&str> = (0..p)
            .filter(|&j| row[j] == 1)
            .map(|j| spec.pool[j].name.as_str())
            .collect();
        let id = format!("{}{i:05}", spec.id_prefix);
        observations.push(Observation::new(id.clone(), note_text(&names), Some(label)));
        keyphrases.push(KeyphraseBag::from_raw(id.clone(), &names));
        rows.push(PoolRow {
            id,
            values: row.iter().map(|&v| f64::from(v)).collect(),
            keyphrases: names.iter().map(|s| s.to_string()).collect(),
        });
        features.push(row);
    }
    let pool = PoolDefinition {
        concepts: spec
            .pool
            .iter()
            .map(|f| PoolConceptSpec {
                question: f.question.clone(),
                keyphrase: Some(f.name.clone()),
            })
            .collect(),
        rows,
    };
    let truth = spec
        .true_support
        .iter()
        .map(|&j| Concept::new(spec.pool[j].question.clone()))
        .collect();
    Ok(SyntheticData {
        observations,
        keyphrases,
        features,
        pool,
        truth,
    })
}

/// The five label features of the clinical-notes simulation and their
/// coefficients.
const MIMIC_TRUTH: [(&str, &str, f64, f64); 5] = [
    ("unemployed", "Does the note imply the patient is unemployed?", 0.2, 4.0),
    ("retired", "Does the note imply the patient is retired?", 0.2, 4.0),
    (
        "alcohol use",
        "Does the note mention the patient consuming alcohol in the present or the past?",
        0.3,
        4.0,
    ),
    (
        "smoking",
        "Does the note mention the patient smoking in the present or the past?",
        0.3,
        -4.0,
    ),
    (
        "drug use",
        "Does the note mention the patient using recreational drugs in the present or the past?",
        0.2,
        5.0,
    ),
];

/// Features that never enter the label model.
const MIMIC_DECOYS: [(&str, &str, f64); 25] = [
    ("lives alone", "Does the patient live alone?", 0.25),
    ("married", "Is the patient married?", 0.4),
    ("has children", "Does the patient have children?", 0.35),
    ("homeless", "Is the patient homeless?", 0.1),
    ("veteran", "Is the patient a veteran?", 0.15),
    ("chest pain", "Is chest pain a chief complaint?", 0.2),
    ("shortness breath", "Is shortness of breath a chief complaint?", 0.2),
    ("abdominal pain", "Is abdominal pain a chief complaint?", 0.2),
    ("fever", "Does the patient report a fever?", 0.15),
    ("headache", "Does the patient report a headache?", 0.15),
    ("fall", "Did the patient present after a fall?", 0.15),
    ("diabetes", "Does the patient have diabetes?", 0.25),
    ("hypertension", "Does the patient have hypertension?", 0.35),
    ("obesity", "Is the patient described as obese?", 0.2),
    ("depression", "Does the patient have a history of depression?", 0.2),
    ("anxiety", "Does the patient have a history of anxiety?", 0.2),
    ("exercise", "Does the patient exercise regularly?", 0.3),
    ("vegetarian", "Does the patient follow a vegetarian diet?", 0.1),
    ("works nights", "Does the patient work night shifts?", 0.1),
    ("student", "Is the patient a student?", 0.1),
    ("caregiver", "Is the patient a caregiver for a family member?", 0.1),
    ("religious", "Does the note mention religious practice?", 0.15),
    ("travel", "Has the patient travelled recently?", 0.1),
    ("pets", "Does the patient have pets?", 0.3),
    ("insurance", "Does the note mention the patient's insurance?", 0.3),
];

/// The clinical-notes simulation design: 30-feature pool whose first five
/// features carry coefficients 4, 4, 4, −4 and 5 with no intercept.
pub fn mimic_style_spec(n: usize, seed: u64) -> SyntheticSpec {
    let mut pool: Vec<SyntheticFeature> = MIMIC_TRUTH
        .iter()
        .map(|(name, q, prev, _)| SyntheticFeature {
            name: name.to_string(),
            question: q.to_string(),
            prevalence: *prev,
        })
        .collect();
    pool.extend(MIMIC_DECOYS.iter().map(|(name, q, prev)| SyntheticFeature {
        name: name.to_string(),
        question: q.to_string(),
        prevalence: *prev,
    }));
    SyntheticSpec {
        n,
        pool,
        true_support: (0..5).collect(),
        coefficients: MIMIC_TRUTH.iter().map(|t| t.3).collect(),
        intercept: 0.0,
        feature_correlation: None,
        seed,
        id_prefix: default_prefix(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_design() {
        let spec = mimic_style_spec(10, 0);
        assert_eq!(spec.pool.len(), 30);
        assert_eq!(spec.coefficients, vec![4.0, 4.0, 4.0, -4.0, 5.0]);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn reproducible_and_consistent() {
        let spec = mimic_style_spec(200, 9);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        for (obs, bag) in a.observations.iter().zip(&a.keyphrases) {
            assert_eq!(obs.id, bag.observation_id);
            for phrase in &bag.phrases {
                assert!(obs.text.contains(phrase.as_str()));
            }
        }
        assert!(a.pool.validate().is_ok());
        assert_eq!(a.truth.len(), 5);
    }

    #[test]
    fn null_model_labels_are_fair_coins() {
        let mut spec = mimic_style_spec(2000, 3);
        spec.coefficients = vec![0.0; 5];
        let data = generate_synthetic(&spec).unwrap();
        let mean = data.labels().iter().map(|&l| f64::from(l)).sum::<f64>() / 2000.0;
        assert!((mean - 0.5).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn correlated_features_keep_prevalence() {
        let mut spec = mimic_style_spec(20_000, 5);
        spec.feature_correlation = Some(0.5);
        let data = generate_synthetic(&spec).unwrap();
        let prev = data.column(2).iter().sum::<f64>() / 20_000.0;
        assert!((prev - 0.3).abs() < 0.02);
        let r = crate::eval::pearson(&data.column(5), &data.column(6)).unwrap();
        assert!(r > 0.1);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = mimic_style_spec(10, 0);
        spec.coefficients.pop();
        assert!(matches!(spec.validate(), Err(SyntheticError::CoefficientCount { .. })));
        let mut spec = mimic_style_spec(10, 0);
        spec.true_support[1] = 0;
        assert_eq!(spec.validate(), Err(SyntheticError::DuplicateSupport(0)));
        let mut spec = mimic_style_spec(10, 0);
        spec.true_support[0] = 99;
        assert_eq!(spec.validate(), Err(SyntheticError::SupportOutOfRange(99)));
    }
}
