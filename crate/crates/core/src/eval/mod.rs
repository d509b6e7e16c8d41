//! Evaluation: predictive metrics, concept matching and recovery, exact
//! posterior enumeration on finite pools, and synthetic data.

mod enumerate;
mod matching;
mod metrics;
mod recovery;
mod synthetic;

pub use enumerate::{
    binomial, enumerate_posterior, k_subsets, tv_distance, EnumerationError,
    PosteriorEnumeration, SupportProbability, ENUMERATION_BUDGET,
};
pub use matching::{
    borderline_pairs, concepts_match, AnnotationPanel, BorderlinePair, ConceptMatchRule,
    MatchError,
};
pub use metrics::{
    accuracy, auc, brier, evaluate_predictions, pearson, predictive_entropy, MetricBundle,
    MetricError,
};
pub use recovery::{
    recovery_report, support_frequencies, ConceptFrequency, MatchedPair, RecoveryReport,
    TruthRecovery,
};
pub use synthetic::{
    generate_synthetic, mimic_style_spec, SyntheticData, SyntheticError, SyntheticFeature,
    SyntheticSpec,
};
