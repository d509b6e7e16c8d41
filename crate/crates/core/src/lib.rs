//! Bayesian concept bottleneck models with oracle-proposed concepts.
//!
//! A concept bottleneck model (CBM) predicts a binary label from the values of
//! `K` yes/no concepts extracted from each observation. This crate samples the
//! posterior over concept sets with Metropolis-within-Gibbs, where each slot
//! update asks a concept oracle (an LLM in production, a finite pool in tests)
//! for candidates conditioned on a random half of the data and corrects the
//! proposal on the held-out half through a Laplace-approximated partial Bayes
//! factor.
//!
//! Module map:
//!
//! * [`concept`]: concepts, content-hashed ids and ordered concept sets.
//! * [`model`]: logistic CBM likelihood, MAP estimation, Laplace marginals,
//!   partial Bayes factors and the posterior-predictive ensemble.
//! * [`sampler`]: single-try, multiple-try and greedy split-sample updates
//!   composed into the Gibbs loop with checkpoints.
//! * [`oracle`]: the oracle contract, the finite-pool oracle and the
//!   persistent annotation cache.
//! * [`keyphrase`]: bag-of-keyphrases design and the ridge keyphrase model
//!   that summarises residual signal for proposal prompts.
//! * [`eval`]: metrics, concept matching, recovery reports, brute-force
//!   posterior enumeration and the synthetic data generator.

pub mod concept;
pub mod data;
pub mod eval;
pub mod keyphrase;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod sampler;

pub use concept::{Concept, ConceptId, ConceptSet, ConceptSetError};
pub use data::{Observation, DatasetError};
pub use model::{
    AnnotationMatrix, Coefficients, LogMarginal, ModelConfig, ModelError,
};
