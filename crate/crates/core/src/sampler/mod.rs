//! Metropolis-within-Gibbs over concept sets.
//!
//! Each epoch visits slots `0..K` in order. A slot update draws a random
//! subset `S` of the observations, asks the oracle for candidates given
//! `c_{−k}` (and a keyphrase summary fitted on `S`), and accepts through the
//! partial Bayes factor on the held-out rows. Warm-start epochs replace the
//! accept step with an argmax.

mod chain;
mod update;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::ConceptSet;
use crate::keyphrase::{KeyphraseError, KeyphraseSettings};
use crate::model::{Coefficients, ModelConfig, ModelError};
use crate::optim::NewtonOptions;
use crate::oracle::OracleError;

pub use chain::{
    greedy_warm_start_update, initialize_state, multi_ss_mh_update, run_gibbs, ss_mh_update,
    ChainOutcome, ChainStart, EpochControl, GibbsContext, NoObserver, RunObserver, SlotUpdate,
};
pub use update::{
    draw_subset, greedy_choice, multi_try_log_acceptance, sample_from_log_weights,
    single_try_log_acceptance, subset_size,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    SingleTry,
    #[default]
    MultiTry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub k: usize,
    /// Sampling epochs after warm-start.
    pub t_epochs: usize,
    pub m_candidates: usize,
    /// Fraction of observations in the proposal subset `S`.
    pub omega: f64,
    pub gamma: f64,
    pub seed: u64,
    pub warm_start_epochs: usize,
    /// Warm-start states kept as posterior samples.
    pub keep_last: usize,
    /// Sampling-phase states discarded before the posterior.
    pub burn_in: usize,
    pub mode: UpdateMode,
    pub include_intercept: bool,
    pub solver: NewtonOptions,
    pub keyphrase: KeyphraseSettings,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            k: 4,
            t_epochs: 5,
            m_candidates: 10,
            omega: 0.5,
            gamma: 1.0,
            seed: 0,
            warm_start_epochs: 1,
            keep_last: 20,
            burn_in: 0,
            mode: UpdateMode::MultiTry,
            include_intercept: true,
            solver: NewtonOptions::default(),
            keyphrase: KeyphraseSettings::default(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::Config(m));
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return bad(format!("omega must lie in (0, 1), got {}", self.omega));
        }
        if self.m_candidates == 0 {
            return bad("m_candidates must be at least 1".into());
        }
        if self.t_epochs == 0 {
            return bad("t_epochs must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        self.model_config().validate().map_err(|e| SamplerError::Config(e.to_string()))
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            gamma: self.gamma,
            k: self.k,
            include_intercept: self.include_intercept,
            solver: self.solver,
        }
    }

    /// Warm-start states recorded as posterior samples.
    pub fn warm_start_kept(&self) -> usize {
        (self.k * self.warm_start_epochs).min(self.keep_last)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    WarmStart,
    Sampling,
}

/// Chain state after one slot update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub concept_set: ConceptSet,
    /// Full-data MAP coefficients, concept columns then intercept.
    pub theta: Coefficients,
    pub log_marginal_full: f64,
    pub epoch: usize,
    pub slot: usize,
    pub accepted: bool,
    pub phase: Phase,
}

/// Audit record of one slot update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub epoch: usize,
    pub slot: usize,
    pub phase: Phase,
    pub subset_size: usize,
    pub incumbent: String,
    pub candidates: Vec<String>,
    pub q_weights: Vec<f64>,
    pub q_current: Option<f64>,
    /// Partial Bayes term per candidate set (full-data marginal in prior-only
    /// mode, zero in full-posterior mode).
    pub log_partial_bayes: Vec<f64>,
    pub incumbent_log_partial_bayes: Option<f64>,
    pub log_weights: Vec<f64>,
    pub incumbent_log_weight: Option<f64>,
    pub chosen: Option<usize>,
    pub alpha: Option<f64>,
    pub accepted: bool,
    /// Candidates dropped as duplicates of `c_{−k}` or for failed annotation.
    pub dropped: usize,
    pub weights_imputed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRng {
    pub epoch: usize,
    /// Generator state at the start of the epoch.
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub samples: Vec<PosteriorSample>,
    pub updates: Vec<UpdateRecord>,
    /// Sampling-phase updates only.
    pub proposal_count: u64,
    pub acceptance_count: u64,
    pub rng_checkpoints: Vec<EpochRng>,
}

impl ChainTrace {
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposal_count > 0).then(|| self.acceptance_count as f64 / self.proposal_count as f64)
    }

    /// The posterior samples: the last [`SamplerConfig::warm_start_kept`]
    /// warm-start states followed by the sampling states after burn-in.
    pub fn posterior(&self, cfg: &SamplerConfig) -> Vec<&PosteriorSample> {
        let warm: Vec<&PosteriorSample> = self
            .samples
            .iter()
            .filter(|s| s.phase == Phase::WarmStart)
            .collect();
        let keep = cfg.warm_start_kept().min(warm.len());
        let mut out: Vec<&PosteriorSample> = warm[warm.len() - keep..].to_vec();
        out.extend(
            self.samples
                .iter()
                .filter(|s| s.phase == Phase::Sampling)
                .skip(cfg.burn_in),
        );
        out
    }

    /// Mean full-data log marginal of the states recorded in each epoch.
    pub fn epoch_log_marginals(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for s in &self.samples {
            match out.last_mut() {
                Some(last) if last.0 == s.epoch => {
                    last.1 += s.log_marginal_full;
                    last.2 += 1;
                }
                _ => out.push((s.epoch, s.log_marginal_full, 1)),
            }
        }
        out.into_iter().map(|(e, total, n)| (e, total / n as f64)).collect()
    }
}

pub const CHECKPOINT_FORMAT: &str = "ccbm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: SamplerConfig,
    pub trace: ChainTrace,
    pub rng: ChaCha8Rng,
    pub state: ConceptSet,
    /// First epoch not yet run.
    pub next_epoch: usize,
}

/// Borrowed form of [`Checkpoint`] with the same serialized layout.
#[derive(Debug, Serialize)]
pub struct CheckpointRef<'a> {
    pub format: &'a str,
    pub version: u32,
    pub config: &'a SamplerConfig,
    pub trace: &'a ChainTrace,
    pub rng: &'a ChaCha8Rng,
    pub state: &'a ConceptSet,
    pub next_epoch: usize,
}

impl CheckpointRef<'_> {
    pub fn to_owned(&self) -> Checkpoint {
        Checkpoint {
            format: self.format.to_string(),
            version: self.version,
            config: self.config.clone(),
            trace: self.trace.clone(),
            rng: self.rng.clone(),
            state: self.state.clone(),
            next_epoch: self.next_epoch,
        }
    }
}

impl Checkpoint {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(SamplerError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.state.len() != self.config.k {
            return Err(SamplerError::Checkpoint(format!(
                "state has {} concepts, config expects {}",
                self.state.len(),
                self.config.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("oracle failure: {source}")]
    Oracle {
        source: OracleError,
        /// State at the start of the failed epoch.
        checkpoint: Box<Checkpoint>,
    },
    #[error("oracle failure during initialization: {0}")]
    Initialization(OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Keyphrase(#[from] KeyphraseError),
    #[error("cannot draw a proportion {omega} subset of {n} observations: need 1 ≤ ⌊ωn⌋ ≤ n − 1")]
    Subset { omega: f64, n: usize },
    #[error("{0}")]
    Data(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("run observer failed: {0}")]
    Observer(String),
}
