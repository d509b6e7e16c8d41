use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::concept::{Concept, ConceptId, ConceptSet};
use crate::data::Observation;
use crate::keyphrase::{summarize_subset, KeyphraseSummary};
use crate::model::{log_marginal_rows, AnnotationMatrix, LogMarginal, ModelConfig, ModelError};
use crate::oracle::{
    Annotator, ConceptOracle, KeyphraseBag, OracleError, OracleMode, OracleProposal,
    ProposalRequest,
};

use super::update::{
    draw_subset, greedy_choice, multi_try_log_acceptance, sample_from_log_weights,
    single_try_log_acceptance,
};
use super::{
    ChainTrace, Checkpoint, CheckpointRef, EpochRng, Phase, PosteriorSample, SamplerConfig,
    SamplerError, UpdateMode, UpdateRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};

/// What the chain runs on.
pub struct GibbsContext<'a> {
    pub oracle: &'a dyn ConceptOracle,
    pub annotator: &'a mut Annotator,
    pub observations: &'a [Observation],
    pub labels: &'a [u8],
    /// Keyphrase bags aligned with `observations`. Only read when the oracle
    /// asks for keyphrase summaries.
    pub keyphrases: &'a [KeyphraseBag],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    Halt,
}

pub trait RunObserver {
    fn on_update(&mut self, _record: &UpdateRecord, _sample: &PosteriorSample) {}

    /// Called after every completed epoch with the resumable state.
    fn on_epoch_end(&mut self, _checkpoint: &CheckpointRef<'_>) -> Result<EpochControl, String> {
        Ok(EpochControl::Continue)
    }
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

pub enum ChainStart {
    Fresh(ConceptSet),
    Resume(Box<Checkpoint>),
}

#[derive(Debug)]
pub struct ChainOutcome {
    pub trace: ChainTrace,
    pub state: ConceptSet,
    /// Generator state after the last completed epoch.
    pub rng: ChaCha8Rng,
    pub next_epoch: usize,
    /// False when an observer halted the run early.
    pub completed: bool,
}

/// Fit the keyphrase model on all observations with no concepts and ask the
/// oracle for an initial concept set.
pub fn initialize_state(
    ctx: &mut GibbsContext<'_>,
    cfg: &SamplerConfig,
) -> Result<ConceptSet, SamplerError> {
    cfg.validate()?;
    if ctx.keyphrases.len() != ctx.observations.len() {
        return Err(SamplerError::Data(format!(
            "{} keyphrase bags for {} observations",
            ctx.keyphrases.len(),
            ctx.observations.len()
        )));
    }
    let (summary, _) = summarize_subset(ctx.keyphrases, &[], ctx.labels, &cfg.keyphrase)?;
    ctx.annotator.stats_mut().init_calls += 1;
    let set = ctx
        .oracle
        .initialize_concepts(&summary, cfg.k)
        .map_err(SamplerError::Initialization)?;
    if set.len() != cfg.k {
        return Err(SamplerError::Initialization(OracleError::Initialization(format!(
            "oracle returned {} concepts, {} requested",
            set.len(),
            cfg.k
        ))));
    }
    Ok(set)
}

/// Annotation columns and memoized full-data marginals.
struct Evaluator {
    model: ModelConfig,
    columns: HashMap<ConceptId, Vec<f64>>,
    full: HashMap<Vec<ConceptId>, LogMarginal>,
}

fn key(set: &[Concept]) -> Vec<ConceptId> {
    set.iter().map(|c| c.id().clone()).collect()
}

impl Evaluator {
    /// Fetch missing columns. Returns, per concept, whether every value had
    /// to be imputed.
    fn ensure(
        &mut self,
        ctx: &mut GibbsContext<'_>,
        concepts: &[Concept],
    ) -> Result<Vec<bool>, OracleError> {
        let mut missing: Vec<Concept> = Vec::new();
        for c in concepts {
            if !self.columns.contains_key(c.id()) && !missing.contains(c) {
                missing.push(c.clone());
            }
        }
        let mut failed = HashMap::new();
        if !missing.is_empty() {
            let cols = ctx
                .annotator
                .annotate_columns(ctx.oracle, ctx.observations, &missing)?;
            for col in cols {
                failed.insert(col.concept.id().clone(), col.fully_failed());
                if !col.fully_failed() {
                    self.columns.insert(col.concept.id().clone(), col.values);
                }
            }
        }
        Ok(concepts
            .iter()
            .map(|c| failed.get(c.id()).copied().unwrap_or(false))
            .collect())
    }

    fn design(&self, set: &[Concept]) -> Result<AnnotationMatrix, ModelError> {
        let cols: Vec<&[f64]> = set.iter().map(|c| self.columns[c.id()].as_slice()).collect();
        AnnotationMatrix::from_unnamed_columns(&cols, self.model.include_intercept)
    }

    fn full_marginal(&mut self, set: &[Concept], y: &[u8]) -> Result<LogMarginal, ModelError> {
        let k = key(set);
        if let Some(lm) = self.full.get(&k) {
            return Ok(lm.clone());
        }
        let phi = self.design(set)?;
        let rows: Vec<usize> = (0..y.len()).collect();
        let lm = log_marginal_rows(&phi, y, &rows, &self.model)?;
        self.full.insert(k, lm.clone());
        Ok(lm)
    }

    /// The partial Bayes term of each set for the given oracle mode.
    fn partial_bayes_terms(
        &mut self,
        sets: &[Vec<Concept>],
        mode: OracleMode,
        subset: &[usize],
        y: &[u8],
    ) -> Result<Vec<f64>, ModelError> {
        if mode == OracleMode::FullPosterior {
            return Ok(vec![0.0; sets.len()]);
        }
        let all: Vec<usize> = (0..y.len()).collect();
        let mut todo: Vec<&Vec<Concept>> = Vec::new();
        for s in sets {
            if !self.full.contains_key(&key(s)) && !todo.iter().any(|t| key(t) == key(s)) {
                todo.push(s);
            }
        }
        let this = &*self;
        let fresh: Vec<(Vec<ConceptId>, LogMarginal)> = todo
            .par_iter()
            .map(|s| {
                let phi = this.design(s)?;
                Ok((key(s), log_marginal_rows(&phi, y, &all, &this.model)?))
            })
            .collect::<Result<_, ModelError>>()?;
        self.full.extend(fresh);

        let this = &*self;
        sets.par_iter()
            .map(|s| {
                let full = this.full[&key(s)].value;
                match mode {
                    OracleMode::PriorOnly => Ok(full),
                    _ => {
                        let phi = this.design(s)?;
                        Ok(full - log_marginal_rows(&phi, y, subset, &this.model)?.value)
                    }
                }
            })
            .collect()
    }
}

struct Chain<'c, 'a> {
    ctx: &'c mut GibbsContext<'a>,
    cfg: &'c SamplerConfig,
    rng: ChaCha8Rng,
    state: ConceptSet,
    trace: ChainTrace,
    eval: Evaluator,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum UpdateKind {
    SingleTry,
    MultiTry,
    Greedy,
}

enum Outcome {
    Installed(Option<Concept>, bool),
    Skipped(String),
}

impl Chain<'_, '_> {
    fn summary_for(&self, rows: &[usize], slot: usize) -> Result<KeyphraseSummary, SamplerError> {
        let others = self.state.others(slot);
        let bags: Vec<KeyphraseBag> = rows.iter().map(|&i| self.ctx.keyphrases[i].clone()).collect();
        let cols: Vec<Vec<f64>> = others
            .iter()
            .map(|c| rows.iter().map(|&i| self.eval.columns[c.id()][i]).collect())
            .collect();
        let y: Vec<u8> = rows.iter().map(|&i| self.ctx.labels[i]).collect();
        let (summary, _) = summarize_subset(&bags, &cols, &y, &self.cfg.keyphrase)?;
        Ok(summary)
    }

    fn oracle_error(&self, source: OracleError, mark: &Mark) -> SamplerError {
        let mut trace = self.trace.clone();
        mark.restore(&mut trace);
        SamplerError::Oracle {
            source,
            checkpoint: Box::new(Checkpoint {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                config: self.cfg.clone(),
                trace,
                rng: mark.rng.clone(),
                state: mark.state.clone(),
                next_epoch: mark.epoch,
            }),
        }
    }

    fn update_slot(
        &mut self,
        epoch: usize,
        slot: usize,
        phase: Phase,
        mark: &Mark,
        observer: &mut dyn RunObserver,
    ) -> Result<(), SamplerError> {
        let n = self.ctx.observations.len();
        let subset = draw_subset(n, self.cfg.omega, &mut self.rng)?;
        let kind = match (phase, self.cfg.mode) {
            (Phase::WarmStart, _) => UpdateKind::Greedy,
            (Phase::Sampling, UpdateMode::SingleTry) => UpdateKind::SingleTry,
            (Phase::Sampling, UpdateMode::MultiTry) => UpdateKind::MultiTry,
        };
        let mut record = self.blank_record(epoch, slot, phase, subset.len());
        self.decide(&subset, slot, kind, &mut record, mark)?;
        let accepted = record.accepted;
        if phase == Phase::Sampling {
            self.trace.proposal_count += 1;
            self.trace.acceptance_count += u64::from(accepted);
        }

        let lm = self.eval.full_marginal(self.state.concepts(), self.ctx.labels)?;
        let sample = PosteriorSample {
            concept_set: self.state.clone(),
            theta: lm.theta_map,
            log_marginal_full: lm.value,
            epoch,
            slot,
            accepted,
            phase,
        };
        observer.on_update(&record, &sample);
        self.trace.updates.push(record);
        self.trace.samples.push(sample);
        Ok(())
    }

    fn blank_record(&self, epoch: usize, slot: usize, phase: Phase, subset_size: usize) -> UpdateRecord {
        UpdateRecord {
            epoch,
            slot,
            phase,
            subset_size,
            incumbent: self.state.concepts()[slot].question().to_string(),
            candidates: Vec::new(),
            q_weights: Vec::new(),
            q_current: None,
            log_partial_bayes: Vec::new(),
            incumbent_log_partial_bayes: None,
            log_weights: Vec::new(),
            incumbent_log_weight: None,
            chosen: None,
            alpha: None,
            accepted: false,
            dropped: 0,
            weights_imputed: false,
            skipped: None,
        }
    }

    /// One slot update on a given subset: proposal seed, oracle call,
    /// decision, and installation of the new concept.
    fn decide(
        &mut self,
        subset: &[usize],
        slot: usize,
        kind: UpdateKind,
        record: &mut UpdateRecord,
        mark: &Mark,
    ) -> Result<(), SamplerError> {
        let seed = self.rng.next_u64();
        let mode = self.ctx.oracle.mode();
        let outcome = match self.propose_and_decide(subset, seed, mode, slot, kind, record) {
            Ok(o) => o,
            Err(Failure::Oracle(e)) => return Err(self.oracle_error(e, mark)),
            Err(Failure::Other(e)) => return Err(e),
        };
        record.accepted = match outcome {
            Outcome::Installed(Some(c), accepted) => {
                self.state = self
                    .state
                    .with_replaced(slot, c)
                    .expect("candidates exclude the other slots");
                accepted
            }
            Outcome::Installed(None, accepted) => accepted,
            Outcome::Skipped(reason) => {
                log::info!("epoch {} slot {slot}: update skipped: {reason}", record.epoch);
                record.skipped = Some(reason);
                false
            }
        };
        Ok(())
    }

    fn propose_and_decide(
        &mut self,
        subset: &[usize],
        seed: u64,
        mode: OracleMode,
        slot: usize,
        kind: UpdateKind,
        record: &mut UpdateRecord,
    ) -> Result<Outcome, Failure> {
        let incumbent = self.state.concepts()[slot].clone();
        let others = self.state.others(slot);
        let all: Vec<usize> = (0..self.ctx.observations.len()).collect();
        let conditioning: &[usize] = match mode {
            OracleMode::PriorOnly => &[],
            OracleMode::PartialPosterior => subset,
            OracleMode::FullPosterior => &all,
        };
        let summary = if self.ctx.oracle.needs_keyphrase_summary() && mode != OracleMode::PriorOnly {
            Some(self.summary_for(conditioning, slot).map_err(Failure::Other)?)
        } else {
            None
        };
        let m = if kind == UpdateKind::SingleTry { 1 } else { self.cfg.m_candidates };
        let request = ProposalRequest {
            slot,
            others: others.clone(),
            incumbent: incumbent.clone(),
            subset_ids: conditioning
                .iter()
                .map(|&i| self.ctx.observations[i].id.clone())
                .collect(),
            subset_labels: conditioning.iter().map(|&i| self.ctx.labels[i]).collect(),
            summary,
            m,
            seed,
        };
        self.ctx.annotator.stats_mut().proposal_calls += 1;
        let proposal = match self.ctx.oracle.propose(&request) {
            Ok(p) => p,
            Err(e) if e.is_skippable() => return Ok(Outcome::Skipped(e.to_string())),
            Err(e) => return Err(Failure::Oracle(e)),
        };
        if let Err(e) = proposal.validate() {
            return Ok(Outcome::Skipped(e.to_string()));
        }
        record.weights_imputed = proposal.weights_imputed;
        record.q_current = proposal.q_current;
        let q0 = proposal.incumbent_weight();

        let (mut candidates, mut q) = dedup(&proposal, &others, &mut record.dropped);
        if kind == UpdateKind::SingleTry {
            candidates.truncate(1);
            q.truncate(1);
        }
        if candidates.is_empty() {
            return Ok(Outcome::Skipped("every candidate duplicates another slot".into()));
        }

        let mut needed = self.state.concepts().to_vec();
        needed.extend(candidates.iter().cloned());
        let failed = match self.eval.ensure(self.ctx, &needed) {
            Ok(f) => f,
            Err(e) if e.is_skippable() => return Ok(Outcome::Skipped(e.to_string())),
            Err(e) => return Err(Failure::Oracle(e)),
        };
        if failed[..self.state.len()].iter().any(|f| *f) {
            return Ok(Outcome::Skipped("current concepts could not be annotated".into()));
        }
        let mut kept = Vec::new();
        let mut kept_q = Vec::new();
        for ((c, w), bad) in candidates.into_iter().zip(q).zip(&failed[self.state.len()..]) {
            if *bad {
                record.dropped += 1;
            } else {
                kept.push(c);
                kept_q.push(w);
            }
        }
        if kept.is_empty() {
            return Ok(Outcome::Skipped("no candidate could be annotated".into()));
        }
        let (candidates, q) = (kept, kept_q);
        record.candidates = candidates.iter().map(|c| c.question().to_string()).collect();
        record.q_weights = q.clone();

        let mut sets: Vec<Vec<Concept>> = Vec::with_capacity(candidates.len() + 1);
        sets.push(self.state.concepts().to_vec());
        for c in &candidates {
            let mut s = self.state.concepts().to_vec();
            s[slot] = c.clone();
            sets.push(s);
        }
        let terms = self
            .eval
            .partial_bayes_terms(&sets, mode, subset, self.ctx.labels)
            .map_err(|e| Failure::Other(e.into()))?;
        let lpbf0 = terms[0];
        let lpbf = &terms[1..];
        let log_q0 = q0.ln();
        let log_q: Vec<f64> = q.iter().map(|w| w.ln()).collect();
        let log_w0 = lpbf0 + log_q0;
        let log_w: Vec<f64> = lpbf.iter().zip(&log_q).map(|(a, b)| a + b).collect();
        record.log_partial_bayes = lpbf.to_vec();
        record.incumbent_log_partial_bayes = Some(lpbf0);
        record.log_weights = log_w.clone();
        record.incumbent_log_weight = Some(log_w0);

        if kind == UpdateKind::Greedy {
            let choice = greedy_choice(log_w0, &log_w);
            record.chosen = choice;
            record.alpha = Some(1.0);
            let replacement = choice
                .map(|m| candidates[m].clone())
                .filter(|c| *c != incumbent);
            let changed = replacement.is_some();
            return Ok(Outcome::Installed(replacement, changed));
        }

        let (chosen, log_alpha) = match kind {
            UpdateKind::SingleTry | UpdateKind::Greedy => {
                (0, single_try_log_acceptance(lpbf[0], lpbf0))
            }
            UpdateKind::MultiTry => {
                let m = sample_from_log_weights(&log_w, self.rng.random());
                (m, multi_try_log_acceptance(log_w0, log_q0, &log_w, &log_q, m))
            }
        };
        let alpha = log_alpha.exp();
        record.chosen = Some(chosen);
        record.alpha = Some(alpha);
        let u: f64 = self.rng.random();
        if u < alpha {
            let c = candidates[chosen].clone();
            let replacement = (c != incumbent).then_some(c);
            Ok(Outcome::Installed(replacement, true))
        } else {
            Ok(Outcome::Installed(None, false))
        }
    }
}

enum Failure {
    Oracle(OracleError),
    Other(SamplerError),
}

/// Drop candidates equal to a concept in another slot and repeated
/// candidates, keeping weights aligned.
fn dedup(
    proposal: &OracleProposal,
    others: &[Concept],
    dropped: &mut usize,
) -> (Vec<Concept>, Vec<f64>) {
    let mut candidates: Vec<Concept> = Vec::new();
    let mut q = Vec::new();
    for (c, &w) in proposal.candidates.iter().zip(&proposal.q_weights) {
        if others.contains(c) || candidates.contains(c) {
            *dropped += 1;
            continue;
        }
        candidates.push(c.clone());
        // zero weights are floored like a missing incumbent weight
        q.push(if w > 0.0 {
            w
        } else {
            crate::oracle::WEIGHT_FLOOR * proposal.q_weights.iter().sum::<f64>()
        });
    }
    (candidates, q)
}

/// Chain position at the start of an epoch, for rolling back a failed epoch.
struct Mark {
    epoch: usize,
    rng: ChaCha8Rng,
    state: ConceptSet,
    samples: usize,
    updates: usize,
    proposals: u64,
    acceptances: u64,
    rng_checkpoints: usize,
}

impl Mark {
    fn restore(&self, trace: &mut ChainTrace) {
        trace.samples.truncate(self.samples);
        trace.updates.truncate(self.updates);
        trace.proposal_count = self.proposals;
        trace.acceptance_count = self.acceptances;
        trace.rng_checkpoints.truncate(self.rng_checkpoints);
    }
}

/// Run warm-start then sampling epochs from a fresh state or a checkpoint.
pub fn run_gibbs(
    ctx: &mut GibbsContext<'_>,
    cfg: &SamplerConfig,
    start: ChainStart,
    observer: &mut dyn RunObserver,
) -> Result<ChainOutcome, SamplerError> {
    cfg.validate()?;
    if ctx.labels.len() != ctx.observations.len() {
        return Err(SamplerError::Data(format!(
            "{} labels for {} observations",
            ctx.labels.len(),
            ctx.observations.len()
        )));
    }
    if let Some(l) = ctx.labels.iter().find(|l| **l > 1) {
        return Err(SamplerError::Data(format!("label {l} is not binary")));
    }
    if ctx.oracle.needs_keyphrase_summary() && ctx.keyphrases.len() != ctx.observations.len() {
        return Err(SamplerError::Data(format!(
            "{} keyphrase bags for {} observations",
            ctx.keyphrases.len(),
            ctx.observations.len()
        )));
    }
    super::update::subset_size(ctx.observations.len(), cfg.omega)?;

    let (state, rng, trace, first_epoch) = match start {
        ChainStart::Fresh(state) => {
            if state.len() != cfg.k {
                return Err(SamplerError::Config(format!(
                    "initial state has {} concepts, k = {}",
                    state.len(),
                    cfg.k
                )));
            }
            (state, ChaCha8Rng::seed_from_u64(cfg.seed), ChainTrace::default(), 0)
        }
        ChainStart::Resume(cp) => {
            cp.validate()?;
            if cp.config != *cfg {
                return Err(SamplerError::Checkpoint(
                    "checkpoint was written with a different sampler configuration".into(),
                ));
            }
            (cp.state, cp.rng, cp.trace, cp.next_epoch)
        }
    };
    let mut chain = Chain {
        eval: Evaluator {
            model: cfg.model_config(),
            columns: HashMap::new(),
            full: HashMap::new(),
        },
        ctx,
        cfg,
        rng,
        state,
        trace,
    };
    let current = chain.state.concepts().to_vec();
    if let Err(e) = chain.eval.ensure(chain.ctx, &current) {
        let mark = chain.mark(first_epoch);
        return Err(chain.oracle_error(e, &mark));
    }

    let total = cfg.warm_start_epochs + cfg.t_epochs;
    for epoch in first_epoch..total {
        let mark = chain.mark(epoch);
        chain.trace.rng_checkpoints.push(EpochRng {
            epoch,
            rng: chain.rng.clone(),
        });
        let phase = if epoch < cfg.warm_start_epochs {
            Phase::WarmStart
        } else {
            Phase::Sampling
        };
        for slot in 0..cfg.k {
            chain.update_slot(epoch, slot, phase, &mark, observer)?;
        }
        let cp = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            config: cfg,
            trace: &chain.trace,
            rng: &chain.rng,
            state: &chain.state,
            next_epoch: epoch + 1,
        };
        let control = observer.on_epoch_end(&cp).map_err(SamplerError::Observer)?;
        if control == EpochControl::Halt && epoch + 1 < total {
            return Ok(ChainOutcome {
                trace: chain.trace,
                state: chain.state,
                rng: chain.rng,
                next_epoch: epoch + 1,
                completed: false,
            });
        }
    }
    Ok(ChainOutcome {
        trace: chain.trace,
        state: chain.state,
        rng: chain.rng,
        next_epoch: total,
        completed: true,
    })
}

impl Chain<'_, '_> {
    fn mark(&self, epoch: usize) -> Mark {
        Mark {
            epoch,
            rng: self.rng.clone(),
            state: self.state.clone(),
            samples: self.trace.samples.len(),
            updates: self.trace.updates.len(),
            proposals: self.trace.proposal_count,
            acceptances: self.trace.acceptance_count,
            rng_checkpoints: self.trace.rng_checkpoints.len(),
        }
    }
}

/// Result of a standalone slot update.
#[derive(Clone, Debug)]
pub struct SlotUpdate {
    pub state: ConceptSet,
    pub accepted: bool,
    /// Candidates, weights, acceptance probability and decision.
    pub record: UpdateRecord,
}

fn standalone(
    ctx: &mut GibbsContext<'_>,
    state: &ConceptSet,
    slot: usize,
    subset: &[usize],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
    kind: UpdateKind,
) -> Result<SlotUpdate, SamplerError> {
    cfg.validate()?;
    if slot >= state.len() {
        return Err(SamplerError::Config(format!("slot {slot} outside 0..{}", state.len())));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= ctx.observations.len()) {
        return Err(SamplerError::Data(format!("subset index {i} out of range")));
    }
    let mut chain = Chain {
        eval: Evaluator {
            model: ModelConfig {
                k: state.len(),
                ..cfg.model_config()
            },
            columns: HashMap::new(),
            full: HashMap::new(),
        },
        ctx,
        cfg,
        rng: rng.clone(),
        state: state.clone(),
        trace: ChainTrace::default(),
    };
    let mark = chain.mark(0);
    let current = chain.state.concepts().to_vec();
    if let Err(e) = chain.eval.ensure(chain.ctx, &current) {
        return Err(chain.oracle_error(e, &mark));
    }
    let phase = if kind == UpdateKind::Greedy { Phase::WarmStart } else { Phase::Sampling };
    let mut record = chain.blank_record(0, slot, phase, subset.len());
    chain.decide(subset, slot, kind, &mut record, &mark)?;
    *rng = chain.rng;
    Ok(SlotUpdate {
        state: chain.state,
        accepted: record.accepted,
        record,
    })
}

/// Single-try split-sample update of `slot` with the proposal subset
/// `subset` (sorted row indices).
pub fn ss_mh_update(
    ctx: &mut GibbsContext<'_>,
    state: &ConceptSet,
    slot: usize,
    subset: &[usize],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SlotUpdate, SamplerError> {
    standalone(ctx, state, slot, subset, cfg, rng, UpdateKind::SingleTry)
}

/// Multiple-try split-sample update with `cfg.m_candidates` candidates.
pub fn multi_ss_mh_update(
    ctx: &mut GibbsContext<'_>,
    state: &ConceptSet,
    slot: usize,
    subset: &[usize],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SlotUpdate, SamplerError> {
    standalone(ctx, state, slot, subset, cfg, rng, UpdateKind::MultiTry)
}

/// Greedy update: installs the best of the incumbent and the candidates.
pub fn greedy_warm_start_update(
    ctx: &mut GibbsContext<'_>,
    state: &ConceptSet,
    slot: usize,
    subset: &[usize],
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SlotUpdate, SamplerError> {
    standalone(ctx, state, slot, subset, cfg, rng, UpdateKind::Greedy)
}
