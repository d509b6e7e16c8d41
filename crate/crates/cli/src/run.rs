use std::path::Path;

use ccbm_core::data::{labels, read_dataset};
use ccbm_core::keyphrase::summarize_subset;
use ccbm_core::oracle::{Annotator, KeyphraseBag, OracleError, OracleStats};
use ccbm_core::sampler::{
    initialize_state, run_gibbs, ChainStart, ChainTrace, Checkpoint, CheckpointRef, EpochControl, GibbsContext,
    RunObserver, SamplerError,
};
use ccbm_core::{Concept, ConceptSet, Observation};

use crate::config::{read_truth, RunConfig};
use crate::evaluate::{recovery, write_recovery};
use crate::manifest::{Accounting, CacheCounts, EpochMarginal, RunManifest, RunStatus};
use crate::rundir::{write_atomic, write_json, write_jsonl, RunDir, SAMPLES, SNAPSHOT, UPDATES};
use crate::{oracle, CliError};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub resume: bool,
    /// Stop cleanly once this many epochs are complete, leaving a checkpoint.
    pub halt_after_epoch: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub status: RunStatus,
    pub manifest: RunManifest,
}

const INITIAL_STATE: &str = "initial_state.json";

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn oracle_failure(e: OracleError, checkpoint: Option<&Path>) -> CliError {
    CliError::Oracle { message: e.to_string(), checkpoint: checkpoint.map(Path::to_path_buf) }
}

/// Writes the checkpoint after every epoch and optionally halts.
struct Checkpointer<'a> {
    path: &'a Path,
    halt_after: Option<usize>,
}

impl RunObserver for Checkpointer<'_> {
    fn on_epoch_end(&mut self, cp: &CheckpointRef<'_>) -> Result<EpochControl, String> {
        let json = serde_json::to_vec(cp).map_err(|e| e.to_string())?;
        write_atomic(self.path, &json).map_err(|e| e.to_string())?;
        log::info!(
            "epoch {} done: {} proposals, {} accepted",
            cp.next_epoch,
            cp.trace.proposal_count,
            cp.trace.acceptance_count
        );
        Ok(match self.halt_after {
            Some(h) if cp.next_epoch >= h => EpochControl::Halt,
            _ => EpochControl::Continue,
        })
    }
}

struct Inputs {
    observations: Vec<Observation>,
    labels: Vec<u8>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let observations = read_dataset(&cfg.dataset).map_err(|e| CliError::Config(e.to_string()))?;
    let labels = labels(&observations).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Inputs { observations, labels })
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot resume, no checkpoint at {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_trace_outputs(dir: &RunDir, trace: &ChainTrace, cfg: &RunConfig) -> Result<usize, CliError> {
    let posterior = trace.posterior(&cfg.sampler);
    write_jsonl(&dir.path(SAMPLES), &posterior)?;
    write_jsonl(&dir.path(UPDATES), &trace.updates)?;
    let mut csv = String::from("epoch,log_marginal\n");
    for (epoch, lm) in trace.epoch_log_marginals() {
        csv.push_str(&format!("{epoch},{lm}\n"));
    }
    write_atomic(&dir.report("trace.csv"), csv.as_bytes())?;
    Ok(posterior.len())
}

/// Steps 0 to 4: keyphrases, initial concepts, warm start and sampling, then
/// the posterior samples, audit log, reports and manifest.
pub fn cmd_run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let started_at = now();
    let dir = RunDir::open(&cfg.output_dir)?;
    let snapshot = cfg.to_toml();
    let checkpoint_path = dir.checkpoint();
    if opts.resume {
        let previous = std::fs::read_to_string(dir.path(SNAPSHOT)).unwrap_or_default();
        if previous != snapshot {
            return Err(CliError::Config("configuration differs from the run being resumed".into()));
        }
    } else {
        if checkpoint_path.exists() {
            return Err(CliError::Config(format!(
                "{} already holds a run; pass --resume or choose another output_dir",
                dir.root().display()
            )));
        }
        write_atomic(&dir.path(SNAPSHOT), snapshot.as_bytes())?;
    }

    let inputs = load_inputs(cfg)?;
    let oracle = oracle::build(cfg)?;
    let mut annotator = oracle::annotator(&cfg.cache_dir())?;
    let ann_start = annotator.annotation_cache().len();
    let kp_start = annotator.keyphrase_cache().len();

    let need_bags = oracle.needs_keyphrase_summary() || (!opts.resume && cfg.initial_concepts.is_none());
    let bags: Vec<KeyphraseBag> = if need_bags {
        annotator
            .extract_keyphrases(oracle.as_ref(), &inputs.observations)
            .map_err(|e| oracle_failure(e, None))?
    } else {
        Vec::new()
    };

    let mut ctx = GibbsContext {
        oracle: oracle.as_ref(),
        annotator: &mut annotator,
        observations: &inputs.observations,
        labels: &inputs.labels,
        keyphrases: &bags,
    };
    let (start, initial, first_epoch) = if opts.resume {
        let cp = read_checkpoint(&checkpoint_path)?;
        let initial: ConceptSet = serde_json::from_str(
            &std::fs::read_to_string(dir.path(INITIAL_STATE)).map_err(|e| CliError::io(dir.path(INITIAL_STATE), e))?,
        )
        .map_err(|e| CliError::Other(format!("{INITIAL_STATE}: {e}")))?;
        let epoch = cp.next_epoch;
        (ChainStart::Resume(Box::new(cp)), initial, epoch)
    } else {
        let initial = match &cfg.initial_concepts {
            Some(qs) => ConceptSet::new(qs.iter().map(Concept::new).collect())
                .map_err(|e| CliError::Config(format!("initial_concepts: {e}")))?,
            None => initialize_state(&mut ctx, &cfg.sampler).map_err(|e| match e {
                SamplerError::Initialization(o) => oracle_failure(o, None),
                other => CliError::Other(other.to_string()),
            })?,
        };
        write_json(&dir.path(INITIAL_STATE), &initial)?;
        (ChainStart::Fresh(initial.clone()), initial, 0)
    };

    let mut observer = Checkpointer { path: &checkpoint_path, halt_after: opts.halt_after_epoch };
    let result = run_gibbs(&mut ctx, &cfg.sampler, start, &mut observer);
    let sampling_stats = ctx.annotator.stats().clone();

    let (status, trace, next_epoch, error) = match result {
        Ok(out) => {
            let status = if out.completed { RunStatus::Completed } else { RunStatus::Halted };
            (status, out.trace, out.next_epoch, None)
        }
        Err(SamplerError::Oracle { source, checkpoint }) => {
            write_json(&checkpoint_path, &checkpoint)?;
            let epoch = checkpoint.next_epoch;
            (RunStatus::Failed, checkpoint.trace, epoch, Some(source))
        }
        Err(SamplerError::Config(m)) | Err(SamplerError::Checkpoint(m)) => return Err(CliError::Config(m)),
        Err(e) => return Err(CliError::Other(e.to_string())),
    };
    let posterior_samples = write_trace_outputs(&dir, &trace, cfg)?;

    let mut report_stats = None;
    if status == RunStatus::Completed {
        if let Some(truth_path) = &cfg.truth {
            let truth: Vec<Concept> = read_truth(truth_path)?.into_iter().map(Concept::new).collect();
            let panel = match &cfg.panel {
                Some(p) => read_dataset(p).map_err(|e| CliError::Config(e.to_string()))?,
                None => inputs.observations.clone(),
            };
            let samples: Vec<ConceptSet> =
                trace.posterior(&cfg.sampler).into_iter().map(|s| s.concept_set.clone()).collect();
            let before = annotator.stats().clone();
            let report = recovery(oracle.as_ref(), &mut annotator, &samples, &truth, &panel, &cfg.matching)?;
            write_recovery(&dir, &report)?;
            report_stats = Some(stats_delta(annotator.stats(), &before));
        }
    }

    let manifest = RunManifest {
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        status,
        started_at,
        finished_at: now(),
        first_epoch,
        next_epoch,
        config: serde_json::to_value(cfg).expect("config serializes"),
        oracle: oracle.describe(),
        n_observations: inputs.observations.len(),
        initial_state: initial.concepts().iter().map(|c| c.question().to_string()).collect(),
        oracle_calls: sampling_stats,
        report_oracle_calls: report_stats,
        cache: CacheCounts {
            annotations_at_start: ann_start,
            annotations_at_end: annotator.annotation_cache().len(),
            keyphrases_at_start: kp_start,
            keyphrases_at_end: annotator.keyphrase_cache().len(),
        },
        accounting: Accounting::from_trace(inputs.observations.len(), &initial, &trace, &cfg.sampler),
        proposals: trace.proposal_count,
        acceptances: trace.acceptance_count,
        acceptance_rate: trace.acceptance_rate(),
        posterior_samples,
        log_marginal_trace: trace
            .epoch_log_marginals()
            .into_iter()
            .map(|(epoch, log_marginal)| EpochMarginal { epoch, log_marginal })
            .collect(),
        error: error.as_ref().map(ToString::to_string),
    };
    write_json(&dir.path(crate::rundir::MANIFEST), &manifest)?;
    if let Some(e) = error {
        return Err(oracle_failure(e, Some(&checkpoint_path)));
    }
    Ok(RunSummary { status, manifest })
}

fn stats_delta(after: &OracleStats, before: &OracleStats) -> OracleStats {
    OracleStats {
        annotation_calls: after.annotation_calls - before.annotation_calls,
        annotation_requests: after.annotation_requests - before.annotation_requests,
        annotation_cache_hits: after.annotation_cache_hits - before.annotation_cache_hits,
        keyphrase_calls: after.keyphrase_calls - before.keyphrase_calls,
        keyphrase_cache_hits: after.keyphrase_cache_hits - before.keyphrase_cache_hits,
        proposal_calls: after.proposal_calls - before.proposal_calls,
        init_calls: after.init_calls - before.init_calls,
        clamp_events: after.clamp_events - before.clamp_events,
        imputed_values: after.imputed_values - before.imputed_values,
    }
}

/// Step 0 alone: keyphrase bags for every observation and the ranked summary
/// of the concept-free keyphrase model.
pub fn cmd_extract_keyphrases(cfg: &RunConfig) -> Result<Vec<KeyphraseBag>, CliError> {
    cfg.validate()?;
    let dir = RunDir::open(&cfg.output_dir)?;
    let inputs = load_inputs(cfg)?;
    let oracle = oracle::build(cfg)?;
    let mut annotator: Annotator = oracle::annotator(&cfg.cache_dir())?;
    let bags = annotator
        .extract_keyphrases(oracle.as_ref(), &inputs.observations)
        .map_err(|e| oracle_failure(e, None))?;
    write_jsonl(&dir.report("keyphrases.jsonl"), &bags)?;
    let (summary, _) = summarize_subset(&bags, &[], &inputs.labels, &cfg.sampler.keyphrase)
        .map_err(|e| CliError::Other(e.to_string()))?;
    let mut text = summary.render();
    text.push('\n');
    write_atomic(&dir.report("keyphrase_summary.txt"), text.as_bytes())?;
    Ok(bags)
}
