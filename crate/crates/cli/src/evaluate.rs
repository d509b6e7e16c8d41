use std::collections::BTreeMap;
use std::path::PathBuf;

use ccbm_core::data::read_dataset;
use ccbm_core::eval::{evaluate_predictions, recovery_report, AnnotationPanel, ConceptMatchRule, MetricBundle, RecoveryReport};
use ccbm_core::oracle::{Annotator, ConceptOracle};
use ccbm_core::sampler::PosteriorSample;
use ccbm_core::{Concept, ConceptSet, Observation};
use serde::{Deserialize, Serialize};

use crate::config::{read_truth, RunConfig};
use crate::predict::ScoredObservation;
use crate::rundir::{write_atomic, write_json, RunDir, SAMPLES, SNAPSHOT};
use crate::{oracle, CliError};

/// Annotates every sampled and true concept on `panel` and scores the
/// samples against the truth.
pub(crate) fn recovery(
    oracle: &dyn ConceptOracle,
    annotator: &mut Annotator,
    samples: &[ConceptSet],
    truth: &[Concept],
    panel: &[Observation],
    rule: &ConceptMatchRule,
) -> Result<RecoveryReport, CliError> {
    let mut distinct: BTreeMap<_, Concept> = BTreeMap::new();
    for c in samples.iter().flat_map(|s| s.concepts()).chain(truth) {
        distinct.entry(c.id().clone()).or_insert_with(|| c.clone());
    }
    let concepts: Vec<Concept> = distinct.into_values().collect();
    let columns = annotator
        .annotate_columns(oracle, panel, &concepts)
        .map_err(|e| CliError::Oracle { message: e.to_string(), checkpoint: None })?;
    let mut table = AnnotationPanel::new(panel.iter().map(|o| o.id.clone()).collect());
    for col in columns {
        // imputed entries carry no information about either concept
        let values = col.values.iter().zip(&col.imputed).map(|(v, bad)| if *bad { f64::NAN } else { *v }).collect();
        table.insert(&col.concept, values).map_err(|e| CliError::Other(e.to_string()))?;
    }
    recovery_report(samples, truth, rule, &table).map_err(|e| CliError::Other(e.to_string()))
}

pub(crate) fn write_recovery(dir: &RunDir, report: &RecoveryReport) -> Result<(), CliError> {
    write_json(&dir.report("recovery.json"), report)?;
    write_atomic(&dir.report("concept_frequencies.csv"), report.frequencies_csv().as_bytes())
}

#[derive(Clone, Debug, Default)]
pub struct EvalArgs {
    pub run_dir: PathBuf,
    /// Overrides the run's configured truth file.
    pub truth: Option<PathBuf>,
    /// Scored JSONL from `predict` with labels.
    pub predictions: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricBundle>,
    /// Predictions skipped because an annotation could not be obtained.
    pub flagged: usize,
}

pub fn read_samples(dir: &std::path::Path) -> Result<Vec<PosteriorSample>, CliError> {
    let path = dir.join(SAMPLES);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Other(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn read_snapshot(dir: &std::path::Path) -> Result<RunConfig, CliError> {
    let path = dir.join(SNAPSHOT);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Recovery against the truth and predictive metrics of a scored file,
/// written to `reports/eval.json`.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let cfg = read_snapshot(&args.run_dir)?;
    let dir = RunDir::open(&args.run_dir)?;
    let mut report = EvalReport { recovery: None, metrics: None, flagged: 0 };

    if let Some(truth_path) = args.truth.as_ref().or(cfg.truth.as_ref()) {
        let truth: Vec<Concept> = read_truth(truth_path)?.into_iter().map(Concept::new).collect();
        let samples: Vec<ConceptSet> = read_samples(&args.run_dir)?.into_iter().map(|s| s.concept_set).collect();
        let panel_path = cfg.panel.as_ref().unwrap_or(&cfg.dataset);
        let panel = read_dataset(panel_path).map_err(|e| CliError::Config(e.to_string()))?;
        let oracle = oracle::build(&cfg)?;
        let mut annotator = oracle::annotator(&cfg.cache_dir())?;
        let rec = recovery(oracle.as_ref(), &mut annotator, &samples, &truth, &panel, &cfg.matching)?;
        write_recovery(&dir, &rec)?;
        report.recovery = Some(rec);
    }

    if let Some(path) = &args.predictions {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: ScoredObservation = serde_json::from_str(line).map_err(|e| CliError::Other(e.to_string()))?;
            match (row.probability, row.label) {
                (Some(p), Some(y)) => {
                    scores.push(p);
                    labels.push(y);
                }
                (None, _) => report.flagged += 1,
                (Some(_), None) => {
                    return Err(CliError::Config(format!("prediction {:?} has no label", row.id)));
                }
            }
        }
        report.metrics = Some(evaluate_predictions(&scores, &labels).map_err(|e| CliError::Other(e.to_string()))?);
    }
    write_json(&dir.report("eval.json"), &report)?;
    Ok(report)
}
