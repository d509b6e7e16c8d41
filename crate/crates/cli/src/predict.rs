use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use ccbm_core::data::read_dataset;
use ccbm_core::model::{design_row, posterior_predictive, sigmoid_predict};
use ccbm_core::Concept;
use serde::{Deserialize, Serialize};

use crate::evaluate::{read_samples, read_snapshot};
use crate::rundir::{write_jsonl, RunDir};
use crate::{oracle, CliError};

#[derive(Clone, Debug, Default)]
pub struct PredictArgs {
    pub run_dir: PathBuf,
    pub input: PathBuf,
    /// Defaults to `<run_dir>/predictions.jsonl`.
    pub output: Option<PathBuf>,
}

/// One line of the scored output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredObservation {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    /// Ensemble probability of Y = 1; absent when flagged.
    pub probability: Option<f64>,
    /// Some concept value could not be obtained from the oracle.
    pub flagged: bool,
    /// Value of every concept appearing in any sample, by question.
    pub concepts: BTreeMap<String, f64>,
    /// Probability under each posterior sample, in `samples.jsonl` order.
    pub samples: Vec<f64>,
}

/// Posterior-predictive scores for new observations.
pub fn cmd_predict(args: &PredictArgs) -> Result<Vec<ScoredObservation>, CliError> {
    let cfg = read_snapshot(&args.run_dir)?;
    let dir = RunDir::open(&args.run_dir)?;
    let samples = read_samples(&args.run_dir)?;
    if samples.is_empty() {
        return Err(CliError::Config(format!("{} has no posterior samples", args.run_dir.display())));
    }
    let observations = read_dataset(&args.input).map_err(|e| CliError::Config(e.to_string()))?;

    let mut distinct: BTreeMap<_, Concept> = BTreeMap::new();
    for c in samples.iter().flat_map(|s| s.concept_set.concepts()) {
        distinct.entry(c.id().clone()).or_insert_with(|| c.clone());
    }
    let concepts: Vec<Concept> = distinct.into_values().collect();
    let oracle = oracle::build(&cfg)?;
    let mut annotator = oracle::annotator(&cfg.cache_dir())?;
    let columns = annotator
        .annotate_columns(oracle.as_ref(), &observations, &concepts)
        .map_err(|e| CliError::Oracle { message: e.to_string(), checkpoint: None })?;
    let by_id: HashMap<_, _> = columns.iter().map(|c| (c.concept.id().clone(), c)).collect();
    let intercept = cfg.sampler.include_intercept;

    let mut out = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let flagged = columns.iter().any(|c| c.imputed[i]);
        let values: BTreeMap<String, f64> =
            columns.iter().map(|c| (c.concept.question().to_string(), c.values[i])).collect();
        let (probability, per_sample) = if flagged {
            (None, Vec::new())
        } else {
            let rows: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| {
                    let v: Vec<f64> = s.concept_set.concepts().iter().map(|c| by_id[c.id()].values[i]).collect();
                    design_row(&v, intercept)
                })
                .collect();
            let members: Vec<_> = samples.iter().zip(&rows).map(|(s, r)| (&s.theta, r.as_slice())).collect();
            let per_sample = members
                .iter()
                .map(|(t, r)| sigmoid_predict(t, r))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Other(e.to_string()))?;
            let p = posterior_predictive(&members).map_err(|e| CliError::Other(e.to_string()))?;
            (Some(p), per_sample)
        };
        out.push(ScoredObservation {
            id: obs.id.clone(),
            label: obs.label,
            probability,
            flagged,
            concepts: values,
            samples: per_sample,
        });
    }
    let target = args.output.clone().unwrap_or_else(|| dir.path("predictions.jsonl"));
    write_jsonl(&target, &out)?;
    Ok(out)
}
