use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Duration;

use ccbm_core::concept::{ConceptId, ConceptSet};
use ccbm_core::keyphrase::KeyphraseSummary;
use ccbm_core::oracle::{
    AnnotationRecord, AnnotationSource, ConceptOracle, KeyphraseBag, OracleError, OracleMode, OracleProposal,
    ProposalRequest, WEIGHT_FLOOR,
};
use ccbm_core::{Concept, Observation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::parse::{parse_annotations, parse_concepts, parse_keyphrases, parse_proposal, ParsedProposal};
use crate::retry::{CallFailure, RetryPolicy};
use crate::templates::{render, Templates};
use crate::transport::{ChatMessage, ChatRequest, ChatTransport, HttpTransport};

pub const API_KEY_ENV: &str = "CCBM_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub mode: OracleMode,
    /// Cap on concurrent requests during annotation and keyphrase extraction.
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// Wait before each retry of a failed request.
    pub retry_delays_secs: Vec<f64>,
    pub max_tokens: Option<u32>,
    /// Used for annotation and keyphrase extraction.
    pub annotation_temperature: f64,
    /// Used for proposals and initialization.
    pub proposal_temperature: f64,
    /// When set, prompts describe what Y means. Otherwise the target is only
    /// ever called "Y".
    pub task_description: Option<String>,
    /// Directory whose template files override the built-in ones.
    pub templates_dir: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            mode: OracleMode::PartialPosterior,
            max_in_flight: 8,
            timeout_secs: 120,
            retry_delays_secs: vec![1.0, 4.0, 16.0],
            max_tokens: None,
            annotation_temperature: 0.0,
            proposal_temperature: 1.0,
            task_description: None,
            templates_dir: None,
        }
    }
}

pub struct LlmOracle {
    config: LlmConfig,
    templates: Templates,
    transport: Box<dyn ChatTransport>,
    retry: RetryPolicy,
    workers: rayon::ThreadPool,
}

fn transport_error(failure: CallFailure) -> OracleError {
    match failure {
        CallFailure::Transport { attempts, error } => OracleError::Transport { attempts, message: error.to_string() },
        CallFailure::Parse { attempts, message } => OracleError::Unparseable {
            what: "reply",
            message: format!("{message} (after {attempts} attempts)"),
        },
    }
}

fn numbered(questions: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let lines: Vec<String> = questions
        .into_iter()
        .enumerate()
        .map(|(i, q)| format!("{}. {}", i + 1, q.as_ref()))
        .collect();
    if lines.is_empty() {
        "(none yet)".into()
    } else {
        lines.join("\n")
    }
}

fn summary_text(summary: Option<&KeyphraseSummary>) -> String {
    summary.map(KeyphraseSummary::render).unwrap_or_else(|| KeyphraseSummary::default().render())
}

impl LlmOracle {
    pub fn new(config: LlmConfig, templates: Templates, transport: Box<dyn ChatTransport>) -> Result<Self, OracleError> {
        templates.validate().map_err(|e| OracleError::Contract(e.to_string()))?;
        if config.max_in_flight == 0 {
            return Err(OracleError::Contract("max_in_flight must be at least 1".into()));
        }
        let delays = config
            .retry_delays_secs
            .iter()
            .map(|&s| Duration::try_from_secs_f64(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| OracleError::Contract(format!("retry_delays_secs: {e}")))?;
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight)
            .thread_name(|i| format!("oracle-{i}"))
            .build()
            .map_err(|e| OracleError::Contract(e.to_string()))?;
        let retry = RetryPolicy { delays, ..RetryPolicy::default() };
        Ok(LlmOracle { config, templates, transport, retry, workers })
    }

    /// HTTP transport with the key from `CCBM_API_KEY` and templates from
    /// `templates_dir` when set.
    pub fn from_config(config: LlmConfig) -> Result<Self, OracleError> {
        let templates = match &config.templates_dir {
            Some(dir) => Templates::load_dir(dir).map_err(|e| OracleError::Contract(e.to_string()))?,
            None => Templates::default(),
        };
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{API_KEY_ENV} is not set; sending requests without credentials");
        }
        let transport = HttpTransport::new(&config.endpoint, key, Duration::from_secs(config.timeout_secs))
            .map_err(|e| OracleError::Transport { attempts: 0, message: e.to_string() })?;
        Self::new(config, templates, Box::new(transport))
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    fn task(&self) -> String {
        match &self.config.task_description {
            Some(d) => format!("a binary outcome Y ({d})"),
            None => "a binary outcome Y".into(),
        }
    }

    fn request(&self, prompt: String, temperature: f64) -> ChatRequest {
        ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature,
            max_tokens: self.config.max_tokens,
            json_response: true,
        }
    }

    fn keyphrase_bag(&self, obs: &Observation) -> Result<KeyphraseBag, OracleError> {
        if obs.text.trim().is_empty() {
            return Ok(KeyphraseBag::from_raw(obs.id.clone(), Vec::<String>::new()));
        }
        let prompt = render(&self.templates.keyphrases, &[("note", &obs.text)]);
        let req = self.request(prompt, self.config.annotation_temperature);
        match self.retry.call(self.transport.as_ref(), &req, parse_keyphrases) {
            Ok(raw) => Ok(KeyphraseBag::from_raw(obs.id.clone(), raw)),
            Err(CallFailure::Parse { message, .. }) => {
                log::warn!("keyphrases for {:?} unparseable ({message}); using an empty bag", obs.id);
                Ok(KeyphraseBag::from_raw(obs.id.clone(), Vec::<String>::new()))
            }
            Err(e) => Err(transport_error(e)),
        }
    }

    fn annotate_one(&self, obs: &Observation, concepts: &[Concept]) -> Result<Vec<AnnotationRecord>, OracleError> {
        let questions = numbered(concepts.iter().map(Concept::question));
        let count = concepts.len().to_string();
        let prompt = render(
            &self.templates.annotate,
            &[("note", &obs.text), ("questions", &questions), ("count", &count)],
        );
        let req = self.request(prompt, self.config.annotation_temperature);
        let (values, imputed) = match self.retry.call(self.transport.as_ref(), &req, |t| parse_annotations(t, concepts.len())) {
            Ok(values) => (values, false),
            Err(CallFailure::Parse { message, .. }) => {
                log::warn!("annotations for {:?} unparseable ({message}); imputing 0.5", obs.id);
                (vec![0.5; concepts.len()], true)
            }
            Err(e) => return Err(transport_error(e)),
        };
        Ok(concepts
            .iter()
            .zip(values)
            .map(|(c, value)| AnnotationRecord {
                observation_id: obs.id.clone(),
                concept_id: c.id().clone(),
                value,
                source: AnnotationSource::Llm,
                imputed,
                timestamp: None,
            })
            .collect())
    }
}

/// Usable candidates from a parsed reply: well formed, distinct and not
/// already among `others`, at most `m`.
fn usable_candidates(parsed: ParsedProposal, others: &[Concept], m: usize) -> Vec<(Concept, Option<f64>)> {
    let taken: HashSet<ConceptId> = others.iter().map(|c| c.id().clone()).collect();
    let mut seen = HashSet::new();
    parsed
        .candidates
        .into_iter()
        .map(|(q, w)| (Concept::new(q), w))
        .filter(|(c, _)| c.is_well_formed() && !taken.contains(c.id()) && seen.insert(c.id().clone()))
        .take(m)
        .collect()
}

/// Missing or zero weights are floored at [`WEIGHT_FLOOR`] of the reported
/// candidate mass, then everything including the incumbent is normalized.
/// With no usable weights at all, every entry gets the same weight.
fn normalize_weights(weights: &[Option<f64>], incumbent: Option<f64>) -> (Vec<f64>, f64, bool) {
    let mass: f64 = weights.iter().flatten().sum();
    if mass <= 0.0 || !mass.is_finite() {
        let u = 1.0 / (weights.len() + 1) as f64;
        return (vec![u; weights.len()], u, true);
    }
    let floor = WEIGHT_FLOOR * mass;
    let fill = |w: Option<f64>| w.filter(|v| *v > 0.0).unwrap_or(floor);
    let raw: Vec<f64> = weights.iter().map(|w| fill(*w)).collect();
    let inc = fill(incumbent);
    let total = raw.iter().sum::<f64>() + inc;
    (raw.iter().map(|w| w / total).collect(), inc / total, false)
}

impl ConceptOracle for LlmOracle {
    fn mode(&self) -> OracleMode {
        self.config.mode
    }

    fn extract_keyphrases(&self, observations: &[Observation]) -> Result<Vec<KeyphraseBag>, OracleError> {
        self.workers.install(|| observations.par_iter().map(|o| self.keyphrase_bag(o)).collect())
    }

    fn initialize_concepts(&self, summary: &KeyphraseSummary, k: usize) -> Result<ConceptSet, OracleError> {
        let prompt = render(
            &self.templates.initialize,
            &[("k", &k.to_string()), ("top_keyphrases", &summary_text(Some(summary))), ("task", &self.task())],
        );
        let req = self.request(prompt, self.config.proposal_temperature);
        let parse = |text: &str| {
            let mut seen = HashSet::new();
            let concepts: Vec<Concept> = parse_concepts(text)?
                .into_iter()
                .map(Concept::new)
                .filter(|c| c.is_well_formed() && seen.insert(c.id().clone()))
                .take(k)
                .collect();
            if concepts.len() < k {
                return Err(format!("{} usable questions, need {k}", concepts.len()));
            }
            Ok(concepts)
        };
        match self.retry.call(self.transport.as_ref(), &req, parse) {
            Ok(concepts) => ConceptSet::new(concepts).map_err(|e| OracleError::Initialization(e.to_string())),
            Err(CallFailure::Parse { attempts, message }) => {
                Err(OracleError::Initialization(format!("{message} after {attempts} attempts")))
            }
            Err(e) => Err(transport_error(e)),
        }
    }

    fn propose(&self, request: &ProposalRequest) -> Result<OracleProposal, OracleError> {
        let existing = numbered(request.others.iter().map(Concept::question));
        let prompt = render(
            &self.templates.propose,
            &[
                ("existing_concepts", &existing),
                ("top_keyphrases", &summary_text(request.summary.as_ref())),
                ("m", &request.m.to_string()),
                ("incumbent", request.incumbent.question()),
                ("task", &self.task()),
            ],
        );
        let req = self.request(prompt, self.config.proposal_temperature);
        let parse = |text: &str| {
            let parsed = parse_proposal(text)?;
            let incumbent = parsed.incumbent;
            let usable = usable_candidates(parsed, &request.others, request.m);
            if usable.is_empty() {
                return Err("no usable candidate questions".to_string());
            }
            Ok((usable, incumbent))
        };
        let (usable, incumbent) = self.retry.call(self.transport.as_ref(), &req, parse).map_err(|e| match e {
            CallFailure::Parse { attempts, message } => OracleError::Unparseable {
                what: "proposal",
                message: format!("{message} after {attempts} attempts"),
            },
            other => transport_error(other),
        })?;
        let reported: Vec<Option<f64>> = usable.iter().map(|(_, w)| *w).collect();
        let (q_weights, q_current, weights_imputed) = normalize_weights(&reported, incumbent);
        if weights_imputed {
            log::warn!("proposal for slot {} carried no weights; using uniform ones", request.slot);
        }
        let proposal = OracleProposal {
            candidates: usable.into_iter().map(|(c, _)| c).collect(),
            q_weights,
            q_current: Some(q_current),
            weights_imputed,
        };
        proposal.validate()?;
        Ok(proposal)
    }

    fn annotate(&self, observations: &[Observation], concepts: &[Concept]) -> Result<Vec<AnnotationRecord>, OracleError> {
        if concepts.is_empty() {
            return Ok(Vec::new());
        }
        let per_obs: Vec<Vec<AnnotationRecord>> = self
            .workers
            .install(|| observations.par_iter().map(|o| self.annotate_one(o, concepts)).collect::<Result<_, _>>())?;
        Ok(per_obs.into_iter().flatten().collect())
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "llm",
            "endpoint": self.config.endpoint,
            "model": self.config.model,
            "mode": self.config.mode,
            "annotation_temperature": self.config.annotation_temperature,
            "proposal_temperature": self.config.proposal_temperature,
            "max_tokens": self.config.max_tokens,
            "max_in_flight": self.config.max_in_flight,
            "retry_delays_secs": self.retry.delays.iter().map(Duration::as_secs_f64).collect::<Vec<_>>(),
            "labels_revealed": self.config.task_description.is_some(),
        })
    }
}
