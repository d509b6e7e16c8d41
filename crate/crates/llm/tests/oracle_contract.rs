use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ccbm_core::keyphrase::{KeyphraseSummary, SummaryEntry};
use ccbm_core::oracle::{Annotator, ConceptOracle, OracleError, ProposalRequest};
use ccbm_core::{Concept, Observation};
use ccbm_llm::{ChatRequest, ChatTransport, LlmConfig, LlmOracle, RetryPolicy, Templates, TransportError};

/// Replies from a queue, or from a function of the prompt when the queue is
/// empty, and records every request.
struct Mock {
    queue: Mutex<VecDeque<Result<String, TransportError>>>,
    fallback: Box<dyn Fn(&str) -> String + Send + Sync>,
    seen: Arc<Mutex<Vec<ChatRequest>>>,
    in_flight: AtomicUsize,
    peak: Arc<AtomicUsize>,
    delay: Duration,
}

impl Mock {
    fn new(fallback: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Mock {
            queue: Mutex::new(VecDeque::new()),
            fallback: Box::new(fallback),
            seen: Arc::new(Mutex::new(Vec::new())),
            in_flight: AtomicUsize::new(0),
            peak: Arc::new(AtomicUsize::new(0)),
            delay: Duration::ZERO,
        }
    }

    fn queued(self, replies: Vec<Result<String, TransportError>>) -> Self {
        *self.queue.lock().unwrap() = replies.into();
        self
    }
}

impl ChatTransport for Mock {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.delay);
        self.seen.lock().unwrap().push(request.clone());
        let reply = match self.queue.lock().unwrap().pop_front() {
            Some(r) => r,
            None => Ok((self.fallback)(&request.messages[0].content)),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        reply
    }
}

fn no_sleep() -> RetryPolicy {
    RetryPolicy { sleeper: Arc::new(|_| {}), ..Default::default() }
}

fn oracle_with(mock: Mock, config: LlmConfig) -> (LlmOracle, Arc<Mutex<Vec<ChatRequest>>>) {
    let seen = mock.seen.clone();
    let oracle = LlmOracle::new(config, Templates::default(), Box::new(mock)).unwrap().with_retry_policy(no_sleep());
    (oracle, seen)
}

fn summary() -> KeyphraseSummary {
    KeyphraseSummary::new(vec![
        SummaryEntry { phrase: "alcohol".into(), coefficient: 1.4, class: 1 },
        SummaryEntry { phrase: "smoking".into(), coefficient: -0.7, class: 1 },
    ])
}

fn request(m: usize) -> ProposalRequest {
    ProposalRequest {
        slot: 1,
        others: vec![Concept::new("Does the patient smoke?")],
        incumbent: Concept::new("Is the patient married?"),
        subset_ids: vec!["a".into(), "b".into()],
        subset_labels: vec![1, 0],
        summary: Some(summary()),
        m,
        seed: 3,
    }
}

#[test]
fn five_concepts_on_one_note_give_five_values() {
    let mock = Mock::new(|_| r#"{"answers": [0.9, 0.1, "yes", 0.0, 1.3]}"#.into());
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let concepts: Vec<Concept> = (0..5).map(|i| Concept::new(format!("Question {i}?"))).collect();
    let obs = vec![Observation::new("n1", "Patient drinks daily.", Some(1))];
    let mut annotator = Annotator::in_memory();
    let cols = annotator.annotate_columns(&oracle, &obs, &concepts).unwrap();
    assert_eq!(cols.len(), 5);
    assert!(cols.iter().all(|c| (0.0..=1.0).contains(&c.values[0])));
    assert_eq!(cols[4].values[0], 1.0);
    assert_eq!(annotator.stats().clamp_events, 1);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1, "one request per observation");
    assert_eq!(seen[0].temperature, 0.0);
    let prompt = &seen[0].messages[0].content;
    assert!(prompt.contains("Patient drinks daily.") && prompt.contains("5. Question 4?"));
}

#[test]
fn annotation_prompts_never_carry_labels() {
    let mock = Mock::new(|_| r#"{"answers": [0.5]}"#.into());
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let obs = vec![Observation::new("n1", "plain note", Some(1)), Observation::new("n2", "other note", Some(0))];
    oracle.annotate(&obs, &[Concept::new("Is it plain?")]).unwrap();
    for req in seen.lock().unwrap().iter() {
        let prompt = &req.messages[0].content;
        assert!(!prompt.contains("label") && !prompt.contains("Y"), "{prompt}");
    }
}

#[test]
fn unparseable_annotations_are_imputed_and_flagged() {
    let mock = Mock::new(|_| "I cannot answer that.".into());
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let obs = vec![Observation::new("n1", "text", None)];
    let recs = oracle.annotate(&obs, &[Concept::new("A?"), Concept::new("B?")]).unwrap();
    assert!(recs.iter().all(|r| r.imputed && r.value == 0.5));
    assert_eq!(seen.lock().unwrap().len(), 4, "first attempt plus three retries");
}

#[test]
fn transport_failure_after_retries_is_an_error() {
    let mock = Mock::new(|_| unreachable!()).queued((0..4).map(|_| Err(TransportError::Network("down".into()))).collect());
    let (oracle, _) = oracle_with(mock, LlmConfig::default());
    let err = oracle.annotate(&[Observation::new("n1", "t", None)], &[Concept::new("A?")]).unwrap_err();
    assert!(matches!(err, OracleError::Transport { attempts: 4, .. }));
}

#[test]
fn retries_wait_one_four_sixteen_seconds() {
    let slept = Arc::new(Mutex::new(Vec::new()));
    let sink = slept.clone();
    let policy = RetryPolicy { sleeper: Arc::new(move |d| sink.lock().unwrap().push(d)), ..Default::default() };
    let mock = Mock::new(|_| "garbage".into());
    let oracle = LlmOracle::new(LlmConfig::default(), Templates::default(), Box::new(mock)).unwrap().with_retry_policy(policy);
    assert!(oracle.propose(&request(3)).is_err());
    let secs: Vec<u64> = slept.lock().unwrap().iter().map(Duration::as_secs).collect();
    assert_eq!(secs, vec![1, 4, 16]);
}

#[test]
fn proposal_weights_are_renormalized_with_the_incumbent() {
    let reply = r#"{"candidates": [
        {"question": "Does the patient drink alcohol?", "probability": 0.6},
        {"question": "Does the patient smoke?", "probability": 0.2},
        {"question": "Is the patient unemployed?", "probability": 0.0},
        {"question": "Does the patient use drugs?", "probability": 0.2}
    ], "incumbent_probability": 0.2}"#;
    let mock = Mock::new(move |_| reply.into());
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let p = oracle.propose(&request(3)).unwrap();
    // the kept question is dropped, leaving three candidates
    let qs: Vec<&str> = p.candidates.iter().map(Concept::question).collect();
    assert_eq!(qs, vec!["Does the patient drink alcohol?", "Is the patient unemployed?", "Does the patient use drugs?"]);
    let floor = 1e-3 * 0.8;
    let total = 0.6 + floor + 0.2 + 0.2;
    assert!((p.q_weights[0] - 0.6 / total).abs() < 1e-12);
    assert!((p.q_weights[1] - floor / total).abs() < 1e-12);
    assert!((p.q_current.unwrap() - 0.2 / total).abs() < 1e-12);
    assert!(!p.weights_imputed);
    let sum: f64 = p.q_weights.iter().sum::<f64>() + p.q_current.unwrap();
    assert!((sum - 1.0).abs() < 1e-12);

    let req = &seen.lock().unwrap()[0];
    assert_eq!(req.temperature, 1.0);
    let prompt = &req.messages[0].content;
    assert!(prompt.contains("1. Does the patient smoke?"));
    assert!(prompt.contains("alcohol (+1.400)"));
    assert!(prompt.contains("Is the patient married?"));
    assert!(!prompt.contains("subset"));
}

#[test]
fn missing_weights_fall_back_to_uniform() {
    let mock = Mock::new(|_| r#"{"candidates": ["Is it red?", "Is it blue?"]}"#.into());
    let (oracle, _) = oracle_with(mock, LlmConfig::default());
    let p = oracle.propose(&request(5)).unwrap();
    assert!(p.weights_imputed);
    assert_eq!(p.q_weights, vec![1.0 / 3.0; 2]);
    assert_eq!(p.q_current, Some(1.0 / 3.0));
}

#[test]
fn unusable_proposals_become_skippable_errors() {
    let mock = Mock::new(|_| r#"{"candidates": [{"question": "Does the patient smoke?"}]}"#.into());
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let err = oracle.propose(&request(2)).unwrap_err();
    assert!(err.is_skippable(), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn initialization_retries_until_k_questions() {
    let mock = Mock::new(|_| r#"{"concepts": ["A?", "B?", "C?"]}"#.into())
        .queued(vec![Ok(r#"{"concepts": ["A?", "a?"]}"#.into())]);
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let set = oracle.initialize_concepts(&summary(), 3).unwrap();
    assert_eq!(set.len(), 3);
    assert_eq!(seen.lock().unwrap().len(), 2);
    let prompt = &seen.lock().unwrap()[0].messages[0].content;
    assert!(prompt.contains("Suggest 3 distinct"));

    let mock = Mock::new(|_| r#"{"concepts": ["A?"]}"#.into());
    let (oracle, _) = oracle_with(mock, LlmConfig::default());
    assert!(matches!(oracle.initialize_concepts(&summary(), 2), Err(OracleError::Initialization(_))));
}

#[test]
fn task_description_is_opt_in() {
    let reply = |_: &str| r#"{"candidates": [{"question": "Is it red?", "probability": 1}]}"#.to_string();
    let (masked, seen_masked) = oracle_with(Mock::new(reply), LlmConfig::default());
    masked.propose(&request(1)).unwrap();
    let config = LlmConfig { task_description: Some("readmission within 30 days".into()), ..Default::default() };
    let (revealed, seen_revealed) = oracle_with(Mock::new(reply), config);
    revealed.propose(&request(1)).unwrap();
    assert!(!seen_masked.lock().unwrap()[0].messages[0].content.contains("readmission"));
    assert!(seen_revealed.lock().unwrap()[0].messages[0].content.contains("readmission within 30 days"));
}

#[test]
fn keyphrases_merge_synonyms_and_skip_empty_text() {
    let mock = Mock::new(|_| {
        r#"{"keyphrases": [{"phrase": "Heavy Drinking!", "synonyms": ["alcohol use", "substance use disorder"]}]}"#
            .into()
    });
    let (oracle, seen) = oracle_with(mock, LlmConfig::default());
    let obs = vec![Observation::new("a", "Drinks a lot.", None), Observation::new("b", "   ", None)];
    let bags = oracle.extract_keyphrases(&obs).unwrap();
    let phrases: Vec<&str> = bags[0].phrases.iter().map(String::as_str).collect();
    assert_eq!(phrases, vec!["alcohol use", "heavy drinking", "substance use"]);
    assert!(bags[1].phrases.is_empty());
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn warm_cache_issues_no_requests() {
    let mock = Mock::new(|_| r#"{"answers": [0.25, 0.75]}"#.into());
    let calls = mock.seen.clone();
    let oracle = LlmOracle::new(LlmConfig::default(), Templates::default(), Box::new(mock)).unwrap();
    let obs: Vec<Observation> = (0..6).map(|i| Observation::new(format!("o{i}"), "text", None)).collect();
    let concepts = [Concept::new("A?"), Concept::new("B?")];
    let mut annotator = Annotator::in_memory();
    annotator.annotate_columns(&oracle, &obs, &concepts).unwrap();
    assert_eq!(calls.lock().unwrap().len(), 6);
    let cols = annotator.annotate_columns(&oracle, &obs, &concepts).unwrap();
    assert_eq!(calls.lock().unwrap().len(), 6);
    assert!(cols[1].values.iter().all(|v| *v == 0.75));
}

#[test]
fn in_flight_requests_respect_the_cap() {
    let mut mock = Mock::new(|_| r#"{"answers": [1]}"#.into());
    mock.delay = Duration::from_millis(20);
    let peak = mock.peak.clone();
    let config = LlmConfig { max_in_flight: 3, ..Default::default() };
    let oracle = LlmOracle::new(config, Templates::default(), Box::new(mock)).unwrap();
    let obs: Vec<Observation> = (0..24).map(|i| Observation::new(format!("o{i}"), "text", None)).collect();
    let recs = oracle.annotate(&obs, &[Concept::new("A?")]).unwrap();
    assert_eq!(recs.len(), 24);
    let ids: Vec<&str> = recs.iter().map(|r| r.observation_id.as_str()).collect();
    let expected: Vec<String> = (0..24).map(|i| format!("o{i}")).collect();
    assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    let peak = peak.load(Ordering::SeqCst);
    assert!((2..=3).contains(&peak), "peak {peak}");
}
