//! Single- and multi-pass screening inference.
//!
//! Each pass sends every item's rendered prompt to a [`Transport`] at one temperature,
//! parses the reply with [`parse_decision_with`] and emits one [`PredictionRecord`] per
//! item. [`run_multi_pass`] runs one pass per configured temperature and appends every
//! record to a [`RunLedger`] file as it is produced, so an interrupted run can resume
//! without re-querying finished `(item, temperature)` pairs.

mod ledger;
mod parse;
mod transport;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use ledger::{LedgerEntry, LedgerError, LedgerHeader, LedgerWriter, RunLedger};
pub use parse::{parse_decision, parse_decision_with, DecisionKeywords, ParseRoute};
pub use transport::{
    extract_completion_text, fingerprint, read_transport_records, write_transport_records, ChatRequest, Completion,
    HttpTransport, RecordingTransport, ReplayTransport, Transport, TransportError, TransportRecord, API_KEY_ENV,
};

use crate::digest::sha256_hex;
use crate::label::ScreeningLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// One pass per temperature, in this order.
    pub temperatures: Vec<f64>,
    pub max_new_tokens: u32,
    /// Send temperature 0 on every pass. Records keep the nominal pass temperature.
    pub force_greedy: bool,
    pub majority_class: ScreeningLabel,
    pub keywords: DecisionKeywords,
    pub request_timeout_secs: f64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Backoff before retry `k` is `retry_backoff_ms * 2^(k-1)`.
    pub retry_backoff_ms: u64,
    pub concurrency_limit: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            temperatures: vec![0.1, 0.4, 0.8],
            max_new_tokens: 8,
            force_greedy: false,
            majority_class: ScreeningLabel::Exclude,
            keywords: DecisionKeywords::default(),
            request_timeout_secs: 60.0,
            max_retries: 2,
            retry_backoff_ms: 500,
            concurrency_limit: 4,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::Config(m.to_string()));
        if self.temperatures.is_empty() {
            return bad("temperatures must be nonempty");
        }
        if self.temperatures.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("temperatures must be finite and >= 0");
        }
        let distinct: HashSet<u64> = self.temperatures.iter().map(|t| t.to_bits()).collect();
        if distinct.len() != self.temperatures.len() {
            return bad("temperatures must be distinct");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be >= 1");
        }
        if self.concurrency_limit == 0 {
            return bad("concurrency_limit must be >= 1");
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return bad("request_timeout_secs must be > 0");
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    fn sent_temperature(&self, temperature: f64) -> f64 {
        if self.force_greedy {
            0.0
        } else {
            temperature
        }
    }
}

/// One item to screen: a study id and its fully rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScreeningItem {
    pub study_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub study_id: String,
    pub temperature: f64,
    pub raw_text: String,
    pub decision: ScreeningLabel,
    pub parse_route: ParseRoute,
    pub latency_secs: f64,
    pub attempt_count: u32,
    /// Set when every attempt failed and the decision is the majority-class fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("invalid inference config: {0}")]
    Config(String),
    #[error("study {study_id} at T={temperature}: {source}")]
    Transport {
        study_id: String,
        temperature: f64,
        source: TransportError,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("ledger {0} already exists; pass resume to continue it")]
    LedgerExists(String),
    #[error("ledger belongs to run {found}, expected {expected} (items or config differ)")]
    RunMismatch { expected: String, found: String },
    #[error("duplicate study id {0:?} in inference items")]
    DuplicateItem(String),
}

fn query_item(
    item: &ScreeningItem,
    temperature: f64,
    config: &InferenceConfig,
    transport: &dyn Transport,
) -> Result<PredictionRecord, TransportError> {
    let request = ChatRequest {
        prompt: item.prompt.clone(),
        temperature: config.sent_temperature(temperature),
        max_new_tokens: config.max_new_tokens,
    };
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match transport.complete(&request) {
            Ok(c) => {
                let (decision, parse_route) = parse_decision_with(&c.text, config.majority_class, &config.keywords);
                return Ok(PredictionRecord {
                    study_id: item.study_id.clone(),
                    temperature,
                    raw_text: c.text,
                    decision,
                    parse_route,
                    latency_secs: c.latency_secs,
                    attempt_count: attempt,
                    error: None,
                });
            }
            Err(e) if e.is_retryable() && attempt <= config.max_retries => {
                let backoff = config.retry_backoff_ms.saturating_mul(1u64 << (attempt - 1).min(16));
                log::debug!(
                    "{} attempt {attempt} failed ({e}); retrying in {backoff} ms",
                    item.study_id
                );
                if backoff > 0 {
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
            Err(e) if e.aborts_run() => return Err(e),
            Err(e) => {
                log::warn!(
                    "{} at T={temperature}: {e}; recording majority-class fallback",
                    item.study_id
                );
                return Ok(PredictionRecord {
                    study_id: item.study_id.clone(),
                    temperature,
                    raw_text: String::new(),
                    decision: config.majority_class,
                    parse_route: ParseRoute::Fallback,
                    latency_secs: 0.0,
                    attempt_count: attempt,
                    error: Some(e.to_string()),
                });
            }
        }
    }
}

/// Runs one pass over `items` (skipping ids in `skip`) with at most
/// `config.concurrency_limit` requests in flight. Records reach `sink` in item order;
/// if the run aborts, records completed past the failing item are still delivered.
fn drive_pass<F>(
    items: &[ScreeningItem],
    temperature: f64,
    config: &InferenceConfig,
    transport: &dyn Transport,
    skip: &HashSet<String>,
    mut sink: F,
) -> Result<(), InferenceError>
where
    F: FnMut(PredictionRecord) -> Result<(), InferenceError>,
{
    let pending: Vec<&ScreeningItem> = items.iter().filter(|i| !skip.contains(&i.study_id)).collect();
    if pending.is_empty() {
        return Ok(());
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = config.concurrency_limit.min(pending.len());
    let (tx, rx) = mpsc::channel::<(usize, Result<PredictionRecord, TransportError>)>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, stop, pending) = (&next, &stop, &pending);
            scope.spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = pending.get(k) else { break };
                let result = query_item(item, temperature, config, transport);
                if result.is_err() {
                    stop.store(true, Ordering::SeqCst);
                }
                if tx.send((k, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer = BTreeMap::new();
        let mut next_emit = 0usize;
        let mut failure: Option<(usize, InferenceError)> = None;
        for (k, result) in rx.iter() {
            match result {
                Ok(rec) => {
                    buffer.insert(k, rec);
                }
                Err(source) => {
                    if failure.as_ref().is_none_or(|(fk, _)| k < *fk) {
                        failure = Some((
                            k,
                            InferenceError::Transport {
                                study_id: pending[k].study_id.clone(),
                                temperature,
                                source,
                            },
                        ));
                    }
                }
            }
            while let Some(rec) = buffer.remove(&next_emit) {
                if let Err(e) = sink(rec) {
                    stop.store(true, Ordering::SeqCst);
                    return Err(e);
                }
                next_emit += 1;
            }
        }
        for (_, rec) in buffer {
            sink(rec)?;
        }
        match failure {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    })
}

/// One pass at `temperature`, collected in item order.
pub fn run_pass(
    items: &[ScreeningItem],
    temperature: f64,
    config: &InferenceConfig,
    transport: &dyn Transport,
) -> Result<Vec<PredictionRecord>, InferenceError> {
    config.validate()?;
    let mut out = Vec::with_capacity(items.len());
    drive_pass(items, temperature, config, transport, &HashSet::new(), |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Content hash of everything that determines the run's decisions: items, prompts
/// and the decision-relevant configuration. Transport settings are excluded so a run
/// can be resumed with different timeouts or concurrency.
pub fn run_id(items: &[ScreeningItem], config: &InferenceConfig) -> String {
    let identity = serde_json::json!({
        "temperatures": config.temperatures,
        "max_new_tokens": config.max_new_tokens,
        "force_greedy": config.force_greedy,
        "majority_class": config.majority_class,
        "keywords": config.keywords,
        "items": items.iter().map(|i| [i.study_id.clone(), sha256_hex(&i.prompt)]).collect::<Vec<_>>(),
    });
    sha256_hex(identity.to_string())[..16].to_string()
}

/// Runs every configured pass, appending to the ledger at `ledger_path`.
///
/// With `resume`, an existing ledger for the same run is continued: pairs already
/// recorded are not re-queried. Without it, an existing nonempty ledger is an error.
pub fn run_multi_pass(
    items: &[ScreeningItem],
    config: &InferenceConfig,
    transport: &dyn Transport,
    ledger_path: &Path,
    resume: bool,
) -> Result<RunLedger, InferenceError> {
    config.validate()?;
    let mut ids = HashSet::with_capacity(items.len());
    for item in items {
        if !ids.insert(item.study_id.as_str()) {
            return Err(InferenceError::DuplicateItem(item.study_id.clone()));
        }
    }

    let expected_id = run_id(items, config);
    let header = LedgerHeader {
        run_id: expected_id.clone(),
        endpoint: transport.identity(),
        config: config.clone(),
        item_ids: items.iter().map(|i| i.study_id.clone()).collect(),
    };

    let existing = if ledger_path.exists() {
        Some(ledger::load_tolerant(ledger_path)?)
    } else {
        None
    };
    let (mut ledger, mut writer) = match existing {
        Some(loaded) if loaded.ledger.is_some() => {
            if !resume {
                return Err(InferenceError::LedgerExists(ledger_path.display().to_string()));
            }
            let found = loaded
                .ledger
                .as_ref()
                .map(|l| l.header.run_id.clone())
                .unwrap_or_default();
            if found != expected_id {
                return Err(InferenceError::RunMismatch {
                    expected: expected_id,
                    found,
                });
            }
            let writer = LedgerWriter::reopen(ledger_path, &loaded)?;
            (loaded.ledger.expect("checked above"), writer)
        }
        _ => {
            let mut writer = LedgerWriter::create(ledger_path)?;
            writer.append(&LedgerEntry::Header(header.clone()))?;
            let ledger = RunLedger {
                header,
                records: Vec::new(),
                complete: false,
            };
            (ledger, writer)
        }
    };
    if ledger.complete {
        return Ok(ledger);
    }

    for &temperature in &config.temperatures {
        let done: HashSet<String> = ledger
            .records
            .iter()
            .filter(|r| r.temperature.to_bits() == temperature.to_bits())
            .map(|r| r.study_id.clone())
            .collect();
        let records = &mut ledger.records;
        let writer = &mut writer;
        drive_pass(items, temperature, config, transport, &done, |rec| {
            writer.append(&LedgerEntry::Prediction(rec.clone()))?;
            records.push(rec);
            Ok(())
        })?;
    }
    writer.append(&LedgerEntry::Complete {
        records: ledger.records.len(),
    })?;
    ledger.complete = true;
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Scripted {
        replies: Vec<Result<&'static str, TransportError>>,
        calls: Mutex<usize>,
    }

    impl Transport for Scripted {
        fn complete(&self, _request: &ChatRequest) -> Result<Completion, TransportError> {
            let mut calls = self.calls.lock().unwrap();
            let reply = self.replies[*calls % self.replies.len()].clone();
            *calls += 1;
            reply.map(|t| Completion {
                text: t.to_string(),
                latency_secs: 0.0,
            })
        }

        fn identity(&self) -> String {
            "scripted".into()
        }
    }

    fn items(n: usize) -> Vec<ScreeningItem> {
        (0..n)
            .map(|i| ScreeningItem {
                study_id: format!("s{i}"),
                prompt: format!("prompt {i}"),
            })
            .collect()
    }

    fn quick() -> InferenceConfig {
        InferenceConfig {
            retry_backoff_ms: 0,
            concurrency_limit: 1,
            ..InferenceConfig::default()
        }
    }

    #[test]
    fn replay_three_items() {
        let its = items(3);
        let recs: Vec<_> = its
            .iter()
            .zip(["1", "0", "maybe"])
            .map(|(i, r)| {
                let req = ChatRequest {
                    prompt: i.prompt.clone(),
                    temperature: 0.1,
                    max_new_tokens: 8,
                };
                TransportRecord::new(&req, r, 0.0)
            })
            .collect();
        let t = ReplayTransport::from_records(recs);
        let out = run_pass(&its, 0.1, &quick(), &t).unwrap();
        let got: Vec<_> = out.iter().map(|r| (r.decision, r.parse_route)).collect();
        assert_eq!(
            got,
            vec![
                (ScreeningLabel::Include, ParseRoute::Digit),
                (ScreeningLabel::Exclude, ParseRoute::Digit),
                (ScreeningLabel::Exclude, ParseRoute::Fallback),
            ]
        );
    }

    #[test]
    fn empty_pass() {
        let t = ReplayTransport::default();
        assert!(run_pass(&[], 0.4, &quick(), &t).unwrap().is_empty());
    }

    #[test]
    fn retries_then_succeeds() {
        let t = Scripted {
            replies: vec![Err(TransportError::Request("503".into())), Ok("1")],
            calls: Mutex::new(0),
        };
        let out = run_pass(&items(1), 0.1, &quick(), &t).unwrap();
        assert_eq!(out[0].attempt_count, 2);
        assert_eq!(out[0].decision, ScreeningLabel::Include);
        assert!(out[0].error.is_none());
    }

    #[test]
    fn exhausted_request_errors_become_fallback() {
        let t = Scripted {
            replies: vec![Err(TransportError::Request("bad".into()))],
            calls: Mutex::new(0),
        };
        let out = run_pass(&items(2), 0.1, &quick(), &t).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .all(|r| r.parse_route == ParseRoute::Fallback && r.attempt_count == 3));
        assert!(out[0].error.as_deref().unwrap().contains("bad"));
        assert_eq!(*t.calls.lock().unwrap(), 6);
    }

    #[test]
    fn unreachable_aborts() {
        let t = Scripted {
            replies: vec![Err(TransportError::Unreachable("refused".into()))],
            calls: Mutex::new(0),
        };
        let err = run_pass(&items(2), 0.1, &quick(), &t).unwrap_err();
        assert!(matches!(
            err,
            InferenceError::Transport {
                source: TransportError::Unreachable(_),
                ..
            }
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = InferenceConfig::default();
        assert!(c.validate().is_ok());
        c.temperatures.clear();
        assert!(c.validate().is_err());
        let c = InferenceConfig {
            max_new_tokens: 0,
            ..InferenceConfig::default()
        };
        assert!(c.validate().is_err());
        let c = InferenceConfig {
            temperatures: vec![0.1, 0.1],
            ..InferenceConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn greedy_sends_zero_temperature() {
        struct Capture(Mutex<Vec<f64>>);
        impl Transport for Capture {
            fn complete(&self, r: &ChatRequest) -> Result<Completion, TransportError> {
                self.0.lock().unwrap().push(r.temperature);
                Ok(Completion {
                    text: "0".into(),
                    latency_secs: 0.0,
                })
            }
            fn identity(&self) -> String {
                "capture".into()
            }
        }
        let t = Capture(Mutex::new(Vec::new()));
        let cfg = InferenceConfig {
            force_greedy: true,
            ..quick()
        };
        let out = run_pass(&items(2), 0.8, &cfg, &t).unwrap();
        assert_eq!(*t.0.lock().unwrap(), vec![0.0, 0.0]);
        assert!(out.iter().all(|r| r.temperature == 0.8));
    }

    #[test]
    fn multi_pass_record_count_and_existing_ledger() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let t = Scripted {
            replies: vec![Ok("1"), Ok("0")],
            calls: Mutex::new(0),
        };
        let ledger = run_multi_pass(&items(10), &quick(), &t, &path, false).unwrap();
        assert_eq!(ledger.records.len(), 30);
        ledger.check_complete().unwrap();
        assert_eq!(RunLedger::load(&path).unwrap(), ledger);
        assert!(matches!(
            run_multi_pass(&items(10), &quick(), &t, &path, false),
            Err(InferenceError::LedgerExists(_))
        ));
        assert!(matches!(
            run_multi_pass(&items(9), &quick(), &t, &path, true),
            Err(InferenceError::RunMismatch { .. })
        ));
        let calls = *t.calls.lock().unwrap();
        run_multi_pass(&items(10), &quick(), &t, &path, true).unwrap();
        assert_eq!(*t.calls.lock().unwrap(), calls);
    }
}
