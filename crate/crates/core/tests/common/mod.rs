//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use screen_core::agreement::RatingMatrix;
use screen_core::corpus::{Corpus, StudyRecord};
use screen_core::inference::{
    fingerprint, write_transport_records, InferenceConfig, LedgerHeader, ParseRoute, PredictionRecord, RunLedger,
    TransportRecord,
};
use screen_core::metrics::ConfusionMatrix;
use screen_core::promptkit::PromptTemplate;
use screen_core::ScreeningLabel::{self, Exclude, Include};

/// Fine-tuned model on the full dataset (supports 8243 / 34).
pub fn fd() -> ConfusionMatrix {
    ConfusionMatrix::new(31, 7120, 1123, 3)
}

/// Fine-tuned model on the held-out split (supports 39 / 17).
pub fn ho() -> ConfusionMatrix {
    ConfusionMatrix::new(16, 37, 2, 1)
}

/// Base model on the full dataset (supports 8243 / 34).
pub fn base() -> ConfusionMatrix {
    ConfusionMatrix::new(34, 506, 7737, 0)
}

/// `(human, predicted)` columns realising `cm`.
pub fn columns(cm: &ConfusionMatrix) -> (Vec<ScreeningLabel>, Vec<ScreeningLabel>) {
    cm.to_pairs().into_iter().unzip()
}

pub fn record(i: usize, label: ScreeningLabel) -> StudyRecord {
    StudyRecord::new(
        format!("S{i:05}"),
        format!("Study {i} on intervention outcomes"),
        if i % 7 == 3 {
            String::new()
        } else {
            format!("Abstract of study {i}, reporting a \"trial\", with commas.")
        },
        label,
    )
}

/// Corpus whose labels follow `labels`, ids `S00000..`.
pub fn corpus_from_labels(labels: &[ScreeningLabel]) -> Corpus {
    Corpus::new(labels.iter().enumerate().map(|(i, &l)| record(i, l)).collect()).unwrap()
}

/// `includes` Include records spread evenly among `total`.
pub fn spread_corpus(total: usize, includes: usize) -> Corpus {
    let labels: Vec<ScreeningLabel> = (0..total)
        .map(|i| {
            if (i * includes) / total != ((i + 1) * includes) / total {
                Include
            } else {
                Exclude
            }
        })
        .collect();
    corpus_from_labels(&labels)
}

/// Completed ledger over `corpus` whose every pass at `temperatures` predicts `predicted`.
pub fn ledger_with_passes(corpus: &Corpus, passes: &[(f64, Vec<ScreeningLabel>)]) -> RunLedger {
    let config = InferenceConfig {
        temperatures: passes.iter().map(|(t, _)| *t).collect(),
        ..InferenceConfig::default()
    };
    let ids: Vec<String> = corpus.records().iter().map(|r| r.id.clone()).collect();
    let mut records = Vec::new();
    for (t, predicted) in passes {
        for (id, &d) in ids.iter().zip(predicted) {
            records.push(PredictionRecord {
                study_id: id.clone(),
                temperature: *t,
                raw_text: d.to_string(),
                decision: d,
                parse_route: ParseRoute::Digit,
                latency_secs: 0.0,
                attempt_count: 1,
                error: None,
            });
        }
    }
    RunLedger {
        header: LedgerHeader {
            run_id: "fixture".into(),
            endpoint: "fixture".into(),
            config,
            item_ids: ids,
        },
        records,
        complete: true,
    }
}

/// Corpus and ledger realising `cm`, with identical passes at `temperatures`.
pub fn fixture_run(cm: &ConfusionMatrix, temperatures: &[f64]) -> (Corpus, RunLedger) {
    let (human, predicted) = columns(cm);
    let corpus = corpus_from_labels(&human);
    let passes: Vec<(f64, Vec<ScreeningLabel>)> = temperatures.iter().map(|&t| (t, predicted.clone())).collect();
    let ledger = ledger_with_passes(&corpus, &passes);
    (corpus, ledger)
}

/// Writes a replay file answering every `(record, temperature)` with `reply(record, t)`.
pub fn write_replay<F>(path: &Path, records: &[&StudyRecord], template: &PromptTemplate, temperatures: &[f64], reply: F)
where
    F: Fn(&StudyRecord, f64) -> String,
{
    let mut out = Vec::new();
    for &t in temperatures {
        for r in records {
            let prompt = template.render(r).unwrap().text;
            out.push(TransportRecord {
                fingerprint: fingerprint(&prompt, t),
                prompt_sha256: screen_core::digest::sha256_hex(&prompt),
                temperature: t,
                response: reply(r, t),
                latency_secs: 0.25,
            });
        }
    }
    write_transport_records(path, &out).unwrap();
}

/// Fleiss' κ straight from the textbook definition, using f64 throughout.
pub fn fleiss_oracle(m: &RatingMatrix) -> f64 {
    let (n, r) = (m.n() as f64, m.r() as f64);
    let mut p_i_sum = 0.0;
    let mut cat = [0.0f64; 2];
    for row in m.rows() {
        let mut counts = [0.0f64; 2];
        for l in row {
            counts[l.as_digit() as usize] += 1.0;
        }
        let agree: f64 = counts.iter().map(|c| c * (c - 1.0)).sum();
        p_i_sum += agree / (r * (r - 1.0));
        cat[0] += counts[0];
        cat[1] += counts[1];
    }
    let p_bar = p_i_sum / n;
    let p_e: f64 = cat.iter().map(|c| (c / (n * r)).powi(2)).sum();
    (p_bar - p_e) / (1.0 - p_e)
}

/// Gwet's AC1 for binary ratings from its definition.
pub fn ac1_oracle(m: &RatingMatrix) -> f64 {
    let (n, r) = (m.n() as f64, m.r() as f64);
    let mut p_o = 0.0;
    let mut pi = 0.0;
    for row in m.rows() {
        let inc = row.iter().filter(|l| **l == Include).count() as f64;
        let exc = r - inc;
        p_o += (inc * (inc - 1.0) + exc * (exc - 1.0)) / (r * (r - 1.0));
        pi += inc / r;
    }
    p_o /= n;
    pi /= n;
    let p_e = 2.0 * pi * (1.0 - pi);
    (p_o - p_e) / (1.0 - p_e)
}

/// Mean agreement over every unordered rater pair on every item.
pub fn pairwise_enumeration(m: &RatingMatrix) -> f64 {
    let mut agree = 0usize;
    let mut pairs = 0usize;
    for row in m.rows() {
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                pairs += 1;
                if row[a] == row[b] {
                    agree += 1;
                }
            }
        }
    }
    agree as f64 / pairs as f64
}

/// Cohen's κ recomputed by counting the 2×2 table.
pub fn kappa_oracle(a: &[ScreeningLabel], b: &[ScreeningLabel]) -> f64 {
    let n = a.len() as f64;
    let mut t = [[0.0f64; 2]; 2];
    for (x, y) in a.iter().zip(b) {
        t[x.as_digit() as usize][y.as_digit() as usize] += 1.0;
    }
    let p_o = (t[0][0] + t[1][1]) / n;
    let a1 = (t[1][0] + t[1][1]) / n;
    let b1 = (t[0][1] + t[1][1]) / n;
    let p_e = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    (p_o - p_e) / (1.0 - p_e)
}

/// |value% - expected| within a rendering tolerance (percentage points).
pub fn close_pp(fraction: Option<f64>, expected: f64, tol: f64) -> bool {
    fraction.is_some_and(|f| (100.0 * f - expected).abs() <= tol + 1e-9)
}
