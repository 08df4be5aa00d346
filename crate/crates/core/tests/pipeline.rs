mod common;

use std::path::Path;

use screen_core::commands::{
    cmd_agree, cmd_evaluate, cmd_report, cmd_split, write_disagreements, AgreeSource, CommandError, DISAGREEMENTS_FILE,
    EVALUATION_FILE,
};
use screen_core::config::ReportFormat;
use screen_core::corpus::{CorpusFormat, PartitionResult, SplitSpec};
use screen_core::report::{EvaluationError, Report};

fn write_fixture(
    dir: &Path,
    cm: &screen_core::metrics::ConfusionMatrix,
    temps: &[f64],
) -> (std::path::PathBuf, std::path::PathBuf) {
    let (corpus, ledger) = common::fixture_run(cm, temps);
    let corpus_path = dir.join("corpus.csv");
    corpus.write_file(&corpus_path, CorpusFormat::Delimited).unwrap();
    let ledger_path = dir.join("ledger.jsonl");
    ledger.write(&ledger_path).unwrap();
    (corpus_path, ledger_path)
}

#[test]
fn fd_ledger_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ledger) = write_fixture(dir.path(), &common::fd(), &[0.1]);
    let out = dir.path().join("eval");
    let outcome = cmd_evaluate(&ledger, &corpus, None, None, ReportFormat::Json, &out).unwrap();
    assert!(outcome.summary.contains("1126 disagreement"), "{}", outcome.summary);

    let report: Report = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let r = &report.overall[0];
    assert_eq!(
        [
            &r.accuracy,
            &r.balanced_accuracy,
            &r.macro_f1,
            &r.macro_f2,
            &r.weighted_f1,
            &r.weighted_f2
        ],
        ["86.40", "88.78", "48.95", "50.40", "92.31", "88.47"]
    );
    let a = &report.agreement[0];
    assert_eq!([&a.cohen_kappa, &a.pabak, &a.gwet_ac1], ["0.045", "0.728", "0.843"]);

    let mut rdr = csv::Reader::from_path(out.join(DISAGREEMENTS_FILE)).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "id",
            "title",
            "human",
            "decision_T=0.1",
            "route_T=0.1",
            "raw_text_T=0.1"
        ]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1126);
    let false_negatives = rows.iter().filter(|r| &r[2] == "1").count();
    assert_eq!(false_negatives, 3);
}

#[test]
fn report_is_idempotent_and_rebuilt_from_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ledger) = write_fixture(dir.path(), &common::ho(), &[0.1, 0.4, 0.8]);
    let out = dir.path().join("eval");
    cmd_evaluate(&ledger, &corpus, None, None, ReportFormat::Text, &out).unwrap();
    let first = std::fs::read(out.join("report.txt")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.contains("T=0.1 vs T=0.4"));
    assert!(text.matches("1.000").count() >= 3, "{text}");

    std::fs::remove_file(out.join("report.txt")).unwrap();
    let rebuilt = dir.path().join("rebuilt.txt");
    cmd_report(&out.join(EVALUATION_FILE), ReportFormat::Text, &rebuilt).unwrap();
    assert_eq!(std::fs::read(&rebuilt).unwrap(), first);

    let again = dir.path().join("eval2");
    cmd_evaluate(&ledger, &corpus, None, None, ReportFormat::Text, &again).unwrap();
    for f in [EVALUATION_FILE, "report.txt", DISAGREEMENTS_FILE] {
        let a = if f == "report.txt" {
            first.clone()
        } else {
            std::fs::read(out.join(f)).unwrap()
        };
        assert_eq!(a, std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn consistency_rows_for_identical_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ledger) = write_fixture(dir.path(), &common::ho(), &[0.1, 0.4, 0.8]);
    let out = dir.path().join("eval");
    cmd_evaluate(&ledger, &corpus, None, None, ReportFormat::Json, &out).unwrap();
    let report: Report = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.consistency.len(), 3);
    assert!(report.consistency.iter().all(|c| c.kappa == "1.000"));
    assert_eq!(report.multi_rater.len(), 2);
}

#[test]
fn id_mismatch_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ledger) = write_fixture(dir.path(), &common::ho(), &[0.1]);
    let other = dir.path().join("other.csv");
    std::fs::write(&other, "id,title,abstract,label\nZ1,Unrelated,,0\n").unwrap();
    let err = cmd_evaluate(&ledger, &other, None, None, ReportFormat::Text, &dir.path().join("o")).unwrap_err();
    assert!(
        matches!(err, CommandError::Evaluation(EvaluationError::EmptyIntersection)),
        "{err}"
    );

    let partial = dir.path().join("partial.csv");
    std::fs::write(&partial, "id,title,abstract,label\nS00000,Kept,,1\n").unwrap();
    let err = cmd_evaluate(&ledger, &partial, None, None, ReportFormat::Text, &dir.path().join("o")).unwrap_err();
    assert!(
        matches!(err, CommandError::Evaluation(EvaluationError::UnknownStudy(_))),
        "{err}"
    );
}

#[test]
fn incomplete_ledger_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ledger) = common::fixture_run(&common::ho(), &[0.1]);
    let mut ledger = ledger;
    ledger.complete = false;
    let err = write_disagreements(&ledger, &corpus, &dir.path().join("d.csv")).unwrap_err();
    assert!(err.to_string().contains("incomplete"), "{err}");
}

#[test]
fn split_command_enriched_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    common::spread_corpus(371, 138)
        .write_file(&corpus, CorpusFormat::RecordLines)
        .unwrap();
    let manifest = dir.path().join("split.json");
    let spec = SplitSpec::enriched(315, 20240601, 121.0 / 315.0);
    let outcome = cmd_split(&corpus, None, &spec, &manifest).unwrap();
    assert!(outcome.log_line().contains("train 315 (194 exclude / 121 include)"));
    let p = PartitionResult::read_manifest(&manifest).unwrap();
    assert_eq!((p.test.total, p.test.exclude, p.test.include), (56, 39, 17));
}

#[test]
fn agree_from_ledger_and_ratings() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ledger) = write_fixture(dir.path(), &common::fd(), &[0.1]);
    let out = dir.path().join("agreement.json");
    let source = AgreeSource::Ledger {
        ledger,
        corpus,
        format: None,
    };
    cmd_agree(&source, None, ReportFormat::Json, &out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let estimates: Vec<&str> = v["pairwise"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["Estimate"].as_str().unwrap())
        .collect();
    assert_eq!(estimates, ["0.045", "0.728", "0.843"]);
    // Two raters: the multi-rater AC1 row equals the pairwise one.
    assert_eq!(v["multi_rater"][1]["Estimate"], v["pairwise"][2]["Estimate"]);
    assert_eq!(v["multi_rater"][1]["p_o"], v["pairwise"][2]["p_o"]);

    let ratings = dir.path().join("ratings.csv");
    std::fs::write(&ratings, "item_id,only\na,1\nb,0\n").unwrap();
    let err = cmd_agree(&AgreeSource::Ratings(ratings), None, ReportFormat::Text, &out).unwrap_err();
    assert!(err.to_string().contains("at least two raters"), "{err}");
}
