//! Pipeline stages as file-to-file commands.
//!
//! Each `cmd_*` reads its input artifacts, writes its outputs and returns an [`Outcome`]
//! listing both with their SHA-256 digests. The binary prints [`Outcome::log_line`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::agreement::{AgreementError, BootstrapSpec, RatingMatrix};
use crate::config::ReportFormat;
use crate::corpus::{
    ingest_corpus, partition, Corpus, CorpusError, CorpusFormat, PartitionError, PartitionResult, SplitSpec,
};
use crate::digest::file_sha256;
use crate::inference::{
    run_multi_pass, HttpTransport, InferenceConfig, InferenceError, RecordingTransport, ReplayTransport, RunLedger,
    ScreeningItem, Transport,
};
use crate::label::ScreeningLabel;
use crate::promptkit::{emit_training_manifest, export_sft_dataset, ChatMarkers, PromptError, PromptTemplate};
use crate::report::{
    agreement_report, evaluate_ledger, ledger_columns, AgreementTables, Evaluation, EvaluationError, Report,
};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CommandError + '_ {
    move |source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

impl Artifact {
    fn hash(path: &Path) -> Result<Self, CommandError> {
        Ok(Self {
            path: path.to_path_buf(),
            sha256: file_sha256(path).map_err(io_err(path))?,
        })
    }
}

impl fmt::Display for Artifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.path.display(), &self.sha256[..12])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub command: &'static str,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub summary: String,
}

impl Outcome {
    fn new(command: &'static str, inputs: &[&Path], outputs: &[&Path], summary: String) -> Result<Self, CommandError> {
        Ok(Self {
            command,
            inputs: inputs.iter().map(|p| Artifact::hash(p)).collect::<Result<_, _>>()?,
            outputs: outputs.iter().map(|p| Artifact::hash(p)).collect::<Result<_, _>>()?,
            summary,
        })
    }

    pub fn log_line(&self) -> String {
        let list = |a: &[Artifact]| a.iter().map(Artifact::to_string).collect::<Vec<_>>().join(",");
        format!(
            "{}: {} | in [{}] out [{}]",
            self.command,
            self.summary,
            list(&self.inputs),
            list(&self.outputs)
        )
    }
}

fn require(path: &Path) -> Result<(), CommandError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CommandError::MissingArtifact(path.to_path_buf()))
    }
}

fn ensure_parent(path: &Path) -> Result<(), CommandError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CommandError> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(io_err(path))
}

fn load_corpus(path: &Path, format: Option<CorpusFormat>) -> Result<Corpus, CommandError> {
    require(path)?;
    Ok(ingest_corpus(
        path,
        format.unwrap_or_else(|| CorpusFormat::from_path(path)),
    )?)
}

fn read_text(path: &Path) -> Result<String, CommandError> {
    require(path)?;
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn load_manifest(path: &Path) -> Result<PartitionResult, CommandError> {
    require(path)?;
    PartitionResult::read_manifest(path).map_err(io_err(path))
}

/// Validates a corpus and writes a normalized copy (format taken from `out`'s extension).
pub fn cmd_ingest(corpus: &Path, format: Option<CorpusFormat>, out: &Path) -> Result<Outcome, CommandError> {
    let c = load_corpus(corpus, format)?;
    ensure_parent(out)?;
    c.write_file(out, CorpusFormat::from_path(out)).map_err(io_err(out))?;
    Outcome::new(
        "ingest",
        &[corpus],
        &[out],
        format!(
            "{} records, {} include ({:.2}%)",
            c.len(),
            c.include_count(),
            100.0 * c.inclusion_rate()
        ),
    )
}

pub fn cmd_split(
    corpus: &Path,
    format: Option<CorpusFormat>,
    spec: &SplitSpec,
    out: &Path,
) -> Result<Outcome, CommandError> {
    let c = load_corpus(corpus, format)?;
    let result = partition(&c, spec)?;
    ensure_parent(out)?;
    result.write_manifest(out).map_err(io_err(out))?;
    Outcome::new(
        "split",
        &[corpus],
        &[out],
        format!(
            "train {} ({} exclude / {} include), test {} ({} exclude / {} include)",
            result.train.total,
            result.train.exclude,
            result.train.include,
            result.test.total,
            result.test.exclude,
            result.test.include
        ),
    )
}

/// Prompt template plus criteria, both optional on disk.
#[derive(Debug, Clone, Default)]
pub struct PromptSource {
    pub template: Option<PathBuf>,
    pub criteria: Option<PathBuf>,
}

impl PromptSource {
    fn load(&self) -> Result<PromptTemplate, CommandError> {
        let criteria = match &self.criteria {
            Some(p) => read_text(p)?.trim_end().to_string(),
            None => String::new(),
        };
        match &self.template {
            Some(p) => {
                require(p)?;
                Ok(PromptTemplate::from_file(p, criteria)?)
            }
            None => Ok(PromptTemplate::default_with_criteria(criteria)),
        }
    }

    fn paths(&self) -> Vec<&Path> {
        self.template
            .iter()
            .chain(&self.criteria)
            .map(PathBuf::as_path)
            .collect()
    }
}

/// Which records to screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Subset::Train),
            "test" => Ok(Subset::Test),
            "all" => Ok(Subset::All),
            other => Err(format!("unknown subset {other:?} (expected train, test or all)")),
        }
    }
}

fn select_records<'a>(
    corpus: &'a Corpus,
    manifest: Option<&PartitionResult>,
    subset: Subset,
) -> Result<Vec<&'a crate::corpus::StudyRecord>, CommandError> {
    let ids = match (subset, manifest) {
        (Subset::All, _) => return Ok(corpus.records().iter().collect()),
        (Subset::Train, Some(m)) => &m.train.ids,
        (Subset::Test, Some(m)) => &m.test.ids,
        (_, None) => {
            return Err(CommandError::Invalid(
                "a split manifest is required for the train/test subsets".into(),
            ))
        }
    };
    let records = corpus.subset(ids);
    if records.len() != ids.len() {
        return Err(CommandError::Invalid(format!(
            "split manifest lists {} ids but only {} are in the corpus",
            ids.len(),
            records.len()
        )));
    }
    Ok(records)
}

/// Writes the training split as chat-formatted JSONL.
pub fn cmd_export_sft(
    corpus: &Path,
    format: Option<CorpusFormat>,
    manifest: &Path,
    prompt: &PromptSource,
    markers: &ChatMarkers,
    out: &Path,
) -> Result<Outcome, CommandError> {
    let c = load_corpus(corpus, format)?;
    let m = load_manifest(manifest)?;
    let template = prompt.load()?;
    let records = select_records(&c, Some(&m), Subset::Train)?;
    ensure_parent(out)?;
    let summary = export_sft_dataset(&records, &template, markers, out)?;
    let mut inputs = vec![corpus, manifest];
    inputs.extend(prompt.paths());
    Outcome::new(
        "export-sft",
        &inputs,
        &[out],
        format!(
            "{} examples ({} include, {} exclude, {} without abstract)",
            summary.total, summary.include, summary.exclude, summary.abstract_missing
        ),
    )
}

pub fn cmd_manifest(overrides: &BTreeMap<String, String>, out: &Path) -> Result<Outcome, CommandError> {
    ensure_parent(out)?;
    let file = emit_training_manifest(overrides, out)?;
    Outcome::new(
        "manifest",
        &[],
        &[out],
        format!(
            "{} override(s), effective batch size {}",
            file.overrides.len(),
            file.effective_batch_size
        ),
    )
}

#[derive(Debug, Clone)]
pub enum TransportChoice {
    /// Answer from a recorded exchange file only.
    Replay(PathBuf),
    /// OpenAI-compatible chat endpoint, optionally recording every exchange.
    Live {
        endpoint: String,
        model: String,
        record: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct InferArgs {
    pub corpus: PathBuf,
    pub format: Option<CorpusFormat>,
    pub manifest: Option<PathBuf>,
    pub subset: Subset,
    pub prompt: PromptSource,
    pub config: InferenceConfig,
    pub transport: TransportChoice,
    pub ledger: PathBuf,
    pub resume: bool,
}

/// Renders the prompts for the selected records and runs every temperature pass.
pub fn cmd_infer(args: &InferArgs) -> Result<Outcome, CommandError> {
    let c = load_corpus(&args.corpus, args.format)?;
    let manifest = args.manifest.as_deref().map(load_manifest).transpose()?;
    let template = args.prompt.load()?;
    let records = select_records(&c, manifest.as_ref(), args.subset)?;
    let items = records
        .iter()
        .map(|r| {
            Ok(ScreeningItem {
                study_id: r.id.clone(),
                prompt: template.render(r)?.text,
            })
        })
        .collect::<Result<Vec<_>, PromptError>>()?;

    ensure_parent(&args.ledger)?;
    let mut inputs: Vec<&Path> = vec![&args.corpus];
    inputs.extend(args.manifest.as_deref());
    inputs.extend(args.prompt.paths());
    let ledger = match &args.transport {
        TransportChoice::Replay(path) => {
            let t = ReplayTransport::open(path).map_err(io_err(path))?;
            if path.exists() {
                inputs.push(path);
            }
            run_multi_pass(&items, &args.config, &t, &args.ledger, args.resume)?
        }
        TransportChoice::Live {
            endpoint,
            model,
            record,
        } => {
            let http = HttpTransport::new(endpoint.clone(), model.clone(), args.config.request_timeout());
            let t: Box<dyn Transport> = match record {
                Some(p) => {
                    ensure_parent(p)?;
                    Box::new(RecordingTransport::new(http, p).map_err(io_err(p))?)
                }
                None => Box::new(http),
            };
            run_multi_pass(&items, &args.config, t.as_ref(), &args.ledger, args.resume)?
        }
    };
    let errors = ledger.records.iter().filter(|r| r.error.is_some()).count();
    Outcome::new(
        "infer",
        &inputs,
        &[&args.ledger],
        format!(
            "run {}: {} items x {} passes, {} request failure(s)",
            ledger.header.run_id,
            items.len(),
            ledger.temperatures().len(),
            errors
        ),
    )
}

pub const EVALUATION_FILE: &str = "evaluation.json";
pub const DISAGREEMENTS_FILE: &str = "disagreements.csv";

pub fn report_file_name(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Text => "report.txt",
        ReportFormat::Json => "report.json",
    }
}

fn render(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Json => report.to_json(),
    }
}

/// Items where any pass differs from the human label, with each pass's decision,
/// parse route and raw reply. Returns the number of rows written.
pub fn write_disagreements(ledger: &RunLedger, corpus: &Corpus, out: &Path) -> Result<usize, CommandError> {
    let (ids, human, columns) = ledger_columns(ledger, corpus)?;
    let passes = ledger.passes();
    ensure_parent(out)?;
    let mut w = csv::Writer::from_path(out).map_err(|e| CommandError::Invalid(format!("{}: {e}", out.display())))?;
    let mut header = vec!["id".to_string(), "title".to_string(), "human".to_string()];
    for c in &columns {
        header.push(format!("decision_{}", c.label));
        header.push(format!("route_{}", c.label));
        header.push(format!("raw_text_{}", c.label));
    }
    let csv_err = |e: csv::Error| CommandError::Invalid(format!("{}: {e}", out.display()));
    w.write_record(&header).map_err(csv_err)?;
    let mut rows = 0;
    for (i, id) in ids.iter().enumerate() {
        if columns.iter().all(|c| c.decisions[i] == human[i]) {
            continue;
        }
        let title = corpus.get(id).map(|r| r.title.clone()).unwrap_or_default();
        let mut rec = vec![id.clone(), title, human[i].to_string()];
        for (_, pass) in &passes {
            let p = pass[i];
            rec.push(p.decision.to_string());
            rec.push(p.parse_route.to_string());
            rec.push(p.raw_text.clone());
        }
        w.write_record(&rec).map_err(csv_err)?;
        rows += 1;
    }
    w.flush().map_err(io_err(out))?;
    Ok(rows)
}

/// Scores a completed ledger against the corpus labels and writes the evaluation,
/// the rendered report and the disagreement export into `out_dir`.
pub fn cmd_evaluate(
    ledger_path: &Path,
    corpus: &Path,
    format: Option<CorpusFormat>,
    bootstrap: Option<&BootstrapSpec>,
    report_format: ReportFormat,
    out_dir: &Path,
) -> Result<Outcome, CommandError> {
    require(ledger_path)?;
    let ledger = RunLedger::load(ledger_path).map_err(InferenceError::from)?;
    let c = load_corpus(corpus, format)?;
    let eval = evaluate_ledger(&ledger, &c, bootstrap)?;

    let eval_path = out_dir.join(EVALUATION_FILE);
    let mut json = serde_json::to_string_pretty(&eval).expect("evaluation serializes");
    json.push('\n');
    write_text(&eval_path, &json)?;
    let report_path = out_dir.join(report_file_name(report_format));
    write_text(&report_path, &render(&Report::from_evaluation(&eval), report_format))?;
    let dis_path = out_dir.join(DISAGREEMENTS_FILE);
    let rows = write_disagreements(&ledger, &c, &dis_path)?;

    Outcome::new(
        "evaluate",
        &[ledger_path, corpus],
        &[&eval_path, &report_path, &dis_path],
        format!(
            "{} items, {} passes, {rows} disagreement(s)",
            eval.n_items,
            eval.settings.len()
        ),
    )
}

/// Rater table for `agree`.
#[derive(Debug, Clone)]
pub enum AgreeSource {
    /// Wide table: id column then one 0/1 column per rater.
    Ratings(PathBuf),
    /// Human labels from the corpus plus one column per ledger pass.
    Ledger {
        ledger: PathBuf,
        corpus: PathBuf,
        format: Option<CorpusFormat>,
    },
}

fn ledger_matrix(
    ledger_path: &Path,
    corpus: &Path,
    format: Option<CorpusFormat>,
) -> Result<RatingMatrix, CommandError> {
    require(ledger_path)?;
    let ledger = RunLedger::load(ledger_path).map_err(InferenceError::from)?;
    let c = load_corpus(corpus, format)?;
    let (ids, human, columns) = ledger_columns(&ledger, &c)?;
    let mut raters = vec!["human".to_string()];
    let mut data: Vec<Vec<ScreeningLabel>> = vec![human];
    for col in columns {
        raters.push(col.label);
        data.push(col.decisions);
    }
    Ok(RatingMatrix::from_named_columns(ids, raters, data)?)
}

pub fn cmd_agree(
    source: &AgreeSource,
    bootstrap: Option<&BootstrapSpec>,
    report_format: ReportFormat,
    out: &Path,
) -> Result<Outcome, CommandError> {
    let (m, inputs): (RatingMatrix, Vec<&Path>) = match source {
        AgreeSource::Ratings(path) => {
            require(path)?;
            (RatingMatrix::read_csv_file(path)?, vec![path])
        }
        AgreeSource::Ledger { ledger, corpus, format } => {
            (ledger_matrix(ledger, corpus, *format)?, vec![ledger, corpus])
        }
    };
    let tables = AgreementTables::from_report(&agreement_report(&m, bootstrap)?);
    let text = match report_format {
        ReportFormat::Text => tables.to_text(),
        ReportFormat::Json => tables.to_json(),
    };
    write_text(out, &text)?;
    Outcome::new("agree", &inputs, &[out], format!("{} items x {} raters", m.n(), m.r()))
}

/// Re-renders a report from a stored evaluation without recomputing anything.
pub fn cmd_report(evaluation: &Path, report_format: ReportFormat, out: &Path) -> Result<Outcome, CommandError> {
    let text = read_text(evaluation)?;
    let eval: Evaluation =
        serde_json::from_str(&text).map_err(|e| CommandError::Invalid(format!("{}: {e}", evaluation.display())))?;
    write_text(out, &render(&Report::from_evaluation(&eval), report_format))?;
    Outcome::new(
        "report",
        &[evaluation],
        &[out],
        format!("{} settings", eval.settings.len()),
    )
}
