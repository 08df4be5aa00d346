//! Labelled screening corpus: ingestion, serialization and train/test partitioning.
//!
//! Two on-disk formats are accepted, both carrying the fields `id,title,abstract,label`:
//! a comma-separated table with a header row, and one JSON object per line.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::label::ScreeningLabel;

pub const REQUIRED_COLUMNS: [&str; 4] = ["id", "title", "abstract", "label"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(rename = "label")]
    pub human_label: ScreeningLabel,
}

impl StudyRecord {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
        human_label: ScreeningLabel,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            human_label,
        }
    }

    /// Title-only records are still screenable; this flags them.
    pub fn abstract_missing(&self) -> bool {
        self.abstract_text.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// Comma-separated, quoted fields, UTF-8, header row.
    Delimited,
    /// One JSON object per line.
    RecordLines,
}

impl CorpusFormat {
    /// `.jsonl`/`.ndjson` map to record lines, everything else to the delimited table.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("ndjson") => {
                CorpusFormat::RecordLines
            }
            _ => CorpusFormat::Delimited,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" | "delimited" | "delimited-table" => Ok(CorpusFormat::Delimited),
            "jsonl" | "record-lines" => Ok(CorpusFormat::RecordLines),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source: PathBuf,
    /// Seconds since the Unix epoch.
    pub ingested_at: u64,
}

/// One problem found on one input row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    /// 1-based data row (header excluded).
    pub row: usize,
    /// 1-based physical line in the file.
    pub line: u64,
    pub id: String,
    pub problem: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "row {} (line {}, id {:?}): {}",
            self.row, self.line, self.id, self.problem
        )
    }
}

fn join_issues(issues: &[RowIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("malformed input at line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("{} invalid row(s): {}", .0.len(), join_issues(.0))]
    InvalidRows(Vec<RowIssue>),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("empty title for id {0:?}")]
    EmptyTitle(String),
    #[error("corpus is empty")]
    Empty,
}

/// An immutable, validated list of records.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<StudyRecord>,
    provenance: Option<Provenance>,
}

impl Corpus {
    /// Validates id uniqueness and nonempty titles.
    pub fn new(records: Vec<StudyRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
            if r.title.trim().is_empty() {
                return Err(CorpusError::EmptyTitle(r.id.clone()));
            }
        }
        Ok(Self {
            records,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn records(&self) -> &[StudyRecord] {
        &self.records
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&StudyRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn include_count(&self) -> usize {
        self.records.iter().filter(|r| r.human_label.is_include()).count()
    }

    pub fn inclusion_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.include_count() as f64 / self.records.len() as f64
        }
    }

    /// Records whose ids are in `ids`, in corpus order.
    pub fn subset<'a>(&'a self, ids: &[String]) -> Vec<&'a StudyRecord> {
        let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
        self.records.iter().filter(|r| wanted.contains(r.id.as_str())).collect()
    }

    pub fn write<W: Write>(&self, format: CorpusFormat, writer: W) -> io::Result<()> {
        match format {
            CorpusFormat::Delimited => {
                let mut w = csv::Writer::from_writer(writer);
                w.write_record(REQUIRED_COLUMNS)?;
                for r in &self.records {
                    let label = r.human_label.to_string();
                    w.write_record([r.id.as_str(), &r.title, &r.abstract_text, &label])?;
                }
                w.flush()
            }
            CorpusFormat::RecordLines => {
                let mut w = BufWriter::new(writer);
                for r in &self.records {
                    serde_json::to_writer(&mut w, r)?;
                    w.write_all(b"\n")?;
                }
                w.flush()
            }
        }
    }

    pub fn write_file(&self, path: &Path, format: CorpusFormat) -> io::Result<()> {
        self.write(format, File::create(path)?)
    }
}

/// Reads a corpus file. Every row with a missing/invalid label, empty id or title,
/// or a duplicate id is collected and reported together.
pub fn ingest_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corpus = read_corpus(BufReader::new(file), format)?;
    let ingested_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(corpus.with_provenance(Provenance {
        source: path.to_path_buf(),
        ingested_at,
    }))
}

struct RawRow {
    row: usize,
    line: u64,
    id: String,
    title: String,
    abstract_text: String,
    label: Option<String>,
}

pub fn read_corpus<R: io::Read>(reader: R, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let rows = match format {
        CorpusFormat::Delimited => read_delimited(reader)?,
        CorpusFormat::RecordLines => read_record_lines(reader)?,
    };
    if rows.is_empty() {
        return Err(CorpusError::Empty);
    }

    let mut issues = Vec::new();
    let mut seen = HashSet::with_capacity(rows.len());
    let mut records = Vec::with_capacity(rows.len());
    for raw in rows {
        let issue = |problem: String| RowIssue {
            row: raw.row,
            line: raw.line,
            id: raw.id.clone(),
            problem,
        };
        if raw.id.trim().is_empty() {
            issues.push(issue("empty id".into()));
            continue;
        }
        if !seen.insert(raw.id.clone()) {
            issues.push(issue("duplicate id".into()));
            continue;
        }
        if raw.title.trim().is_empty() {
            issues.push(issue("empty title".into()));
            continue;
        }
        let label = match raw.label.as_deref() {
            None => {
                issues.push(issue("missing label".into()));
                continue;
            }
            Some(tok) if tok.trim().is_empty() => {
                issues.push(issue("missing label".into()));
                continue;
            }
            Some(tok) => match tok.parse::<ScreeningLabel>() {
                Ok(l) => l,
                Err(e) => {
                    issues.push(issue(e.to_string()));
                    continue;
                }
            },
        };
        records.push(StudyRecord {
            id: raw.id,
            title: raw.title,
            abstract_text: raw.abstract_text,
            human_label: label,
        });
    }
    if !issues.is_empty() {
        return Err(CorpusError::InvalidRows(issues));
    }
    Corpus::new(records)
}

fn read_delimited<R: io::Read>(reader: R) -> Result<Vec<RawRow>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut index = [0usize; 4];
    for (slot, col) in index.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(col))
            .ok_or_else(|| CorpusError::MissingColumn(col.to_string()))?;
    }
    let [id_i, title_i, abstract_i, label_i] = index;

    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CorpusError::Malformed {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(n as u64 + 2);
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        rows.push(RawRow {
            row: n + 1,
            line,
            id: field(id_i).trim().to_string(),
            title: field(title_i),
            abstract_text: field(abstract_i),
            label: rec.get(label_i).map(str::to_string),
        });
    }
    Ok(rows)
}

fn read_record_lines<R: io::Read>(reader: R) -> Result<Vec<RawRow>, CorpusError> {
    #[derive(Deserialize)]
    struct Line {
        id: Option<serde_json::Value>,
        title: Option<String>,
        #[serde(rename = "abstract")]
        abstract_text: Option<String>,
        label: Option<serde_json::Value>,
    }

    let mut rows = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = line.map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let scalar = |v: serde_json::Value| match v {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        };
        let id = parsed
            .id
            .map(scalar)
            .ok_or_else(|| CorpusError::MissingColumn("id".into()))?;
        let title = parsed.title.ok_or_else(|| CorpusError::MissingColumn("title".into()))?;
        rows.push(RawRow {
            row: rows.len() + 1,
            line: line_no,
            id: id.trim().to_string(),
            title,
            abstract_text: parsed.abstract_text.unwrap_or_default(),
            label: parsed.label.and_then(|v| match v {
                serde_json::Value::Null => None,
                other => Some(scalar(other)),
            }),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Both splits keep the corpus inclusion rate as closely as integer counts allow.
    Stratified,
    /// The training split is filled to a requested Include proportion.
    Enriched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_size: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enrichment_target: Option<f64>,
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn stratified(train_size: usize, seed: u64) -> Self {
        Self {
            train_size,
            seed,
            enrichment_target: None,
            mode: SplitMode::Stratified,
        }
    }

    pub fn enriched(train_size: usize, seed: u64, enrichment_target: f64) -> Self {
        Self {
            train_size,
            seed,
            enrichment_target: Some(enrichment_target),
            mode: SplitMode::Enriched,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionError {
    #[error("train_size {train_size} must lie strictly between 0 and the corpus size {corpus_size}")]
    TrainSize { train_size: usize, corpus_size: usize },
    #[error("enriched mode requires an enrichment_target")]
    MissingEnrichmentTarget,
    #[error("enrichment_target {0} is outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error(
        "infeasible enrichment_target: training split needs {include_needed} Include / {exclude_needed} Exclude \
         but the corpus has {include_available} / {exclude_available}"
    )]
    InfeasibleEnrichment {
        include_needed: usize,
        include_available: usize,
        exclude_needed: usize,
        exclude_available: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub ids: Vec<String>,
    pub total: usize,
    pub exclude: usize,
    pub include: usize,
    pub inclusion_rate: f64,
}

impl SplitSummary {
    fn from_records(records: &[&StudyRecord]) -> Self {
        let include = records.iter().filter(|r| r.human_label.is_include()).count();
        let total = records.len();
        Self {
            ids: records.iter().map(|r| r.id.clone()).collect(),
            total,
            exclude: total - include,
            include,
            inclusion_rate: if total == 0 { 0.0 } else { include as f64 / total as f64 },
        }
    }
}

/// Auditable partition manifest. Ids are listed in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub spec: SplitSpec,
    pub corpus_size: usize,
    pub train: SplitSummary,
    pub test: SplitSummary,
}

impl PartitionResult {
    pub fn write_manifest(&self, path: &Path) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)
    }

    pub fn read_manifest(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

/// Hamilton apportionment of `total` seats over `weights`. Ties on the remainder go to the
/// earlier entry.
fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut seats: Vec<usize> = weights.iter().map(|w| total * w / sum).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(total * weights[i] % sum));
    let assigned: usize = seats.iter().sum();
    for &i in order.iter().take(total - assigned) {
        seats[i] += 1;
    }
    seats
}

/// Splits the corpus into disjoint train and test sets.
///
/// Each class is shuffled with a ChaCha8 generator seeded from `spec.seed`, then the
/// first `k` records of each class go to training, where `k` comes from largest-remainder
/// rounding (stratified) or from rounding `enrichment_target * train_size` (enriched).
pub fn partition(corpus: &Corpus, spec: &SplitSpec) -> Result<PartitionResult, PartitionError> {
    let n = corpus.len();
    if spec.train_size == 0 || spec.train_size >= n {
        return Err(PartitionError::TrainSize {
            train_size: spec.train_size,
            corpus_size: n,
        });
    }

    let by_class = |label: ScreeningLabel| -> Vec<usize> {
        corpus
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.human_label == label)
            .map(|(i, _)| i)
            .collect()
    };
    let mut excludes = by_class(ScreeningLabel::Exclude);
    let mut includes = by_class(ScreeningLabel::Include);

    let include_take = match spec.mode {
        SplitMode::Stratified => largest_remainder(spec.train_size, &[excludes.len(), includes.len()])[1],
        SplitMode::Enriched => {
            let target = spec.enrichment_target.ok_or(PartitionError::MissingEnrichmentTarget)?;
            if !(0.0..=1.0).contains(&target) || target.is_nan() {
                return Err(PartitionError::TargetOutOfRange(target));
            }
            (target * spec.train_size as f64).round() as usize
        }
    };
    let exclude_take = spec.train_size - include_take;
    if include_take > includes.len() || exclude_take > excludes.len() {
        return Err(PartitionError::InfeasibleEnrichment {
            include_needed: include_take,
            include_available: includes.len(),
            exclude_needed: exclude_take,
            exclude_available: excludes.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    excludes.shuffle(&mut rng);
    includes.shuffle(&mut rng);

    let train_idx: BTreeSet<usize> = excludes[..exclude_take]
        .iter()
        .chain(&includes[..include_take])
        .copied()
        .collect();
    let mut train = Vec::with_capacity(spec.train_size);
    let mut test = Vec::with_capacity(n - spec.train_size);
    for (i, r) in corpus.records().iter().enumerate() {
        if train_idx.contains(&i) {
            train.push(r);
        } else {
            test.push(r);
        }
    }

    Ok(PartitionResult {
        spec: spec.clone(),
        corpus_size: n,
        train: SplitSummary::from_records(&train),
        test: SplitSummary::from_records(&test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(includes: usize, excludes: usize) -> Corpus {
        let records = (0..includes + excludes)
            .map(|i| {
                let label = if i < includes {
                    ScreeningLabel::Include
                } else {
                    ScreeningLabel::Exclude
                };
                StudyRecord::new(format!("s{i:04}"), format!("Title {i}"), format!("Abstract {i}"), label)
            })
            .collect();
        Corpus::new(records).unwrap()
    }

    #[test]
    fn reads_three_row_table() {
        let data = "id,title,abstract,label\na,T1,A1,1\nb,T2,A2,0\nc,T3,,0\n";
        let c = read_corpus(data.as_bytes(), CorpusFormat::Delimited).unwrap();
        assert_eq!(c.len(), 3);
        assert!((c.inclusion_rate() - 1.0 / 3.0).abs() < 1e-15);
        assert!(c.records()[2].abstract_missing());
    }

    #[test]
    fn bad_label_names_row() {
        let mut data = String::from("id,title,abstract,label\n");
        for i in 1..=9 {
            let label = if i == 7 { "2" } else { "0" };
            data.push_str(&format!("r{i},Title,Abs,{label}\n"));
        }
        let err = read_corpus(data.as_bytes(), CorpusFormat::Delimited).unwrap_err();
        match &err {
            CorpusError::InvalidRows(issues) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].row, 7);
                assert_eq!(issues[0].line, 8);
                assert_eq!(issues[0].id, "r7");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 7"));
    }

    #[test]
    fn reports_every_bad_row() {
        let data = "id,title,abstract,label\na,T,,x\nb,,A,1\na,T,,1\nc,T,,\n";
        let CorpusError::InvalidRows(issues) = read_corpus(data.as_bytes(), CorpusFormat::Delimited).unwrap_err()
        else {
            panic!("expected row issues");
        };
        let problems: Vec<_> = issues.iter().map(|i| (i.row, i.problem.as_str())).collect();
        assert_eq!(problems[1], (2, "empty title"));
        assert_eq!(problems[2], (3, "duplicate id"));
        assert_eq!(problems[3], (4, "missing label"));
    }

    #[test]
    fn missing_column() {
        let data = "id,title,label\na,T,1\n";
        let err = read_corpus(data.as_bytes(), CorpusFormat::Delimited).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn(c) if c == "abstract"));
    }

    #[test]
    fn keyword_labels_and_quoting() {
        let data = "label,id,abstract,title\nInclude,a,\"x, \"\"y\"\"\",T\nEXCLUDE,b,,T2\n";
        let c = read_corpus(data.as_bytes(), CorpusFormat::Delimited).unwrap();
        assert_eq!(c.records()[0].human_label, ScreeningLabel::Include);
        assert_eq!(c.records()[0].abstract_text, "x, \"y\"");
        assert_eq!(c.records()[1].human_label, ScreeningLabel::Exclude);
    }

    #[test]
    fn record_lines() {
        let data = "{\"id\":\"a\",\"title\":\"T\",\"abstract\":\"A\",\"label\":1}\n\n{\"id\":7,\"title\":\"U\",\"label\":\"exclude\"}\n";
        let c = read_corpus(data.as_bytes(), CorpusFormat::RecordLines).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.records()[1].id, "7");
        assert!(c.records()[1].abstract_missing());
        let bad = "{\"id\":\"a\",\"title\":\"T\",\"label\":3}\n";
        assert!(matches!(
            read_corpus(bad.as_bytes(), CorpusFormat::RecordLines),
            Err(CorpusError::InvalidRows(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest_corpus(Path::new("/nonexistent/corpus.csv"), CorpusFormat::Delimited).unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(80, &[63, 37]), vec![50, 30]);
        assert_eq!(largest_remainder(8, &[5, 5]), vec![4, 4]);
        assert_eq!(largest_remainder(3, &[1, 1]), vec![2, 1]);
        assert_eq!(largest_remainder(0, &[4, 2]), vec![0, 0]);
    }

    #[test]
    fn stratified_exact() {
        let c = synthetic(5, 5);
        let p = partition(&c, &SplitSpec::stratified(8, 1)).unwrap();
        assert_eq!(p.train.include, 4);
        assert_eq!(p.train.exclude, 4);
        assert_eq!(p.test.total, 2);
    }

    #[test]
    fn enriched_table_counts() {
        let c = synthetic(138, 233);
        let p = partition(&c, &SplitSpec::enriched(315, 42, 121.0 / 315.0)).unwrap();
        assert_eq!((p.train.total, p.train.exclude, p.train.include), (315, 194, 121));
        assert_eq!((p.test.total, p.test.exclude, p.test.include), (56, 39, 17));
    }

    #[test]
    fn partition_errors() {
        let c = synthetic(3, 7);
        assert!(matches!(
            partition(&c, &SplitSpec::stratified(10, 0)),
            Err(PartitionError::TrainSize { .. })
        ));
        assert!(matches!(
            partition(&c, &SplitSpec::stratified(0, 0)),
            Err(PartitionError::TrainSize { .. })
        ));
        assert!(matches!(
            partition(&c, &SplitSpec::enriched(8, 0, 0.9)),
            Err(PartitionError::InfeasibleEnrichment { .. })
        ));
        assert!(matches!(
            partition(&c, &SplitSpec::enriched(8, 0, 1.5)),
            Err(PartitionError::TargetOutOfRange(_))
        ));
        let mut spec = SplitSpec::stratified(5, 0);
        spec.mode = SplitMode::Enriched;
        assert_eq!(partition(&c, &spec), Err(PartitionError::MissingEnrichmentTarget));
    }

    #[test]
    fn seed_changes_selection() {
        let c = synthetic(40, 60);
        let a = partition(&c, &SplitSpec::stratified(50, 1)).unwrap();
        let b = partition(&c, &SplitSpec::stratified(50, 2)).unwrap();
        assert_eq!(a.train.include, b.train.include);
        assert_ne!(a.train.ids, b.train.ids);
        assert_eq!(a, partition(&c, &SplitSpec::stratified(50, 1)).unwrap());
    }
}
