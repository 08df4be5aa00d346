//! Prompt rendering, chat-formatted SFT export and the training manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::StudyRecord;
use crate::label::ScreeningLabel;

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/screening_prompt.txt");

const PLACEHOLDERS: [&str; 3] = ["title", "abstract", "criteria"];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("placeholder {{{name}}} appears {count} times in the template (expected exactly once)")]
    PlaceholderCount { name: &'static str, count: usize },
    #[error("unfilled placeholder {{{0}}} remains in the template")]
    UnfilledPlaceholder(String),
    #[error("chat markers must be nonempty and pairwise distinct")]
    InvalidMarkers,
    #[error("assistant text is required (gold decision)")]
    EmptyAssistant,
    #[error("chat text does not match the configured markers")]
    MarkerMismatch,
    #[error("empty training export")]
    EmptyExport,
    #[error("unknown manifest field {0:?}")]
    UnknownField(String),
    #[error("invalid value {value:?} for manifest field {field:?}: {message}")]
    InvalidOverride {
        field: String,
        value: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PromptError + '_ {
    move |source| PromptError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A screening prompt with `{title}`, `{abstract}` and `{criteria}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template_text: String,
    criteria_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    /// Set when the record had no abstract and the prompt is title-only.
    pub abstract_missing: bool,
}

impl PromptTemplate {
    pub fn new(template_text: impl Into<String>, criteria_text: impl Into<String>) -> Result<Self, PromptError> {
        let template_text = template_text.into();
        for name in PLACEHOLDERS {
            let count = template_text.matches(&format!("{{{name}}}")).count();
            if count != 1 {
                return Err(PromptError::PlaceholderCount { name, count });
            }
        }
        Ok(Self {
            template_text,
            criteria_text: criteria_text.into(),
        })
    }

    /// The shipped template; review-specific criteria are always supplied by the caller.
    pub fn default_with_criteria(criteria_text: impl Into<String>) -> Self {
        Self::new(DEFAULT_TEMPLATE, criteria_text).expect("shipped template is valid")
    }

    pub fn from_file(path: &Path, criteria_text: impl Into<String>) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::new(text, criteria_text)
    }

    pub fn template_text(&self) -> &str {
        &self.template_text
    }

    pub fn criteria_text(&self) -> &str {
        &self.criteria_text
    }

    /// Single-pass substitution: inserted field values are never rescanned, so a title
    /// containing `{abstract}` is emitted literally.
    pub fn render(&self, record: &StudyRecord) -> Result<RenderedPrompt, PromptError> {
        let t = &self.template_text;
        let mut out = String::with_capacity(t.len() + record.title.len() + record.abstract_text.len());
        let mut rest = t.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let ident_len = after
                .char_indices()
                .find(|&(_, c)| !(c.is_ascii_alphanumeric() || c == '_'))
                .map(|(i, _)| i)
                .unwrap_or(after.len());
            let is_placeholder = ident_len > 0
                && after[ident_len..].starts_with('}')
                && !after.starts_with(|c: char| c.is_ascii_digit());
            if !is_placeholder {
                out.push('{');
                rest = after;
                continue;
            }
            let name = &after[..ident_len];
            match name {
                "title" => out.push_str(&record.title),
                "abstract" => out.push_str(&record.abstract_text),
                "criteria" => out.push_str(&self.criteria_text),
                other => return Err(PromptError::UnfilledPlaceholder(other.to_string())),
            }
            rest = &after[ident_len + 1..];
        }
        out.push_str(rest);
        Ok(RenderedPrompt {
            text: out,
            abstract_missing: record.abstract_missing(),
        })
    }
}

/// Role markers wrapped around each chat turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatMarkers {
    pub user_open: String,
    pub assistant_open: String,
    pub turn_close: String,
}

impl Default for ChatMarkers {
    /// ChatML-style markers.
    fn default() -> Self {
        Self {
            user_open: "<|im_start|>user\n".into(),
            assistant_open: "<|im_start|>assistant\n".into(),
            turn_close: "<|im_end|>\n".into(),
        }
    }
}

impl ChatMarkers {
    pub fn new(
        user_open: impl Into<String>,
        assistant_open: impl Into<String>,
        turn_close: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let m = Self {
            user_open: user_open.into(),
            assistant_open: assistant_open.into(),
            turn_close: turn_close.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let all = [&self.user_open, &self.assistant_open, &self.turn_close];
        let nonempty = all.iter().all(|s| !s.is_empty());
        let distinct = all[0] != all[1] && all[0] != all[2] && all[1] != all[2];
        if nonempty && distinct {
            Ok(())
        } else {
            Err(PromptError::InvalidMarkers)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedChat {
    pub text: String,
    /// Character (not byte) offset of the first assistant character.
    pub mask_boundary: usize,
}

/// `user_open + user + turn_close + assistant_open + assistant + turn_close`.
pub fn render_chat(user_text: &str, assistant_text: &str, markers: &ChatMarkers) -> Result<RenderedChat, PromptError> {
    markers.validate()?;
    if assistant_text.is_empty() {
        return Err(PromptError::EmptyAssistant);
    }
    let mut text = String::with_capacity(
        user_text.len()
            + assistant_text.len()
            + markers.user_open.len()
            + markers.assistant_open.len()
            + 2 * markers.turn_close.len(),
    );
    text.push_str(&markers.user_open);
    text.push_str(user_text);
    text.push_str(&markers.turn_close);
    text.push_str(&markers.assistant_open);
    let mask_boundary = text.chars().count();
    text.push_str(assistant_text);
    text.push_str(&markers.turn_close);
    Ok(RenderedChat { text, mask_boundary })
}

/// Inverse of [`render_chat`]: recovers `(user_text, assistant_text)` by locating the markers.
pub fn parse_chat<'a>(chat_text: &'a str, markers: &ChatMarkers) -> Result<(&'a str, &'a str), PromptError> {
    let body = chat_text
        .strip_prefix(markers.user_open.as_str())
        .and_then(|s| s.strip_suffix(markers.turn_close.as_str()))
        .ok_or(PromptError::MarkerMismatch)?;
    let sep = format!("{}{}", markers.turn_close, markers.assistant_open);
    let at = body.rfind(&sep).ok_or(PromptError::MarkerMismatch)?;
    Ok((&body[..at], &body[at + sep.len()..]))
}

/// Suffix of `text` starting at character offset `boundary`.
pub fn suffix_at_char(text: &str, boundary: usize) -> &str {
    match text.char_indices().nth(boundary) {
        Some((i, _)) => &text[i..],
        None => "",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftExample {
    pub id: String,
    pub user_text: String,
    pub assistant_text: String,
    pub chat_text: String,
    pub mask_boundary: usize,
    pub label: ScreeningLabel,
}

impl SftExample {
    pub fn build(record: &StudyRecord, template: &PromptTemplate, markers: &ChatMarkers) -> Result<Self, PromptError> {
        let user = template.render(record)?;
        let assistant_text = record.human_label.as_char().to_string();
        let chat = render_chat(&user.text, &assistant_text, markers)?;
        Ok(Self {
            id: record.id.clone(),
            user_text: user.text,
            assistant_text,
            chat_text: chat.text,
            mask_boundary: chat.mask_boundary,
            label: record.human_label,
        })
    }
}

/// One line of the SFT export file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftLine {
    pub id: String,
    pub chat_text: String,
    pub mask_boundary: usize,
    pub label: ScreeningLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub total: usize,
    pub include: usize,
    pub exclude: usize,
    pub abstract_missing: usize,
}

/// Writes one JSON line per record, in the given order.
pub fn export_sft_dataset(
    records: &[&StudyRecord],
    template: &PromptTemplate,
    markers: &ChatMarkers,
    out_path: &Path,
) -> Result<ExportSummary, PromptError> {
    if records.is_empty() {
        return Err(PromptError::EmptyExport);
    }
    markers.validate()?;
    let examples = records
        .iter()
        .map(|r| SftExample::build(r, template, markers))
        .collect::<Result<Vec<_>, _>>()?;

    let file = File::create(out_path).map_err(io_err(out_path))?;
    let mut w = BufWriter::new(file);
    let mut summary = ExportSummary {
        total: 0,
        include: 0,
        exclude: 0,
        abstract_missing: 0,
    };
    for (ex, rec) in examples.into_iter().zip(records) {
        let line = SftLine {
            id: ex.id,
            chat_text: ex.chat_text,
            mask_boundary: ex.mask_boundary,
            label: ex.label,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| PromptError::Io {
            path: out_path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(out_path))?;
        summary.total += 1;
        match line.label {
            ScreeningLabel::Include => summary.include += 1,
            ScreeningLabel::Exclude => summary.exclude += 1,
        }
        if rec.abstract_missing() {
            summary.abstract_missing += 1;
        }
    }
    w.flush().map_err(io_err(out_path))?;
    Ok(summary)
}

pub fn read_sft_dataset(path: &Path) -> Result<Vec<SftLine>, PromptError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| PromptError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Trainer configuration handed to an external fine-tuning stack. Defaults are the
/// full fine-tuning recipe for `LFM2.5-1.2B-Instruct`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingManifest {
    pub base_model: String,
    pub adaptation_method: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub warmup_steps: u32,
    pub max_steps: u32,
    pub weight_decay: f64,
    pub lr_scheduler: String,
    pub per_device_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub max_seq_length: u32,
    pub response_masking: bool,
    pub precision: String,
    pub training_stack: String,
}

impl Default for TrainingManifest {
    fn default() -> Self {
        Self {
            base_model: "LiquidAI/LFM2.5-1.2B-Instruct".into(),
            adaptation_method: "full_finetuning".into(),
            optimizer: "adamw_8bit".into(),
            learning_rate: 2e-5,
            warmup_steps: 5,
            max_steps: 320,
            weight_decay: 0.01,
            lr_scheduler: "linear".into(),
            per_device_batch_size: 2,
            gradient_accumulation_steps: 4,
            max_seq_length: 4096,
            response_masking: true,
            precision: "bf16".into(),
            training_stack: "unsloth+trl".into(),
        }
    }
}

impl TrainingManifest {
    pub fn effective_batch_size(&self) -> u32 {
        self.per_device_batch_size * self.gradient_accumulation_steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideEntry {
    pub field: String,
    pub default: serde_json::Value,
    pub value: serde_json::Value,
}

/// What gets written to disk: the manifest, the derived effective batch and the override log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(flatten)]
    pub manifest: TrainingManifest,
    pub effective_batch_size: u32,
    pub overrides: Vec<OverrideEntry>,
}

/// Applies `field=value` overrides on top of the defaults. Values are parsed according to
/// the type of the field they replace.
pub fn build_training_manifest(overrides: &BTreeMap<String, String>) -> Result<ManifestFile, PromptError> {
    let defaults = TrainingManifest::default();
    let mut value = serde_json::to_value(&defaults).expect("manifest serializes");
    let obj = value.as_object_mut().expect("manifest is an object");
    let mut log = Vec::new();
    for (field, raw) in overrides {
        let current = obj.get(field).ok_or_else(|| PromptError::UnknownField(field.clone()))?;
        let invalid = |message: String| PromptError::InvalidOverride {
            field: field.clone(),
            value: raw.clone(),
            message,
        };
        let parsed = match current {
            serde_json::Value::String(_) => serde_json::Value::String(raw.clone()),
            _ => serde_json::from_str::<serde_json::Value>(raw.trim()).map_err(|e| invalid(e.to_string()))?,
        };
        log.push(OverrideEntry {
            field: field.clone(),
            default: current.clone(),
            value: parsed.clone(),
        });
        obj.insert(field.clone(), parsed);
    }
    let manifest: TrainingManifest = serde_json::from_value(value).map_err(|e| PromptError::InvalidOverride {
        field: log.last().map(|e| e.field.clone()).unwrap_or_default(),
        value: String::new(),
        message: e.to_string(),
    })?;
    for entry in &log {
        log::info!(
            "training manifest override: {} = {} (default {})",
            entry.field,
            entry.value,
            entry.default
        );
    }
    Ok(ManifestFile {
        effective_batch_size: manifest.effective_batch_size(),
        manifest,
        overrides: log,
    })
}

pub fn emit_training_manifest(
    overrides: &BTreeMap<String, String>,
    out_path: &Path,
) -> Result<ManifestFile, PromptError> {
    let file = build_training_manifest(overrides)?;
    let mut text = serde_json::to_string_pretty(&file).expect("manifest serializes");
    text.push('\n');
    std::fs::write(out_path, text).map_err(io_err(out_path))?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(title: &str, abs: &str, label: ScreeningLabel) -> StudyRecord {
        StudyRecord::new("x1", title, abs, label)
    }

    #[test]
    fn substitutes_placeholders() {
        let t = PromptTemplate::new("T:{title}\nA:{abstract}\nC:{criteria}", "Z").unwrap();
        let out = t.render(&rec("X", "Y", ScreeningLabel::Include)).unwrap();
        assert_eq!(out.text, "T:X\nA:Y\nC:Z");
        assert!(!out.abstract_missing);
    }

    #[test]
    fn empty_abstract_is_flagged() {
        let t = PromptTemplate::new("T:{title}\nA:{abstract}\nC:{criteria}", "Z").unwrap();
        let out = t.render(&rec("X", "", ScreeningLabel::Exclude)).unwrap();
        assert!(out.text.contains("A:\n"));
        assert!(out.abstract_missing);
    }

    #[test]
    fn field_values_are_not_rescanned() {
        let t = PromptTemplate::new("{title}|{abstract}|{criteria}", "{foo}").unwrap();
        let out = t.render(&rec("{abstract}", "a {b}", ScreeningLabel::Exclude)).unwrap();
        assert_eq!(out.text, "{abstract}|a {b}|{foo}");
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplate::new("{title} {abstract}", ""),
            Err(PromptError::PlaceholderCount {
                name: "criteria",
                count: 0
            })
        ));
        assert!(matches!(
            PromptTemplate::new("{title}{title}{abstract}{criteria}", ""),
            Err(PromptError::PlaceholderCount {
                name: "title",
                count: 2
            })
        ));
        let t = PromptTemplate::new("{title}{abstract}{criteria} {year} {0} { x }", "").unwrap();
        let err = t.render(&rec("a", "b", ScreeningLabel::Exclude)).unwrap_err();
        assert!(matches!(err, PromptError::UnfilledPlaceholder(n) if n == "year"));
        let t = PromptTemplate::new("{title}{abstract}{criteria} {0} { x } {", "").unwrap();
        assert_eq!(
            t.render(&rec("a", "b", ScreeningLabel::Exclude)).unwrap().text,
            "ab {0} { x } {"
        );
    }

    #[test]
    fn chat_construction() {
        let m = ChatMarkers::new("⟨u⟩", "⟨a⟩", "⟨e⟩").unwrap();
        let chat = render_chat("hi", "1", &m).unwrap();
        assert_eq!(chat.text, "⟨u⟩hi⟨e⟩⟨a⟩1⟨e⟩");
        assert_eq!(chat.mask_boundary, 11);
        assert!(suffix_at_char(&chat.text, chat.mask_boundary).starts_with('1'));
        assert_eq!(parse_chat(&chat.text, &m).unwrap(), ("hi", "1"));
        assert!(matches!(render_chat("hi", "", &m), Err(PromptError::EmptyAssistant)));
    }

    #[test]
    fn marker_validation() {
        assert!(ChatMarkers::new("", "a", "e").is_err());
        assert!(ChatMarkers::new("u", "u", "e").is_err());
        assert!(ChatMarkers::default().validate().is_ok());
    }

    #[test]
    fn parse_chat_rejects_foreign_text() {
        let m = ChatMarkers::default();
        assert!(matches!(parse_chat("plain text", &m), Err(PromptError::MarkerMismatch)));
    }

    #[test]
    fn manifest_defaults() {
        let f = build_training_manifest(&BTreeMap::new()).unwrap();
        assert_eq!(f.manifest.learning_rate, 2e-5);
        assert_eq!(f.manifest.max_steps, 320);
        assert_eq!(f.manifest.warmup_steps, 5);
        assert_eq!(f.manifest.weight_decay, 0.01);
        assert_eq!(f.manifest.max_seq_length, 4096);
        assert_eq!(f.manifest.per_device_batch_size, 2);
        assert_eq!(f.manifest.gradient_accumulation_steps, 4);
        assert_eq!(f.effective_batch_size, 8);
        assert!(f.manifest.response_masking);
        assert!(f.overrides.is_empty());
    }

    #[test]
    fn manifest_overrides() {
        let mut o = BTreeMap::new();
        o.insert("max_steps".to_string(), "10".to_string());
        o.insert("optimizer".to_string(), "adamw_torch".to_string());
        let f = build_training_manifest(&o).unwrap();
        assert_eq!(f.manifest.max_steps, 10);
        assert_eq!(f.manifest.optimizer, "adamw_torch");
        assert_eq!(f.overrides.len(), 2);
        let steps = f.overrides.iter().find(|e| e.field == "max_steps").unwrap();
        assert_eq!(steps.default, serde_json::json!(320));
        assert_eq!(steps.value, serde_json::json!(10));

        let mut bad = BTreeMap::new();
        bad.insert("epochs".to_string(), "3".to_string());
        assert!(matches!(build_training_manifest(&bad), Err(PromptError::UnknownField(f)) if f == "epochs"));

        let mut bad = BTreeMap::new();
        bad.insert("max_steps".to_string(), "many".to_string());
        assert!(matches!(
            build_training_manifest(&bad),
            Err(PromptError::InvalidOverride { .. })
        ));
    }
}
