//! Append-only run ledger: one JSON object per line.
//!
//! The first line is a header describing the run, then one line per prediction in
//! completion order, then a `complete` marker once every pass has finished.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{InferenceConfig, PredictionRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerHeader {
    pub run_id: String,
    pub endpoint: String,
    pub config: InferenceConfig,
    /// Study ids of the evaluated items, in prompt order.
    pub item_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LedgerEntry {
    Header(LedgerHeader),
    Prediction(PredictionRecord),
    Complete { records: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path} line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}: ledger has no header")]
    MissingHeader(PathBuf),
    #[error("ledger is incomplete: {0}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLedger {
    pub header: LedgerHeader,
    pub records: Vec<PredictionRecord>,
    pub complete: bool,
}

/// Result of reading a ledger that may have been cut off mid-write.
pub(crate) struct LoadedLedger {
    pub ledger: Option<RunLedger>,
    /// Byte length of the well-formed prefix.
    pub valid_len: u64,
    /// The well-formed prefix ends without a line terminator.
    pub needs_newline: bool,
}

pub(crate) fn load_tolerant(path: &Path) -> Result<LoadedLedger, LedgerError> {
    let text = std::fs::read_to_string(path).map_err(|source| LedgerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut header = None;
    let mut records = Vec::new();
    let mut complete = false;
    let mut valid_len = 0u64;
    let mut needs_newline = false;
    let segments: Vec<&str> = text.split_inclusive('\n').collect();
    for (i, seg) in segments.iter().enumerate() {
        let line = seg.trim_end_matches(['\n', '\r']);
        let is_last_unterminated = i + 1 == segments.len() && !seg.ends_with('\n');
        if line.trim().is_empty() {
            if !is_last_unterminated {
                valid_len += seg.len() as u64;
            }
            continue;
        }
        let entry: LedgerEntry = match serde_json::from_str(line) {
            Ok(e) => e,
            Err(_) if is_last_unterminated => {
                log::warn!("{}: ignoring truncated final line", path.display());
                break;
            }
            Err(e) => {
                return Err(LedgerError::Malformed {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        };
        let malformed = |message: &str| LedgerError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: message.to_string(),
        };
        match entry {
            LedgerEntry::Header(h) => {
                if header.is_some() {
                    return Err(malformed("second header"));
                }
                header = Some(h);
            }
            LedgerEntry::Prediction(p) => {
                if header.is_none() {
                    return Err(malformed("prediction before header"));
                }
                records.push(p);
            }
            LedgerEntry::Complete { .. } => complete = true,
        }
        valid_len += seg.len() as u64;
        needs_newline = is_last_unterminated;
    }
    let ledger = header.map(|header| RunLedger {
        header,
        records,
        complete,
    });
    Ok(LoadedLedger {
        ledger,
        valid_len,
        needs_newline,
    })
}

impl RunLedger {
    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        load_tolerant(path)?
            .ledger
            .ok_or_else(|| LedgerError::MissingHeader(path.to_path_buf()))
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.header.config.temperatures
    }

    pub fn item_ids(&self) -> &[String] {
        &self.header.item_ids
    }

    /// Every `(study_id, temperature)` pair of the header has exactly one record and nothing else.
    pub fn check_complete(&self) -> Result<(), LedgerError> {
        let ids: HashSet<&str> = self.header.item_ids.iter().map(String::as_str).collect();
        let mut seen: HashMap<(&str, u64), usize> = HashMap::new();
        for r in &self.records {
            if !ids.contains(r.study_id.as_str()) {
                return Err(LedgerError::Incomplete(format!("unknown study id {:?}", r.study_id)));
            }
            if !self
                .temperatures()
                .iter()
                .any(|t| t.to_bits() == r.temperature.to_bits())
            {
                return Err(LedgerError::Incomplete(format!(
                    "unknown temperature {}",
                    r.temperature
                )));
            }
            *seen.entry((r.study_id.as_str(), r.temperature.to_bits())).or_default() += 1;
        }
        for t in self.temperatures() {
            for id in &self.header.item_ids {
                match seen.get(&(id.as_str(), t.to_bits())).copied().unwrap_or(0) {
                    1 => {}
                    0 => return Err(LedgerError::Incomplete(format!("no record for {id:?} at T={t}"))),
                    n => return Err(LedgerError::Incomplete(format!("{n} records for {id:?} at T={t}"))),
                }
            }
        }
        if !self.complete {
            return Err(LedgerError::Incomplete("run has no completion marker".into()));
        }
        Ok(())
    }

    /// Records of one pass, in item order. Missing items are skipped.
    pub fn pass(&self, temperature: f64) -> Vec<&PredictionRecord> {
        let by_id: HashMap<&str, &PredictionRecord> = self
            .records
            .iter()
            .filter(|r| r.temperature.to_bits() == temperature.to_bits())
            .map(|r| (r.study_id.as_str(), r))
            .collect();
        self.header
            .item_ids
            .iter()
            .filter_map(|id| by_id.get(id.as_str()).copied())
            .collect()
    }

    pub fn passes(&self) -> Vec<(f64, Vec<&PredictionRecord>)> {
        self.temperatures().iter().map(|&t| (t, self.pass(t))).collect()
    }

    /// Writes the ledger in canonical order (header, passes in temperature order, marker).
    pub fn write(&self, path: &Path) -> Result<(), LedgerError> {
        let mut w = LedgerWriter::create(path)?;
        w.append(&LedgerEntry::Header(self.header.clone()))?;
        for (_, pass) in self.passes() {
            for r in pass {
                w.append(&LedgerEntry::Prediction(r.clone()))?;
            }
        }
        if self.complete {
            w.append(&LedgerEntry::Complete {
                records: self.records.len(),
            })?;
        }
        Ok(())
    }
}

/// Single writer; every entry is flushed as soon as it is appended.
pub struct LedgerWriter {
    path: PathBuf,
    file: File,
}

impl LedgerWriter {
    pub fn create(path: &Path) -> Result<Self, LedgerError> {
        let file = File::create(path).map_err(|source| LedgerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Opens for append after cutting the file back to its well-formed prefix.
    pub(crate) fn reopen(path: &Path, loaded: &LoadedLedger) -> Result<Self, LedgerError> {
        let io = |source| LedgerError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = OpenOptions::new().write(true).open(path).map_err(io)?;
        file.set_len(loaded.valid_len).map_err(io)?;
        drop(file);
        let mut file = OpenOptions::new().append(true).open(path).map_err(io)?;
        if loaded.needs_newline {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, entry: &LedgerEntry) -> Result<(), LedgerError> {
        let mut line = serde_json::to_string(entry).expect("ledger entry serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| LedgerError::Io {
                path: self.path.clone(),
                source,
            })
    }
}
