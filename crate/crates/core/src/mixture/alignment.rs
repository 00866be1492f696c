//! Alignment-data records (SFT examples and preference pairs) and their JSONL loaders.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Human,
    MachineTranslated,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Human => "human",
            Origin::MachineTranslated => "machine_translated",
        })
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "human" => Ok(Origin::Human),
            "machine_translated" => Ok(Origin::MachineTranslated),
            other => Err(Error::arg("origin", format!("unknown origin {other:?}"))),
        }
    }
}

/// Items that a manifest can reference by id.
pub trait Keyed {
    fn key(&self) -> &str;
}

impl Keyed for crate::corpus::Document {
    fn key(&self) -> &str {
        &self.id
    }
}

impl Keyed for String {
    fn key(&self) -> &str {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub lang: String,
    pub origin: Origin,
}

impl PreferencePair {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(Error::InvalidPair {
                id: self.id.clone(),
                message: m.to_owned(),
            })
        };
        if self.prompt.is_empty() || self.chosen.is_empty() || self.rejected.is_empty() {
            return bad("prompt, chosen and rejected must be non-empty");
        }
        if self.lang.is_empty() {
            return bad("lang must be non-empty");
        }
        if self.chosen == self.rejected {
            return bad("chosen and rejected are identical");
        }
        Ok(())
    }
}

impl Keyed for PreferencePair {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub id: String,
    pub prompt: String,
    pub response: String,
    pub lang: Option<String>,
    pub origin: Option<Origin>,
}

impl Keyed for SftExample {
    fn key(&self) -> &str {
        &self.id
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    prompt: Option<String>,
    chosen: Option<String>,
    rejected: Option<String>,
    response: Option<String>,
    lang: Option<String>,
    origin: Option<Origin>,
}

fn read_records(path: &Path) -> Result<Vec<(usize, String, RawRecord)>> {
    let bytes = crate::io::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::InvalidUtf8 {
        path: path.to_path_buf(),
        offset: e.valid_up_to() as u64,
    })?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| Error::CorpusLine {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("malformed record: {e}"),
        })?;
        let id = rec
            .id
            .clone()
            .unwrap_or_else(|| format!("{file_name}:{line_no}"));
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        out.push((line_no, id, rec));
    }
    Ok(out)
}

fn missing(path: &Path, line: usize, field: &str) -> Error {
    Error::CorpusLine {
        path: path.to_path_buf(),
        line,
        message: format!("missing {field:?} field"),
    }
}

/// JSONL with fields `prompt`, `chosen`, `rejected`, `lang`, `origin` (and optional `id`).
pub fn load_preference_pairs(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>> {
    let path = path.as_ref();
    read_records(path)?
        .into_iter()
        .map(|(line, id, r)| {
            let pair = PreferencePair {
                id,
                prompt: r.prompt.ok_or_else(|| missing(path, line, "prompt"))?,
                chosen: r.chosen.ok_or_else(|| missing(path, line, "chosen"))?,
                rejected: r.rejected.ok_or_else(|| missing(path, line, "rejected"))?,
                lang: r.lang.ok_or_else(|| missing(path, line, "lang"))?,
                origin: r.origin.ok_or_else(|| missing(path, line, "origin"))?,
            };
            pair.validate()?;
            Ok(pair)
        })
        .collect()
}

/// JSONL with `prompt` and `response` (or `chosen`), optional `id`, `lang`, `origin`.
pub fn load_sft_examples(path: impl AsRef<Path>) -> Result<Vec<SftExample>> {
    let path = path.as_ref();
    read_records(path)?
        .into_iter()
        .map(|(line, id, r)| {
            Ok(SftExample {
                id,
                prompt: r.prompt.ok_or_else(|| missing(path, line, "prompt"))?,
                response: r
                    .response
                    .or(r.chosen)
                    .ok_or_else(|| missing(path, line, "response"))?,
                lang: r.lang,
                origin: r.origin,
            })
        })
        .collect()
}
