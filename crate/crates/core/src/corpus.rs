//! Corpus ingestion, word segmentation and corpus statistics.
//!
//! Two on-disk sources are supported: JSONL files (one object per line with a
//! required `"text"` field and optional `"id"` / `"lang"`), and directories of
//! `.txt` files where each file is one document.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::{Add, AddAssign, Range};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub lang: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
        }
    }
}

/// How words are delimited when counting them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentationMode {
    /// Runs of Unicode whitespace separate words.
    Whitespace,
    /// Unicode word boundaries; only segments with a letter or digit count.
    #[default]
    Unicode,
}

impl SegmentationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentationMode::Whitespace => "whitespace",
            SegmentationMode::Unicode => "unicode",
        }
    }
}

impl fmt::Display for SegmentationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(SegmentationMode::Whitespace),
            "unicode" => Ok(SegmentationMode::Unicode),
            other => Err(Error::arg(
                "mode",
                format!("expected whitespace or unicode, got {other:?}"),
            )),
        }
    }
}

/// Byte spans of the words in `text`, non-overlapping and in increasing order.
pub fn segment_words(text: &str, mode: SegmentationMode) -> Vec<Range<usize>> {
    match mode {
        SegmentationMode::Whitespace => {
            let mut spans = Vec::new();
            let mut start = None;
            for (i, c) in text.char_indices() {
                match (c.is_whitespace(), start) {
                    (true, Some(s)) => {
                        spans.push(s..i);
                        start = None;
                    }
                    (false, None) => start = Some(i),
                    _ => {}
                }
            }
            if let Some(s) = start {
                spans.push(s..text.len());
            }
            spans
        }
        SegmentationMode::Unicode => text
            .split_word_bound_indices()
            .filter(|(_, seg)| seg.chars().any(char::is_alphanumeric))
            .map(|(i, seg)| i..i + seg.len())
            .collect(),
    }
}

pub fn count_words(text: &str, mode: SegmentationMode) -> usize {
    match mode {
        SegmentationMode::Whitespace => text.split_whitespace().count(),
        SegmentationMode::Unicode => text
            .split_word_bounds()
            .filter(|seg| seg.chars().any(char::is_alphanumeric))
            .count(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangStats {
    pub doc_count: u64,
    pub word_count: u64,
    pub byte_count: u64,
}

impl AddAssign for LangStats {
    fn add_assign(&mut self, rhs: Self) {
        self.doc_count += rhs.doc_count;
        self.word_count += rhs.word_count;
        self.byte_count += rhs.byte_count;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub doc_count: u64,
    pub word_count: u64,
    pub byte_count: u64,
    pub per_lang: BTreeMap<String, LangStats>,
}

impl CorpusStats {
    pub fn record(&mut self, doc: &Document, mode: SegmentationMode) {
        let s = LangStats {
            doc_count: 1,
            word_count: count_words(&doc.text, mode) as u64,
            byte_count: doc.text.len() as u64,
        };
        self.doc_count += s.doc_count;
        self.word_count += s.word_count;
        self.byte_count += s.byte_count;
        *self.per_lang.entry(doc.lang.clone()).or_default() += s;
    }
}

impl AddAssign for CorpusStats {
    fn add_assign(&mut self, rhs: Self) {
        self.doc_count += rhs.doc_count;
        self.word_count += rhs.word_count;
        self.byte_count += rhs.byte_count;
        for (lang, s) in rhs.per_lang {
            *self.per_lang.entry(lang).or_default() += s;
        }
    }
}

impl Add for CorpusStats {
    type Output = CorpusStats;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

pub fn corpus_stats<I>(docs: I, mode: SegmentationMode) -> CorpusStats
where
    I: IntoIterator,
    I::Item: Borrow<Document>,
{
    let mut stats = CorpusStats::default();
    for doc in docs {
        stats.record(doc.borrow(), mode);
    }
    stats
}

#[derive(Deserialize)]
struct JsonlRecord {
    text: Option<serde_json::Value>,
    id: Option<String>,
    lang: Option<String>,
}

/// Streaming reader over a JSONL corpus file.
pub struct JsonlReader {
    path: PathBuf,
    file_name: String,
    reader: BufReader<File>,
    default_lang: Option<String>,
    line_no: usize,
    offset: u64,
    seen: HashSet<String>,
    buf: Vec<u8>,
    done: bool,
}

/// Opens `path` as a JSONL corpus. Lines without `"lang"` take `default_lang`;
/// if that is `None` such lines are an error.
pub fn load_jsonl(path: impl AsRef<Path>, default_lang: Option<&str>) -> Result<JsonlReader> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(JsonlReader {
        path,
        file_name,
        reader: BufReader::new(file),
        default_lang: default_lang.map(str::to_owned),
        line_no: 0,
        offset: 0,
        seen: HashSet::new(),
        buf: Vec::new(),
        done: false,
    })
}

impl JsonlReader {
    fn line_error(&self, message: impl Into<String>) -> Error {
        Error::CorpusLine {
            path: self.path.clone(),
            line: self.line_no,
            message: message.into(),
        }
    }

    fn parse_line(&mut self, line_start: u64) -> Result<Option<Document>> {
        let raw = self.buf.strip_suffix(b"\n").unwrap_or(&self.buf);
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|e| Error::InvalidUtf8 {
            path: self.path.clone(),
            offset: line_start + e.valid_up_to() as u64,
        })?;
        if line.trim().is_empty() {
            return Ok(None);
        }
        let record: JsonlRecord = serde_json::from_str(line)
            .map_err(|e| self.line_error(format!("malformed JSON: {e}")))?;
        let text = match record.text {
            Some(serde_json::Value::String(s)) => s,
            Some(_) => return Err(self.line_error("\"text\" is not a string")),
            None => return Err(self.line_error("missing \"text\" field")),
        };
        let lang = match record.lang.or_else(|| self.default_lang.clone()) {
            Some(l) if !l.is_empty() => l,
            _ => return Err(self.line_error("missing \"lang\" and no default language given")),
        };
        let id = record
            .id
            .unwrap_or_else(|| format!("{}:{}", self.file_name, self.line_no));
        if !self.seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        Ok(Some(Document { id, text, lang }))
    }
}

impl Iterator for JsonlReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            let line_start = self.offset;
            let n = match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(n) => n,
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
            };
            if n == 0 {
                self.done = true;
                break;
            }
            self.offset += n as u64;
            self.line_no += 1;
            match self.parse_line(line_start) {
                Ok(Some(doc)) => return Some(Ok(doc)),
                Ok(None) => continue,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

/// Streaming reader over a directory of `.txt` files.
pub struct TextDirReader {
    root: PathBuf,
    files: std::vec::IntoIter<(String, PathBuf)>,
    lang: String,
}

/// Every `.txt` file under `path` (recursively) becomes one document whose id
/// is its `/`-separated path relative to `path`. Files are yielded in
/// lexicographic order of that id.
pub fn load_text_dir(path: impl AsRef<Path>, lang: &str) -> Result<TextDirReader> {
    let root = path.as_ref().to_path_buf();
    if lang.is_empty() {
        return Err(Error::arg("lang", "language tag must be non-empty"));
    }
    if !root.is_dir() {
        return Err(Error::io(
            &root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(&root) {
        let entry = entry.map_err(|e| {
            let p = e
                .path()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| root.clone());
            Error::io(p, e.into())
        })?;
        if !entry.file_type().is_file() || entry.path().extension().is_none_or(|x| x != "txt") {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(&root)
            .unwrap_or(entry.path())
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.push((rel, entry.path().to_path_buf()));
    }
    files.sort();
    Ok(TextDirReader {
        root,
        files: files.into_iter(),
        lang: lang.to_owned(),
    })
}

impl TextDirReader {
    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl Iterator for TextDirReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        let (id, path) = self.files.next()?;
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) => return Some(Err(Error::io(path, e))),
        };
        Some(match String::from_utf8(bytes) {
            Ok(text) => Ok(Document {
                id,
                text,
                lang: self.lang.clone(),
            }),
            Err(e) => Err(Error::InvalidUtf8 {
                path,
                offset: e.utf8_error().valid_up_to() as u64,
            }),
        })
    }
}

/// In-memory corpus with lookup by document id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_docs<I: IntoIterator<Item = Document>>(docs: I) -> Result<Self> {
        let mut c = Corpus::new();
        for d in docs {
            c.insert(d)?;
        }
        Ok(c)
    }

    /// Collects a fallible document stream.
    pub fn from_stream<I: IntoIterator<Item = Result<Document>>>(docs: I) -> Result<Self> {
        let mut c = Corpus::new();
        for d in docs {
            c.insert(d?)?;
        }
        Ok(c)
    }

    pub fn insert(&mut self, doc: Document) -> Result<()> {
        if self.index.contains_key(&doc.id) {
            return Err(Error::DuplicateId(doc.id));
        }
        self.index.insert(doc.id.clone(), self.docs.len());
        self.docs.push(doc);
        Ok(())
    }

    pub fn extend(&mut self, other: Corpus) -> Result<()> {
        for d in other.docs {
            self.insert(d)?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Documents tagged with `lang`, in corpus order.
    pub fn by_lang<'a>(&'a self, lang: &'a str) -> impl Iterator<Item = &'a Document> + 'a {
        self.docs.iter().filter(move |d| d.lang == lang)
    }
}
