//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use lingo::corpus::{load_jsonl, Document};

pub fn desk_corpus_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/desk_corpus.jsonl")
}

/// Documents of the bundled desk corpus, optionally restricted to one language.
pub fn desk_docs(lang: Option<&str>) -> Vec<Document> {
    load_jsonl(desk_corpus_path(), None)
        .and_then(|r| r.collect::<lingo::Result<Vec<_>>>())
        .expect("bundled desk corpus")
        .into_iter()
        .filter(|d| lang.is_none_or(|l| d.lang == l))
        .collect()
}
