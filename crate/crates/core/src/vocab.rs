//! Vocabulary extension with non-overlapping target-language tokens, and
//! fertility (tokens per word) measurement.
//!
//! A target tokenizer is trained on target-language text. Its merge-created
//! tokens are visited in creation order; those already present in the base
//! vocabulary are skipped, the rest are accepted with ids `V, V+1, ...` where
//! `V` is the base vocabulary size. Every target merge whose halves and result
//! all exist in the extended vocabulary is then appended, in order, after the
//! base merges. Base ids never move.

use std::borrow::Borrow;
use std::collections::HashSet;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{segment_words, Document, SegmentationMode};
use crate::error::{Error, Result};
use crate::tokenizer::{
    escape_token, train_bpe, AddedTokenRecord, TokenId, Tokenize, TokenizerFile, TokenizerModel,
    BYTE_TOKENS,
};

/// Number of tokens added per language by default.
pub const DEFAULT_NEW_TOKENS: usize = 25_000;

/// Default size of the target tokenizer trained to harvest candidates.
pub fn default_target_budget(n_new: usize) -> usize {
    BYTE_TOKENS + 1 + 2 * n_new
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddedToken {
    pub token: Vec<u8>,
    pub id: TokenId,
    /// Base tokenization of `token`.
    pub subword_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedTokenizer {
    base: TokenizerModel,
    added: Vec<AddedToken>,
    appended: Vec<(Vec<u8>, Vec<u8>)>,
    combined: TokenizerModel,
}

impl ExtendedTokenizer {
    /// Validates and assembles an extension. `added` get ids from the base
    /// vocabulary size upward; `subword_ids` are taken from base encoding.
    pub fn new(
        base: TokenizerModel,
        added: Vec<Vec<u8>>,
        appended: Vec<(Vec<u8>, Vec<u8>)>,
    ) -> Result<Self> {
        let v = base.vocab_size() as TokenId;
        let added = added
            .into_iter()
            .enumerate()
            .map(|(i, token)| AddedToken {
                subword_ids: base.encode_bytes(&token),
                id: v + i as TokenId,
                token,
            })
            .collect();
        Self::from_records(base, added, appended)
    }

    fn from_records(
        base: TokenizerModel,
        added: Vec<AddedToken>,
        appended: Vec<(Vec<u8>, Vec<u8>)>,
    ) -> Result<Self> {
        let v = base.vocab_size();
        let mut tokens = base.tokens().to_vec();
        let mut seen = HashSet::new();
        for (i, a) in added.iter().enumerate() {
            let shown = escape_token(&a.token);
            if a.token.is_empty() || base.contains(&a.token) || !seen.insert(a.token.as_slice()) {
                return Err(Error::MalformedTokenizer(format!(
                    "added token {shown:?} overlaps the vocabulary"
                )));
            }
            if a.id as usize != v + i {
                return Err(Error::MalformedTokenizer(format!(
                    "added token {shown:?} has id {}, expected {}",
                    a.id,
                    v + i
                )));
            }
            if a.subword_ids.is_empty() {
                return Err(Error::EmptySubwords { token: shown });
            }
            if base.decode_bytes(&a.subword_ids)? != a.token {
                return Err(Error::MalformedTokenizer(format!(
                    "subword_ids of {shown:?} do not decode to the token"
                )));
            }
            tokens.push(a.token.clone());
        }
        let mut merge_ids: Vec<(TokenId, TokenId)> =
            base.merges().iter().map(|m| (m.left, m.right)).collect();
        {
            let lookup: std::collections::HashMap<&[u8], TokenId> = tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.as_slice(), i as TokenId))
                .collect();
            for (l, r) in &appended {
                let id = |b: &[u8]| {
                    lookup.get(b).copied().ok_or_else(|| {
                        Error::MalformedTokenizer(format!(
                            "appended merge references {:?}, not in vocab",
                            escape_token(b)
                        ))
                    })
                };
                merge_ids.push((id(l)?, id(r)?));
            }
        }
        let combined = TokenizerModel::from_parts(tokens, &merge_ids)?;
        Ok(ExtendedTokenizer {
            base,
            added,
            appended,
            combined,
        })
    }

    pub fn base(&self) -> &TokenizerModel {
        &self.base
    }

    pub fn added(&self) -> &[AddedToken] {
        &self.added
    }

    /// Appended merges as `(left, right)` byte strings.
    pub fn appended_merges(&self) -> &[(Vec<u8>, Vec<u8>)] {
        &self.appended
    }

    /// Base plus added tokens, base merges then appended merges.
    pub fn combined(&self) -> &TokenizerModel {
        &self.combined
    }

    pub fn to_file(&self) -> TokenizerFile {
        let records: Vec<AddedTokenRecord> = self
            .added
            .iter()
            .map(|a| AddedTokenRecord {
                token: escape_token(&a.token),
                id: a.id,
                subword_ids: a.subword_ids.clone(),
            })
            .collect();
        TokenizerFile::from_model(&self.base, &records, &self.appended)
    }

    pub fn from_file(file: &TokenizerFile) -> Result<Self> {
        let base = file.base_model()?;
        let added = file
            .added_tokens
            .iter()
            .map(|r| {
                Ok(AddedToken {
                    token: crate::tokenizer::unescape_token(&r.token)?,
                    id: r.id,
                    subword_ids: r.subword_ids.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let appended = file.merges[file.base_merge_len()..]
            .iter()
            .map(|l| TokenizerFile::split_merge(l))
            .collect::<Result<Vec<_>>>()?;
        Self::from_records(base, added, appended)
    }
}

impl Tokenize for ExtendedTokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        self.combined.encode(text)
    }

    fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        self.combined.decode_bytes(ids)
    }

    fn vocab_size(&self) -> usize {
        self.combined.vocab_size()
    }

    fn token_len(&self, id: TokenId) -> Option<usize> {
        self.combined.token_len(id)
    }
}

/// Either kind of tokenizer file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tokenizer {
    Base(TokenizerModel),
    Extended(ExtendedTokenizer),
}

impl Tokenizer {
    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file = TokenizerFile::parse(bytes)?;
        if file.added_tokens.is_empty() && file.base_merge_count.is_none() {
            Ok(Tokenizer::Base(file.base_model()?))
        } else {
            Ok(Tokenizer::Extended(ExtendedTokenizer::from_file(&file)?))
        }
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Tokenizer::Base(m) => m.to_json_bytes(),
            Tokenizer::Extended(e) => e.to_file().to_bytes(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_bytes(&crate::io::read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_json_bytes()?)
    }

    pub fn base(&self) -> &TokenizerModel {
        match self {
            Tokenizer::Base(m) => m,
            Tokenizer::Extended(e) => e.base(),
        }
    }

    pub fn as_extended(&self) -> Option<&ExtendedTokenizer> {
        match self {
            Tokenizer::Extended(e) => Some(e),
            Tokenizer::Base(_) => None,
        }
    }
}

impl Tokenize for Tokenizer {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        match self {
            Tokenizer::Base(m) => m.encode(text),
            Tokenizer::Extended(e) => e.encode(text),
        }
    }

    fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        match self {
            Tokenizer::Base(m) => m.decode_bytes(ids),
            Tokenizer::Extended(e) => e.decode_bytes(ids),
        }
    }

    fn token_len(&self, id: TokenId) -> Option<usize> {
        match self {
            Tokenizer::Base(m) => m.token_len(id),
            Tokenizer::Extended(e) => e.token_len(id),
        }
    }

    fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Base(m) => m.vocab_size(),
            Tokenizer::Extended(e) => e.vocab_size(),
        }
    }
}

impl ExtendedTokenizer {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_file().to_bytes()?)
    }
}

/// Merge-created tokens of `target` absent from `base`, in creation order.
pub fn non_overlapping_candidates<'a>(
    base: &TokenizerModel,
    target: &'a TokenizerModel,
) -> Vec<&'a [u8]> {
    let mut seen = HashSet::new();
    target
        .merges()
        .iter()
        .map(|m| target.token(m.result).expect("merge result in vocab"))
        .filter(|t| !base.contains(t) && seen.insert(*t))
        .collect()
}

/// Extends `base` with the first `n_new` non-overlapping tokens of an
/// already-trained `target` tokenizer.
pub fn extend_with_target(
    base: &TokenizerModel,
    target: &TokenizerModel,
    n_new: usize,
) -> Result<ExtendedTokenizer> {
    if n_new == 0 {
        return Err(Error::arg("n_new", "must be at least 1"));
    }
    let candidates = non_overlapping_candidates(base, target);
    if candidates.len() < n_new {
        return Err(Error::NotEnoughCandidates {
            requested: n_new,
            available: candidates.len(),
        });
    }
    let accepted: Vec<Vec<u8>> = candidates[..n_new].iter().map(|t| t.to_vec()).collect();
    let in_vocab: HashSet<&[u8]> = accepted.iter().map(Vec::as_slice).collect();
    let known = |b: &[u8]| base.contains(b) || in_vocab.contains(b);
    let appended = target
        .merges()
        .iter()
        .filter_map(|m| {
            let l = target.token(m.left)?;
            let r = target.token(m.right)?;
            let res = target.token(m.result)?;
            (known(l) && known(r) && known(res)).then(|| (l.to_vec(), r.to_vec()))
        })
        .collect();
    ExtendedTokenizer::new(base.clone(), accepted, appended)
}

/// Trains a target tokenizer of `target_vocab_budget` tokens (default
/// [`default_target_budget`]) on `target_docs` and extends `base` with
/// `n_new` of its tokens.
pub fn extend_vocabulary<I>(
    base: &TokenizerModel,
    target_docs: I,
    n_new: usize,
    target_vocab_budget: Option<usize>,
) -> Result<ExtendedTokenizer>
where
    I: IntoIterator,
    I::Item: Borrow<Document>,
{
    if n_new == 0 {
        return Err(Error::arg("n_new", "must be at least 1"));
    }
    let docs: Vec<I::Item> = target_docs.into_iter().collect();
    if docs.iter().all(|d| d.borrow().text.is_empty()) {
        return Err(Error::EmptyCorpus("target corpus has no text".into()));
    }
    let budget = target_vocab_budget.unwrap_or_else(|| default_target_budget(n_new));
    let target = train_bpe(docs.iter().map(Borrow::borrow), budget)?;
    extend_with_target(base, &target, n_new)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FertilityReport {
    pub tokens_per_word: f64,
    pub token_count: u64,
    pub word_count: u64,
    pub mode: SegmentationMode,
}

/// Average number of tokens per word over `docs`.
pub fn fertility<T, D>(model: &T, docs: &[D], mode: SegmentationMode) -> Result<FertilityReport>
where
    T: Tokenize + ?Sized,
    D: Borrow<Document> + Sync,
{
    let (token_count, word_count) = docs
        .par_iter()
        .map(|d| {
            let text = &d.borrow().text;
            let words = segment_words(text, mode);
            (tokens_touching(model, text, &words), words.len() as u64)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if word_count == 0 {
        return Err(Error::NoWords);
    }
    Ok(FertilityReport {
        tokens_per_word: token_count as f64 / word_count as f64,
        token_count,
        word_count,
        mode,
    })
}

/// Tokens of the full-text encoding whose byte span intersects a word.
fn tokens_touching<T: Tokenize + ?Sized>(model: &T, text: &str, words: &[Range<usize>]) -> u64 {
    let mut count = 0;
    let mut start = 0;
    let mut w = 0;
    for id in model.encode(text) {
        let end = start + model.token_len(id).unwrap_or(0);
        while w < words.len() && words[w].end <= start {
            w += 1;
        }
        if w < words.len() && words[w].start < end {
            count += 1;
        }
        start = end;
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub shared: usize,
    pub base_only: usize,
    pub target_only: usize,
}

pub fn overlap_report(base: &TokenizerModel, target: &TokenizerModel) -> OverlapReport {
    let shared = target.tokens().iter().filter(|t| base.contains(t)).count();
    OverlapReport {
        shared,
        base_only: base.vocab_size() - shared,
        target_only: target.vocab_size() - shared,
    }
}
