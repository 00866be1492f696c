//! Byte-fallback BPE: model, encoder, decoder and trainer.
//!
//! Ids `0..256` are always the single-byte tokens (`id == byte`), so every
//! byte string is encodable. Merge rules are kept in creation order and are
//! applied in that order: each rule fires on every left-to-right occurrence
//! of its pair before the next rule is considered.

mod format;
mod train;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;

pub use format::{
    escape_token, unescape_token, AddedTokenRecord, TokenizerFile, FORMAT_VERSION, MODEL_TYPE,
};
pub use train::{train_bpe, train_bpe_texts};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BYTE_TOKENS: usize = 256;

/// A merge rule `left + right -> result`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Merge {
    pub left: TokenId,
    pub right: TokenId,
    pub result: TokenId,
}

/// Anything that turns text into token ids and back.
pub trait Tokenize: Sync {
    fn encode(&self, text: &str) -> Vec<TokenId>;

    /// Concatenates the byte strings of `ids`. Errors on an id outside the vocabulary.
    fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>>;

    fn vocab_size(&self) -> usize;

    /// Byte length of one token, `None` for an unknown id.
    fn token_len(&self, id: TokenId) -> Option<usize> {
        self.decode_bytes(&[id]).ok().map(|b| b.len())
    }

    fn decode(&self, ids: &[TokenId]) -> Result<String> {
        let bytes = self.decode_bytes(ids)?;
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TokenizerModel {
    tokens: Vec<Vec<u8>>,
    ids: HashMap<Vec<u8>, TokenId>,
    merges: Vec<Merge>,
    // pair -> ascending ranks of every rule on that pair
    ranks: HashMap<(TokenId, TokenId), Vec<u32>>,
}

impl PartialEq for TokenizerModel {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens && self.merges == other.merges
    }
}

impl Eq for TokenizerModel {}

impl Default for TokenizerModel {
    fn default() -> Self {
        Self::bytes_only()
    }
}

impl TokenizerModel {
    /// The 256 byte tokens and no merges.
    pub fn bytes_only() -> Self {
        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        TokenizerModel {
            tokens,
            ids,
            merges: Vec::new(),
            ranks: HashMap::new(),
        }
    }

    /// Builds a model from byte-string merge pairs. Each pair's halves must
    /// already be tokens when the pair is reached; its concatenation becomes a
    /// new token unless it already exists.
    pub fn from_byte_merges<L, R>(pairs: impl IntoIterator<Item = (L, R)>) -> Result<Self>
    where
        L: AsRef<[u8]>,
        R: AsRef<[u8]>,
    {
        let mut m = Self::bytes_only();
        for (l, r) in pairs {
            let (l, r) = (l.as_ref(), r.as_ref());
            let left = m.id_of(l).ok_or_else(|| {
                Error::MalformedTokenizer(format!("merge left {:?} not in vocab", escape_token(l)))
            })?;
            let right = m.id_of(r).ok_or_else(|| {
                Error::MalformedTokenizer(format!("merge right {:?} not in vocab", escape_token(r)))
            })?;
            m.push_merge(left, right);
        }
        Ok(m)
    }

    /// Builds a model from an explicit vocabulary and merge list, checking
    /// every structural invariant.
    pub fn from_parts(tokens: Vec<Vec<u8>>, merges: &[(TokenId, TokenId)]) -> Result<Self> {
        if tokens.len() < BYTE_TOKENS {
            return Err(Error::MalformedTokenizer(format!(
                "vocab has {} tokens, at least {BYTE_TOKENS} byte tokens required",
                tokens.len()
            )));
        }
        for (b, t) in tokens.iter().take(BYTE_TOKENS).enumerate() {
            if t.as_slice() != [b as u8] {
                return Err(Error::MalformedTokenizer(format!(
                    "id {b} must be the byte token <0x{b:02X}>"
                )));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::MalformedTokenizer(format!(
                    "id {i} is an empty token"
                )));
            }
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::MalformedTokenizer(format!(
                    "token {:?} appears twice",
                    escape_token(t)
                )));
            }
        }
        let mut m = TokenizerModel {
            tokens,
            ids,
            merges: Vec::with_capacity(merges.len()),
            ranks: HashMap::new(),
        };
        for &(left, right) in merges {
            let (l, r) = (m.token(left), m.token(right));
            let (Some(l), Some(r)) = (l, r) else {
                return Err(Error::MalformedTokenizer(format!(
                    "merge ({left}, {right}) references an unknown id"
                )));
            };
            let joined = [l, r].concat();
            let result = m.id_of(&joined).ok_or_else(|| {
                Error::MalformedTokenizer(format!(
                    "merge result {:?} not in vocab",
                    escape_token(&joined)
                ))
            })?;
            m.add_rule(Merge {
                left,
                right,
                result,
            });
        }
        Ok(m)
    }

    /// Appends the rule `left + right`, creating the result token if needed.
    pub(crate) fn push_merge(&mut self, left: TokenId, right: TokenId) -> TokenId {
        let joined = [
            self.tokens[left as usize].as_slice(),
            &self.tokens[right as usize],
        ]
        .concat();
        let result = self.intern(joined);
        self.add_rule(Merge {
            left,
            right,
            result,
        });
        result
    }

    pub(crate) fn intern(&mut self, bytes: Vec<u8>) -> TokenId {
        if let Some(&id) = self.ids.get(&bytes) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.ids.insert(bytes.clone(), id);
        self.tokens.push(bytes);
        id
    }

    fn add_rule(&mut self, merge: Merge) {
        let rank = self.merges.len() as u32;
        self.ranks
            .entry((merge.left, merge.right))
            .or_default()
            .push(rank);
        self.merges.push(merge);
    }

    pub fn token(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, bytes: &[u8]) -> Option<TokenId> {
        self.ids.get(bytes).copied()
    }

    pub fn contains(&self, bytes: &[u8]) -> bool {
        self.ids.contains_key(bytes)
    }

    pub fn tokens(&self) -> &[Vec<u8>] {
        &self.tokens
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Smallest rank strictly greater than `after` (or any rank if `None`)
    /// among rules on this pair.
    fn next_rank(&self, left: TokenId, right: TokenId, after: Option<u32>) -> Option<u32> {
        let ranks = self.ranks.get(&(left, right))?;
        match after {
            None => ranks.first().copied(),
            Some(a) => {
                let i = ranks.partition_point(|&r| r <= a);
                ranks.get(i).copied()
            }
        }
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<TokenId> {
        const NONE: usize = usize::MAX;
        let n = bytes.len();
        let mut tok: Vec<TokenId> = bytes.iter().map(|&b| b as TokenId).collect();
        if n < 2 || self.merges.is_empty() {
            return tok;
        }
        let mut prev: Vec<usize> = (0..n).map(|i| if i == 0 { NONE } else { i - 1 }).collect();
        let mut next: Vec<usize> = (0..n)
            .map(|i| if i + 1 == n { NONE } else { i + 1 })
            .collect();
        let mut alive = vec![true; n];

        // (rank, position of left symbol); rules drain in rank order and
        // within a rank from left to right.
        let mut heap = BinaryHeap::new();
        for i in 0..n - 1 {
            if let Some(r) = self.next_rank(tok[i], tok[i + 1], None) {
                heap.push(Reverse((r, i)));
            }
        }
        while let Some(Reverse((rank, i))) = heap.pop() {
            if !alive[i] || next[i] == NONE {
                continue;
            }
            let j = next[i];
            let m = self.merges[rank as usize];
            if tok[i] != m.left || tok[j] != m.right {
                continue;
            }
            tok[i] = m.result;
            alive[j] = false;
            let after = next[j];
            next[i] = after;
            if after != NONE {
                prev[after] = i;
            }
            let p = prev[i];
            if p != NONE {
                if let Some(r) = self.next_rank(tok[p], tok[i], Some(rank)) {
                    heap.push(Reverse((r, p)));
                }
            }
            if after != NONE {
                if let Some(r) = self.next_rank(tok[i], tok[after], Some(rank)) {
                    heap.push(Reverse((r, i)));
                }
            }
        }
        let mut out = Vec::with_capacity(n);
        let mut i = 0;
        while i != NONE {
            out.push(tok[i]);
            i = next[i];
        }
        out
    }

    /// Canonical JSON bytes of this model (no added tokens).
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        TokenizerFile::from_model(self, &[], &[]).to_bytes()
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file = TokenizerFile::parse(bytes)?;
        if !file.added_tokens.is_empty() {
            return Err(Error::MalformedTokenizer(
                "file holds an extended tokenizer; load it as one".into(),
            ));
        }
        file.base_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_json_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_bytes(&crate::io::read(path.as_ref())?)
    }
}

impl Tokenize for TokenizerModel {
    fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_bytes(text.as_bytes())
    }

    fn decode_bytes(&self, ids: &[TokenId]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(ids.len() * 2);
        for (position, &id) in ids.iter().enumerate() {
            let t = self.token(id).ok_or(Error::UnknownTokenId {
                id,
                position,
                vocab_size: self.tokens.len(),
            })?;
            out.extend_from_slice(t);
        }
        Ok(out)
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    fn token_len(&self, id: TokenId) -> Option<usize> {
        self.token(id).map(<[u8]>::len)
    }
}
