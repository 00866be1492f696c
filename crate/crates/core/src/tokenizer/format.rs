//! JSON tokenizer file.
//!
//! ```json
//! {
//!   "version": 1,
//!   "model_type": "bpe-bytefallback",
//!   "vocab": {"<0x00>": 0, ...},
//!   "merges": ["left right", ...],
//!   "added_tokens": [{"token": "...", "id": 300, "subword_ids": [..]}]
//! }
//! ```
//!
//! Token strings keep printable ASCII other than space and `<` verbatim and
//! write every other byte as `<0xHH>`, so the mapping is injective and a
//! merge line always splits on its single space. `vocab` lists only the base
//! vocabulary; extended files also carry `base_merge_count`, the number of
//! leading merges that belong to the base model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{TokenId, TokenizerModel};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_TYPE: &str = "bpe-bytefallback";

pub fn escape_token(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x21..=0x7e).contains(&b) && b != b'<' {
            s.push(b as char);
        } else {
            s.push_str(&format!("<0x{b:02X}>"));
        }
    }
    s
}

pub fn unescape_token(s: &str) -> Result<Vec<u8>> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'<' {
            let esc = bytes
                .get(i..i + 6)
                .filter(|e| e.starts_with(b"<0x") && e[5] == b'>')
                .and_then(|e| std::str::from_utf8(&e[3..5]).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| Error::MalformedTokenizer(format!("bad escape in token {s:?}")))?;
            out.push(esc);
            i += 6;
        } else if (0x21..=0x7e).contains(&b) {
            out.push(b);
            i += 1;
        } else {
            return Err(Error::MalformedTokenizer(format!(
                "unescaped byte 0x{b:02X} in token {s:?}"
            )));
        }
    }
    if out.is_empty() {
        return Err(Error::MalformedTokenizer("empty token string".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddedTokenRecord {
    pub token: String,
    pub id: TokenId,
    pub subword_ids: Vec<TokenId>,
}

/// On-disk shape of a tokenizer. Field order here is the serialized order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerFile {
    pub version: serde_json::Value,
    pub model_type: String,
    pub vocab: BTreeMap<String, TokenId>,
    pub merges: Vec<String>,
    pub added_tokens: Vec<AddedTokenRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_merge_count: Option<usize>,
}

impl TokenizerFile {
    /// `appended` are merges over the base-plus-added vocabulary given as
    /// `(left, right)` byte strings.
    pub fn from_model(
        base: &TokenizerModel,
        added: &[AddedTokenRecord],
        appended: &[(Vec<u8>, Vec<u8>)],
    ) -> Self {
        let vocab = base
            .tokens()
            .iter()
            .enumerate()
            .map(|(i, t)| (escape_token(t), i as TokenId))
            .collect();
        let mut merges: Vec<String> = base
            .merges()
            .iter()
            .map(|m| {
                format!(
                    "{} {}",
                    escape_token(&base.tokens()[m.left as usize]),
                    escape_token(&base.tokens()[m.right as usize])
                )
            })
            .collect();
        let base_merge_count = (!added.is_empty()).then_some(merges.len());
        merges.extend(
            appended
                .iter()
                .map(|(l, r)| format!("{} {}", escape_token(l), escape_token(r))),
        );
        TokenizerFile {
            version: FORMAT_VERSION.into(),
            model_type: MODEL_TYPE.into(),
            vocab,
            merges,
            added_tokens: added.to_vec(),
            base_merge_count,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        crate::io::to_json_bytes(self)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let file: TokenizerFile =
            serde_json::from_slice(bytes).map_err(|e| Error::MalformedTokenizer(e.to_string()))?;
        let version_ok = match &file.version {
            serde_json::Value::Number(n) => n.as_u64() == Some(FORMAT_VERSION as u64),
            serde_json::Value::String(s) => s == "1",
            _ => false,
        };
        if !version_ok {
            let v = match &file.version {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            return Err(Error::UnsupportedVersion(v));
        }
        if file.model_type != MODEL_TYPE {
            return Err(Error::MalformedTokenizer(format!(
                "model_type {:?}, expected {MODEL_TYPE:?}",
                file.model_type
            )));
        }
        if let Some(n) = file.base_merge_count {
            if n > file.merges.len() {
                return Err(Error::MalformedTokenizer(format!(
                    "base_merge_count {n} exceeds {} merges",
                    file.merges.len()
                )));
            }
        }
        Ok(file)
    }

    /// Decoded base vocabulary, indexed by id.
    pub fn base_tokens(&self) -> Result<Vec<Vec<u8>>> {
        let mut tokens: Vec<Option<Vec<u8>>> = vec![None; self.vocab.len()];
        for (s, &id) in &self.vocab {
            let slot = tokens.get_mut(id as usize).ok_or_else(|| {
                Error::MalformedTokenizer(format!(
                    "id {id} of {s:?} is outside dense range 0..{}",
                    self.vocab.len()
                ))
            })?;
            if slot.is_some() {
                return Err(Error::MalformedTokenizer(format!("id {id} used twice")));
            }
            *slot = Some(unescape_token(s)?);
        }
        // every slot is filled: n distinct ids in 0..n
        Ok(tokens.into_iter().map(Option::unwrap).collect())
    }

    pub fn split_merge(line: &str) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) => Ok((unescape_token(l)?, unescape_token(r)?)),
            _ => Err(Error::MalformedTokenizer(format!(
                "bad merge line {line:?}"
            ))),
        }
    }

    /// Number of merges that belong to the base model.
    pub fn base_merge_len(&self) -> usize {
        self.base_merge_count.unwrap_or(self.merges.len())
    }

    pub fn base_model(&self) -> Result<TokenizerModel> {
        let tokens = self.base_tokens()?;
        let lookup: std::collections::HashMap<&[u8], TokenId> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_slice(), i as TokenId))
            .collect();
        let mut merges = Vec::with_capacity(self.base_merge_len());
        for line in &self.merges[..self.base_merge_len()] {
            let (l, r) = Self::split_merge(line)?;
            let id = |b: &[u8]| {
                lookup.get(b).copied().ok_or_else(|| {
                    Error::MalformedTokenizer(format!(
                        "merge {line:?} references {:?}, not in vocab",
                        escape_token(b)
                    ))
                })
            };
            merges.push((id(&l)?, id(&r)?));
        }
        TokenizerModel::from_parts(tokens, &merges)
    }
}
