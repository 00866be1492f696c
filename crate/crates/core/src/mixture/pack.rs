//! Fixed-length packing with document-boundary metadata.
//!
//! Documents are tokenized, concatenated into one stream without separator
//! tokens, and cut into consecutive `seq_len` blocks; the incomplete tail is
//! dropped. A document may run across blocks. Each block records the
//! in-block offsets where a document starts (never offset 0) and a
//! `carry_in` flag telling whether its first token continues a document from
//! the previous block.
//!
//! Binary layout (`LPAK`, little-endian): magic, `u32` version, `u32`
//! seq_len, `u64` n_seqs, then per sequence `u8` carry_in, `u16`
//! n_boundaries, `n_boundaries x u32` offsets, `seq_len x u32` token ids.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rng_for, MixtureKind, MixtureManifest, UnitLookup};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Tokenize};

pub const MAGIC: &[u8; 4] = b"LPAK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub ids: Vec<TokenId>,
    pub boundaries: Vec<u32>,
    pub carry_in: bool,
}

impl PackedSequence {
    /// Token ranges that each belong to a single document.
    pub fn segments(&self) -> Vec<Range<usize>> {
        let mut starts = vec![0usize];
        starts.extend(self.boundaries.iter().map(|&b| b as usize));
        let mut ends: Vec<usize> = starts[1..].to_vec();
        ends.push(self.ids.len());
        starts.into_iter().zip(ends).map(|(s, e)| s..e).collect()
    }

    /// Per-token segment index; tokens may attend only within equal indices.
    pub fn segment_ids(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.ids.len());
        for (k, seg) in self.segments().into_iter().enumerate() {
            out.extend(std::iter::repeat_n(k as u32, seg.len()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedDataset {
    pub seq_len: usize,
    pub sequences: Vec<PackedSequence>,
}

impl PackedDataset {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let seq_len = u32::try_from(self.seq_len)
            .map_err(|_| Error::MalformedPacked(format!("seq_len {} exceeds u32", self.seq_len)))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&seq_len.to_le_bytes());
        out.extend_from_slice(&(self.sequences.len() as u64).to_le_bytes());
        for (i, s) in self.sequences.iter().enumerate() {
            if s.ids.len() != self.seq_len {
                return Err(Error::MalformedPacked(format!(
                    "sequence {i} has {} tokens, expected {}",
                    s.ids.len(),
                    self.seq_len
                )));
            }
            let nb = u16::try_from(s.boundaries.len()).map_err(|_| {
                Error::MalformedPacked(format!(
                    "sequence {i} has {} boundaries, more than fit in u16",
                    s.boundaries.len()
                ))
            })?;
            out.push(s.carry_in as u8);
            out.extend_from_slice(&nb.to_le_bytes());
            for b in &s.boundaries {
                out.extend_from_slice(&b.to_le_bytes());
            }
            for id in &s.ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::MalformedPacked(
                "bad magic, expected \"LPAK\"".into(),
            ));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::MalformedPacked(format!(
                "unsupported version {version}"
            )));
        }
        let seq_len = r.u32()? as usize;
        let n = r.u64()?;
        let mut sequences = Vec::new();
        for i in 0..n {
            let carry_in = match r.take(1)?[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::MalformedPacked(format!(
                        "sequence {i}: carry_in byte {other}"
                    )))
                }
            };
            let nb = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let boundaries = (0..nb).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let mut last = 0u32;
            for &b in &boundaries {
                if b <= last || b as usize >= seq_len {
                    return Err(Error::MalformedPacked(format!(
                        "sequence {i}: boundary {b} out of order or range"
                    )));
                }
                last = b;
            }
            let ids = (0..seq_len).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            sequences.push(PackedSequence {
                ids,
                boundaries,
                carry_in,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedPacked(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(PackedDataset { seq_len, sequences })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&crate::io::read(path.as_ref())?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::MalformedPacked(format!(
                "truncated: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// JSON companion of an `LPAK` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackSidecar {
    pub magic: String,
    pub version: u32,
    pub seq_len: usize,
    pub n_seqs: usize,
    pub total_tokens: u64,
    pub dropped_tail: u64,
    pub manifest_path: String,
    pub manifest_sha256: String,
    pub lpak_sha256: String,
}

#[derive(Debug, Clone)]
pub struct PackOutcome {
    pub dataset: PackedDataset,
    /// Tokens in the concatenated stream.
    pub total_tokens: u64,
    pub dropped_tail: u64,
    /// Documents in stream order, as `(pool, id)`.
    pub doc_order: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

/// Packs a pretraining manifest. Documents from all entries are interleaved
/// by a shuffle seeded with `seed`.
pub fn pack_sequences<T, L>(
    manifest: &MixtureManifest,
    corpus: &L,
    tokenizer: &T,
    seq_len: usize,
    seed: u64,
) -> Result<PackOutcome>
where
    T: Tokenize + ?Sized,
    L: UnitLookup + ?Sized,
{
    if manifest.kind != MixtureKind::Pretrain {
        return Err(Error::InvalidManifest(format!(
            "only pretrain manifests can be packed, got {}",
            manifest.kind
        )));
    }
    if seq_len < 2 || seq_len > u32::MAX as usize {
        return Err(Error::arg("seq_len", "must be between 2 and 2^32 - 1"));
    }
    let mut items: Vec<(usize, &str)> = manifest
        .entries
        .iter()
        .enumerate()
        .flat_map(|(e, entry)| entry.doc_ids.iter().map(move |id| (e, id.as_str())))
        .collect();
    if items.is_empty() {
        return Err(Error::InvalidManifest("manifest lists no documents".into()));
    }
    items.shuffle(&mut rng_for(seed, "pack"));

    let mut unique: Vec<&str> = items.iter().map(|&(_, id)| id).collect();
    unique.sort_unstable();
    unique.dedup();
    let texts = unique
        .iter()
        .map(|&id| {
            corpus
                .text(id)
                .map(|t| (id, t))
                .ok_or_else(|| Error::MissingDocument(id.to_owned()))
        })
        .collect::<Result<Vec<_>>>()?;
    let encoded: HashMap<&str, Vec<TokenId>> = texts
        .par_iter()
        .map(|&(id, text)| (id, tokenizer.encode(text)))
        .collect();

    let mut doc_order = Vec::with_capacity(items.len());
    for &(e, id) in &items {
        doc_order.push((manifest.entries[e].pool.clone(), id.to_owned()));
    }
    let packed = pack_documents(items.iter().map(|&(_, id)| encoded[id].as_slice()), seq_len)?;
    let manifest_total: u64 = manifest.entries.iter().filter_map(|e| e.token_count).sum();
    if manifest_total != packed.total_tokens {
        return Err(Error::InvalidManifest(format!(
            "manifest records {manifest_total} tokens but documents encode to {}; \
             was it built with this tokenizer?",
            packed.total_tokens
        )));
    }
    let mut warnings = Vec::new();
    if packed.dataset.sequences.is_empty() {
        warnings.push(format!(
            "only {} tokens, fewer than seq_len {seq_len}; no sequences emitted",
            packed.total_tokens
        ));
    }
    Ok(PackOutcome {
        dataset: packed.dataset,
        total_tokens: packed.total_tokens,
        dropped_tail: packed.dropped_tail,
        doc_order,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct PackedStream {
    pub dataset: PackedDataset,
    pub total_tokens: u64,
    pub dropped_tail: u64,
}

/// Concatenates already-tokenized documents in the given order and cuts the
/// stream into `seq_len` blocks. Empty documents contribute nothing.
pub fn pack_documents<'a, I>(docs: I, seq_len: usize) -> Result<PackedStream>
where
    I: IntoIterator<Item = &'a [TokenId]>,
{
    if seq_len < 2 || seq_len > u32::MAX as usize {
        return Err(Error::arg("seq_len", "must be between 2 and 2^32 - 1"));
    }
    let mut stream: Vec<TokenId> = Vec::new();
    let mut starts: Vec<usize> = Vec::new();
    for toks in docs {
        if toks.is_empty() {
            continue;
        }
        starts.push(stream.len());
        stream.extend_from_slice(toks);
    }
    let n_blocks = stream.len() / seq_len;
    let mut sequences = Vec::with_capacity(n_blocks);
    let mut next_start = 0usize;
    for b in 0..n_blocks {
        let lo = b * seq_len;
        let hi = lo + seq_len;
        while next_start < starts.len() && starts[next_start] < lo {
            next_start += 1;
        }
        let carry_in = starts.get(next_start) != Some(&lo);
        let boundaries = starts[next_start..]
            .iter()
            .take_while(|&&s| s < hi)
            .filter(|&&s| s > lo)
            .map(|&s| (s - lo) as u32)
            .collect();
        sequences.push(PackedSequence {
            ids: stream[lo..hi].to_vec(),
            boundaries,
            carry_in,
        });
    }
    let total = stream.len();
    Ok(PackedStream {
        dataset: PackedDataset { seq_len, sequences },
        total_tokens: total as u64,
        dropped_tail: (total - n_blocks * seq_len) as u64,
    })
}
