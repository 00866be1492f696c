//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use lingo::corpus::{load_jsonl, Document};
use lingo::mixture::PackedSequence;
use lingo::TokenId;
use rand::Rng;

pub type Bytes = Vec<u8>;

pub fn desk_corpus_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/desk_corpus.jsonl")
}

pub fn desk_corpus() -> Vec<Document> {
    load_jsonl(desk_corpus_path(), None)
        .expect("desk corpus present")
        .collect::<lingo::Result<Vec<_>>>()
        .expect("desk corpus parses")
}

pub fn by_lang(docs: &[Document], lang: &str) -> Vec<Document> {
    docs.iter().filter(|d| d.lang == lang).cloned().collect()
}

fn merge_pass(seq: &[Bytes], left: &[u8], right: &[u8]) -> Vec<Bytes> {
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == left && seq[i + 1] == right {
            out.push([left, right].concat());
            i += 2;
        } else {
            out.push(seq[i].clone());
            i += 1;
        }
    }
    out
}

/// Textbook BPE training: recount every adjacent pair from scratch at each
/// step, take the most frequent (ties to the smaller byte pair), stop at
/// `vocab_size` distinct tokens or when nothing occurs twice.
pub fn brute_train(texts: &[&[u8]], vocab_size: usize) -> Vec<(Bytes, Bytes)> {
    let mut seqs: Vec<Vec<Bytes>> = texts
        .iter()
        .map(|t| t.iter().map(|&b| vec![b]).collect())
        .collect();
    let mut vocab: BTreeSet<Bytes> = (0..=255u8).map(|b| vec![b]).collect();
    let mut rules = Vec::new();
    while vocab.len() < vocab_size {
        let mut counts: BTreeMap<(Bytes, Bytes), usize> = BTreeMap::new();
        for s in &seqs {
            for w in s.windows(2) {
                *counts.entry((w[0].clone(), w[1].clone())).or_default() += 1;
            }
        }
        let Some(best) = counts.values().copied().max() else {
            break;
        };
        if best < 2 {
            break;
        }
        // BTreeMap iterates in ascending key order, so the first hit is the tie winner
        let (pair, _) = counts.into_iter().find(|(_, c)| *c == best).unwrap();
        for s in seqs.iter_mut() {
            *s = merge_pass(s, &pair.0, &pair.1);
        }
        vocab.insert([pair.0.as_slice(), pair.1.as_slice()].concat());
        rules.push(pair);
    }
    rules
}

/// Applies each rule in order to the whole sequence, left to right.
pub fn brute_encode(rules: &[(Bytes, Bytes)], text: &[u8]) -> Vec<Bytes> {
    let mut seq: Vec<Bytes> = text.iter().map(|&b| vec![b]).collect();
    for (l, r) in rules {
        seq = merge_pass(&seq, l, r);
    }
    seq
}

/// Random mixed-script string: ASCII, Latin-1, Arabic, Thai, CJK, emoji and
/// arbitrary scalar values.
pub fn fuzz_string(rng: &mut impl Rng, max_chars: usize) -> String {
    const RANGES: &[(u32, u32)] = &[
        (0x20, 0x7e),
        (0x00, 0x1f),
        (0xa0, 0xff),
        (0x0600, 0x06ff),
        (0x0e00, 0x0e7f),
        (0x0400, 0x04ff),
        (0x4e00, 0x9fff),
        (0x3040, 0x30ff),
        (0x1f300, 0x1f6ff),
        (0x1f900, 0x1f9ff),
        (0xfe00, 0xfe0f),
        (0x0300, 0x036f),
    ];
    let n = rng.random_range(0..=max_chars);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.05) {
                return rng.random::<char>();
            }
            let (lo, hi) = RANGES[rng.random_range(0..RANGES.len())];
            char::from_u32(rng.random_range(lo..=hi)).unwrap_or('\u{fffd}')
        })
        .collect()
}

/// Expected blocks for a stream built from `docs` in order: cut into
/// `seq_len` pieces, tail dropped, document starts recorded per block.
pub fn brute_pack(docs: &[Vec<TokenId>], seq_len: usize) -> (Vec<PackedSequence>, u64) {
    let mut stream = Vec::new();
    let mut starts = BTreeSet::new();
    for d in docs.iter().filter(|d| !d.is_empty()) {
        starts.insert(stream.len());
        stream.extend_from_slice(d);
    }
    let blocks = stream.len() / seq_len;
    let seqs = (0..blocks)
        .map(|b| {
            let lo = b * seq_len;
            PackedSequence {
                ids: stream[lo..lo + seq_len].to_vec(),
                boundaries: (lo + 1..lo + seq_len)
                    .filter(|p| starts.contains(p))
                    .map(|p| (p - lo) as u32)
                    .collect(),
                carry_in: !starts.contains(&lo),
            }
        })
        .collect();
    (seqs, (stream.len() - blocks * seq_len) as u64)
}

/// Rebuilds documents from packed blocks: a block starting with `carry_in`
/// continues the previous document, every other segment starts a new one.
pub fn reconstruct(seqs: &[PackedSequence]) -> Vec<Vec<TokenId>> {
    let mut docs: Vec<Vec<TokenId>> = Vec::new();
    for s in seqs {
        let mut cuts = vec![0usize];
        cuts.extend(s.boundaries.iter().map(|&b| b as usize));
        cuts.push(s.ids.len());
        for (k, w) in cuts.windows(2).enumerate() {
            let piece = &s.ids[w[0]..w[1]];
            if k == 0 && s.carry_in {
                docs.last_mut()
                    .expect("carry_in on first block")
                    .extend_from_slice(piece);
            } else {
                docs.push(piece.to_vec());
            }
        }
    }
    docs
}

/// First `n` tokens of the concatenation, split back at document borders.
pub fn truncate_docs(docs: &[Vec<TokenId>], mut n: usize) -> Vec<Vec<TokenId>> {
    let mut out = Vec::new();
    for d in docs.iter().filter(|d| !d.is_empty()) {
        if n == 0 {
            break;
        }
        let take = d.len().min(n);
        out.push(d[..take].to_vec());
        n -= take;
    }
    out
}

pub fn ulp_distance(a: f32, b: f32) -> u32 {
    if a == b {
        return 0;
    }
    let key = |x: f32| {
        let bits = x.to_bits() as i32;
        if bits < 0 {
            i32::MIN.wrapping_sub(bits) as i64
        } else {
            bits as i64
        }
    };
    (key(a) - key(b)).unsigned_abs() as u32
}
