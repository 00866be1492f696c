//! Greedy BPE training over whole documents.
//!
//! Pair counts include overlapping occurrences and never cross a document
//! boundary. Each step merges the pair with the highest count; equal counts
//! go to the lexicographically smaller `(left bytes, right bytes)`. Training
//! stops at `vocab_size` tokens or when no pair occurs at least twice.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::{TokenId, TokenizerModel, BYTE_TOKENS};
use crate::corpus::Document;
use crate::error::{Error, Result};

const NONE: u32 = u32::MAX;

type Pair = (TokenId, TokenId);

#[derive(PartialEq, Eq)]
struct Candidate {
    count: i64,
    pair: Pair,
    left: Vec<u8>,
    right: Vec<u8>,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.left.cmp(&self.left))
            .then_with(|| other.right.cmp(&self.right))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Trainer {
    model: TokenizerModel,
    tok: Vec<TokenId>,
    prev: Vec<u32>,
    next: Vec<u32>,
    alive: Vec<bool>,
    counts: HashMap<Pair, i64>,
    positions: HashMap<Pair, Vec<u32>>,
    heap: BinaryHeap<Candidate>,
}

impl Trainer {
    fn new(docs: &[&[u8]]) -> Self {
        let total: usize = docs.iter().map(|d| d.len()).sum();
        let mut tok = Vec::with_capacity(total);
        let mut prev = Vec::with_capacity(total);
        let mut next = Vec::with_capacity(total);
        for d in docs {
            let base = tok.len() as u32;
            for (i, &b) in d.iter().enumerate() {
                tok.push(b as TokenId);
                prev.push(if i == 0 { NONE } else { base + i as u32 - 1 });
                next.push(if i + 1 == d.len() {
                    NONE
                } else {
                    base + i as u32 + 1
                });
            }
        }
        let mut t = Trainer {
            model: TokenizerModel::bytes_only(),
            alive: vec![true; tok.len()],
            tok,
            prev,
            next,
            counts: HashMap::new(),
            positions: HashMap::new(),
            heap: BinaryHeap::new(),
        };
        for i in 0..t.tok.len() {
            let j = t.next[i];
            if j != NONE {
                let pair = (t.tok[i], t.tok[j as usize]);
                *t.counts.entry(pair).or_default() += 1;
                t.positions.entry(pair).or_default().push(i as u32);
            }
        }
        let pairs: Vec<(Pair, i64)> = t.counts.iter().map(|(&p, &c)| (p, c)).collect();
        for (pair, count) in pairs {
            t.push_candidate(pair, count);
        }
        t
    }

    fn push_candidate(&mut self, pair: Pair, count: i64) {
        let left = self.model.tokens()[pair.0 as usize].clone();
        let right = self.model.tokens()[pair.1 as usize].clone();
        self.heap.push(Candidate {
            count,
            pair,
            left,
            right,
        });
    }

    fn count(&self, pair: Pair) -> i64 {
        self.counts.get(&pair).copied().unwrap_or(0)
    }

    fn dec(&mut self, pair: Pair) {
        if let Some(c) = self.counts.get_mut(&pair) {
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&pair);
            }
        }
    }

    fn inc(&mut self, pair: Pair, pos: u32, touched: &mut Vec<Pair>) {
        *self.counts.entry(pair).or_default() += 1;
        self.positions.entry(pair).or_default().push(pos);
        touched.push(pair);
    }

    /// Highest-count live pair, discarding or refreshing stale heap entries.
    fn best(&mut self) -> Option<(Pair, i64)> {
        while let Some(c) = self.heap.pop() {
            let current = self.count(c.pair);
            if current == c.count {
                return Some((c.pair, current));
            }
            if current > 0 {
                self.heap.push(Candidate {
                    count: current,
                    ..c
                });
            }
        }
        None
    }

    fn merge(&mut self, pair: Pair) {
        let (x, y) = pair;
        let z = self.model.push_merge(x, y);
        let mut positions = self.positions.remove(&pair).unwrap_or_default();
        positions.sort_unstable();
        positions.dedup();
        let mut touched = Vec::new();
        for i in positions {
            let iu = i as usize;
            if !self.alive[iu] || self.tok[iu] != x {
                continue;
            }
            let j = self.next[iu];
            if j == NONE || self.tok[j as usize] != y {
                continue;
            }
            let p = self.prev[iu];
            let n = self.next[j as usize];
            if p != NONE {
                self.dec((self.tok[p as usize], x));
            }
            if n != NONE {
                self.dec((y, self.tok[n as usize]));
            }
            self.dec(pair);
            self.tok[iu] = z;
            self.alive[j as usize] = false;
            self.next[iu] = n;
            if n != NONE {
                self.prev[n as usize] = i;
            }
            if p != NONE {
                self.inc((self.tok[p as usize], z), p, &mut touched);
            }
            if n != NONE {
                self.inc((z, self.tok[n as usize]), i, &mut touched);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for p in touched {
            let c = self.count(p);
            if c > 0 {
                self.push_candidate(p, c);
            }
        }
    }
}

fn check_vocab_size(vocab_size: usize) -> Result<()> {
    if vocab_size <= BYTE_TOKENS {
        return Err(Error::VocabSizeTooSmall {
            requested: vocab_size,
            minimum: BYTE_TOKENS + 1,
        });
    }
    Ok(())
}

/// Trains on raw document texts.
pub fn train_bpe_texts<S: AsRef<str>>(texts: &[S], vocab_size: usize) -> Result<TokenizerModel> {
    check_vocab_size(vocab_size)?;
    let docs: Vec<&[u8]> = texts.iter().map(|t| t.as_ref().as_bytes()).collect();
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyCorpus("no text to train on".into()));
    }
    let mut t = Trainer::new(&docs);
    while t.model.tokens().len() < vocab_size {
        let Some((pair, count)) = t.best() else { break };
        if count < 2 {
            break;
        }
        t.merge(pair);
    }
    Ok(t.model)
}

pub fn train_bpe<I>(docs: I, vocab_size: usize) -> Result<TokenizerModel>
where
    I: IntoIterator,
    I::Item: Borrow<Document>,
{
    check_vocab_size(vocab_size)?;
    let docs: Vec<I::Item> = docs.into_iter().collect();
    let texts: Vec<&str> = docs.iter().map(|d| d.borrow().text.as_str()).collect();
    train_bpe_texts(&texts, vocab_size)
}
