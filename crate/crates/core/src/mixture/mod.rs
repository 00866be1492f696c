//! Seeded training-data mixtures and fixed-length packing.
//!
//! Pretraining mixtures are measured in tokens of the supplied tokenizer and
//! anchored on the target-language pool: all of it is used once, and English
//! documents are drawn (reshuffling per epoch) until the requested
//! `english:target` ratio is met, up to an epoch cap. Alignment mixtures are
//! measured in examples. Every sampling step draws from a ChaCha20 stream
//! keyed by `(seed, label)`, so a manifest is a pure function of its inputs.

mod alignment;
mod pack;
mod validate;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use alignment::{
    load_preference_pairs, load_sft_examples, Keyed, Origin, PreferencePair, SftExample,
};
pub use pack::{
    pack_documents, pack_sequences, PackOutcome, PackSidecar, PackedDataset, PackedSequence,
    PackedStream, MAGIC as LPAK_MAGIC, VERSION as LPAK_VERSION,
};
pub use validate::{validate_manifest, Check, UnitLookup, ValidationReport};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenize;

pub const DEFAULT_EPOCH_CAP: f64 = 4.0;
pub const DEFAULT_SEQ_LEN: usize = 4096;
pub const DEFAULT_TOLERANCE: f64 = 0.01;

pub const ENGLISH_POOL: &str = "english";
pub const TARGET_POOL: &str = "target";
pub const TRANSLATED_POOL: &str = "translated";

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `english:target` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub english: u64,
    pub target: u64,
}

impl Ratio {
    pub const PRETRAIN: Ratio = Ratio::new(1, 3);
    pub const SFT: Ratio = Ratio::new(1, 1);
    pub const DPO: Ratio = Ratio::new(10, 1);

    pub const fn new(english: u64, target: u64) -> Self {
        Ratio { english, target }
    }

    pub fn value(self) -> f64 {
        self.english as f64 / self.target as f64
    }

    fn check(self) -> Result<()> {
        if self.english == 0 || self.target == 0 {
            return Err(Error::arg("ratio", "both ratio units must be positive"));
        }
        Ok(())
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.english, self.target)
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::arg(
                "ratio",
                format!("expected A:B with positive integers, got {s:?}"),
            )
        };
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let r = Ratio::new(
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        r.check().map_err(|_| bad())?;
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixtureKind {
    Pretrain,
    Sft,
    Dpo,
}

impl fmt::Display for MixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixtureKind::Pretrain => "pretrain",
            MixtureKind::Sft => "sft",
            MixtureKind::Dpo => "dpo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pool: String,
    /// Sampled ids in order; ids repeat when a pool is cycled.
    pub doc_ids: Vec<String>,
    pub epochs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_count: Option<u64>,
    /// Size of the whole pool in the same unit (tokens or pairs).
    pub pool_size: u64,
}

impl ManifestEntry {
    pub fn units(&self) -> u64 {
        self.token_count.or(self.pair_count).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureManifest {
    pub seed: u64,
    pub kind: MixtureKind,
    /// `None` for equal-share multilingual mixtures.
    pub ratio: Option<Ratio>,
    pub entries: Vec<ManifestEntry>,
    /// Interleaved `[entry, position]` order for alignment mixtures.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub order: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch_cap: Option<f64>,
    #[serde(default)]
    pub clamped: bool,
    pub tolerance: f64,
    pub created_utc: Option<String>,
    pub tool_version: String,
    pub tokenizer_sha256: Option<String>,
}

impl MixtureManifest {
    fn new(
        seed: u64,
        kind: MixtureKind,
        ratio: Option<Ratio>,
        entries: Vec<ManifestEntry>,
    ) -> Self {
        MixtureManifest {
            seed,
            kind,
            ratio,
            entries,
            order: Vec::new(),
            epoch_cap: None,
            clamped: false,
            tolerance: DEFAULT_TOLERANCE,
            created_utc: None,
            tool_version: TOOL_VERSION.to_owned(),
            tokenizer_sha256: None,
        }
    }

    pub fn entry(&self, pool: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.pool == pool)
    }

    pub fn total_units(&self) -> u64 {
        self.entries.iter().map(ManifestEntry::units).sum()
    }

    /// English units over target units, when both pools are present.
    pub fn realized_ratio(&self) -> Option<f64> {
        let en = self.entry(ENGLISH_POOL)?.units() as f64;
        let other = self
            .entries
            .iter()
            .find(|e| e.pool != ENGLISH_POOL)?
            .units() as f64;
        (other > 0.0).then(|| en / other)
    }

    /// Alignment items in interleaved order as `(pool, id)`.
    pub fn ordered_ids(&self) -> impl Iterator<Item = (&str, &str)> {
        self.order.iter().map(|&[e, i]| {
            let entry = &self.entries[e];
            (entry.pool.as_str(), entry.doc_ids[i].as_str())
        })
    }

    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        crate::io::to_json_bytes(self)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::InvalidManifest(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_json_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_bytes(&crate::io::read(path.as_ref())?)
    }
}

/// Deterministic generator for one sampling purpose.
pub(crate) fn rng_for(seed: u64, label: &str) -> ChaCha20Rng {
    let digest = crate::io::sha256_hex(label.as_bytes());
    let stream = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn shuffled_indices(n: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

pub(crate) fn token_counts<T: Tokenize + ?Sized>(tokenizer: &T, docs: &[Document]) -> Vec<u64> {
    docs.par_iter()
        .map(|d| tokenizer.encode(&d.text).len() as u64)
        .collect()
}

/// Draws whole documents from successive seeded shuffles of a pool until
/// the running total is as close as possible to `required`, never
/// exceeding `limit` units. Once the next document would overshoot by more
/// than it helps, the rest of the current pass is scanned for documents that
/// still bring the total closer, and sampling stops.
struct Filler<'a> {
    lens: &'a [u64],
    required: u64,
    limit: u64,
    taken: Vec<usize>,
    total: u64,
}

impl Filler<'_> {
    fn improves(&self, len: u64) -> bool {
        let after = self.total + len;
        after <= self.limit && after.abs_diff(self.required) < self.total.abs_diff(self.required)
    }

    fn take(&mut self, i: usize) {
        self.taken.push(i);
        self.total += self.lens[i];
    }
}

fn sample_tokens(
    lens: &[u64],
    required: u64,
    limit: u64,
    rng: &mut ChaCha20Rng,
) -> (Vec<usize>, u64) {
    let mut f = Filler {
        lens,
        required,
        limit,
        taken: Vec::new(),
        total: 0,
    };
    let pool: u64 = lens.iter().sum();
    if pool == 0 || required == 0 {
        return (Vec::new(), 0);
    }
    let mut finishing = false;
    while !finishing {
        for i in shuffled_indices(lens.len(), rng) {
            if f.total >= f.required {
                return (f.taken, f.total);
            }
            if f.improves(lens[i]) {
                f.take(i);
            } else if lens[i] > 0 {
                finishing = true;
            }
        }
    }
    (f.taken, f.total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainOptions {
    pub ratio: Ratio,
    pub seed: u64,
    pub epoch_cap: f64,
    /// Clamp the English requirement to the cap instead of failing.
    pub allow_cap_clamp: bool,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            ratio: Ratio::PRETRAIN,
            seed: 0,
            epoch_cap: DEFAULT_EPOCH_CAP,
            allow_cap_clamp: false,
        }
    }
}

/// English-plus-target pretraining mixture. The target pool is consumed
/// exactly once; English tokens are scaled to `ratio`.
pub fn build_pretrain_mixture<T: Tokenize + ?Sized>(
    english_docs: &[Document],
    target_docs: &[Document],
    tokenizer: &T,
    opts: &PretrainOptions,
) -> Result<MixtureManifest> {
    opts.ratio.check()?;
    if opts.epoch_cap.is_nan() || opts.epoch_cap <= 0.0 {
        return Err(Error::arg("epoch_cap", "must be positive"));
    }
    let target_lens = token_counts(tokenizer, target_docs);
    let target_tokens: u64 = target_lens.iter().sum();
    if target_tokens == 0 {
        return Err(Error::EmptyCorpus("target pool has no tokens".into()));
    }
    let mut target_order =
        shuffled_indices(target_docs.len(), &mut rng_for(opts.seed, TARGET_POOL));
    target_order.retain(|&i| target_lens[i] > 0);

    let english_lens = token_counts(tokenizer, english_docs);
    let english_pool: u64 = english_lens.iter().sum();
    let mut required =
        ((target_tokens as u128 * opts.ratio.english as u128) / opts.ratio.target as u128) as u64;
    if english_pool == 0 {
        return Err(Error::InsufficientPool {
            pool: ENGLISH_POOL.into(),
            required: required as usize,
            available: 0,
        });
    }
    let required_epochs = required as f64 / english_pool as f64;
    let cap_tokens = (opts.epoch_cap * english_pool as f64).floor() as u64;
    let mut clamped = false;
    if required_epochs > opts.epoch_cap {
        if !opts.allow_cap_clamp {
            return Err(Error::EpochCapExceeded {
                pool: ENGLISH_POOL.into(),
                required: required_epochs,
                cap: opts.epoch_cap,
            });
        }
        required = cap_tokens;
        clamped = true;
    }
    let (taken, english_tokens) = sample_tokens(
        &english_lens,
        required,
        cap_tokens,
        &mut rng_for(opts.seed, ENGLISH_POOL),
    );

    let entries = vec![
        ManifestEntry {
            pool: ENGLISH_POOL.into(),
            doc_ids: taken.iter().map(|&i| english_docs[i].id.clone()).collect(),
            epochs: english_tokens as f64 / english_pool as f64,
            token_count: Some(english_tokens),
            pair_count: None,
            pool_size: english_pool,
        },
        ManifestEntry {
            pool: TARGET_POOL.into(),
            doc_ids: target_order
                .iter()
                .map(|&i| target_docs[i].id.clone())
                .collect(),
            epochs: 1.0,
            token_count: Some(target_tokens),
            pair_count: None,
            pool_size: target_tokens,
        },
    ];
    let mut m = MixtureManifest::new(opts.seed, MixtureKind::Pretrain, Some(opts.ratio), entries);
    m.epoch_cap = Some(opts.epoch_cap);
    m.clamped = clamped;
    Ok(m)
}

/// Equal token share per language: every pool contributes (as nearly as
/// whole documents allow) the token count of the smallest pool, one epoch at most.
pub fn build_even_multilingual_mixture<T: Tokenize + ?Sized>(
    pools: &[(String, Vec<Document>)],
    tokenizer: &T,
    seed: u64,
) -> Result<MixtureManifest> {
    if pools.len() < 2 {
        return Err(Error::arg(
            "pools",
            "at least two language pools are required",
        ));
    }
    let mut names = std::collections::HashSet::new();
    for (name, _) in pools {
        if !names.insert(name.as_str()) {
            return Err(Error::arg("pools", format!("pool {name:?} given twice")));
        }
    }
    let lens: Vec<Vec<u64>> = pools
        .iter()
        .map(|(_, d)| token_counts(tokenizer, d))
        .collect();
    let totals: Vec<u64> = lens.iter().map(|l| l.iter().sum()).collect();
    if let Some(i) = totals.iter().position(|&t| t == 0) {
        return Err(Error::EmptyCorpus(format!(
            "pool {:?} has no tokens",
            pools[i].0
        )));
    }
    let share = *totals.iter().min().expect("at least two pools");
    let entries = pools
        .iter()
        .zip(&lens)
        .zip(&totals)
        .map(|(((name, docs), lens), &total)| {
            let mut rng = rng_for(seed, name);
            let (taken, tokens) = sample_tokens(lens, share, total, &mut rng);
            ManifestEntry {
                pool: name.clone(),
                doc_ids: taken.iter().map(|&i| docs[i].id.clone()).collect(),
                epochs: tokens as f64 / total as f64,
                token_count: Some(tokens),
                pair_count: None,
                pool_size: total,
            }
        })
        .collect();
    let mut m = MixtureManifest::new(seed, MixtureKind::Pretrain, None, entries);
    m.epoch_cap = Some(1.0);
    Ok(m)
}

fn sample_pairs<K: Keyed>(pool_name: &str, items: &[K], n: usize, seed: u64) -> ManifestEntry {
    let mut idx = shuffled_indices(items.len(), &mut rng_for(seed, pool_name));
    idx.truncate(n);
    ManifestEntry {
        pool: pool_name.into(),
        doc_ids: idx.iter().map(|&i| items[i].key().to_owned()).collect(),
        epochs: if items.is_empty() {
            0.0
        } else {
            n as f64 / items.len() as f64
        },
        token_count: None,
        pair_count: Some(n as u64),
        pool_size: items.len() as u64,
    }
}

fn interleave(entries: &[ManifestEntry], seed: u64) -> Vec<[usize; 2]> {
    let mut order: Vec<[usize; 2]> = entries
        .iter()
        .enumerate()
        .flat_map(|(e, entry)| (0..entry.doc_ids.len()).map(move |i| [e, i]))
        .collect();
    order.shuffle(&mut rng_for(seed, "order"));
    order
}

/// 1:1 SFT mixture: the larger pool is downsampled to the smaller one's size.
pub fn build_sft_mixture<A: Keyed, B: Keyed>(
    english: &[A],
    translated: &[B],
    seed: u64,
) -> Result<MixtureManifest> {
    for (name, len) in [
        (ENGLISH_POOL, english.len()),
        (TRANSLATED_POOL, translated.len()),
    ] {
        if len == 0 {
            return Err(Error::EmptyCorpus(format!("{name} pool is empty")));
        }
    }
    let n = english.len().min(translated.len());
    let entries = vec![
        sample_pairs(ENGLISH_POOL, english, n, seed),
        sample_pairs(TRANSLATED_POOL, translated, n, seed),
    ];
    let mut m = MixtureManifest::new(seed, MixtureKind::Sft, Some(Ratio::SFT), entries);
    m.order = interleave(&m.entries, seed);
    Ok(m)
}

/// Preference mixture keeping every English pair and downsampling the
/// target pool to `floor(|english| * target / english)` pairs. Never upsamples.
pub fn build_dpo_mixture<A: Keyed, B: Keyed>(
    english: &[A],
    target: &[B],
    ratio: Ratio,
    seed: u64,
) -> Result<MixtureManifest> {
    ratio.check()?;
    if english.is_empty() {
        return Err(Error::EmptyCorpus("english pool is empty".into()));
    }
    if target.is_empty() {
        return Err(Error::EmptyCorpus("target pool is empty".into()));
    }
    let required =
        ((english.len() as u128 * ratio.target as u128) / ratio.english as u128) as usize;
    if required > target.len() {
        return Err(Error::InsufficientPool {
            pool: TARGET_POOL.into(),
            required,
            available: target.len(),
        });
    }
    let entries = vec![
        sample_pairs(ENGLISH_POOL, english, english.len(), seed),
        sample_pairs(TARGET_POOL, target, required, seed),
    ];
    let mut m = MixtureManifest::new(seed, MixtureKind::Dpo, Some(ratio), entries);
    m.order = interleave(&m.entries, seed);
    Ok(m)
}

/// Id lookup over several document slices.
pub fn index_docs<'a>(
    docs: impl IntoIterator<Item = &'a Document>,
) -> HashMap<&'a str, &'a Document> {
    docs.into_iter().map(|d| (d.id.as_str(), d)).collect()
}
