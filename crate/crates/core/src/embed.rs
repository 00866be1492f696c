//! Embedding rows for added tokens.
//!
//! New rows are appended after the base rows, which are copied bit for bit.
//! Four initializations are supported:
//!
//! * `gaussian`: i.i.d. normal with mean 0 and standard deviation `gaussian_std`.
//! * `xavier_uniform`: i.i.d. uniform on `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
//! * `avg_all`: the mean of every base row.
//! * `avg_subwords`: the mean of the base rows the token decomposes into.
//!
//! Random rows draw from a ChaCha20 stream selected by the token id, so the
//! result does not depend on thread count or row order.
//!
//! File layout (`LEMB`): magic, `u32` version, `u64` rows, `u64` dim, then
//! `rows * dim` little-endian `f32` in row-major order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{escape_token, Tokenize};
use crate::vocab::{AddedToken, ExtendedTokenizer};

pub const MAGIC: &[u8; 4] = b"LEMB";
pub const VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 + 8;

pub const DEFAULT_GAUSSIAN_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{dim} matrix needs {} values, got {}",
                rows.saturating_mul(dim),
                data.len()
            )));
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} values, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                row: i / self.dim.max(1),
                col: i % self.dim.max(1),
            }),
            None => Ok(()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN as usize + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let actual = bytes.len() as u64;
        if actual < HEADER_LEN {
            return Err(Error::TruncatedEmbedding {
                expected: HEADER_LEN,
                actual,
            });
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::MalformedEmbedding(format!(
                "bad magic {:?}, expected \"LEMB\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::MalformedEmbedding(format!(
                "unsupported version {version}"
            )));
        }
        let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let expected = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| {
                Error::MalformedEmbedding(format!("{rows}x{dim} overflows the file size range"))
            })?;
        if actual < expected {
            return Err(Error::TruncatedEmbedding { expected, actual });
        }
        if actual > expected {
            return Err(Error::MalformedEmbedding(format!(
                "{} trailing bytes after {rows}x{dim} payload",
                actual - expected
            )));
        }
        let data = bytes[HEADER_LEN as usize..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows as usize, dim as usize, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&crate::io::read(path.as_ref())?)
    }
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    m.save(path)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::load(path)
}

/// JSON companion written next to an embedding file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub rows: usize,
    pub dim: usize,
    pub tokenizer_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    XavierUniform,
    AvgAll,
    AvgSubwords,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Gaussian => "gaussian",
            InitKind::XavierUniform => "xavier_uniform",
            InitKind::AvgAll => "avg_all",
            InitKind::AvgSubwords => "avg_subwords",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(InitKind::Gaussian),
            "xavier_uniform" => Ok(InitKind::XavierUniform),
            "avg_all" => Ok(InitKind::AvgAll),
            "avg_subwords" => Ok(InitKind::AvgSubwords),
            other => Err(Error::arg(
                "strategy",
                format!("unknown strategy {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitStrategy {
    pub kind: InitKind,
    pub gaussian_std: f64,
    pub seed: u64,
    /// Overrides the extended vocabulary size as the Xavier fan-in.
    pub fan_in: Option<usize>,
    /// Overrides the embedding dimension as the Xavier fan-out.
    pub fan_out: Option<usize>,
}

impl InitStrategy {
    pub fn new(kind: InitKind) -> Self {
        InitStrategy {
            kind,
            gaussian_std: DEFAULT_GAUSSIAN_STD,
            seed: 0,
            fan_in: None,
            fan_out: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_std(mut self, std: f64) -> Self {
        self.gaussian_std = std;
        self
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn row_rng(seed: u64, token_id: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(token_id as u64);
    rng
}

/// Appends one row per entry of `added` to `base`.
pub fn extend_with_added(
    base: &EmbeddingMatrix,
    added: &[AddedToken],
    strategy: &InitStrategy,
) -> Result<EmbeddingMatrix> {
    base.check_finite()?;
    let dim = base.dim;
    let total_rows = base.rows + added.len();
    for (i, a) in added.iter().enumerate() {
        if a.id as usize != base.rows + i {
            return Err(Error::DimensionMismatch(format!(
                "added token {:?} has id {}, expected row {}",
                escape_token(&a.token),
                a.id,
                base.rows + i
            )));
        }
    }

    let new_rows: Vec<Vec<f32>> = match strategy.kind {
        InitKind::Gaussian => {
            if !(strategy.gaussian_std > 0.0 && strategy.gaussian_std.is_finite()) {
                return Err(Error::arg("gaussian_std", "must be positive and finite"));
            }
            let normal = Normal::new(0.0, strategy.gaussian_std)
                .map_err(|e| Error::arg("gaussian_std", e.to_string()))?;
            added
                .par_iter()
                .map(|a| {
                    let mut rng = row_rng(strategy.seed, a.id);
                    (0..dim).map(|_| normal.sample(&mut rng) as f32).collect()
                })
                .collect()
        }
        InitKind::XavierUniform => {
            let fan_in = strategy.fan_in.unwrap_or(total_rows);
            let fan_out = strategy.fan_out.unwrap_or(dim);
            if fan_in + fan_out == 0 {
                return Err(Error::arg("fan_in", "fan_in + fan_out must be positive"));
            }
            let bound = xavier_bound(fan_in, fan_out);
            added
                .par_iter()
                .map(|a| {
                    let mut rng = row_rng(strategy.seed, a.id);
                    (0..dim)
                        .map(|_| loop {
                            let v = rng.random_range(-bound..bound) as f32;
                            if (v as f64).abs() < bound {
                                break v;
                            }
                        })
                        .collect()
                })
                .collect()
        }
        InitKind::AvgAll => {
            if base.rows == 0 {
                return Err(Error::DimensionMismatch(
                    "avg_all needs at least one base row".into(),
                ));
            }
            let mean = mean_of_rows(base, 0..base.rows);
            vec![mean; added.len()]
        }
        InitKind::AvgSubwords => {
            for a in added {
                if a.subword_ids.is_empty() {
                    return Err(Error::EmptySubwords {
                        token: escape_token(&a.token),
                    });
                }
                if let Some(&bad) = a.subword_ids.iter().find(|&&s| s as usize >= base.rows) {
                    return Err(Error::DimensionMismatch(format!(
                        "subword id {bad} of {:?} is not a base row",
                        escape_token(&a.token)
                    )));
                }
            }
            added
                .par_iter()
                .map(|a| mean_of_rows(base, a.subword_ids.iter().map(|&s| s as usize)))
                .collect()
        }
    };

    let mut data = Vec::with_capacity(total_rows * dim);
    data.extend_from_slice(&base.data);
    for r in new_rows {
        data.extend_from_slice(&r);
    }
    EmbeddingMatrix::new(total_rows, dim, data)
}

fn mean_of_rows(m: &EmbeddingMatrix, rows: impl IntoIterator<Item = usize>) -> Vec<f32> {
    let mut acc = vec![0f64; m.dim];
    let mut n = 0usize;
    for r in rows {
        for (a, &v) in acc.iter_mut().zip(m.row(r)) {
            *a += v as f64;
        }
        n += 1;
    }
    acc.into_iter().map(|s| (s / n as f64) as f32).collect()
}

/// Extends `base` (one row per base token of `ext`) with rows for the added tokens.
pub fn extend_embeddings(
    base: &EmbeddingMatrix,
    ext: &ExtendedTokenizer,
    strategy: &InitStrategy,
) -> Result<EmbeddingMatrix> {
    if base.rows != ext.base().vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, base vocabulary has {} tokens",
            base.rows,
            ext.base().vocab_size()
        )));
    }
    extend_with_added(base, ext.added(), strategy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn added(id: u32, subwords: &[u32]) -> AddedToken {
        AddedToken {
            token: format!("t{id}").into_bytes(),
            id,
            subword_ids: subwords.to_vec(),
        }
    }

    #[test]
    fn avg_subwords_definition() {
        let base =
            EmbeddingMatrix::from_rows(&[vec![1., 0., 0., 0.], vec![0., 1., 0., 0.]]).unwrap();
        let out = extend_with_added(
            &base,
            &[added(2, &[0, 1])],
            &InitStrategy::new(InitKind::AvgSubwords),
        )
        .unwrap();
        assert_eq!(out.row(2), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(out.row(0), base.row(0));
    }

    #[test]
    fn avg_all_definition() {
        let base = EmbeddingMatrix::from_rows(&[vec![1., 1.], vec![3., 3.]]).unwrap();
        let out = extend_with_added(
            &base,
            &[added(2, &[0]), added(3, &[1])],
            &InitStrategy::new(InitKind::AvgAll),
        )
        .unwrap();
        assert_eq!(out.row(2), &[2.0, 2.0]);
        assert_eq!(out.row(3), out.row(2));
    }

    #[test]
    fn xavier_bound_example() {
        let a = xavier_bound(57_000, 4096);
        assert!((a - 0.009910).abs() < 5e-7, "{a}");
    }

    #[test]
    fn xavier_values_within_bound() {
        let base = EmbeddingMatrix::new(10, 16, vec![0.0; 160]).unwrap();
        let new: Vec<_> = (10..40).map(|i| added(i, &[0])).collect();
        let out =
            extend_with_added(&base, &new, &InitStrategy::new(InitKind::XavierUniform)).unwrap();
        let bound = xavier_bound(40, 16);
        assert!(out.data()[160..].iter().all(|&v| (v as f64).abs() < bound));
    }

    #[test]
    fn stochastic_rows_depend_on_seed_only() {
        let base = EmbeddingMatrix::new(2, 8, vec![0.0; 16]).unwrap();
        let new = [added(2, &[0]), added(3, &[1])];
        let s = InitStrategy::new(InitKind::Gaussian).with_seed(7);
        let a = extend_with_added(&base, &new, &s).unwrap();
        let b = extend_with_added(&base, &new, &s).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = extend_with_added(&base, &new, &s.with_seed(8)).unwrap();
        assert_ne!(a.data(), c.data());
        // row 3 does not depend on row 2 being generated first
        let only3 = extend_with_added(
            &EmbeddingMatrix::new(3, 8, a.data()[..24].to_vec()).unwrap(),
            &new[1..],
            &s,
        )
        .unwrap();
        assert_eq!(only3.row(3), a.row(3));
    }

    #[test]
    fn error_paths() {
        let base = EmbeddingMatrix::new(2, 2, vec![0.0, 1.0, f32::NAN, 0.0]).unwrap();
        assert!(matches!(
            extend_with_added(&base, &[], &InitStrategy::new(InitKind::AvgAll)),
            Err(Error::NonFinite { row: 1, col: 0 })
        ));
        let base = EmbeddingMatrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            extend_with_added(
                &base,
                &[added(2, &[])],
                &InitStrategy::new(InitKind::AvgSubwords)
            ),
            Err(Error::EmptySubwords { .. })
        ));
        assert!(extend_with_added(
            &base,
            &[added(2, &[9])],
            &InitStrategy::new(InitKind::AvgSubwords)
        )
        .is_err());
        assert!(extend_with_added(
            &base,
            &[added(5, &[0])],
            &InitStrategy::new(InitKind::AvgAll)
        )
        .is_err());
        assert!(extend_with_added(
            &base,
            &[added(2, &[0])],
            &InitStrategy::new(InitKind::Gaussian).with_std(0.0)
        )
        .is_err());
    }

    #[test]
    fn lemb_round_trip_and_truncation() {
        let m =
            EmbeddingMatrix::new(10, 8, (0..80).map(|i| i as f32 * 0.5 - 3.0).collect()).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"LEMB");
        assert_eq!(EmbeddingMatrix::from_bytes(&bytes).unwrap(), m);

        let nine_rows = &bytes[..bytes.len() - 8 * 4];
        match EmbeddingMatrix::from_bytes(nine_rows) {
            Err(Error::TruncatedEmbedding { expected, actual }) => {
                assert_eq!(expected, 24 + 320);
                assert_eq!(actual, 24 + 288);
            }
            other => panic!("{other:?}"),
        }
        let mid_row = &bytes[..bytes.len() - 3];
        assert!(matches!(
            EmbeddingMatrix::from_bytes(mid_row),
            Err(Error::TruncatedEmbedding { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bad),
            Err(Error::MalformedEmbedding(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            EmbeddingMatrix::from_bytes(&bad),
            Err(Error::MalformedEmbedding(_))
        ));
        let mut huge = bytes.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(EmbeddingMatrix::from_bytes(&huge).is_err());
    }
}
