//! Vocabulary extension toolkit for adapting byte-level BPE language models
//! to new languages: corpus loading, BPE training and encoding, vocabulary
//! extension, embedding initialization, and training-data mixtures.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod io;
pub mod mixture;
pub mod tokenizer;
pub mod vocab;

pub use corpus::{Corpus, CorpusStats, Document, SegmentationMode};
pub use embed::{EmbeddingMatrix, InitKind, InitStrategy};
pub use error::{Error, Result};
pub use mixture::{MixtureKind, MixtureManifest, Ratio};
pub use tokenizer::{Merge, TokenId, Tokenize, TokenizerModel};
pub use vocab::{AddedToken, ExtendedTokenizer, Tokenizer};
