//! `lingo` command-line entry point.
//!
//! Every subcommand prints exactly one JSON object on stdout. Progress goes
//! to stderr. Exit status: 0 success, 1 usage error, 2 data error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lingo::corpus::SegmentationMode;
use lingo::embed::InitKind;
use lingo::mixture::Ratio;

#[derive(Parser, Debug)]
#[command(
    name = "lingo",
    version,
    about = "Tokenizer extension, embedding initialization and data mixtures"
)]
pub struct Cli {
    /// Worker threads for parallel stages (output never depends on this).
    #[arg(long, global = true, env = "LINGO_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// JSONL file, or a directory of .txt files (one document per file). Repeatable.
    #[arg(long = "corpus", required = true)]
    pub corpus: Vec<PathBuf>,
    /// Language for JSONL lines without "lang" and for .txt directories.
    #[arg(long)]
    pub default_lang: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a byte-fallback BPE tokenizer.
    TrainBpe {
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extend a base tokenizer with non-overlapping target-language tokens.
    ExtendVocab {
        /// Base tokenizer JSON.
        #[arg(long)]
        base: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value_t = lingo::vocab::DEFAULT_NEW_TOKENS)]
        n_new: usize,
        /// Target tokenizer size; defaults to 257 + 2 * n_new.
        #[arg(long)]
        target_vocab_budget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average tokens per word.
    Fertility {
        #[arg(long)]
        tokenizer: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, default_value = "unicode")]
        mode: SegmentationMode,
        /// Only documents with this language tag.
        #[arg(long)]
        lang: Option<String>,
    },
    /// Append rows for added tokens to an embedding matrix.
    InitEmbeddings {
        /// Base embedding matrix (LEMB).
        #[arg(long)]
        embeddings: PathBuf,
        /// Extended tokenizer JSON.
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value = "avg_subwords")]
        strategy: InitKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = lingo::embed::DEFAULT_GAUSSIAN_STD)]
        gaussian_std: f64,
        #[arg(long)]
        fan_in: Option<usize>,
        #[arg(long)]
        fan_out: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Output-head matrix to extend with the same strategy.
        #[arg(long, requires = "output_head_out")]
        output_head: Option<PathBuf>,
        #[arg(long, requires = "output_head")]
        output_head_out: Option<PathBuf>,
    },
    /// English + target pretraining mixture measured in tokens.
    MixPretrain {
        #[arg(long, required = true)]
        english: Vec<PathBuf>,
        #[arg(long, required = true)]
        target: Vec<PathBuf>,
        #[arg(long)]
        default_lang: Option<String>,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value = "1:3")]
        ratio: Ratio,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = lingo::mixture::DEFAULT_EPOCH_CAP)]
        epoch_cap: f64,
        /// Clamp English to the epoch cap instead of failing.
        #[arg(long)]
        allow_cap_clamp: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Equal token share for every language pool.
    MixEven {
        /// NAME=PATH, repeatable.
        #[arg(long = "pool", required = true, value_parser = parse_pool)]
        pools: Vec<(String, PathBuf)>,
        #[arg(long)]
        default_lang: Option<String>,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pack a pretraining manifest into fixed-length sequences (LPAK).
    Pack {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value_t = lingo::mixture::DEFAULT_SEQ_LEN)]
        seq_len: usize,
        /// Shuffle seed; defaults to the manifest seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// 1:1 mixture of English and translated SFT examples.
    MixSft {
        #[arg(long)]
        english: PathBuf,
        #[arg(long)]
        translated: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// English-anchored preference-pair mixture.
    MixDpo {
        #[arg(long)]
        english: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value = "10:1")]
        ratio: Ratio,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check a manifest against its inputs.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Pretraining corpora (JSONL or .txt directories).
        #[arg(long)]
        corpus: Vec<PathBuf>,
        /// Alignment inputs (JSONL pairs or SFT examples).
        #[arg(long)]
        pairs: Vec<PathBuf>,
        #[arg(long)]
        default_lang: Option<String>,
        /// Recompute token counts with this tokenizer.
        #[arg(long)]
        tokenizer: Option<PathBuf>,
    },
    /// Describe an artifact, or encode text with a tokenizer.
    Inspect {
        /// Tokenizer JSON, LEMB, LPAK or manifest.
        path: PathBuf,
        /// Encode this text (PATH must be a tokenizer).
        #[arg(long)]
        encode: Option<String>,
        /// Decode comma-separated ids (PATH must be a tokenizer).
        #[arg(long, conflicts_with = "encode")]
        decode: Option<String>,
    },
}

fn parse_pool(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_owned(), path.into()))
        }
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("lingo: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(out) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&out).expect("serializable output")
            );
            ExitCode::SUCCESS
        }
        Err(commands::Failure::Data(e)) => {
            eprintln!("lingo: {e}");
            let body = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string(), "details": e.details() }
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&body).expect("serializable error")
            );
            ExitCode::from(2)
        }
        Err(commands::Failure::Report(report)) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable report")
            );
            ExitCode::from(2)
        }
    }
}
