use std::collections::HashMap;
use std::path::{Path, PathBuf};

use lingo::corpus::{load_jsonl, load_text_dir, Corpus, Document};
use lingo::embed::{extend_embeddings, EmbeddingMatrix, EmbeddingSidecar, InitStrategy};
use lingo::mixture::{
    build_dpo_mixture, build_even_multilingual_mixture, build_pretrain_mixture, build_sft_mixture,
    load_preference_pairs, load_sft_examples, pack_sequences, validate_manifest, MixtureKind,
    MixtureManifest, PackSidecar, PackedDataset, PretrainOptions, ValidationReport,
};
use lingo::tokenizer::{escape_token, train_bpe};
use lingo::vocab::{extend_vocabulary, fertility, Tokenizer};
use lingo::{io, Error, Result, Tokenize};
use serde_json::{json, Value};

use crate::{Command, CorpusArgs};

pub enum Failure {
    Data(Error),
    Report(ValidationReport),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn log(msg: impl AsRef<str>) {
    eprintln!("lingo: {}", msg.as_ref());
}

fn load_docs(paths: &[PathBuf], default_lang: Option<&str>) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for p in paths {
        let before = docs.len();
        if p.is_dir() {
            let lang = default_lang.ok_or_else(|| Error::InvalidArgument {
                name: "default_lang",
                message: format!(
                    "{} is a directory; --default-lang names its language",
                    p.display()
                ),
            })?;
            for d in load_text_dir(p, lang)? {
                docs.push(d?);
            }
        } else {
            for d in load_jsonl(p, default_lang)? {
                docs.push(d?);
            }
        }
        log(format!(
            "read {} documents from {}",
            docs.len() - before,
            p.display()
        ));
    }
    Ok(docs)
}

fn corpus_docs(input: &CorpusArgs) -> Result<Vec<Document>> {
    load_docs(&input.corpus, input.default_lang.as_deref())
}

fn file_sha(path: &Path) -> Result<String> {
    io::sha256_file(path)
}

/// Manifest timestamp from `SOURCE_DATE_EPOCH`, so reruns stay byte-identical.
fn created_utc() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH")
        .ok()?
        .trim()
        .parse()
        .ok()?;
    chrono::DateTime::from_timestamp(secs, 0).map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
}

fn save_manifest(mut m: MixtureManifest, out: &Path, tokenizer: Option<&Path>) -> Result<Value> {
    m.created_utc = created_utc();
    if let Some(t) = tokenizer {
        m.tokenizer_sha256 = Some(file_sha(t)?);
    }
    m.save(out)?;
    let entries: Vec<Value> = m
        .entries
        .iter()
        .map(|e| {
            json!({
                "pool": e.pool,
                "documents": e.doc_ids.len(),
                "token_count": e.token_count,
                "pair_count": e.pair_count,
                "pool_size": e.pool_size,
                "epochs": e.epochs,
            })
        })
        .collect();
    Ok(json!({
        "manifest": out,
        "kind": m.kind,
        "ratio": m.ratio.map(|r| r.to_string()),
        "realized_ratio": m.realized_ratio(),
        "clamped": m.clamped,
        "entries": entries,
        "sha256": file_sha(out)?,
    }))
}

fn parse_ids(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse().map_err(|_| Error::InvalidArgument {
                name: "decode",
                message: format!("{t:?} is not a token id"),
            })
        })
        .collect()
}

fn inspect(path: &Path, encode: Option<&str>, decode: Option<&str>) -> Result<Value> {
    let bytes = io::read(path)?;
    if encode.is_some() || decode.is_some() {
        let tok = Tokenizer::from_json_bytes(&bytes)?;
        let ids = match (encode, decode) {
            (Some(text), _) => tok.encode(text),
            (_, Some(list)) => parse_ids(list)?,
            _ => unreachable!(),
        };
        let pieces = ids
            .iter()
            .map(|&id| tok.decode_bytes(&[id]).map(|b| escape_token(&b)))
            .collect::<Result<Vec<_>>>()?;
        return Ok(json!({
            "ids": ids,
            "tokens": pieces,
            "text": tok.decode(&ids)?,
            "count": ids.len(),
        }));
    }
    if bytes.starts_with(lingo::embed::MAGIC) {
        let m = EmbeddingMatrix::from_bytes(&bytes)?;
        return Ok(
            json!({"format": "LEMB", "rows": m.rows(), "dim": m.dim(), "sha256": io::sha256_hex(&bytes)}),
        );
    }
    if bytes.starts_with(lingo::mixture::LPAK_MAGIC) {
        let d = PackedDataset::from_bytes(&bytes)?;
        let boundaries: usize = d.sequences.iter().map(|s| s.boundaries.len()).sum();
        let carried = d.sequences.iter().filter(|s| s.carry_in).count();
        return Ok(json!({
            "format": "LPAK",
            "seq_len": d.seq_len,
            "n_seqs": d.sequences.len(),
            "tokens": d.seq_len * d.sequences.len(),
            "boundaries": boundaries,
            "carry_in_sequences": carried,
            "sha256": io::sha256_hex(&bytes),
        }));
    }
    let v: Value = serde_json::from_slice(&bytes)?;
    if v.get("model_type").is_some() {
        let tok = Tokenizer::from_json_bytes(&bytes)?;
        let base = tok.base();
        let (added, appended) = tok
            .as_extended()
            .map_or((0, 0), |e| (e.added().len(), e.appended_merges().len()));
        return Ok(json!({
            "format": "tokenizer",
            "vocab_size": tok.vocab_size(),
            "base_vocab_size": base.vocab_size(),
            "base_merges": base.merges().len(),
            "added_tokens": added,
            "appended_merges": appended,
            "sha256": io::sha256_hex(&bytes),
        }));
    }
    let m = MixtureManifest::from_json_bytes(&bytes)?;
    Ok(json!({
        "format": "manifest",
        "kind": m.kind,
        "seed": m.seed,
        "ratio": m.ratio.map(|r| r.to_string()),
        "realized_ratio": m.realized_ratio(),
        "pools": m.entries.iter().map(|e| json!({"pool": e.pool, "units": e.units(), "epochs": e.epochs})).collect::<Vec<_>>(),
        "sha256": io::sha256_hex(&bytes),
    }))
}

pub fn run(cmd: Command) -> std::result::Result<Value, Failure> {
    match cmd {
        Command::TrainBpe {
            input,
            vocab_size,
            out,
        } => {
            let docs = corpus_docs(&input)?;
            log(format!(
                "training {vocab_size}-token BPE on {} documents",
                docs.len()
            ));
            let model = train_bpe(&docs, vocab_size)?;
            model.save(&out)?;
            Ok(json!({
                "tokenizer": out,
                "vocab_size": model.vocab_size(),
                "merges": model.merges().len(),
                "sha256": file_sha(&out)?,
            }))
        }
        Command::ExtendVocab {
            base,
            input,
            n_new,
            target_vocab_budget,
            out,
        } => {
            let base = match Tokenizer::load(&base)? {
                Tokenizer::Base(m) => m,
                Tokenizer::Extended(_) => {
                    return Err(Error::InvalidArgument {
                        name: "base",
                        message: "base tokenizer already has added tokens".into(),
                    }
                    .into())
                }
            };
            let docs = corpus_docs(&input)?;
            log(format!(
                "extending {}-token vocabulary by {n_new}",
                base.vocab_size()
            ));
            let ext = extend_vocabulary(&base, &docs, n_new, target_vocab_budget)?;
            ext.save(&out)?;
            Ok(json!({
                "tokenizer": out,
                "base_vocab_size": base.vocab_size(),
                "added_tokens": ext.added().len(),
                "appended_merges": ext.appended_merges().len(),
                "vocab_size": ext.vocab_size(),
                "sha256": file_sha(&out)?,
            }))
        }
        Command::Fertility {
            tokenizer,
            input,
            mode,
            lang,
        } => {
            let tok = Tokenizer::load(&tokenizer)?;
            let mut docs = corpus_docs(&input)?;
            if let Some(l) = &lang {
                docs.retain(|d| &d.lang == l);
            }
            let report = fertility(&tok, &docs, mode)?;
            Ok(serde_json::to_value(report).map_err(Error::from)?)
        }
        Command::InitEmbeddings {
            embeddings,
            tokenizer,
            strategy,
            seed,
            gaussian_std,
            fan_in,
            fan_out,
            out,
            output_head,
            output_head_out,
        } => {
            let tok = Tokenizer::load(&tokenizer)?;
            let ext = tok.as_extended().ok_or_else(|| Error::InvalidArgument {
                name: "tokenizer",
                message: "tokenizer has no added tokens to initialize".into(),
            })?;
            let mut s = InitStrategy::new(strategy)
                .with_seed(seed)
                .with_std(gaussian_std);
            s.fan_in = fan_in;
            s.fan_out = fan_out;
            let tokenizer_sha256 = file_sha(&tokenizer)?;
            let mut written = Vec::new();
            let mut jobs = vec![(embeddings, out)];
            if let (Some(i), Some(o)) = (output_head, output_head_out) {
                jobs.push((i, o));
            }
            for (input, output) in jobs {
                let base = EmbeddingMatrix::load(&input)?;
                let m = extend_embeddings(&base, ext, &s)?;
                m.save(&output)?;
                let sidecar = EmbeddingSidecar {
                    rows: m.rows(),
                    dim: m.dim(),
                    tokenizer_sha256: tokenizer_sha256.clone(),
                };
                let sidecar_path = sidecar_path(&output);
                io::write_atomic(&sidecar_path, &io::to_json_bytes(&sidecar)?)?;
                log(format!(
                    "{} -> {} ({} rows)",
                    input.display(),
                    output.display(),
                    m.rows()
                ));
                written.push(json!({
                    "path": output,
                    "sidecar": sidecar_path,
                    "rows": m.rows(),
                    "dim": m.dim(),
                    "sha256": file_sha(&output)?,
                }));
            }
            Ok(json!({ "strategy": strategy, "seed": seed, "outputs": written }))
        }
        Command::MixPretrain {
            english,
            target,
            default_lang,
            tokenizer,
            ratio,
            seed,
            epoch_cap,
            allow_cap_clamp,
            out,
        } => {
            let tok = Tokenizer::load(&tokenizer)?;
            let en = load_docs(&english, default_lang.as_deref())?;
            let tg = load_docs(&target, default_lang.as_deref())?;
            let opts = PretrainOptions {
                ratio,
                seed,
                epoch_cap,
                allow_cap_clamp,
            };
            let m = build_pretrain_mixture(&en, &tg, &tok, &opts)?;
            if m.clamped {
                log("english pool clamped to the epoch cap; realized ratio is below the request");
            }
            Ok(save_manifest(m, &out, Some(&tokenizer))?)
        }
        Command::MixEven {
            pools,
            default_lang,
            tokenizer,
            seed,
            out,
        } => {
            let tok = Tokenizer::load(&tokenizer)?;
            let loaded = pools
                .iter()
                .map(|(name, path)| {
                    Ok((
                        name.clone(),
                        load_docs(std::slice::from_ref(path), default_lang.as_deref())?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let m = build_even_multilingual_mixture(&loaded, &tok, seed)?;
            Ok(save_manifest(m, &out, Some(&tokenizer))?)
        }
        Command::Pack {
            manifest,
            input,
            tokenizer,
            seq_len,
            seed,
            out,
        } => {
            let m = MixtureManifest::load(&manifest)?;
            let tok_sha = file_sha(&tokenizer)?;
            if let Some(want) = &m.tokenizer_sha256 {
                if want != &tok_sha {
                    return Err(Error::InvalidManifest(format!(
                        "manifest was built with tokenizer {want}, got {tok_sha}"
                    ))
                    .into());
                }
            }
            let tok = Tokenizer::load(&tokenizer)?;
            let corpus = Corpus::from_docs(corpus_docs(&input)?)?;
            let outcome = pack_sequences(&m, &corpus, &tok, seq_len, seed.unwrap_or(m.seed))?;
            for w in &outcome.warnings {
                log(w);
            }
            outcome.dataset.save(&out)?;
            let sidecar = PackSidecar {
                magic: "LPAK".into(),
                version: lingo::mixture::LPAK_VERSION,
                seq_len,
                n_seqs: outcome.dataset.sequences.len(),
                total_tokens: outcome.total_tokens,
                dropped_tail: outcome.dropped_tail,
                manifest_path: manifest.display().to_string(),
                manifest_sha256: file_sha(&manifest)?,
                lpak_sha256: file_sha(&out)?,
            };
            let sidecar_path = sidecar_path(&out);
            io::write_atomic(&sidecar_path, &io::to_json_bytes(&sidecar)?)?;
            let mut v = serde_json::to_value(&sidecar).map_err(Error::from)?;
            v["lpak"] = json!(out);
            v["sidecar"] = json!(sidecar_path);
            v["warnings"] = json!(outcome.warnings);
            Ok(v)
        }
        Command::MixSft {
            english,
            translated,
            seed,
            out,
        } => {
            let en = load_sft_examples(&english)?;
            let tr = load_sft_examples(&translated)?;
            let m = build_sft_mixture(&en, &tr, seed)?;
            Ok(save_manifest(m, &out, None)?)
        }
        Command::MixDpo {
            english,
            target,
            ratio,
            seed,
            out,
        } => {
            let en = load_preference_pairs(&english)?;
            let tg = load_preference_pairs(&target)?;
            let m = build_dpo_mixture(&en, &tg, ratio, seed)?;
            Ok(save_manifest(m, &out, None)?)
        }
        Command::Validate {
            manifest,
            corpus,
            pairs,
            default_lang,
            tokenizer,
        } => {
            let m = MixtureManifest::load(&manifest)?;
            let tok = tokenizer.as_deref().map(Tokenizer::load).transpose()?;
            let tok_ref = tok.as_ref().map(|t| t as &dyn Tokenize);
            let report = match m.kind {
                MixtureKind::Pretrain => {
                    let docs = Corpus::from_docs(load_docs(&corpus, default_lang.as_deref())?)?;
                    validate_manifest(&m, &docs, tok_ref)
                }
                MixtureKind::Dpo | MixtureKind::Sft => {
                    let mut lookup: HashMap<String, String> = HashMap::new();
                    for p in &pairs {
                        if m.kind == MixtureKind::Dpo {
                            lookup.extend(
                                load_preference_pairs(p)?
                                    .into_iter()
                                    .map(|x| (x.id, x.prompt)),
                            );
                        } else {
                            lookup.extend(
                                load_sft_examples(p)?.into_iter().map(|x| (x.id, x.prompt)),
                            );
                        }
                    }
                    validate_manifest(&m, &lookup, tok_ref)
                }
            };
            for c in report.failures() {
                log(format!("check {} failed: {}", c.name, c.detail));
            }
            if report.ok {
                Ok(serde_json::to_value(&report).map_err(Error::from)?)
            } else {
                Err(Failure::Report(report))
            }
        }
        Command::Inspect {
            path,
            encode,
            decode,
        } => Ok(inspect(&path, encode.as_deref(), decode.as_deref())?),
    }
}

fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}
