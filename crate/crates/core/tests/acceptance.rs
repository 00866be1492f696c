//! Acceptance suite. Runs every headline criterion at its stated tolerance
//! and prints one PASS/FAIL line per criterion; exits non-zero on any failure.

mod common;

use std::time::{Duration, Instant};

use common::*;
use lingo::corpus::{Document, SegmentationMode};
use lingo::embed::{
    extend_embeddings, extend_with_added, xavier_bound, EmbeddingMatrix, InitKind, InitStrategy,
};
use lingo::mixture::{
    build_dpo_mixture, build_pretrain_mixture, pack_sequences, PretrainOptions, Ratio,
    ENGLISH_POOL, TARGET_POOL,
};
use lingo::tokenizer::{train_bpe, train_bpe_texts};
use lingo::vocab::{extend_vocabulary, fertility, AddedToken, ExtendedTokenizer, Tokenizer};
use lingo::{Corpus, Error, Tokenize, TokenizerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let t = started.elapsed();
    ensure(t < limit, || format!("took {t:.2?}, limit {limit:?}"))?;
    Ok(t)
}

struct Fixture {
    docs: Vec<Document>,
    base: TokenizerModel,
}

impl Fixture {
    fn new() -> Self {
        let docs = desk_corpus();
        let english = by_lang(&docs, "en");
        let base = train_bpe(&english, 256 + 1024).expect("base tokenizer");
        Fixture { docs, base }
    }
}

fn round_trip(fx: &Fixture) -> Outcome {
    let thai = by_lang(&fx.docs, "th");
    let ext = extend_vocabulary(&fx.base, &thai, 400, None).map_err(|e| e.to_string())?;
    let models: [&dyn Tokenize; 3] = [&TokenizerModel::bytes_only(), &fx.base, &ext];
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let inputs: Vec<String> = (0..10_000).map(|_| fuzz_string(&mut rng, 64)).collect();
    let started = Instant::now();
    let mut failures = 0;
    for s in &inputs {
        for m in models {
            if m.decode(&m.encode(s)).ok().as_deref() != Some(s.as_str()) {
                failures += 1;
            }
        }
    }
    let t = within(Duration::from_secs(10), started)?;
    ensure(failures == 0, || format!("{failures} mismatches"))?;
    Ok(format!(
        "{} strings x 3 tokenizers, 0 failures, {t:.2?}",
        inputs.len()
    ))
}

fn random_corpus(rng: &mut ChaCha20Rng) -> Vec<String> {
    let alphabets: [&[char]; 4] = [
        &['a', 'b', 'c', ' '],
        &['x', 'y', 'z', 'w', 'v', '.'],
        &['ก', 'า', 'ม', 'a', ' '],
        &['م', 'ر', 'ح', 'ب', 'ا', '🙂', ' '],
    ];
    let alphabet = alphabets[rng.random_range(0..alphabets.len())];
    let n_docs = rng.random_range(1..6);
    let mut budget = 1024usize;
    let mut docs = Vec::new();
    for _ in 0..n_docs {
        let mut s = String::new();
        let len = rng.random_range(0..200);
        for _ in 0..len {
            let c = alphabet[rng.random_range(0..alphabet.len())];
            if c.len_utf8() > budget {
                break;
            }
            budget -= c.len_utf8();
            s.push(c);
        }
        docs.push(s);
    }
    docs
}

fn bpe_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let started = Instant::now();
    let cases = 150;
    for case in 0..cases {
        let docs = random_corpus(&mut rng);
        if docs.iter().all(String::is_empty) {
            continue;
        }
        let vocab_size = rng.random_range(257..420);
        let model = train_bpe_texts(&docs, vocab_size).map_err(|e| e.to_string())?;
        let texts: Vec<&[u8]> = docs.iter().map(|d| d.as_bytes()).collect();
        let rules = brute_train(&texts, vocab_size);
        let got: Vec<(Bytes, Bytes)> = model
            .merges()
            .iter()
            .map(|m| {
                (
                    model.token(m.left).unwrap().to_vec(),
                    model.token(m.right).unwrap().to_vec(),
                )
            })
            .collect();
        ensure(got == rules, || {
            format!("case {case}: merges differ from oracle")
        })?;
        let probe = docs.concat() + &random_corpus(&mut rng).concat();
        for text in docs.iter().chain(std::iter::once(&probe)) {
            let ids = model.encode(text);
            let pieces: Vec<Bytes> = ids
                .iter()
                .map(|&i| model.token(i).unwrap().to_vec())
                .collect();
            ensure(pieces == brute_encode(&rules, text.as_bytes()), || {
                format!("case {case}: encoding of {text:?} differs from oracle")
            })?;
        }
    }
    let t = within(Duration::from_secs(60), started)?;
    Ok(format!(
        "{cases} corpora, training and encoding match, {t:.2?}"
    ))
}

fn fertility_trend(fx: &Fixture) -> Outcome {
    let started = Instant::now();
    let mut lines = Vec::new();
    for lang in ["th", "ar", "ru"] {
        let docs = by_lang(&fx.docs, lang);
        let mut values = vec![
            fertility(&fx.base, &docs, SegmentationMode::Unicode)
                .map_err(|e| e.to_string())?
                .tokens_per_word,
        ];
        for n in [100, 400, 2500] {
            let ext = extend_vocabulary(&fx.base, &docs, n, None)
                .map_err(|e| format!("{lang} n_new={n}: {e}"))?;
            values.push(
                fertility(&ext, &docs, SegmentationMode::Unicode)
                    .map_err(|e| e.to_string())?
                    .tokens_per_word,
            );
        }
        ensure(values.windows(2).all(|w| w[1] <= w[0]), || {
            format!("{lang} not non-increasing: {values:?}")
        })?;
        lines.push(format!(
            "{lang} {}",
            values
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>()
                .join(">=")
        ));
    }
    let t = within(Duration::from_secs(300), started)?;
    Ok(format!("{}, {t:.2?}", lines.join("; ")))
}

fn random_matrix(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..rows * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    EmbeddingMatrix::new(rows, dim, data).unwrap()
}

fn id_stability(fx: &Fixture) -> Outcome {
    let arabic = by_lang(&fx.docs, "ar");
    let ext = extend_vocabulary(&fx.base, &arabic, 400, None).map_err(|e| e.to_string())?;
    let reloaded =
        match Tokenizer::from_json_bytes(&ext.to_file().to_bytes().map_err(|e| e.to_string())?) {
            Ok(Tokenizer::Extended(e)) => e,
            other => return Err(format!("reload gave {other:?}")),
        };
    for model in [&ext, &reloaded] {
        for (id, tok) in fx.base.tokens().iter().enumerate() {
            ensure(model.combined().id_of(tok) == Some(id as u32), || {
                format!("base token {id} moved")
            })?;
        }
    }
    let v = fx.base.vocab_size();
    let base = random_matrix(v, 32, 7);
    for kind in [
        InitKind::Gaussian,
        InitKind::XavierUniform,
        InitKind::AvgAll,
        InitKind::AvgSubwords,
    ] {
        let out =
            extend_embeddings(&base, &ext, &InitStrategy::new(kind)).map_err(|e| e.to_string())?;
        ensure(out.rows() == v + 400, || {
            format!("{kind:?}: {} rows", out.rows())
        })?;
        let same = base
            .data()
            .iter()
            .zip(&out.data()[..v * 32])
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || format!("{kind:?} changed a base row"))?;
    }
    Ok(format!("{v} base ids kept after extension and reload; rows 0..{v} bitwise unchanged for 4 strategies"))
}

fn init_exactness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (rows, dim) = (300, 24);
    let base = random_matrix(rows, dim, 11);
    let added: Vec<AddedToken> = (0..1000)
        .map(|i| {
            let n = rng.random_range(1..12);
            AddedToken {
                token: format!("t{i}").into_bytes(),
                id: (rows + i) as u32,
                subword_ids: (0..n).map(|_| rng.random_range(0..rows as u32)).collect(),
            }
        })
        .collect();
    let out = extend_with_added(&base, &added, &InitStrategy::new(InitKind::AvgSubwords))
        .map_err(|e| e.to_string())?;
    let mut worst = 0;
    for (i, a) in added.iter().enumerate() {
        for c in 0..dim {
            let sum: f64 = a
                .subword_ids
                .iter()
                .rev()
                .map(|&s| base.row(s as usize)[c] as f64)
                .sum();
            let want = (sum / a.subword_ids.len() as f64) as f32;
            worst = worst.max(ulp_distance(want, out.row(rows + i)[c]));
        }
    }
    ensure(worst <= 1, || format!("avg_subwords off by {worst} ulp"))?;

    let out = extend_with_added(&base, &added, &InitStrategy::new(InitKind::AvgAll))
        .map_err(|e| e.to_string())?;
    let first = out.row(rows).to_vec();
    ensure(
        (rows..rows + added.len()).all(|r| out.row(r) == first.as_slice()),
        || "avg_all rows differ".into(),
    )?;

    let out = extend_with_added(&base, &added, &InitStrategy::new(InitKind::XavierUniform))
        .map_err(|e| e.to_string())?;
    let alpha = (6.0f64 / ((rows + added.len()) + dim) as f64).sqrt();
    ensure(
        (xavier_bound(rows + added.len(), dim) - alpha).abs() < 1e-15,
        || "bound formula".into(),
    )?;
    let new = &out.data()[rows * dim..];
    ensure(new.iter().all(|&v| (v as f64).abs() < alpha), || {
        "xavier value outside bound".into()
    })?;

    let big: Vec<AddedToken> = (0..1000)
        .map(|i| AddedToken {
            token: vec![b'g'; 1],
            id: (4 + i) as u32,
            subword_ids: vec![0],
        })
        .collect();
    let out = extend_with_added(
        &random_matrix(4, 1000, 5),
        &big,
        &InitStrategy::new(InitKind::Gaussian).with_seed(9),
    )
    .map_err(|e| e.to_string())?;
    let samples = &out.data()[4 * 1000..];
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&v| v as f64).sum::<f64>() / n;
    let std = (samples
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    ensure(
        mean.abs() < 1e-3 && (0.0195..=0.0205).contains(&std),
        || format!("gaussian mean {mean:e}, std {std}"),
    )?;
    Ok(format!(
        "avg_subwords max {worst} ulp over 1000 cases; avg_all identical; xavier inside +-{alpha:.6}; gaussian n={} mean {mean:.2e} std {std:.5}",
        samples.len()
    ))
}

fn docs_of(prefix: &str, lens: &[usize]) -> Vec<Document> {
    lens.iter()
        .enumerate()
        .map(|(i, &n)| Document::new(format!("{prefix}{i}"), "x".repeat(n), prefix))
        .collect()
}

fn mixture_arithmetic(fx: &Fixture) -> Outcome {
    let bytes = TokenizerModel::bytes_only();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for case in 0..400 {
        let max_len = rng.random_range(5..300);
        let target: Vec<usize> = (0..rng.random_range(50..400))
            .map(|_| rng.random_range(1..=max_len))
            .collect();
        let english: Vec<usize> = (0..rng.random_range(50..400))
            .map(|_| rng.random_range(1..=max_len))
            .collect();
        let ratio = Ratio::new(rng.random_range(1..6), rng.random_range(1..6));
        let t_total: usize = target.iter().sum();
        let e_total: usize = english.iter().sum();
        let required = t_total as u64 * ratio.english / ratio.target;
        // pools permit: requirement fits the cap and dwarfs the largest document
        if required as f64 > 3.5 * e_total as f64 || required < 100 * max_len as u64 {
            continue;
        }
        let opts = PretrainOptions {
            ratio,
            seed: case,
            ..Default::default()
        };
        let m = build_pretrain_mixture(
            &docs_of("e", &english),
            &docs_of("t", &target),
            &bytes,
            &opts,
        )
        .map_err(|e| format!("case {case}: {e}"))?;
        let rel = (m.realized_ratio().unwrap() / ratio.value() - 1.0).abs();
        worst = worst.max(rel);
        ensure(rel <= 0.01, || format!("case {case}: ratio off by {rel}"))?;
        checked += 1;
    }
    ensure(checked >= 100, || format!("only {checked} pools exercised"))?;

    let en = by_lang(&fx.docs, "en");
    let th = by_lang(&fx.docs, "th");
    let desk = build_pretrain_mixture(&en, &th, &fx.base, &PretrainOptions::default())
        .map_err(|e| e.to_string())?;
    let desk_rel = (desk.realized_ratio().unwrap() / Ratio::PRETRAIN.value() - 1.0).abs();
    ensure(desk_rel <= 0.01, || {
        format!("desk corpus ratio off by {desk_rel}")
    })?;

    let err = build_pretrain_mixture(
        &docs_of("e", &[1000; 100]),
        &docs_of("t", &[10_000; 300]),
        &bytes,
        &PretrainOptions::default(),
    );
    match err {
        Err(Error::EpochCapExceeded { required, cap, .. }) if required == 10.0 && cap == 4.0 => {}
        other => return Err(format!("10-epoch example gave {other:?}")),
    }

    let en_pairs: Vec<String> = (0..2000).map(|i| format!("e{i}")).collect();
    let tgt_pairs: Vec<String> = (0..2000).map(|i| format!("t{i}")).collect();
    for (ratio, want) in [
        (Ratio::new(100, 1), 20),
        (Ratio::new(10, 1), 200),
        (Ratio::new(10, 3), 600),
        (Ratio::new(1, 1), 2000),
    ] {
        let m = build_dpo_mixture(&en_pairs, &tgt_pairs, ratio, 1).map_err(|e| e.to_string())?;
        let got = (
            m.entry(ENGLISH_POOL).unwrap().pair_count,
            m.entry(TARGET_POOL).unwrap().pair_count,
        );
        ensure(got == (Some(2000), Some(want)), || {
            format!("dpo {ratio}: {got:?}")
        })?;
    }
    Ok(format!(
        "{checked} random pools worst ratio error {:.4}%, desk {:.4}%; 10 epochs vs cap 4 rejected; dpo 20/200/600/2000",
        worst * 100.0,
        desk_rel * 100.0
    ))
}

fn packing_oracle() -> Outcome {
    let bytes = TokenizerModel::bytes_only();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut checked = 0;
    for run in 0..150 {
        let en_lens: Vec<usize> = (0..rng.random_range(1..60))
            .map(|_| rng.random_range(0..800))
            .collect();
        let t_lens: Vec<usize> = (0..rng.random_range(1..60))
            .map(|_| rng.random_range(1..800))
            .collect();
        let mut en = docs_of("e", &en_lens);
        let mut tg = docs_of("t", &t_lens);
        // vary content so reconstruction is checked on distinct ids
        for d in en.iter_mut().chain(tg.iter_mut()) {
            d.text = (0..d.text.len())
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect();
        }
        let opts = PretrainOptions {
            ratio: Ratio::new(rng.random_range(1..4), rng.random_range(1..4)),
            seed: run,
            allow_cap_clamp: true,
            ..Default::default()
        };
        let manifest = match build_pretrain_mixture(&en, &tg, &bytes, &opts) {
            Ok(m) => m,
            Err(Error::InsufficientPool { .. }) => continue,
            Err(e) => return Err(format!("run {run}: {e}")),
        };
        let total = manifest.total_units();
        ensure(total <= 100_000, || format!("run {run}: {total} tokens"))?;
        let corpus = Corpus::from_docs(en.into_iter().chain(tg)).map_err(|e| e.to_string())?;
        let seq_len = rng.random_range(2..2000);
        let out = pack_sequences(&manifest, &corpus, &bytes, seq_len, run)
            .map_err(|e| format!("run {run}: {e}"))?;
        let in_blocks: usize = out.dataset.sequences.iter().map(|s| s.ids.len()).sum();
        ensure(in_blocks as u64 + out.dropped_tail == total, || {
            format!("run {run}: {in_blocks} + {} != {total}", out.dropped_tail)
        })?;
        let docs: Vec<Vec<u32>> = out
            .doc_order
            .iter()
            .map(|(_, id)| bytes.encode(&corpus.get(id).unwrap().text))
            .collect();
        let (want, tail) = brute_pack(&docs, seq_len);
        ensure(
            out.dataset.sequences == want && out.dropped_tail == tail,
            || format!("run {run}: blocks differ from oracle"),
        )?;
        ensure(
            reconstruct(&out.dataset.sequences) == truncate_docs(&docs, in_blocks),
            || format!("run {run}: reconstruction differs"),
        )?;
        checked += 1;
    }
    ensure(checked >= 100, || {
        format!("only {checked} manifests exercised")
    })?;
    Ok(format!(
        "{checked} random manifests: conservation, boundaries and reconstruction exact"
    ))
}

/// One full pipeline run; returns every artifact's bytes.
fn pipeline_artifacts(
    fx: &Fixture,
    dir: &std::path::Path,
) -> lingo::Result<Vec<(String, Vec<u8>)>> {
    let en = by_lang(&fx.docs, "en");
    let th = by_lang(&fx.docs, "th");
    let base = train_bpe(&en, 256 + 512)?;
    base.save(dir.join("base.json"))?;
    let ext: ExtendedTokenizer = extend_vocabulary(&base, &th, 300, None)?;
    ext.save(dir.join("ext.json"))?;
    let emb = random_matrix(base.vocab_size(), 16, 3);
    for kind in ["gaussian", "xavier_uniform", "avg_all", "avg_subwords"] {
        let strategy = InitStrategy::new(kind.parse()?).with_seed(42);
        extend_embeddings(&emb, &ext, &strategy)?.save(dir.join(format!("{kind}.lemb")))?;
    }
    let manifest = build_pretrain_mixture(
        &en,
        &th,
        &ext,
        &PretrainOptions {
            seed: 8,
            ..Default::default()
        },
    )?;
    manifest.save(dir.join("manifest.json"))?;
    let corpus = Corpus::from_docs(fx.docs.iter().cloned())?;
    pack_sequences(&manifest, &corpus, &ext, 512, 8)?
        .dataset
        .save(dir.join("packed.lpak"))?;
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    Ok(files)
}

fn determinism(fx: &Fixture) -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_artifacts(fx, a.path()).map_err(|e| e.to_string())?;
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let second = single
        .install(|| pipeline_artifacts(fx, b.path()))
        .map_err(|e| e.to_string())?;
    ensure(first.len() == 8, || format!("{} artifacts", first.len()))?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    Ok(format!(
        "{} byte-identical across reruns (multi- vs single-threaded)",
        names.join(", ")
    ))
}

fn main() {
    let fx = Fixture::new();
    let criteria: Vec<Criterion> = vec![
        ("round-trip", Box::new(|| round_trip(&fx))),
        ("bpe-oracle-equivalence", Box::new(bpe_oracle)),
        ("fertility-trend", Box::new(|| fertility_trend(&fx))),
        ("id-stability", Box::new(|| id_stability(&fx))),
        ("initialization-exactness", Box::new(init_exactness)),
        ("mixture-arithmetic", Box::new(|| mixture_arithmetic(&fx))),
        (
            "packing-conservation-and-boundaries",
            Box::new(packing_oracle),
        ),
        ("determinism", Box::new(|| determinism(&fx))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(run))
            .unwrap_or_else(|_| Err("panicked".into()));
        match &outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
