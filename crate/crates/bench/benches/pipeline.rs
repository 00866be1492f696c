use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use lingo::embed::{extend_embeddings, EmbeddingMatrix, InitKind, InitStrategy};
use lingo::mixture::pack_documents;
use lingo::tokenizer::train_bpe;
use lingo::vocab::{extend_vocabulary, fertility};
use lingo::{SegmentationMode, Tokenize};
use lingo_bench::desk_docs;

fn encode(c: &mut Criterion) {
    let en = desk_docs(Some("en"));
    let th = desk_docs(Some("th"));
    let base = train_bpe(&en, 256 + 1024).unwrap();
    let ext = extend_vocabulary(&base, &th, 1000, None).unwrap();
    let text: String = th.iter().take(40).map(|d| d.text.as_str()).collect();

    let mut g = c.benchmark_group("encode");
    g.throughput(Throughput::Bytes(text.len() as u64));
    g.bench_function("base_thai", |b| b.iter(|| base.encode(black_box(&text))));
    g.bench_function("extended_thai", |b| b.iter(|| ext.encode(black_box(&text))));
    g.finish();

    c.bench_function("fertility_thai", |b| {
        b.iter(|| fertility(&ext, black_box(&th), SegmentationMode::Unicode).unwrap())
    });
}

fn train(c: &mut Criterion) {
    let en: Vec<_> = desk_docs(Some("en")).into_iter().take(100).collect();
    let bytes: usize = en.iter().map(|d| d.text.len()).sum();
    let mut g = c.benchmark_group("train_bpe");
    g.sample_size(10);
    g.throughput(Throughput::Bytes(bytes as u64));
    g.bench_function("en_512_merges", |b| {
        b.iter(|| train_bpe(black_box(&en), 256 + 512).unwrap())
    });
    g.finish();
}

fn pack(c: &mut Criterion) {
    let docs: Vec<Vec<u32>> = (0..2000u32)
        .map(|i| (0..(i * 37 % 3000)).collect())
        .collect();
    let total: usize = docs.iter().map(Vec::len).sum();
    let mut g = c.benchmark_group("pack");
    g.throughput(Throughput::Elements(total as u64));
    g.bench_function("seq_4096", |b| {
        b.iter(|| pack_documents(docs.iter().map(Vec::as_slice), black_box(4096)).unwrap())
    });
    g.finish();
}

fn init(c: &mut Criterion) {
    let en = desk_docs(Some("en"));
    let base = train_bpe(&en, 256 + 256).unwrap();
    let ext = extend_vocabulary(&base, desk_docs(Some("ar")), 2000, None).unwrap();
    let dim = 256;
    let emb = EmbeddingMatrix::new(
        512,
        dim,
        (0..512 * dim).map(|i| (i % 97) as f32 / 97.0).collect(),
    )
    .unwrap();
    for kind in [InitKind::Gaussian, InitKind::AvgSubwords] {
        c.bench_function(&format!("init_{}", kind.as_str()), |b| {
            b.iter_batched(
                || InitStrategy::new(kind).with_seed(1),
                |s| extend_embeddings(&emb, &ext, &s).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, encode, train, pack, init);
criterion_main!(benches);
