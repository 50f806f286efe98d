use std::collections::BTreeMap;

use adpc_bench::{fixtures, registry};
use adpc_core::matching::corpus::random_vocabulary;
use adpc_core::policy::{decode_policy, encode_policy, strip_for_header, FieldMask};
use adpc_core::taxonomy::build_codebook;
use adpc_core::{PolicyDocument, Registry};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::hint::black_box;

fn policy_codec(c: &mut Criterion) {
    let reg = registry();
    let mut g = c.benchmark_group("policy");
    for name in ["newsletter", "tcf"] {
        let text = std::fs::read_to_string(fixtures().join(format!("policy/{name}.json"))).unwrap();
        let doc: PolicyDocument = serde_json::from_str(&text).unwrap();
        let policy = doc.to_policy(&reg).unwrap();
        let bytes = encode_policy(&policy, &reg).unwrap();
        g.bench_with_input(BenchmarkId::new("encode", name), &policy, |b, p| {
            b.iter(|| encode_policy(black_box(p), &reg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decode", name), &bytes, |b, bytes| {
            b.iter(|| decode_policy(black_box(bytes), &reg).unwrap())
        });
        let purposes = FieldMask::parse_list("purposes").unwrap();
        g.bench_with_input(BenchmarkId::new("strip", name), &policy, |b, p| {
            b.iter(|| strip_for_header(black_box(p), purposes, &reg).unwrap())
        });
    }
    g.finish();
}

fn codebooks(c: &mut Criterion) {
    let mut g = c.benchmark_group("codebook");
    let mut rng = StdRng::seed_from_u64(1);
    let mut reg = Registry::new();
    for (id, n) in [(1u8, 50usize), (2, 200), (3, 490)] {
        reg.insert(random_vocabulary(&mut rng, id, n - n / 5, n / 5))
            .unwrap();
    }
    for v in reg.vocabularies() {
        g.bench_with_input(BenchmarkId::new("build", v.len()), v, |b, v| {
            b.iter(|| build_codebook(black_box(v), &BTreeMap::new()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, policy_codec, codebooks);
criterion_main!(benches);
