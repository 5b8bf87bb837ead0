//! Sequential vs rayon execution of the data-parallel stages.

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use stylemirror::evaluator::{evaluate, LmConfig, NGramLM};
use stylemirror::patterns::PatternStore;
use stylemirror::synth::{control_sentences, SpeakerCorpus, SynthConfig};
use stylemirror::transformer::{chunk, generate_candidates, rank_and_pick};
use stylemirror::{normalize, BuiltinEmbedder, ChunkMode, Exec, MinerState, StopwordSet};

fn strategies() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", Exec::Parallel));
    v
}

fn corpus(n: usize, seed: u64) -> SpeakerCorpus {
    SpeakerCorpus::generate(
        &SynthConfig {
            sentences: n,
            ..SynthConfig::default()
        },
        seed,
    )
}

fn mining(c: &mut Criterion) {
    let base = corpus(17_000, 1).sentences;
    let extra = corpus(1_000, 2).sentences;
    let mut g = c.benchmark_group("mining");
    g.sample_size(10);
    for (name, exec) in strategies() {
        g.bench_with_input(BenchmarkId::new("batch_17k", name), &exec, |b, &exec| {
            b.iter(|| MinerState::mine_batch(base.clone(), 0.006, exec).unwrap())
        });
        let state = MinerState::mine_batch(base.clone(), 0.006, exec).unwrap();
        g.bench_with_input(BenchmarkId::new("increment_1k", name), &exec, |b, &exec| {
            b.iter_batched(
                || state.clone(),
                |mut s| s.increment(extra.clone(), exec),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let speaker = corpus(2_000, 3);
    let state = MinerState::mine_batch(speaker.sentences.clone(), 0.006, Exec::auto()).unwrap();
    let store = PatternStore::rebuild(
        &speaker.sentences,
        &state.style_ngrams(&StopwordSet::default()),
        Exec::auto(),
    );
    let record = store
        .records()
        .max_by_key(|r| r.pattern().wildcard_count())
        .expect("patterns");
    let emb = BuiltinEmbedder::from_corpus(7, &speaker.sentences);
    let input = normalize("w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12");
    let cands = generate_candidates(&chunk(&input.tokens, ChunkMode::Token), record.pattern());

    let inputs = control_sentences(&speaker.vocab, &[8; 500], 4);
    let outputs = control_sentences(&speaker.vocab, &[10; 500], 5);
    let lm = NGramLM::train(&speaker.sentences, &LmConfig::default()).unwrap();

    let mut g = c.benchmark_group("scoring");
    for (name, exec) in strategies() {
        g.bench_with_input(
            BenchmarkId::new(format!("rank_{}_candidates", cands.len()), name),
            &exec,
            |b, &exec| b.iter(|| rank_and_pick(cands.clone(), record, &emb, exec).unwrap()),
        );
        g.bench_with_input(BenchmarkId::new("evaluate_500", name), &exec, |b, &exec| {
            b.iter(|| evaluate(&inputs, &outputs, &lm, &emb, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, mining, scoring);
criterion_main!(benches);
