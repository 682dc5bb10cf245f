use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thememiner::corpus::synth::{synthesize_corpus, CorpusProfile};
use thememiner::demo::scripted_fixture;
use thememiner::eval::krippendorff_alpha;
use thememiner::keyphrase::{has_keyphrase, parse_keyphrase_file, DISCLOSED_KEYPHRASES};
use thememiner::llm::ScriptedLlm;
use thememiner::pipeline::{fallback_split, run_pipeline, PipelineConfig, PromptSet};
use thememiner::stats::{decompose, fit_logistic_irls, IrlsOptions};

fn statistics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 2000;
    let x = DMatrix::from_fn(n, 6, |_, j| {
        if j == 0 {
            1.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta: f64 = -1.0 + 0.8 * x[(i, 1)] - 0.5 * x[(i, 2)];
            rng.random_bool(1.0 / (1.0 + (-eta).exp())) as u8 as f64
        })
        .collect();
    c.bench_function("irls 2000x6", |b| {
        b.iter(|| fit_logistic_irls(black_box(&x), &y, &IrlsOptions::default()).unwrap())
    });

    let series: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..50.0)).collect();
    c.bench_function("decompose 120 months", |b| {
        b.iter(|| decompose(black_box(&series), 12).unwrap())
    });

    let items: Vec<Vec<u8>> = (0..645)
        .map(|_| (0..3).map(|_| rng.random_range(0..2)).collect())
        .collect();
    c.bench_function("alpha 645 items", |b| {
        b.iter(|| krippendorff_alpha(black_box(&items)).unwrap())
    });
}

fn text(c: &mut Criterion) {
    let corpus = synthesize_corpus(3, 1000, &CorpusProfile::default());
    let texts: Vec<String> = corpus.cases.iter().map(|c| c.pipeline_text()).collect();
    let patterns = parse_keyphrase_file(DISCLOSED_KEYPHRASES).unwrap();
    c.bench_function("keyphrase scan 1000", |b| {
        b.iter(|| texts.iter().filter(|t| has_keyphrase(t, &patterns)).count())
    });
    c.bench_function("fallback split 1000", |b| {
        b.iter(|| texts.iter().map(|t| fallback_split(t).len()).sum::<usize>())
    });
}

fn replay(c: &mut Criterion) {
    let corpus = synthesize_corpus(5, 100, &CorpusProfile::default());
    let prompts = PromptSet::builtin();
    let jsonl = scripted_fixture(&corpus, &prompts).to_jsonl();
    let cfg = PipelineConfig::new("bench");
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("replay 100 cases", |b| {
        b.iter(|| {
            let llm = ScriptedLlm::new(thememiner::llm::Fixture::parse(&jsonl).unwrap());
            run_pipeline(&corpus.cases, &llm, &cfg).results.len()
        })
    });
    group.finish();
}

criterion_group!(benches, statistics, text, replay);
criterion_main!(benches);
