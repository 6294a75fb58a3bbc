use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use debacer_core::annotate::bootstrap_spec;
use debacer_core::corpus::{generate_synthetic, SynthConfig};
use debacer_core::eval::examples_from_corpus;
use debacer_core::features::{fit_truncated_svd, pipeline_svd, FeatureExtractor, FeatureSpec};
use debacer_core::models::{ClassifierSpec, LogregParams, PipelineSpec, TrainedPipeline};
use debacer_core::partition::partition_agenda;
use debacer_core::textprep::Preprocessor;
use debacer_core::DEFAULT_AGENDA_LABEL;

fn fixture() -> (Vec<Vec<String>>, Vec<u8>, debacer_core::Corpus) {
    let (corpus, truth) = generate_synthetic(&SynthConfig::default()).unwrap();
    let examples = examples_from_corpus(&corpus, DEFAULT_AGENDA_LABEL, &truth.labels);
    let prep = Preprocessor::portuguese();
    let tokens = examples.iter().map(|e| prep.run(&e.text)).collect();
    let labels = examples.iter().map(|e| e.label).collect();
    (tokens, labels, corpus)
}

fn benches(c: &mut Criterion) {
    let (tokens, labels, corpus) = fixture();

    c.bench_function("bong_fit_transform", |b| {
        b.iter(|| {
            let fx = FeatureExtractor::fit(&FeatureSpec::bong(None), &tokens, 42).unwrap();
            fx.transform_many(&tokens)
        })
    });

    let bong = FeatureExtractor::fit(&FeatureSpec::bong(None), &tokens, 42).unwrap();
    let x = bong.transform_many(&tokens);
    let mut svd = c.benchmark_group("truncated_svd");
    svd.sample_size(10);
    svd.bench_function("k100", |b| b.iter(|| fit_truncated_svd(&x, 100, 42, &pipeline_svd()).unwrap()));
    svd.finish();

    let spec = PipelineSpec::new(FeatureSpec::bow(), ClassifierSpec::Logreg(LogregParams::default()));
    let mut fit = c.benchmark_group("fit");
    fit.sample_size(10);
    fit.bench_function("bow_logreg", |b| {
        b.iter(|| TrainedPipeline::fit_tokens(&spec, &tokens, &labels).unwrap())
    });
    fit.finish();

    let model = TrainedPipeline::fit_tokens(&bootstrap_spec(42), &tokens, &labels).unwrap();
    let items: Vec<_> = corpus.agenda_items().cloned().collect();
    c.bench_function("partition_corpus_items", |b| {
        b.iter_batched(
            || items.clone(),
            |items| {
                for item in &items {
                    partition_agenda(item, &model).unwrap();
                }
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
