use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use gaitlrp::classifier::stack;
use gaitlrp::lrp::{batch_explain, DEFAULT_EPSILON};
use gaitlrp::network::catalog;
use gaitlrp::{rng, svm_train, Architecture, Classifier, LrpConfig, SvmConfig, TrainedModel};

fn networks(c: &mut Criterion) {
    let (ds, plan) = gaitlrp_bench::reference(0);
    let round = plan.round(0).unwrap();
    let test = ds.select(&round.test);
    let x = stack(&test).unwrap();
    let mut group = c.benchmark_group("network");
    for name in ["Linear-SGD/GRF", "MLP-3-256/GRF", "CNN-A/GRF"] {
        let m = TrainedModel::build(catalog::lookup(name, 10).unwrap(), 1).unwrap();
        group.bench_function(format!("forward20/{name}"), |b| b.iter(|| m.scores(x.view()).unwrap()));
        group.bench_function(format!("lrp/{name}"), |b| b.iter(|| m.lrp(&test[0], 0, DEFAULT_EPSILON).unwrap()));
        let batch = x.slice(ndarray::s![0..5, ..]).to_owned();
        let targets: Vec<usize> = test[..5].iter().map(|s| s.subject_id).collect();
        group.bench_function(format!("sgd_step/{name}"), |b| {
            b.iter_batched(
                || m.clone(),
                |mut m| {
                    let pass = m.forward_batch(batch.view()).unwrap();
                    let g = m.backward_batch(&pass, &targets).unwrap();
                    m.apply_gradients(&g, 5e-3);
                    m
                },
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn explain_batch(c: &mut Criterion) {
    let (ds, _) = gaitlrp_bench::reference(0);
    let m = TrainedModel::build(catalog::lookup("CNN-A/GRF", 10).unwrap(), rng::derive_seed(0, &[1])).unwrap();
    let samples = &ds.samples()[..40];
    let mut group = c.benchmark_group("explain40");
    for threads in [1, 2] {
        group.bench_function(format!("threads{threads}"), |b| {
            b.iter(|| batch_explain(&m, samples, &LrpConfig::default(), threads).unwrap())
        });
    }
    group.finish();
}

fn svm(c: &mut Criterion) {
    let (ds, plan) = gaitlrp_bench::reference(0);
    let round = plan.round(0).unwrap();
    let train = ds.select(&round.train);
    let name = catalog::catalog_name(Architecture::LinearSvm, ds.feature_set());
    let mut group = c.benchmark_group("svm");
    group.sample_size(10);
    group.bench_function("fit_reference_round0", |b| {
        b.iter(|| svm_train(name.clone(), &train, 10, &SvmConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, networks, explain_batch, svm);
criterion_main!(benches);
