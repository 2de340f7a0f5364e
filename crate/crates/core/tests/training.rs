use gaitlrp::classifier::Classifier;
use gaitlrp::dataset::{make_splits, preprocess, synth_generate, FitScope, SynthConfig, WindowPlan};
use gaitlrp::network::{catalog, train, TrainedModel};
use gaitlrp::pipeline::fit;
use gaitlrp::{AnyModel, Architecture, FeatureSet, GaitSample, Result, TrainConfig};
use ndarray::{Array2, ArrayView2};

fn reference(seed: u64) -> gaitlrp::Dataset {
    let (raw, _) = synth_generate(&SynthConfig::reference(seed)).unwrap();
    preprocess(&raw, FitScope::Full).unwrap()
}

#[test]
fn round_zero_models_generalize() {
    let ds = reference(1);
    let plan = make_splits(&ds, 10, 1).unwrap();
    let round = plan.round(0).unwrap();
    let test = ds.select(&round.test);
    for name in ["Linear-SVM", "Linear-SGD", "CNN-A"] {
        let arch: Architecture = name.parse().unwrap();
        let m = fit(arch, &ds, &round, 7, &TrainConfig::default()).unwrap();
        assert!(m.accuracy(&test).unwrap() >= 0.9, "{name}");
        if let AnyModel::Svm(s) = &m {
            assert!(s.log.classes.iter().all(|c| c.converged));
        }
    }
}

#[test]
fn separable_pair_reaches_full_validation_accuracy() {
    let cfg = SynthConfig {
        n_subjects: 2,
        trials_per_subject: 20,
        windows: WindowPlan::Disjoint,
        ..SynthConfig::reference(4)
    };
    let (raw, _) = synth_generate(&cfg).unwrap();
    let ds = preprocess(&raw, FitScope::Full).unwrap();
    let plan = make_splits(&ds, 10, 4).unwrap();
    let round = plan.round(3).unwrap();
    let spec = catalog::lookup("MLP-2-64/GRF", 2).unwrap();
    let m = train(
        TrainedModel::build(spec, 1).unwrap(),
        &ds.select(&round.train),
        &ds.select(&round.validation),
        &TrainConfig::with_seed(2),
    )
    .unwrap();
    let first_perfect = m.log.entries.iter().find(|e| e.validation_accuracy == 1.0);
    assert!(first_perfect.is_some_and(|e| e.iteration < 30_000));
    assert_eq!(m.log.best_validation_accuracy, 1.0);
}

#[test]
fn same_seed_same_weights() {
    let ds = reference(2);
    let plan = make_splits(&ds, 10, 2).unwrap();
    let round = plan.round(1).unwrap();
    let a = fit(Architecture::LinearSgd, &ds, &round, 3, &TrainConfig::default()).unwrap();
    let b = fit(Architecture::LinearSgd, &ds, &round, 3, &TrainConfig::default()).unwrap();
    assert_eq!(a, b);
    let c = fit(Architecture::LinearSgd, &ds, &round, 4, &TrainConfig::default()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn smoothed_loss_does_not_rise_across_stages() {
    let ds = reference(3);
    let plan = make_splits(&ds, 10, 3).unwrap();
    let round = plan.round(0).unwrap();
    let AnyModel::Network(m) = fit("MLP-2-64".parse().unwrap(), &ds, &round, 5, &TrainConfig::default()).unwrap()
    else {
        unreachable!()
    };
    let stage_end_loss: Vec<f64> = m
        .log
        .stage_ends
        .iter()
        .map(|&end| {
            m.log
                .entries
                .iter()
                .rev()
                .find(|e| e.iteration <= end)
                .unwrap()
                .smoothed_loss
        })
        .collect();
    for w in stage_end_loss.windows(2) {
        assert!(w[1] <= w[0], "{stage_end_loss:?}");
    }
}

#[test]
fn empty_training_split_is_a_config_error() {
    let spec = catalog::lookup("Linear-SGD/GRF", 2).unwrap();
    let ds = reference(0);
    let r = train(TrainedModel::build(spec, 0).unwrap(), &[], &ds.samples()[..2], &TrainConfig::default());
    assert!(matches!(r, Err(gaitlrp::Error::InvalidConfig(_))));
}

/// Scores each sample by a hash of its values, independent of the label.
struct CoinFlip;

impl Classifier for CoinFlip {
    fn name(&self) -> &str {
        "coin"
    }
    fn n_classes(&self) -> usize {
        2
    }
    fn input_len(&self) -> usize {
        1
    }
    fn scores(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(Array2::from_shape_fn((batch.nrows(), 2), |(i, c)| {
            let h = gaitlrp::rng::derive_seed(batch[[i, 0]].to_bits(), &[]);
            if (h & 1) as usize == c { 1.0 } else { 0.0 }
        }))
    }
}

#[test]
fn coin_flip_accuracy_is_near_half() {
    let n = 4000;
    let samples: Vec<GaitSample> = (0..n)
        .map(|i| GaitSample {
            values: Array2::from_elem((1, 1), i as f64),
            subject_id: i % 2,
            trial_id: i,
            feature_set: FeatureSet::Grf,
        })
        .collect();
    let acc = CoinFlip.accuracy(&samples).unwrap();
    let ci = 3.0 * (0.25 / n as f64).sqrt();
    assert!((acc - 0.5).abs() < ci, "{acc}");
}

#[test]
fn perfect_model_on_its_training_set() {
    let ds = reference(5);
    let plan = make_splits(&ds, 10, 5).unwrap();
    let round = plan.round(0).unwrap();
    let m = fit(Architecture::LinearSvm, &ds, &round, 0, &TrainConfig::default()).unwrap();
    assert_eq!(m.accuracy(&ds.select(&round.train)).unwrap(), 1.0);
}
