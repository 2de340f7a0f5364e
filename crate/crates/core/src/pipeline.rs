//! Per-fold model fitting shared by the CLI, tests and benchmarks.

use crate::classifier::Classifier;
use crate::dataset::{Dataset, SplitPlan, SplitRound};
use crate::error::{Error, Result};
use crate::model_file::AnyModel;
use crate::network::{self, Architecture, TrainConfig, TrainedModel};
use crate::rng;
use crate::svm::{svm_train, SvmConfig};

/// Seed used for everything random inside round `round` of a run.
pub fn fold_seed(seed: u64, round: usize) -> u64 {
    rng::derive_seed(seed, &[0xf01d, round as u64])
}

/// Builds and trains `arch` on the train/validation roles of `round`.
/// Networks are initialized and trained from `fold_seed(seed, round)`.
pub fn fit(arch: Architecture, ds: &Dataset, round: &SplitRound, seed: u64, train_cfg: &TrainConfig) -> Result<AnyModel> {
    let fs = ds.feature_set();
    let n_classes = ds.n_subjects();
    let s = fold_seed(seed, round.round);
    let train = ds.select(&round.train);
    if train.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    if arch.is_svm() {
        let name = network::catalog::catalog_name(arch, fs);
        return Ok(svm_train(name, &train, n_classes, &SvmConfig::default())?.into());
    }
    let spec = network::model_spec(arch, fs, n_classes)?;
    let model = TrainedModel::build(spec, rng::derive_seed(s, &[1]))?;
    let cfg = TrainConfig {
        seed: rng::derive_seed(s, &[2]),
        ..train_cfg.clone()
    };
    let validation = ds.select(&round.validation);
    Ok(network::train(model, &train, &validation, &cfg)?.into())
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub round: usize,
    pub model: AnyModel,
    pub test_accuracy: f64,
}

/// Trains one model per requested round and scores it on that round's test fold.
pub fn cross_validate(
    arch: Architecture,
    ds: &Dataset,
    plan: &SplitPlan,
    rounds: &[usize],
    seed: u64,
    train_cfg: &TrainConfig,
) -> Result<Vec<FoldOutcome>> {
    plan.check_matches(ds)?;
    rounds
        .iter()
        .map(|&r| {
            let round = plan.round(r)?;
            let model = fit(arch, ds, &round, seed, train_cfg)?;
            let test_accuracy = model.accuracy(&ds.select(&round.test))?;
            Ok(FoldOutcome {
                round: r,
                model,
                test_accuracy,
            })
        })
        .collect()
}
