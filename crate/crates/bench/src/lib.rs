//! Benchmark fixtures.

use gaitlrp::dataset::{make_splits, preprocess, synth_generate, FitScope, SynthConfig};
use gaitlrp::{Dataset, SplitPlan};

/// The preprocessed synthetic reference set and its 10-fold plan.
pub fn reference(seed: u64) -> (Dataset, SplitPlan) {
    let (raw, _) = synth_generate(&SynthConfig::reference(seed)).expect("reference config is valid");
    let ds = preprocess(&raw, FitScope::Full).expect("synthetic data preprocesses");
    let plan = make_splits(&ds, 10, seed).expect("20 trials split over 10 folds");
    (ds, plan)
}
