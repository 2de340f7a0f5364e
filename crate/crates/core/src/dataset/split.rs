//! Subject-stratified k-fold assignment.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldRole {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub subject_id: usize,
    pub trial_id: usize,
    pub fold: usize,
}

/// Fold index for every sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub assignments: Vec<Assignment>,
}

/// Sample indices for one evaluation round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRound {
    pub round: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn fold_of(&self, sample: usize) -> usize {
        self.assignments[sample].fold
    }

    /// Round `r` tests on fold `r`, validates on fold `r + 1 (mod k)` and
    /// trains on the remaining folds.
    pub fn role(&self, round: usize, fold: usize) -> FoldRole {
        if fold == round % self.n_folds {
            FoldRole::Test
        } else if fold == (round + 1) % self.n_folds {
            FoldRole::Validation
        } else {
            FoldRole::Train
        }
    }

    pub fn round(&self, round: usize) -> Result<SplitRound> {
        if round >= self.n_folds {
            return Err(Error::Range(format!(
                "round {round} with {} folds",
                self.n_folds
            )));
        }
        let mut out = SplitRound {
            round,
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for (i, a) in self.assignments.iter().enumerate() {
            match self.role(round, a.fold) {
                FoldRole::Train => out.train.push(i),
                FoldRole::Validation => out.validation.push(i),
                FoldRole::Test => out.test.push(i),
            }
        }
        Ok(out)
    }

    /// Checks that the plan describes `dataset` sample-for-sample.
    pub fn check_matches(&self, dataset: &Dataset) -> Result<()> {
        if self.assignments.len() != dataset.len() {
            return Err(Error::InvalidInput(format!(
                "split plan covers {} samples, dataset has {}",
                self.assignments.len(),
                dataset.len()
            )));
        }
        for (a, s) in self.assignments.iter().zip(dataset.samples()) {
            if a.subject_id != s.subject_id || a.trial_id != s.trial_id || a.fold >= self.n_folds {
                return Err(Error::InvalidInput(format!(
                    "split plan entry ({}, {}) does not match sample ({}, {})",
                    a.subject_id, a.trial_id, s.subject_id, s.trial_id
                )));
            }
        }
        Ok(())
    }
}

/// Spreads each subject's trials over `n_folds` folds uniformly at random.
/// Every (subject, fold) count is within one of `trials / n_folds`.
pub fn make_splits(dataset: &Dataset, n_folds: usize, seed: u64) -> Result<SplitPlan> {
    if n_folds < 3 {
        return Err(Error::InvalidConfig(format!(
            "need at least 3 folds (train, validation, test), got {n_folds}"
        )));
    }
    let mut folds = vec![0usize; dataset.len()];
    for (subject, mut indices) in dataset.indices_by_subject().into_iter().enumerate() {
        if indices.len() < n_folds {
            return Err(Error::StratificationImpossible {
                subject,
                trials: indices.len(),
                folds: n_folds,
            });
        }
        let mut rng = rng::stream(seed, &[0x5b1d, subject as u64]);
        indices.shuffle(&mut rng);
        let offset = rng.random_range(0..n_folds);
        for (pos, i) in indices.into_iter().enumerate() {
            folds[i] = (offset + pos) % n_folds;
        }
    }
    let assignments = dataset
        .samples()
        .iter()
        .zip(folds)
        .map(|(s, fold)| Assignment {
            subject_id: s.subject_id,
            trial_id: s.trial_id,
            fold,
        })
        .collect();
    Ok(SplitPlan {
        n_folds,
        seed,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSet, GaitSample, TIME_POINTS};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn dataset(subjects: usize, trials: usize) -> Dataset {
        let samples = (0..subjects)
            .flat_map(|s| {
                (0..trials).map(move |t| GaitSample {
                    values: Array2::zeros((6, TIME_POINTS)),
                    subject_id: s,
                    trial_id: t,
                    feature_set: FeatureSet::Grf,
                })
            })
            .collect();
        Dataset::new(samples).unwrap()
    }

    fn cell_counts(plan: &SplitPlan, subjects: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; plan.n_folds]; subjects];
        for a in &plan.assignments {
            counts[a.subject_id][a.fold] += 1;
        }
        counts
    }

    #[test]
    fn twenty_trials_two_per_fold() {
        let plan = make_splits(&dataset(5, 20), 10, 3).unwrap();
        for row in cell_counts(&plan, 5) {
            assert!(row.iter().all(|&c| c == 2));
        }
    }

    #[test]
    fn ten_trials_one_per_fold() {
        let plan = make_splits(&dataset(1, 10), 10, 0).unwrap();
        assert!(cell_counts(&plan, 1)[0].iter().all(|&c| c == 1));
    }

    #[test]
    fn deterministic() {
        let ds = dataset(4, 20);
        assert_eq!(make_splits(&ds, 10, 42).unwrap(), make_splits(&ds, 10, 42).unwrap());
        assert_ne!(make_splits(&ds, 10, 42).unwrap(), make_splits(&ds, 10, 43).unwrap());
    }

    #[test]
    fn too_few_trials() {
        assert!(matches!(
            make_splits(&dataset(2, 9), 10, 0),
            Err(Error::StratificationImpossible { trials: 9, folds: 10, .. })
        ));
    }

    #[test]
    fn rounds_use_eight_train_folds() {
        let plan = make_splits(&dataset(3, 20), 10, 1).unwrap();
        for r in 0..10 {
            let round = plan.round(r).unwrap();
            assert_eq!(round.test.len(), 6);
            assert_eq!(round.validation.len(), 6);
            assert_eq!(round.train.len(), 48);
        }
        assert!(plan.round(10).is_err());
    }

    #[test]
    fn serializes_and_checks() {
        let ds = dataset(2, 10);
        let plan = make_splits(&ds, 5, 9).unwrap();
        let text = serde_json::to_string(&plan).unwrap();
        let back: SplitPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(back, plan);
        back.check_matches(&ds).unwrap();
        assert!(back.check_matches(&dataset(2, 11)).is_err());
    }

    proptest! {
        #[test]
        fn cells_within_one(subjects in 1usize..5, trials in 10usize..31, folds in 3usize..11, seed in 0u64..100) {
            let plan = make_splits(&dataset(subjects, trials), folds, seed).unwrap();
            let ideal = trials as f64 / folds as f64;
            for row in cell_counts(&plan, subjects) {
                for c in row {
                    prop_assert!((c as f64 - ideal).abs() <= 1.0);
                }
            }
            // every sample lands in exactly one test fold across the rounds
            let mut seen = vec![0; plan.assignments.len()];
            for r in 0..folds {
                for i in plan.round(r).unwrap().test { seen[i] += 1; }
            }
            prop_assert!(seen.iter().all(|&n| n == 1));
        }
    }
}
