//! Multichannel gait trials: types, preprocessing, fold assignment,
//! synthetic generation and CSV ingestion.

mod csv_io;
mod preprocess;
mod split;
mod synth;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{ingest_csv, write_csv};
pub use preprocess::{
    preprocess, resample, resample_to_101, scale_minus1_1, z_transform, z_transform_fit,
    Applied, ChannelRange, ChannelStats, FitScope, PreprocessingParams, ZMode,
};
pub use split::{make_splits, FoldRole, SplitPlan, SplitRound};
pub use synth::{disjoint_windows, synth_generate, SynthConfig, SynthTruth, WindowPlan};

/// Time points per gait cycle after time normalization.
pub const TIME_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    /// Ground reaction forces, 3 components per foot.
    #[serde(rename = "GRF")]
    Grf,
    /// Full-body joint angles.
    #[serde(rename = "FBJA")]
    Fbja,
    /// Full-body joint angles, sagittal plane only.
    #[serde(rename = "FBJAX")]
    Fbjax,
    /// Lower-body joint angles.
    #[serde(rename = "LBJA")]
    Lbja,
    /// Lower-body joint angles, sagittal plane only.
    #[serde(rename = "LBJAX")]
    Lbjax,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Grf,
        FeatureSet::Fbja,
        FeatureSet::Fbjax,
        FeatureSet::Lbja,
        FeatureSet::Lbjax,
    ];

    pub fn channels(self) -> usize {
        match self {
            FeatureSet::Grf => 6,
            FeatureSet::Fbja => 33,
            FeatureSet::Fbjax => 10,
            FeatureSet::Lbja => 18,
            FeatureSet::Lbjax => 6,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            FeatureSet::Grf => "GRF",
            FeatureSet::Fbja => "FBJA",
            FeatureSet::Fbjax => "FBJAX",
            FeatureSet::Lbja => "LBJA",
            FeatureSet::Lbjax => "LBJAX",
        }
    }

    /// Forces are z-scored over the whole dataset, joint angles per trial.
    pub fn is_kinetic(self) -> bool {
        matches!(self, FeatureSet::Grf)
    }

    pub fn default_z_mode(self) -> ZMode {
        if self.is_kinetic() {
            ZMode::Global
        } else {
            ZMode::PerTrial
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureSet::ALL
            .into_iter()
            .find(|fs| fs.tag().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature set `{s}`")))
    }
}

/// One gait trial: a channels x time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSample {
    pub values: Array2<f64>,
    pub subject_id: usize,
    pub trial_id: usize,
    pub feature_set: FeatureSet,
}

impl GaitSample {
    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn time_points(&self) -> usize {
        self.values.ncols()
    }

    /// Row-major (channel, then time) view of the values.
    pub fn flat(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("sample grids are stored in standard layout")
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<GaitSample>,
    n_subjects: usize,
    feature_set: FeatureSet,
    pub preprocessing: PreprocessingParams,
}

impl Dataset {
    /// Validates and assembles a dataset. Subject ids must cover `0..L`
    /// without gaps; all trials share the feature set and time length.
    pub fn new(samples: Vec<GaitSample>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no samples".into()))?;
        let feature_set = first.feature_set;
        let time = first.time_points();
        let channels = feature_set.channels();
        for s in &samples {
            if s.feature_set != feature_set {
                return Err(Error::InvalidInput(format!(
                    "mixed feature sets: {} and {}",
                    feature_set, s.feature_set
                )));
            }
            if s.channels() != channels {
                return Err(Error::Shape(format!(
                    "subject {} trial {}: {} channels, {} expects {}",
                    s.subject_id,
                    s.trial_id,
                    s.channels(),
                    feature_set,
                    channels
                )));
            }
            if s.time_points() != time || time < 2 {
                return Err(Error::Shape(format!(
                    "subject {} trial {}: {} time points, expected {}",
                    s.subject_id,
                    s.trial_id,
                    s.time_points(),
                    time
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "subject {} trial {}: non-finite value",
                    s.subject_id, s.trial_id
                )));
            }
        }
        let n_subjects = samples.iter().map(|s| s.subject_id).max().unwrap_or(0) + 1;
        let mut counts = vec![0usize; n_subjects];
        for s in &samples {
            counts[s.subject_id] += 1;
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!(
                "subject ids must be contiguous from 0; subject {missing} has no trials"
            )));
        }
        let samples = samples
            .into_iter()
            .map(|mut s| {
                if !s.values.is_standard_layout() {
                    s.values = s.values.as_standard_layout().into_owned();
                }
                s
            })
            .collect();
        Ok(Dataset {
            samples,
            n_subjects,
            feature_set,
            preprocessing: PreprocessingParams::default(),
        })
    }

    pub fn samples(&self) -> &[GaitSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.feature_set
    }

    pub fn channels(&self) -> usize {
        self.feature_set.channels()
    }

    pub fn time_points(&self) -> usize {
        self.samples[0].time_points()
    }

    /// Samples at the given indices, cloned.
    pub fn select(&self, indices: &[usize]) -> Vec<GaitSample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }

    /// Sample indices grouped by subject, in dataset order.
    pub fn indices_by_subject(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_subjects];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.subject_id].push(i);
        }
        groups
    }

    pub(crate) fn with_samples(&self, samples: Vec<GaitSample>) -> Dataset {
        Dataset {
            samples,
            n_subjects: self.n_subjects,
            feature_set: self.feature_set,
            preprocessing: self.preprocessing.clone(),
        }
    }
}
