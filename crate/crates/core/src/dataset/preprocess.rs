//! Time normalization, z-transform and [-1, 1] scaling.
//!
//! Scaling is fit per channel. Standard deviations use the population
//! formula (divide by N).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, GaitSample, TIME_POINTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    /// Each channel of each trial standardized over its own time points.
    PerTrial,
    /// Each channel standardized with statistics pooled over all trials.
    Global,
}

/// Which samples the preprocessing statistics are fit on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    /// Statistics from the whole dataset, before splitting.
    #[default]
    Full,
    /// Statistics from the listed sample indices only (e.g. a training split).
    Subset(Vec<usize>),
}

impl FitScope {
    fn indices(&self, n: usize) -> Vec<usize> {
        match self {
            FitScope::Full => (0..n).collect(),
            FitScope::Subset(ix) => ix.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub min: f64,
    pub max: f64,
}

impl ChannelRange {
    /// Affine map sending `min` to -1 and `max` to +1.
    pub fn apply(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y + 1.0) / 2.0 * (self.max - self.min) + self.min
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessingParams {
    pub z_mode: Option<ZMode>,
    /// Per-channel statistics; only populated in global mode.
    pub z_stats: Vec<ChannelStats>,
    pub scale: Option<Vec<ChannelRange>>,
    pub fit_scope: FitScope,
    /// Set when the z-mode differs from the one conventional for the feature
    /// set (global for forces, per-trial for joint angles).
    pub nonstandard_pairing: bool,
}

/// Result of applying stored parameters to held-out data.
#[derive(Debug, Clone)]
pub struct Applied {
    pub sample: GaitSample,
    /// Number of values that landed outside [-1, 1].
    pub out_of_band: usize,
}

impl PreprocessingParams {
    /// Applies the fitted z-transform and scaling to a new sample.
    pub fn apply(&self, sample: &GaitSample) -> Result<Applied> {
        let mode = self
            .z_mode
            .ok_or_else(|| Error::InvalidConfig("preprocessing parameters are not fit".into()))?;
        let scale = self
            .scale
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("scaling parameters are not fit".into()))?;
        let mut values = sample.values.clone();
        match mode {
            ZMode::PerTrial => standardize_rows(&mut values, sample.trial_id)?,
            ZMode::Global => {
                for (mut row, st) in values.rows_mut().into_iter().zip(&self.z_stats) {
                    row.mapv_inplace(|v| (v - st.mean) / st.std);
                }
            }
        }
        let mut out_of_band = 0;
        for (mut row, range) in values.rows_mut().into_iter().zip(scale) {
            row.mapv_inplace(|v| {
                let y = range.apply(v);
                if !(-1.0..=1.0).contains(&y) {
                    out_of_band += 1;
                }
                y
            });
        }
        Ok(Applied {
            sample: GaitSample {
                values,
                ..sample.clone()
            },
            out_of_band,
        })
    }

    /// Inverts the [-1, 1] scaling step (the z-transform is left in place).
    pub fn unscale(&self, sample: &GaitSample) -> Result<GaitSample> {
        let scale = self
            .scale
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("scaling parameters are not fit".into()))?;
        let mut values = sample.values.clone();
        for (mut row, range) in values.rows_mut().into_iter().zip(scale) {
            row.mapv_inplace(|y| range.invert(y));
        }
        Ok(GaitSample {
            values,
            ..sample.clone()
        })
    }
}

/// Linear interpolation of `curve` onto `n_out` uniformly spaced points.
/// Endpoints are preserved exactly.
pub fn resample(curve: &[f64], n_out: usize) -> Result<Vec<f64>> {
    if curve.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "curve needs at least 2 points, got {}",
            curve.len()
        )));
    }
    if n_out < 2 {
        return Err(Error::InvalidInput("target length must be at least 2".into()));
    }
    if let Some(i) = curve.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite value at index {i}")));
    }
    if curve.len() == n_out {
        return Ok(curve.to_vec());
    }
    let last = curve.len() - 1;
    let out = (0..n_out)
        .map(|k| {
            if k == n_out - 1 {
                return curve[last];
            }
            let u = (k * last) as f64 / (n_out - 1) as f64;
            let i = u.floor() as usize;
            let frac = u - i as f64;
            if frac == 0.0 {
                curve[i]
            } else {
                curve[i] + (curve[i + 1] - curve[i]) * frac
            }
        })
        .collect();
    Ok(out)
}

pub fn resample_to_101(curve: &[f64]) -> Result<Vec<f64>> {
    resample(curve, TIME_POINTS)
}

fn standardize_rows(values: &mut Array2<f64>, trial: usize) -> Result<()> {
    for (c, mut row) in values.rows_mut().into_iter().enumerate() {
        let (mean, var) = crate::stats::mean_var(row.as_slice().expect("standard layout"));
        let std = var.sqrt();
        if std == 0.0 {
            return Err(Error::DegenerateChannel {
                channel: c,
                trial: Some(trial),
                reason: "zero variance",
            });
        }
        row.mapv_inplace(|v| (v - mean) / std);
    }
    Ok(())
}

/// z-transform with statistics fit on the full dataset.
pub fn z_transform(dataset: &Dataset, mode: ZMode) -> Result<Dataset> {
    z_transform_fit(dataset, mode, FitScope::Full)
}

pub fn z_transform_fit(dataset: &Dataset, mode: ZMode, scope: FitScope) -> Result<Dataset> {
    let mut samples = dataset.samples().to_vec();
    let mut z_stats = Vec::new();
    match mode {
        ZMode::PerTrial => {
            for s in &mut samples {
                standardize_rows(&mut s.values, s.trial_id)?;
            }
        }
        ZMode::Global => {
            let fit = scope.indices(samples.len());
            if fit.is_empty() {
                return Err(Error::InvalidConfig("empty fit scope".into()));
            }
            for c in 0..dataset.channels() {
                let pooled: Vec<f64> = fit
                    .iter()
                    .flat_map(|&i| samples[i].values.row(c).to_vec())
                    .collect();
                let (mean, var) = crate::stats::mean_var(&pooled);
                let std = var.sqrt();
                if std == 0.0 {
                    return Err(Error::DegenerateChannel {
                        channel: c,
                        trial: None,
                        reason: "zero pooled variance",
                    });
                }
                z_stats.push(ChannelStats { mean, std });
            }
            for s in &mut samples {
                for (mut row, st) in s.values.rows_mut().into_iter().zip(&z_stats) {
                    row.mapv_inplace(|v| (v - st.mean) / st.std);
                }
            }
        }
    }
    let mut out = dataset.with_samples(samples);
    out.preprocessing = PreprocessingParams {
        z_mode: Some(mode),
        z_stats,
        scale: None,
        fit_scope: scope,
        nonstandard_pairing: mode != dataset.feature_set().default_z_mode(),
    };
    Ok(out)
}

/// Per-channel affine scaling onto [-1, 1], fit on the same scope as the
/// preceding z-transform.
pub fn scale_minus1_1(dataset: &Dataset) -> Result<(Dataset, PreprocessingParams)> {
    if dataset.preprocessing.z_mode.is_none() {
        return Err(Error::InvalidConfig(
            "scaling requires a z-transformed dataset".into(),
        ));
    }
    let fit = dataset.preprocessing.fit_scope.indices(dataset.len());
    if fit.is_empty() {
        return Err(Error::InvalidConfig("empty fit scope".into()));
    }
    let samples = dataset.samples();
    let mut ranges = Vec::with_capacity(dataset.channels());
    for c in 0..dataset.channels() {
        let (min, max) = fit
            .iter()
            .flat_map(|&i| samples[i].values.row(c).to_vec())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if max <= min {
            return Err(Error::DegenerateChannel {
                channel: c,
                trial: None,
                reason: "max equals min",
            });
        }
        ranges.push(ChannelRange { min, max });
    }
    let scaled = samples
        .iter()
        .map(|s| {
            let mut values = s.values.clone();
            for (mut row, r) in values.rows_mut().into_iter().zip(&ranges) {
                row.mapv_inplace(|v| r.apply(v));
            }
            GaitSample {
                values,
                ..s.clone()
            }
        })
        .collect();
    let mut params = dataset.preprocessing.clone();
    params.scale = Some(ranges);
    let mut out = dataset.with_samples(scaled);
    out.preprocessing = params.clone();
    Ok((out, params))
}

/// The standard pipeline: z-transform in the feature set's conventional mode,
/// then scaling.
pub fn preprocess(dataset: &Dataset, scope: FitScope) -> Result<Dataset> {
    let z = z_transform_fit(dataset, dataset.feature_set().default_z_mode(), scope)?;
    Ok(scale_minus1_1(&z)?.0)
}
