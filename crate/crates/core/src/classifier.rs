//! Common read-out interface shared by networks and linear SVMs.

use ndarray::{Array2, ArrayView2, Axis};

use crate::dataset::GaitSample;
use crate::error::{Error, Result};

pub trait Classifier {
    fn name(&self) -> &str;
    fn n_classes(&self) -> usize;
    /// Number of input values, channels x time points.
    fn input_len(&self) -> usize;
    /// Raw class scores (logits) for a batch of flattened samples.
    fn scores(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Predicted labels; ties go to the lowest class index.
    fn predict_batch(&self, batch: ArrayView2<f64>) -> Result<Vec<usize>> {
        let s = self.scores(batch)?;
        Ok(s.rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect())
    }

    /// Label and softmax vector for one sample.
    fn predict(&self, sample: &GaitSample) -> Result<(usize, Vec<f64>)> {
        let x = stack(std::slice::from_ref(sample))?;
        let s = self.scores(x.view())?;
        let p = softmax_rows(s.view());
        let row = p.row(0).to_vec();
        Ok((argmax(s.row(0).as_slice().expect("standard layout")), row))
    }

    /// Fraction of samples whose predicted label equals `subject_id`.
    fn accuracy(&self, samples: &[GaitSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("accuracy of an empty sample set".into()));
        }
        let x = stack(samples)?;
        let pred = self.predict_batch(x.view())?;
        let hits = pred
            .iter()
            .zip(samples)
            .filter(|(p, s)| **p == s.subject_id)
            .count();
        Ok(hits as f64 / samples.len() as f64)
    }
}

/// Index of the largest value, lowest index on ties. NaN never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || values[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    best
}

pub fn softmax_rows(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// Flattens samples into the rows of a `(n, C*T)` matrix.
pub fn stack(samples: &[GaitSample]) -> Result<Array2<f64>> {
    let Some(first) = samples.first() else {
        return Ok(Array2::zeros((0, 0)));
    };
    let len = first.values.len();
    let mut out = Array2::zeros((samples.len(), len));
    for (mut row, s) in out.axis_iter_mut(Axis(0)).zip(samples) {
        if s.values.len() != len {
            return Err(Error::Shape(format!(
                "sample of subject {} trial {} has {} values, expected {len}",
                s.subject_id,
                s.trial_id,
                s.values.len()
            )));
        }
        row.as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(s.flat());
    }
    Ok(out)
}

pub fn labels(samples: &[GaitSample]) -> Vec<usize> {
    samples.iter().map(|s| s.subject_id).collect()
}
