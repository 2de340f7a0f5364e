//! CSV exchange format: one row per (trial, channel).
//!
//! ```text
//! subject_id,trial_id,feature_set,channel_index,v0,v1,...,vN
//! ```
//!
//! Curves shorter than the header may pad with trailing empty cells; any
//! curve whose length differs from 101 is resampled on ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use super::{resample_to_101, Dataset, FeatureSet, GaitSample, TIME_POINTS};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 4] = ["subject_id", "trial_id", "feature_set", "channel_index"];

pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.len() < FIXED_COLUMNS.len() + 2
        || headers.iter().take(4).ne(FIXED_COLUMNS.iter().copied())
    {
        return Err(err(
            1,
            format!(
                "header must be `{},v0,v1,...`",
                FIXED_COLUMNS.join(",")
            ),
        ));
    }
    let width = headers.len();

    let mut trials: BTreeMap<(usize, usize), (FeatureSet, BTreeMap<usize, Vec<f64>>)> =
        BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != width {
            return Err(err(
                line,
                format!("ragged row: {} cells, header has {}", record.len(), width),
            ));
        }
        let int = |i: usize, name: &str| -> Result<usize> {
            record[i]
                .parse::<usize>()
                .map_err(|_| err(line, format!("{name} `{}` is not a non-negative integer", &record[i])))
        };
        let subject = int(0, "subject_id")?;
        let trial = int(1, "trial_id")?;
        let fs: FeatureSet = record[2]
            .parse()
            .map_err(|_| err(line, format!("unknown feature_set tag `{}`", &record[2])))?;
        let channel = int(3, "channel_index")?;
        if channel >= fs.channels() {
            return Err(err(
                line,
                format!("channel {channel} out of range for {fs} ({} channels)", fs.channels()),
            ));
        }
        let cells: Vec<&str> = record.iter().skip(4).collect();
        let len = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        let mut curve = Vec::with_capacity(len);
        for (k, cell) in cells[..len].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(line, format!("v{k}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(err(line, format!("v{k}: non-finite value")));
            }
            curve.push(v);
        }
        let curve = resample_to_101(&curve).map_err(|e| err(line, e.to_string()))?;

        let entry = trials
            .entry((subject, trial))
            .or_insert_with(|| (fs, BTreeMap::new()));
        if entry.0 != fs {
            return Err(err(
                line,
                format!("trial ({subject}, {trial}) mixes {} and {fs}", entry.0),
            ));
        }
        if entry.1.insert(channel, curve).is_some() {
            return Err(err(
                line,
                format!("duplicate channel {channel} for trial ({subject}, {trial})"),
            ));
        }
    }

    let mut samples = Vec::with_capacity(trials.len());
    for ((subject, trial), (fs, channels)) in trials {
        if channels.len() != fs.channels() {
            return Err(err(
                0,
                format!(
                    "trial ({subject}, {trial}) has {} of {} channels",
                    channels.len(),
                    fs.channels()
                ),
            ));
        }
        let flat: Vec<f64> = channels.into_values().flatten().collect();
        samples.push(GaitSample {
            values: Array2::from_shape_vec((fs.channels(), TIME_POINTS), flat)
                .expect("channels x 101 values"),
            subject_id: subject,
            trial_id: trial,
            feature_set: fs,
        });
    }
    Dataset::new(samples)
}

/// Writes `dataset` in the exchange format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let t = dataset.time_points();
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..t).map(|k| format!("v{k}")));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for s in dataset.samples() {
        for (c, row) in s.values.rows().into_iter().enumerate() {
            let mut rec = vec![
                s.subject_id.to_string(),
                s.trial_id.to_string(),
                s.feature_set.tag().to_string(),
                c.to_string(),
            ];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
        }
    }
    w.flush()?;
    Ok(())
}
