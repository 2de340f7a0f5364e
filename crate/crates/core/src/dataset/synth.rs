//! Synthetic gait-like trials with a known discriminative region per subject.
//!
//! Every subject shares the same smooth per-channel base curves (three
//! random-phase sinusoids). A subject differs from the others only by a
//! raised-cosine bump confined to its window, placed on a mirrored
//! channel pair (channel `k` and `k + C/2`).

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSet, GaitSample, TIME_POINTS};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPlan {
    /// Every subject's bump lives in the same window.
    Shared(Range<usize>),
    /// One window per subject.
    PerSubject(Vec<Range<usize>>),
    /// Equal-width, non-overlapping windows tiling the time axis.
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub trials_per_subject: usize,
    pub feature_set: FeatureSet,
    pub noise_std: f64,
    pub windows: WindowPlan,
    pub bump_amplitude: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// 10 subjects x 20 trials of GRF-shaped data with disjoint windows.
    pub fn reference(seed: u64) -> Self {
        SynthConfig {
            n_subjects: 10,
            trials_per_subject: 20,
            feature_set: FeatureSet::Grf,
            noise_std: 0.25,
            windows: WindowPlan::Disjoint,
            bump_amplitude: 1.0,
            seed,
        }
    }
}

/// Ground truth recorded by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub windows: Vec<Range<usize>>,
    pub channel_pairs: Vec<(usize, usize)>,
    /// Noise-free per-subject curves, row-major C x T.
    pub templates: Vec<Vec<f64>>,
    pub channels: usize,
    /// Below this noise level the smallest inter-subject template distance
    /// exceeds four times the expected trial-to-template distance.
    pub separation_threshold: f64,
}

impl SynthTruth {
    /// Components carrying the subject's bump.
    pub fn mask(&self, subject: usize) -> Array2<bool> {
        let (a, b) = self.channel_pairs[subject];
        let w = &self.windows[subject];
        Array2::from_shape_fn((self.channels, TIME_POINTS), |(c, t)| {
            (c == a || c == b) && w.contains(&t)
        })
    }

    pub fn template(&self, subject: usize) -> Array2<f64> {
        Array2::from_shape_vec((self.channels, TIME_POINTS), self.templates[subject].clone())
            .expect("template length is C x T")
    }
}

/// Splits the time axis into `n` equal, non-overlapping windows.
pub fn disjoint_windows(n: usize) -> Result<Vec<Range<usize>>> {
    let width = if n == 0 { 0 } else { TIME_POINTS / n };
    if width == 0 {
        return Err(Error::InvalidConfig(format!(
            "cannot fit {n} disjoint windows into {TIME_POINTS} points"
        )));
    }
    Ok((0..n).map(|i| i * width..(i + 1) * width).collect())
}

fn resolve_windows(cfg: &SynthConfig) -> Result<Vec<Range<usize>>> {
    let windows = match &cfg.windows {
        WindowPlan::Shared(w) => vec![w.clone(); cfg.n_subjects],
        WindowPlan::PerSubject(ws) => {
            if ws.len() != cfg.n_subjects {
                return Err(Error::InvalidConfig(format!(
                    "{} windows for {} subjects",
                    ws.len(),
                    cfg.n_subjects
                )));
            }
            ws.clone()
        }
        WindowPlan::Disjoint => disjoint_windows(cfg.n_subjects)?,
    };
    for w in &windows {
        if w.is_empty() {
            return Err(Error::InvalidConfig(format!("empty window {w:?}")));
        }
        if w.end > TIME_POINTS {
            return Err(Error::InvalidConfig(format!(
                "window {w:?} exceeds the {TIME_POINTS}-point time axis"
            )));
        }
    }
    Ok(windows)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<(Dataset, SynthTruth)> {
    if cfg.n_subjects == 0 || cfg.trials_per_subject == 0 {
        return Err(Error::InvalidConfig("need at least one subject and one trial".into()));
    }
    if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise_std = {}", cfg.noise_std)));
    }
    let windows = resolve_windows(cfg)?;
    let channels = cfg.feature_set.channels();
    let half = channels / 2;
    if half == 0 {
        return Err(Error::InvalidConfig("need at least two channels".into()));
    }

    let mut base_rng = rng::stream(cfg.seed, &[0xba5e]);
    let mut base = Array2::<f64>::zeros((channels, TIME_POINTS));
    for c in 0..channels {
        let offset = base_rng.random_range(-0.5..0.5);
        let terms: Vec<(f64, f64)> = (1..=3)
            .map(|m| {
                let amp = base_rng.random_range(0.5..1.5) / m as f64;
                let phase = base_rng.random_range(0.0..2.0 * PI);
                (amp, phase)
            })
            .collect();
        for t in 0..TIME_POINTS {
            let u = t as f64 / (TIME_POINTS - 1) as f64;
            base[[c, t]] = offset
                + terms
                    .iter()
                    .enumerate()
                    .map(|(m, (a, p))| a * (2.0 * PI * (m + 1) as f64 * u + p).sin())
                    .sum::<f64>();
        }
    }

    let mut templates = Vec::with_capacity(cfg.n_subjects);
    let mut pairs = Vec::with_capacity(cfg.n_subjects);
    for (s, w) in windows.iter().enumerate() {
        let mut r = rng::stream(cfg.seed, &[0xb0b, s as u64]);
        let k = r.random_range(0..half);
        let pair = (k, k + half);
        let mut tpl = base.clone();
        let width = (w.end - w.start) as f64;
        for t in w.clone() {
            let bump = cfg.bump_amplitude * (PI * (t - w.start) as f64 / width + PI / (2.0 * width)).sin().powi(2);
            tpl[[pair.0, t]] += bump;
            tpl[[pair.1, t]] += bump;
        }
        templates.push(tpl);
        pairs.push(pair);
    }

    let noise = Normal::new(0.0, cfg.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut samples = Vec::with_capacity(cfg.n_subjects * cfg.trials_per_subject);
    for (s, tpl) in templates.iter().enumerate() {
        for trial in 0..cfg.trials_per_subject {
            let mut r = rng::stream(cfg.seed, &[0x7a1, s as u64, trial as u64]);
            let values = if cfg.noise_std == 0.0 {
                tpl.clone()
            } else {
                tpl.mapv(|v| v + noise.sample(&mut r))
            };
            samples.push(GaitSample {
                values,
                subject_id: s,
                trial_id: trial,
                feature_set: cfg.feature_set,
            });
        }
    }

    let mut min_dist = f64::INFINITY;
    for a in 0..templates.len() {
        for b in a + 1..templates.len() {
            let d = (&templates[a] - &templates[b]).mapv(|v| v * v).sum().sqrt();
            min_dist = min_dist.min(d);
        }
    }
    let dims = (channels * TIME_POINTS) as f64;
    let truth = SynthTruth {
        windows,
        channel_pairs: pairs,
        templates: templates.iter().map(|t| t.iter().copied().collect()).collect(),
        channels,
        separation_threshold: if min_dist.is_finite() {
            min_dist / (4.0 * dims.sqrt())
        } else {
            f64::INFINITY
        },
    };
    Ok((Dataset::new(samples)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(subjects: usize, noise: f64, windows: WindowPlan) -> SynthConfig {
        SynthConfig {
            n_subjects: subjects,
            trials_per_subject: 20,
            feature_set: FeatureSet::Grf,
            noise_std: noise,
            windows,
            bump_amplitude: 1.0,
            seed: 11,
        }
    }

    fn dist(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a - b).mapv(|v| v * v).sum().sqrt()
    }

    #[test]
    fn zero_noise_trials_identical() {
        let (ds, _) = synth_generate(&cfg(3, 0.0, WindowPlan::Disjoint)).unwrap();
        for group in ds.indices_by_subject() {
            let first = &ds.samples()[group[0]].values;
            assert!(group.iter().all(|&i| &ds.samples()[i].values == first));
        }
    }

    #[test]
    fn deterministic() {
        let c = cfg(4, 0.3, WindowPlan::Disjoint);
        let (a, ta) = synth_generate(&c).unwrap();
        let (b, tb) = synth_generate(&c).unwrap();
        assert_eq!(ta, tb);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn nearest_template_oracle_is_perfect_on_disjoint_windows() {
        let c = cfg(
            2,
            0.2,
            WindowPlan::PerSubject(vec![10..30, 60..80]),
        );
        let (ds, truth) = synth_generate(&c).unwrap();
        let templates: Vec<_> = (0..2).map(|s| truth.template(s)).collect();
        for s in ds.samples() {
            let pred = (0..2)
                .min_by(|&a, &b| {
                    dist(&s.values, &templates[a])
                        .partial_cmp(&dist(&s.values, &templates[b]))
                        .unwrap()
                })
                .unwrap();
            assert_eq!(pred, s.subject_id);
        }
    }

    #[test]
    fn bump_confined_to_mask() {
        let (_, truth) = synth_generate(&cfg(5, 0.0, WindowPlan::Disjoint)).unwrap();
        let t0 = truth.template(0);
        for s in 1..5 {
            let diff = truth.template(s) - &t0;
            let m_s = truth.mask(s);
            let m_0 = truth.mask(0);
            for ((c, t), d) in diff.indexed_iter() {
                if !m_s[[c, t]] && !m_0[[c, t]] {
                    assert_eq!(*d, 0.0);
                }
            }
            assert!(m_s.iter().filter(|&&b| b).count() == 2 * 20);
        }
    }

    #[test]
    fn empty_window_rejected() {
        assert!(matches!(
            synth_generate(&cfg(2, 0.1, WindowPlan::Shared(5..5))),
            Err(Error::InvalidConfig(_))
        ));
        assert!(synth_generate(&cfg(2, 0.1, WindowPlan::Shared(90..120))).is_err());
        assert!(disjoint_windows(102).is_err());
    }

    #[test]
    fn separation_below_threshold() {
        let (_, probe) = synth_generate(&cfg(4, 0.0, WindowPlan::Disjoint)).unwrap();
        let noise = probe.separation_threshold * 0.9;
        let (ds, truth) = synth_generate(&cfg(4, noise, WindowPlan::Disjoint)).unwrap();
        let templates: Vec<_> = (0..4).map(|s| truth.template(s)).collect();
        let mut min_inter = f64::INFINITY;
        for a in 0..4 {
            for b in a + 1..4 {
                min_inter = min_inter.min(dist(&templates[a], &templates[b]));
            }
        }
        let max_spread = ds
            .indices_by_subject()
            .iter()
            .flat_map(|g| {
                g.iter().flat_map(|&i| {
                    g.iter().map(move |&j| (i, j))
                })
            })
            .map(|(i, j)| dist(&ds.samples()[i].values, &ds.samples()[j].values))
            .fold(0.0, f64::max);
        assert!(min_inter > max_spread, "{min_inter} <= {max_spread}");
    }
}
