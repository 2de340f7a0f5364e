//! Stepwise input perturbation and the area over the perturbation curve.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, labels, stack};
use crate::dataset::GaitSample;
use crate::error::{Error, Result};
use crate::lrp::{relevance_order, Explain};
use crate::rng::{self, Rng};
use crate::stats::MeanStd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Adds N(0, sigma^2) to the component.
    Gaussian { sigma: f64 },
    /// Sets the component to -1.
    SaltMinus,
    /// Sets the component to +1.
    SaltPlus,
    /// Sets the component to 0.
    Pepper,
    /// Replaces the component with a uniform draw from {-1, 0, 1}.
    Shot,
}

impl NoiseKind {
    /// The seven settings of the robustness table, in column order.
    pub const TABLE: [NoiseKind; 7] = [
        NoiseKind::Gaussian { sigma: 0.5 },
        NoiseKind::Gaussian { sigma: 1.0 },
        NoiseKind::Gaussian { sigma: 2.0 },
        NoiseKind::SaltMinus,
        NoiseKind::Pepper,
        NoiseKind::SaltPlus,
        NoiseKind::Shot,
    ];

    /// Column heading used in robustness tables.
    pub fn label(&self) -> String {
        match self {
            NoiseKind::Gaussian { sigma } => format!("Gaussian {sigma:.1}"),
            NoiseKind::SaltMinus => "Salt-".into(),
            NoiseKind::SaltPlus => "Salt+".into(),
            NoiseKind::Pepper => "Pepper".into(),
            NoiseKind::Shot => "Shot".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidConfig(format!("gaussian sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    fn apply(&self, value: f64, r: &mut Rng) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => {
                value + Normal::new(0.0, sigma).expect("validated sigma").sample(r)
            }
            NoiseKind::SaltMinus => -1.0,
            NoiseKind::SaltPlus => 1.0,
            NoiseKind::Pepper => 0.0,
            NoiseKind::Shot => [-1.0, 0.0, 1.0][r.random_range(0..3)],
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseKind::SaltMinus => f.write_str("salt-"),
            NoiseKind::SaltPlus => f.write_str("salt+"),
            NoiseKind::Pepper => f.write_str("pepper"),
            NoiseKind::Shot => f.write_str("shot"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let kind = match t.as_str() {
            "salt-" | "salt_minus" => NoiseKind::SaltMinus,
            "salt+" | "salt_plus" => NoiseKind::SaltPlus,
            "pepper" => NoiseKind::Pepper,
            "shot" => NoiseKind::Shot,
            _ => {
                let sigma = t
                    .strip_prefix("gaussian:")
                    .or_else(|| t.strip_prefix("gauss:"))
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "unknown noise `{s}` (expected gaussian:<sigma>, salt-, salt+, pepper or shot)"
                        ))
                    })?;
                NoiseKind::Gaussian { sigma }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Random,
    RelevanceDescending,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::Random => "random",
            Ordering::RelevanceDescending => "relevance",
        })
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(Ordering::Random),
            "relevance" | "relevance_descending" => Ok(Ordering::RelevanceDescending),
            _ => Err(Error::InvalidInput(format!("unknown ordering `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub noise: NoiseKind,
    pub ordering: Ordering,
    pub steps: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Paired runs draw orders and noise from the sample identity only, so
    /// every model sees the same perturbations. Unpaired runs also mix in
    /// the model name.
    pub paired: bool,
    /// Stabilizer for relevance-ordered runs.
    pub epsilon: f64,
}

impl PerturbationConfig {
    pub fn new(noise: NoiseKind, ordering: Ordering, seed: u64) -> Self {
        PerturbationConfig {
            noise,
            ordering,
            steps: 50,
            repetitions: 10,
            seed,
            paired: true,
            epsilon: crate::lrp::DEFAULT_EPSILON,
        }
    }
}

/// Replaces `order[0..k)` of a flat sample according to `noise`. Draws are
/// taken in order position sequence from `noise_seed`, so for a fixed seed
/// the perturbation at step k extends the one at step k - 1.
pub fn perturb_step(
    sample: &GaitSample,
    order: &[usize],
    k: usize,
    noise: &NoiseKind,
    noise_seed: u64,
) -> Result<GaitSample> {
    noise.validate()?;
    let n = sample.values.len();
    if order.len() != n {
        return Err(Error::InvalidInput(format!(
            "order has {} entries for {n} components",
            order.len()
        )));
    }
    if k > n {
        return Err(Error::Range(format!("step {k} exceeds {n} components")));
    }
    let mut out = sample.clone();
    let flat = out.values.as_slice_mut().expect("standard layout");
    let mut r = rng::stream(noise_seed, &[]);
    for &i in &order[..k] {
        if i >= n {
            return Err(Error::InvalidInput(format!("order entry {i} out of range")));
        }
        flat[i] = noise.apply(flat[i], &mut r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub model: String,
    pub config: PerturbationConfig,
    pub clean_accuracy: f64,
    /// Accuracy after steps 0..=K for each repetition.
    pub curves: Vec<Vec<f64>>,
    pub mean_curve: Vec<f64>,
    /// AOPC of each repetition, percentage points.
    pub aopc_per_repetition: Vec<f64>,
    pub aopc: MeanStd,
}

impl PerturbationReport {
    /// `step,mean,rep0,rep1,...` rows.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("step,mean");
        for r in 0..self.curves.len() {
            s.push_str(&format!(",rep{r}"));
        }
        s.push('\n');
        for k in 0..self.mean_curve.len() {
            s.push_str(&format!("{k},{:.6}", self.mean_curve[k]));
            for c in &self.curves {
                s.push_str(&format!(",{:.6}", c[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Area over the perturbation curve in percentage points:
/// `100 / K * sum_{k=1..K} (acc_0 - acc_k)`.
pub fn aopc(curve: &[f64]) -> f64 {
    let k = curve.len().saturating_sub(1);
    if k == 0 {
        return 0.0;
    }
    let a0 = curve[0];
    100.0 * curve[1..].iter().map(|a| a0 - a).sum::<f64>() / k as f64
}

fn sample_key(s: &GaitSample) -> [u64; 2] {
    [s.subject_id as u64, s.trial_id as u64]
}

/// Perturbs all test samples step by step and tracks accuracy.
pub fn run_perturbation<M: Explain + Sync + ?Sized>(
    model: &M,
    test: &[GaitSample],
    cfg: &PerturbationConfig,
    threads: usize,
) -> Result<PerturbationReport> {
    cfg.noise.validate()?;
    if test.is_empty() {
        return Err(Error::InvalidConfig("perturbation needs a non-empty test set".into()));
    }
    if cfg.repetitions == 0 {
        return Err(Error::InvalidConfig("at least one repetition is required".into()));
    }
    let x0 = stack(test)?;
    let d = x0.ncols();
    if cfg.steps > d {
        return Err(Error::Range(format!("{} steps exceed {d} components", cfg.steps)));
    }
    let y = labels(test);
    let salt = if cfg.paired { 0 } else { rng::hash_str(model.name()) };

    let relevance_orders: Option<Vec<Vec<usize>>> = match cfg.ordering {
        Ordering::Random => None,
        Ordering::RelevanceDescending => Some(
            test.iter()
                .map(|s| {
                    model
                        .explain_class(s, s.subject_id, cfg.epsilon)
                        .map(|m| relevance_order(m.relevance.view()))
                })
                .collect::<Result<_>>()?,
        ),
    };

    let run_rep = |rep: usize| -> Result<Vec<f64>> {
        let mut x = x0.clone();
        let mut orders = Vec::with_capacity(test.len());
        let mut noise_rngs = Vec::with_capacity(test.len());
        for (i, s) in test.iter().enumerate() {
            let key = sample_key(s);
            let order = match &relevance_orders {
                Some(o) => o[i].clone(),
                None => {
                    let mut o: Vec<usize> = (0..d).collect();
                    o.shuffle(&mut rng::stream(cfg.seed, &[salt, 0x0dde, rep as u64, key[0], key[1]]));
                    o
                }
            };
            orders.push(order);
            noise_rngs.push(rng::stream(cfg.seed, &[salt, 0x4015e, rep as u64, key[0], key[1]]));
        }
        let mut curve = Vec::with_capacity(cfg.steps + 1);
        curve.push(batch_accuracy(model, &x, &y)?);
        for k in 0..cfg.steps {
            for i in 0..test.len() {
                let c = orders[i][k];
                x[[i, c]] = cfg.noise.apply(x[[i, c]], &mut noise_rngs[i]);
            }
            curve.push(batch_accuracy(model, &x, &y)?);
        }
        Ok(curve)
    };

    let threads = threads.clamp(1, cfg.repetitions);
    let curves: Vec<Vec<f64>> = if threads == 1 {
        (0..cfg.repetitions).map(run_rep).collect::<Result<_>>()?
    } else {
        let reps: Vec<usize> = (0..cfg.repetitions).collect();
        let chunk = reps.len().div_ceil(threads);
        let run_rep = &run_rep;
        let parts: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = reps
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|&r| run_rep(r)).collect()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("perturbation worker panicked"))
                .collect()
        });
        let mut all = Vec::with_capacity(cfg.repetitions);
        for p in parts {
            all.extend(p?);
        }
        all
    };

    let steps = cfg.steps + 1;
    let mean_curve: Vec<f64> = (0..steps)
        .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
        .collect();
    let aopc_per_repetition: Vec<f64> = curves.iter().map(|c| aopc(c)).collect();
    let aopc = MeanStd::of(&aopc_per_repetition).expect("at least one repetition");
    Ok(PerturbationReport {
        model: model.name().to_string(),
        config: cfg.clone(),
        clean_accuracy: curves[0][0],
        curves,
        mean_curve,
        aopc_per_repetition,
        aopc,
    })
}

fn batch_accuracy<M: Explain + ?Sized>(model: &M, x: &Array2<f64>, y: &[usize]) -> Result<f64> {
    let s = model.scores(x.view())?;
    let hits = s
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(r, &t)| argmax(r.as_slice().expect("standard layout")) == t)
        .count();
    Ok(hits as f64 / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Classifier;
    use crate::dataset::FeatureSet;
    use crate::network::{catalog, TrainedModel};
    use proptest::prelude::*;

    fn sample(seed: u64) -> GaitSample {
        let mut r = rng::stream(seed, &[]);
        GaitSample {
            values: Array2::from_shape_simple_fn((6, 101), || r.random_range(-1.0..1.0)),
            subject_id: 0,
            trial_id: seed as usize,
            feature_set: FeatureSet::Grf,
        }
    }

    fn shuffled(seed: u64) -> Vec<usize> {
        let mut o: Vec<usize> = (0..606).collect();
        o.shuffle(&mut rng::stream(seed, &[]));
        o
    }

    #[test]
    fn step_zero_is_identity() {
        let s = sample(1);
        assert_eq!(perturb_step(&s, &shuffled(0), 0, &NoiseKind::Shot, 3).unwrap(), s);
    }

    #[test]
    fn full_pepper_zeroes_everything() {
        let p = perturb_step(&sample(2), &shuffled(1), 606, &NoiseKind::Pepper, 0).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_touches_exactly_the_prefix() {
        let s = sample(3);
        let order = shuffled(2);
        let p = perturb_step(&s, &order, 3, &NoiseKind::Gaussian { sigma: 1.0 }, 9).unwrap();
        let changed: Vec<usize> = (0..606).filter(|&i| p.flat()[i] != s.flat()[i]).collect();
        let mut want = order[..3].to_vec();
        want.sort();
        assert_eq!(changed, want);
    }

    #[test]
    fn too_many_steps_is_a_range_error() {
        assert!(matches!(
            perturb_step(&sample(0), &shuffled(0), 607, &NoiseKind::Pepper, 0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn aopc_examples() {
        assert_eq!(aopc(&[0.8; 51]), 0.0);
        let mut drop = vec![0.5; 51];
        drop[0] = 1.0;
        assert!((aopc(&drop) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn noise_names_round_trip() {
        for k in NoiseKind::TABLE {
            assert_eq!(k.to_string().parse::<NoiseKind>().unwrap(), k);
        }
        assert!("gaussian:0".parse::<NoiseKind>().is_err());
        assert!("hail".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn report_is_deterministic_and_starts_clean() {
        let m = TrainedModel::build(catalog::lookup("MLP-2-64/GRF", 3).unwrap(), 1).unwrap();
        let test: Vec<GaitSample> = (0..9)
            .map(|i| GaitSample {
                subject_id: (i % 3) as usize,
                ..sample(i)
            })
            .collect();
        let mut cfg = PerturbationConfig::new(NoiseKind::Gaussian { sigma: 1.0 }, Ordering::Random, 4);
        cfg.repetitions = 3;
        cfg.steps = 20;
        let a = run_perturbation(&m, &test, &cfg, 1).unwrap();
        let b = run_perturbation(&m, &test, &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clean_accuracy, m.accuracy(&test).unwrap());
        assert!(a.curves.iter().all(|c| c.len() == 21));
        cfg.ordering = Ordering::RelevanceDescending;
        let r = run_perturbation(&m, &test, &cfg, 1).unwrap();
        assert_eq!(r.clean_accuracy, a.clean_accuracy);
        assert!(run_perturbation(&m, &[], &cfg, 1).is_err());
    }

    proptest! {
        #[test]
        fn perturbed_sets_are_nested(seed in 0u64..1000, k in 1usize..100, noise_ix in 0usize..7) {
            let noise = NoiseKind::TABLE[noise_ix];
            let s = sample(seed);
            let order = shuffled(seed + 1);
            let a = perturb_step(&s, &order, k - 1, &noise, seed).unwrap();
            let b = perturb_step(&s, &order, k, &noise, seed).unwrap();
            // step k agrees with step k-1 everywhere except order[k-1]
            for i in 0..606 {
                if i != order[k - 1] {
                    prop_assert_eq!(a.flat()[i], b.flat()[i]);
                }
            }
        }
    }
}
