//! Layer-wise relevance propagation with the epsilon rule.
//!
//! Relevance starts at the pre-softmax score of the explained class and is
//! pushed back through every affine layer as
//! `R_i = sum_j x_i w_ij / (z_j + eps * sign(z_j)) * R_j`. The share that
//! lands on a bias is recorded per layer and never handed to the inputs.
//! ReLU and Flatten pass relevance through unchanged.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, Classifier};
use crate::dataset::GaitSample;
use crate::error::{Error, Result};
use crate::network::{LayerSpec, TrainedModel};

pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    TrueClass,
    PredictedClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpConfig {
    pub epsilon: f64,
    pub target: Target,
}

impl Default for LrpConfig {
    fn default() -> Self {
        LrpConfig {
            epsilon: DEFAULT_EPSILON,
            target: Target::TrueClass,
        }
    }
}

/// Relevance absorbed by the bias terms of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRelevance {
    pub layer: usize,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    /// Input relevance, channels x time.
    pub relevance: Array2<f64>,
    pub bias: Vec<BiasRelevance>,
    /// Total relevance entering each affine layer from above, top layer first.
    pub layer_totals: Vec<(usize, f64)>,
    pub class: usize,
    /// Explained score f_c(x), the pre-softmax logit.
    pub score: f64,
    pub epsilon: f64,
    pub model: String,
    pub subject_id: usize,
    pub trial_id: usize,
}

/// Per-boundary conservation residuals of one explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// For each affine layer: incoming minus (outgoing + bias) relevance.
    pub layers: Vec<(usize, f64)>,
    /// `f_c(x) - sum R_i - sum R_bias`.
    pub residual: f64,
    /// `|residual| / max(|f_c(x)|, 1e-3)`.
    pub relative: f64,
}

impl RelevanceMap {
    pub fn input_total(&self) -> f64 {
        self.relevance.sum()
    }

    pub fn bias_total(&self) -> f64 {
        self.bias.iter().map(|b| b.relevance).sum()
    }

    pub fn residual(&self) -> f64 {
        self.score - self.input_total() - self.bias_total()
    }

    pub fn conservation(&self) -> ConservationReport {
        let mut layers = Vec::with_capacity(self.layer_totals.len());
        for (k, &(layer, incoming)) in self.layer_totals.iter().enumerate() {
            let outgoing = match self.layer_totals.get(k + 1) {
                Some(&(_, next)) => next,
                None => self.input_total(),
            };
            let bias = self
                .bias
                .iter()
                .find(|b| b.layer == layer)
                .map_or(0.0, |b| b.relevance);
            layers.push((layer, incoming - outgoing - bias));
        }
        let residual = self.residual();
        ConservationReport {
            layers,
            residual,
            relative: residual.abs() / self.score.abs().max(1e-3),
        }
    }

    pub fn to_file(&self) -> RelevanceFile {
        RelevanceFile {
            model: self.model.clone(),
            subject_id: self.subject_id,
            trial_id: self.trial_id,
            class: self.class,
            score: self.score,
            initialization: "pre-softmax logit".into(),
            epsilon: self.epsilon,
            relevance: self.relevance.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: self.bias.clone(),
            conservation: self.conservation(),
        }
    }
}

/// On-disk form of a relevance map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceFile {
    pub model: String,
    pub subject_id: usize,
    pub trial_id: usize,
    pub class: usize,
    pub score: f64,
    /// Where relevance is seeded; always the explained class logit.
    pub initialization: String,
    pub epsilon: f64,
    pub relevance: Vec<Vec<f64>>,
    pub bias: Vec<BiasRelevance>,
    pub conservation: ConservationReport,
}

impl RelevanceFile {
    pub fn into_map(self) -> Result<RelevanceMap> {
        let rows = self.relevance.len();
        let cols = self.relevance.first().map_or(0, Vec::len);
        let flat: Vec<f64> = self.relevance.into_iter().flatten().collect();
        let relevance = Array2::from_shape_vec((rows, cols), flat)
            .map_err(|_| Error::Shape("ragged relevance grid".into()))?;
        Ok(RelevanceMap {
            relevance,
            bias: self.bias,
            layer_totals: Vec::new(),
            class: self.class,
            score: self.score,
            epsilon: self.epsilon,
            model: self.model,
            subject_id: self.subject_id,
            trial_id: self.trial_id,
        })
    }
}

/// Models that can decompose a class score onto their inputs.
pub trait Explain: Classifier {
    fn explain_class(&self, sample: &GaitSample, class: usize, epsilon: f64) -> Result<RelevanceMap>;
}

/// Explains the class selected by `cfg.target`.
pub fn explain<M: Explain + ?Sized>(model: &M, sample: &GaitSample, cfg: &LrpConfig) -> Result<RelevanceMap> {
    let class = match cfg.target {
        Target::TrueClass => sample.subject_id,
        Target::PredictedClass => model.predict(sample)?.0,
    };
    model.explain_class(sample, class, cfg.epsilon)
}

/// Explains every sample; identical to calling [`explain`] in sequence.
/// Work is spread over up to `threads` scoped threads.
pub fn batch_explain<M: Explain + Sync + ?Sized>(
    model: &M,
    samples: &[GaitSample],
    cfg: &LrpConfig,
    threads: usize,
) -> Result<Vec<RelevanceMap>> {
    let threads = threads.clamp(1, samples.len().max(1));
    if threads == 1 {
        return samples.iter().map(|s| explain(model, s, cfg)).collect();
    }
    let chunk = samples.len().div_ceil(threads);
    let parts: Vec<Result<Vec<RelevanceMap>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|s| explain(model, s, cfg)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("explanation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn stabilize(z: f64, eps: f64) -> f64 {
    z + if z >= 0.0 { eps } else { -eps }
}

/// Splits relevance `r` of affine outputs `z` into per-output ratios `R_j / z_j`
/// and the bias share. `contributes[j]` says whether neuron j has any nonzero
/// input or bias term.
fn ratios(
    z: ArrayView1<f64>,
    r: ArrayView1<f64>,
    bias: ArrayView1<f64>,
    eps: f64,
    layer: usize,
    contributes: impl Fn(usize) -> bool,
) -> Result<(Array1<f64>, f64)> {
    let mut s = Array1::zeros(z.len());
    let mut bias_rel = 0.0;
    for j in 0..z.len() {
        let d = stabilize(z[j], eps);
        if d == 0.0 {
            if r[j] != 0.0 || contributes(j) {
                return Err(Error::ZeroDenominator { layer, neuron: j });
            }
            continue;
        }
        s[j] = r[j] / d;
        bias_rel += bias[j] * s[j];
    }
    Ok((s, bias_rel))
}

impl TrainedModel {
    /// Relevance of every input value for the score of `class`.
    pub fn lrp(&self, sample: &GaitSample, class: usize, epsilon: f64) -> Result<RelevanceMap> {
        if class >= self.spec.n_classes {
            return Err(Error::InvalidInput(format!(
                "class {class} out of range for {} classes",
                self.spec.n_classes
            )));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !self.is_finite() {
            return Err(Error::Model(format!("{} has non-finite parameters", self.spec.name)));
        }
        let pass = self.forward(sample.flat())?;
        let top = self.spec.scoring_layers();
        let logits = pass.logits();
        let score = logits[[0, class]];

        let mut r = Array1::<f64>::zeros(logits.ncols());
        r[class] = score;
        let mut bias = Vec::new();
        let mut layer_totals = Vec::new();

        for i in (0..top).rev() {
            let x = pass.activations[i].row(0);
            let z = pass.activations[i + 1].row(0);
            match self.spec.layers[i] {
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    layer_totals.push((i, r.sum()));
                    let w = &p.weight;
                    let (s, b) = ratios(z, r.view(), p.bias.view(), epsilon, i, |j| {
                        p.bias[j] != 0.0 || x.iter().zip(w.column(j)).any(|(a, b)| a * b != 0.0)
                    })?;
                    r = &x * &w.dot(&s);
                    bias.push(BiasRelevance { layer: i, relevance: b });
                }
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let g = self.conv_geom(i).expect("conv geometry");
                    layer_totals.push((i, r.sum()));
                    let x2 = x.insert_axis(ndarray::Axis(0));
                    let cols = g.im2col(x2);
                    let filters = g.output.depth;
                    let positions = g.positions();
                    let zf = z.to_shape((positions, filters)).expect("output grid");
                    let rf = r.to_shape((positions, filters)).expect("output grid");
                    let mut s = Array2::<f64>::zeros((positions, filters));
                    let mut b_rel = 0.0;
                    for q in 0..positions {
                        let patch = cols.row(q);
                        let (sq, bq) = ratios(zf.row(q), rf.row(q), p.bias.view(), epsilon, i, |h| {
                            p.bias[h] != 0.0
                                || patch.iter().zip(p.weight.column(h)).any(|(a, b)| a * b != 0.0)
                        })?;
                        s.row_mut(q).assign(&sq);
                        b_rel += bq;
                    }
                    let back = g.col2im(s.dot(&p.weight.t()).view(), 1);
                    r = &x * &back.row(0);
                    bias.push(BiasRelevance { layer: i, relevance: b_rel });
                }
                LayerSpec::Relu | LayerSpec::Flatten => {}
                LayerSpec::SoftMax => unreachable!("softmax is excluded from scoring layers"),
            }
        }

        let shape = (sample.channels(), sample.time_points());
        Ok(RelevanceMap {
            relevance: r.into_shape_with_order(shape).map_err(|e| Error::Shape(e.to_string()))?,
            bias,
            layer_totals,
            class,
            score,
            epsilon,
            model: self.spec.name.clone(),
            subject_id: sample.subject_id,
            trial_id: sample.trial_id,
        })
    }
}

impl Explain for TrainedModel {
    fn explain_class(&self, sample: &GaitSample, class: usize, epsilon: f64) -> Result<RelevanceMap> {
        self.lrp(sample, class, epsilon)
    }
}

/// Sum over the rows of a batch of relevance maps, handy for aggregate views.
pub fn mean_relevance(maps: &[RelevanceMap]) -> Option<Array2<f64>> {
    let first = maps.first()?;
    let mut acc = Array2::<f64>::zeros(first.relevance.dim());
    for m in maps {
        acc += &m.relevance;
    }
    Some(acc / maps.len() as f64)
}

/// Relevance-descending order of flattened component indices (stable on ties).
pub fn relevance_order(relevance: ArrayView2<f64>) -> Vec<usize> {
    let flat: Vec<f64> = relevance.iter().copied().collect();
    let mut idx: Vec<usize> = (0..flat.len()).collect();
    idx.sort_by(|&a, &b| flat[b].total_cmp(&flat[a]).then(a.cmp(&b)));
    idx
}

/// Class whose logit is largest for this sample.
pub fn predicted_class<M: Classifier + ?Sized>(model: &M, sample: &GaitSample) -> Result<usize> {
    let x = ArrayView2::from_shape((1, sample.values.len()), sample.flat())
        .map_err(|e| Error::Shape(e.to_string()))?;
    let s = model.scores(x)?;
    Ok(argmax(s.row(0).as_slice().expect("standard layout")))
}
