use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};

use super::spec::{LayerSpec, ModelSpec, Shape};
use super::train::TrainingLog;
use crate::classifier::{softmax_rows, Classifier};
use crate::error::{Error, Result};
use crate::rng;

/// Learned weights of a dense or convolutional layer.
///
/// Dense weights are `n_in x n_out`. Convolution weights are
/// `(fc * ft * depth_in) x filters`, rows ordered by (channel offset,
/// time offset, input depth).
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    /// One entry per layer; `None` for parameter-free layers.
    pub params: Vec<Option<Param>>,
    pub log: TrainingLog,
    shapes: Vec<Shape>,
}

/// Activations of a batch: the input and the output of every layer, each
/// flattened to `(batch, len)`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub activations: Vec<Array2<f64>>,
    scoring_layers: usize,
}

impl ForwardPass {
    /// Pre-softmax class scores.
    pub fn logits(&self) -> &Array2<f64> {
        &self.activations[self.scoring_layers]
    }

    pub fn probabilities(&self) -> Array2<f64> {
        softmax_rows(self.logits().view())
    }
}

/// Gradients, shaped like `TrainedModel::params`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Option<Param>>,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub fc: usize,
    pub ft: usize,
    pub sc: usize,
    pub st: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.fc * self.ft * self.input.depth
    }

    pub fn positions(&self) -> usize {
        self.output.channels * self.output.time
    }

    /// Unfolds each receptive field into a row: `(batch * positions, patch_len)`.
    /// Time indices past the end of the input read as zero (padding).
    pub fn im2col(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (n, p, k) = (x.nrows(), self.positions(), self.patch_len());
        let d = self.input.depth;
        let t_in = self.input.time;
        let mut cols = Array2::<f64>::zeros((n * p, k));
        for b in 0..n {
            let xb = x.row(b);
            let xb = xb.as_slice().expect("contiguous activation rows");
            for oc in 0..self.output.channels {
                for ot in 0..self.output.time {
                    let row = (b * self.output.channels + oc) * self.output.time + ot;
                    let mut dst = cols.row_mut(row);
                    let dst = dst.as_slice_mut().expect("contiguous");
                    for i in 0..self.fc {
                        let c = oc * self.sc + i;
                        for j in 0..self.ft {
                            let t = ot * self.st + j;
                            if t >= t_in {
                                continue;
                            }
                            let src = (c * t_in + t) * d;
                            let off = (i * self.ft + j) * d;
                            dst[off..off + d].copy_from_slice(&xb[src..src + d]);
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of `im2col`: scatter-adds patch rows back onto the input grid.
    pub fn col2im(&self, cols: ArrayView2<f64>, n: usize) -> Array2<f64> {
        let d = self.input.depth;
        let t_in = self.input.time;
        let mut x = Array2::<f64>::zeros((n, self.input.len()));
        for b in 0..n {
            let mut xb = x.row_mut(b);
            let xb = xb.as_slice_mut().expect("contiguous");
            for oc in 0..self.output.channels {
                for ot in 0..self.output.time {
                    let row = (b * self.output.channels + oc) * self.output.time + ot;
                    let src = cols.row(row);
                    let src = src.as_slice().expect("contiguous");
                    for i in 0..self.fc {
                        let c = oc * self.sc + i;
                        for j in 0..self.ft {
                            let t = ot * self.st + j;
                            if t >= t_in {
                                continue;
                            }
                            let dst = (c * t_in + t) * d;
                            let off = (i * self.ft + j) * d;
                            for (a, v) in xb[dst..dst + d].iter_mut().zip(&src[off..off + d]) {
                                *a += v;
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

impl TrainedModel {
    /// Initializes weights from N(0, m^-1/2) with m the fan-in of each output
    /// neuron; biases start at zero.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            let p = match *layer {
                LayerSpec::Dense { n_in, n_out } => Some((n_in, n_out)),
                LayerSpec::Conv { filters, .. } => Some((layer.fan_in(shapes[i]), filters)),
                _ => None,
            }
            .map(|(rows, cols)| {
                let fan_in = layer.fan_in(shapes[i]) as f64;
                let normal = Normal::new(0.0, fan_in.powf(-0.5)).expect("positive sigma");
                let mut r = rng::stream(seed, &[0x1a7e, i as u64]);
                Param {
                    weight: Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut r)),
                    bias: Array1::zeros(cols),
                }
            });
            params.push(p);
        }
        Ok(TrainedModel {
            spec,
            params,
            log: TrainingLog::default(),
            shapes,
        })
    }

    /// Assembles a model from explicit parameters, checking their shapes.
    pub fn from_parts(spec: ModelSpec, params: Vec<Option<Param>>, log: TrainingLog) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::Model(format!(
                "{} parameter slots for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        for (i, (layer, p)) in spec.layers.iter().zip(&params).enumerate() {
            let expected = match *layer {
                LayerSpec::Dense { n_in, n_out } => Some((n_in, n_out)),
                LayerSpec::Conv { filters, .. } => Some((layer.fan_in(shapes[i]), filters)),
                _ => None,
            };
            match (expected, p) {
                (None, None) => {}
                (Some(dims), Some(p)) if p.weight.dim() == dims && p.bias.len() == dims.1 => {
                    if p.weight.iter().chain(p.bias.iter()).any(|v| !v.is_finite()) {
                        return Err(Error::Model(format!("layer {i} has non-finite parameters")));
                    }
                }
                _ => {
                    return Err(Error::Model(format!(
                        "layer {i} ({layer}): parameters do not match the spec"
                    )))
                }
            }
        }
        Ok(TrainedModel {
            spec,
            params,
            log,
            shapes,
        })
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.weight.len() + p.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .iter()
            .flatten()
            .all(|p| p.weight.iter().chain(p.bias.iter()).all(|v| v.is_finite()))
    }

    pub(crate) fn conv_geom(&self, layer: usize) -> Option<ConvGeom> {
        match self.spec.layers[layer] {
            LayerSpec::Conv {
                fc,
                ft,
                sc,
                st,
                pad_time,
                ..
            } => {
                let _ = pad_time;
                Some(ConvGeom {
                    input: self.shapes[layer],
                    output: self.shapes[layer + 1],
                    fc,
                    ft,
                    sc,
                    st,
                })
            }
            _ => None,
        }
    }

    fn check_batch(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input.len() {
            return Err(Error::Shape(format!(
                "{} expects inputs of {} values ({}), got {}",
                self.spec.name,
                self.spec.input.len(),
                self.spec.input,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Runs a batch of flattened samples `(batch, C*T)` through every layer.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardPass> {
        self.check_batch(&x)?;
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        acts.push(x.as_standard_layout().into_owned());
        for i in 0..self.spec.layers.len() {
            let next = self.layer_forward(i, acts[i].view());
            acts.push(next);
        }
        Ok(ForwardPass {
            activations: acts,
            scoring_layers: self.spec.scoring_layers(),
        })
    }

    pub(crate) fn layer_forward(&self, i: usize, x: ArrayView2<f64>) -> Array2<f64> {
        let n = x.nrows();
        match self.spec.layers[i] {
            LayerSpec::Dense { .. } => {
                let p = self.params[i].as_ref().expect("dense params");
                let mut z = x.dot(&p.weight);
                z += &p.bias;
                z
            }
            LayerSpec::Conv { .. } => {
                let p = self.params[i].as_ref().expect("conv params");
                let g = self.conv_geom(i).expect("conv geometry");
                let mut z = g.im2col(x).dot(&p.weight);
                z += &p.bias;
                z.into_shape_with_order((n, g.output.len()))
                    .expect("positions x filters is the output grid")
            }
            LayerSpec::Relu => x.mapv(|v| v.max(0.0)),
            LayerSpec::SoftMax => softmax_rows(x),
            LayerSpec::Flatten => x.to_owned(),
        }
    }

    /// Forward pass for one sample given as a flat row-major grid.
    pub fn forward(&self, sample: &[f64]) -> Result<ForwardPass> {
        let x = ArrayView2::from_shape((1, sample.len()), sample)
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.forward_batch(x)
    }

    /// Mean softmax cross-entropy over the batch and its exact gradients.
    pub fn backward_batch(&self, pass: &ForwardPass, targets: &[usize]) -> Result<Gradients> {
        let n = targets.len();
        let logits = pass.logits();
        if logits.nrows() != n {
            return Err(Error::Shape(format!("{} targets for a batch of {}", n, logits.nrows())));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= self.spec.n_classes) {
            return Err(Error::Range(format!("target {t} with {} classes", self.spec.n_classes)));
        }
        let probs = softmax_rows(logits.view());
        let mut loss = 0.0;
        let mut delta = probs;
        for (b, &t) in targets.iter().enumerate() {
            loss -= delta[[b, t]].max(f64::MIN_POSITIVE).ln();
            delta[[b, t]] -= 1.0;
        }
        delta /= n as f64;
        loss /= n as f64;

        let mut grads: Vec<Option<Param>> = vec![None; self.spec.layers.len()];
        for i in (0..self.spec.scoring_layers()).rev() {
            let x = &pass.activations[i];
            let need_input_grad = i > 0;
            match self.spec.layers[i] {
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    grads[i] = Some(Param {
                        weight: x.t().dot(&delta),
                        bias: delta.sum_axis(Axis(0)),
                    });
                    if need_input_grad {
                        delta = delta.dot(&p.weight.t());
                    }
                }
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let g = self.conv_geom(i).expect("conv geometry");
                    let cols = g.im2col(x.view());
                    let dy = delta
                        .into_shape_with_order((n * g.positions(), g.output.depth))
                        .expect("output grid is positions x filters");
                    grads[i] = Some(Param {
                        weight: cols.t().dot(&dy),
                        bias: dy.sum_axis(Axis(0)),
                    });
                    delta = if need_input_grad {
                        g.col2im(dy.dot(&p.weight.t()).view(), n)
                    } else {
                        Array2::zeros((0, 0))
                    };
                }
                LayerSpec::Relu => {
                    let out = &pass.activations[i + 1];
                    ndarray::Zip::from(&mut delta)
                        .and(out)
                        .for_each(|d, &o| {
                            if o <= 0.0 {
                                *d = 0.0;
                            }
                        });
                }
                LayerSpec::Flatten => {}
                LayerSpec::SoftMax => unreachable!("softmax is excluded from scoring layers"),
            }
        }
        Ok(Gradients {
            layers: grads,
            loss,
        })
    }

    /// Gradients of the cross-entropy for a single sample.
    pub fn backward(&self, sample: &[f64], target: usize) -> Result<Gradients> {
        let pass = self.forward(sample)?;
        self.backward_batch(&pass, &[target])
    }

    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.layers) {
            if let (Some(p), Some(g)) = (p.as_mut(), g.as_ref()) {
                p.weight.scaled_add(-learning_rate, &g.weight);
                p.bias.scaled_add(-learning_rate, &g.bias);
            }
        }
    }

    /// Logits for a batch, evaluated in chunks.
    pub fn logits_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&x)?;
        const CHUNK: usize = 64;
        let mut out = Array2::<f64>::zeros((x.nrows(), self.spec.n_classes));
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + CHUNK).min(x.nrows());
            let mut a = x.slice(s![start..end, ..]).to_owned();
            for i in 0..self.spec.scoring_layers() {
                a = self.layer_forward(i, a.view());
            }
            out.slice_mut(s![start..end, ..]).assign(&a);
            start = end;
        }
        Ok(out)
    }
}

impl Classifier for TrainedModel {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    fn scores(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.logits_batch(batch)
    }
}
