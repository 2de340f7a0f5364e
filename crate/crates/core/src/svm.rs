//! One-vs-rest linear SVM with squared hinge loss, trained by a primal
//! Newton method.
//!
//! Each class c solves
//! `min_w,b 0.5 |w|^2 + C sum_i max(0, 1 - y_i (w.x_i + b))^2`
//! with `y_i = +1` for samples of class c and `-1` otherwise. The bias is
//! not regularized.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classifier::{labels, stack, Classifier};
use crate::dataset::GaitSample;
use crate::error::{Error, Result};
use crate::lrp::{BiasRelevance, Explain, RelevanceMap};
use crate::network::{LayerSpec, ModelSpec, Shape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    /// Relative stationarity tolerance on the gradient.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 0.1,
            tolerance: 1e-6,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassLog {
    /// Objective value after each iteration, starting with the value at w = 0.
    pub objective: Vec<f64>,
    pub converged: bool,
    /// Final `max |grad|` relative to the initial one.
    pub gradient_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SvmLog {
    pub classes: Vec<ClassLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// A single `Dense(D, L)` layer without softmax.
    pub spec: ModelSpec,
    /// `D x L`, one column per class.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub c: f64,
    pub log: SvmLog,
}

impl SvmModel {
    pub fn new(name: String, input: Shape, weight: Array2<f64>, bias: Array1<f64>, c: f64) -> Result<Self> {
        let (d, l) = weight.dim();
        if d != input.len() || bias.len() != l || l < 2 {
            return Err(Error::Model(format!(
                "SVM parameters {d}x{l} / {} do not fit input {input}",
                bias.len()
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Model("SVM has non-finite parameters".into()));
        }
        Ok(SvmModel {
            spec: ModelSpec {
                name,
                input,
                n_classes: l,
                layers: vec![LayerSpec::Dense { n_in: d, n_out: l }],
            },
            weight,
            bias,
            c,
            log: SvmLog::default(),
        })
    }

    /// Decomposes `f_c(x) = sum_i x_i w_ic + b_c` into `R_i = x_i w_ic` and
    /// the bias term.
    pub fn svm_explain(&self, sample: &GaitSample, class: usize) -> Result<RelevanceMap> {
        if class >= self.spec.n_classes {
            return Err(Error::InvalidInput(format!(
                "class {class} out of range for {} classes",
                self.spec.n_classes
            )));
        }
        if sample.values.len() != self.spec.input.len() {
            return Err(Error::Shape(format!(
                "{} expects {} values, got {}",
                self.spec.name,
                self.spec.input.len(),
                sample.values.len()
            )));
        }
        let w = self.weight.column(class);
        let flat: Vec<f64> = sample.flat().iter().zip(w).map(|(x, w)| x * w).collect();
        let score = flat.iter().sum::<f64>() + self.bias[class];
        let relevance = Array2::from_shape_vec(sample.values.dim(), flat).expect("same length as sample");
        Ok(RelevanceMap {
            relevance,
            bias: vec![BiasRelevance {
                layer: 0,
                relevance: self.bias[class],
            }],
            layer_totals: vec![(0, score)],
            class,
            score,
            epsilon: 0.0,
            model: self.spec.name.clone(),
            subject_id: sample.subject_id,
            trial_id: sample.trial_id,
        })
    }
}

impl Classifier for SvmModel {
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
        if batch.ncols() != self.weight.nrows() {
            return Err(Error::Shape(format!(
                "{} expects {} values, got {}",
                self.spec.name,
                self.weight.nrows(),
                batch.ncols()
            )));
        }
        let mut s = batch.dot(&self.weight);
        s += &self.bias;
        Ok(s)
    }
}

impl Explain for SvmModel {
    fn explain_class(&self, sample: &GaitSample, class: usize, _epsilon: f64) -> Result<RelevanceMap> {
        self.svm_explain(sample, class)
    }
}

/// Trains on `train`, labels taken from `subject_id`.
pub fn svm_train(name: String, train: &[GaitSample], n_classes: usize, cfg: &SvmConfig) -> Result<SvmModel> {
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidConfig("training split is empty".into()))?;
    let input = Shape::grid(first.channels(), first.time_points());
    let x = stack(train)?;
    let y = labels(train);
    let (w, b, log) = fit_ovr(x.view(), &y, n_classes, cfg)?;
    let mut m = SvmModel::new(name, input, w, b, cfg.c)?;
    m.log = log;
    Ok(m)
}

/// One-vs-rest fit on raw rows. Returns `D x L` weights, biases and the log.
pub fn fit_ovr(
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &SvmConfig,
) -> Result<(Array2<f64>, Array1<f64>, SvmLog)> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::InvalidConfig(format!("C must be positive, got {}", cfg.c)));
    }
    if !(cfg.tolerance > 0.0) || cfg.max_iterations == 0 {
        return Err(Error::InvalidConfig("tolerance and iteration cap must be positive".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", x.nrows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Range(format!("label {bad} with {n_classes} classes")));
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidConfig("SVM training needs at least two classes".into()));
    }
    let x = x.as_standard_layout();
    let mut w = Array2::zeros((x.ncols(), n_classes));
    let mut b = Array1::zeros(n_classes);
    let mut log = SvmLog::default();
    for c in 0..n_classes {
        let yc: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let (wc, bc, lc) = fit_binary(x.view(), &yc, cfg);
        w.column_mut(c).assign(&wc);
        b[c] = bc;
        log.classes.push(lc);
    }
    Ok((w, b, log))
}

struct Binary<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    c: f64,
}

impl Binary<'_> {
    /// Slacks `1 - y_i (w.x_i + b)`.
    fn slack(&self, w: &Array1<f64>, b: f64) -> Array1<f64> {
        let mut s = self.x.dot(w);
        for (si, yi) in s.iter_mut().zip(self.y) {
            *si = 1.0 - yi * (*si + b);
        }
        s
    }

    fn objective(&self, w: &Array1<f64>, b: f64) -> f64 {
        let s = self.slack(w, b);
        0.5 * w.dot(w) + self.c * s.iter().map(|&v| if v > 0.0 { v * v } else { 0.0 }).sum::<f64>()
    }

    /// Gradient in `(w, b)` and the active set at the current slacks.
    fn gradient(&self, w: &Array1<f64>, s: &Array1<f64>) -> (Array1<f64>, f64, Vec<usize>) {
        let active: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 0.0).collect();
        let mut gw = w.clone();
        let mut gb = 0.0;
        for &i in &active {
            let f = -2.0 * self.c * self.y[i] * s[i];
            gw.scaled_add(f, &self.x.row(i));
            gb += f;
        }
        (gw, gb, active)
    }

    /// Generalized Hessian times `(vw, vb)` restricted to the active set.
    fn hess_vec(&self, active: &[usize], vw: &Array1<f64>, vb: f64) -> (Array1<f64>, f64) {
        let mut hw = vw.clone();
        let mut hb = 0.0;
        for &i in active {
            let xi = self.x.row(i);
            let t = 2.0 * self.c * (xi.dot(vw) + vb);
            hw.scaled_add(t, &xi);
            hb += t;
        }
        (hw, hb)
    }
}

fn max_abs(gw: &Array1<f64>, gb: f64) -> f64 {
    gw.iter().fold(gb.abs(), |m, v| m.max(v.abs()))
}

/// Newton steps from conjugate gradient on the generalized Hessian, with
/// Armijo backtracking. Terminates once `max |grad| <= tol * max(1, max |grad_0|)`.
fn fit_binary(x: ArrayView2<f64>, y: &[f64], cfg: &SvmConfig) -> (Array1<f64>, f64, ClassLog) {
    const SIGMA: f64 = 0.01;
    let p = Binary { x, y, c: cfg.c };
    let dim = x.ncols();
    let mut w = Array1::<f64>::zeros(dim);
    let mut b = 0.0;
    let mut s = p.slack(&w, b);
    let (mut gw, mut gb, mut active) = p.gradient(&w, &s);
    let scale = max_abs(&gw, gb).max(1.0);
    let mut f = p.objective(&w, b);
    let mut log = ClassLog {
        objective: vec![f],
        ..Default::default()
    };
    for _ in 0..cfg.max_iterations {
        let ratio = max_abs(&gw, gb) / scale;
        log.gradient_ratio = ratio;
        if ratio <= cfg.tolerance {
            log.converged = true;
            break;
        }
        // solve H d = -g approximately
        let (mut dw, mut db) = (Array1::<f64>::zeros(dim), 0.0);
        let (mut rw, mut rb) = (-&gw, -gb);
        let (mut pw, mut pb) = (rw.clone(), rb);
        let g_norm = (gw.dot(&gw) + gb * gb).sqrt();
        let mut rr = rw.dot(&rw) + rb * rb;
        for _ in 0..(dim + 1).min(500) {
            if rr.sqrt() <= 0.1 * g_norm.min(1.0) * g_norm {
                break;
            }
            let (hw, hb) = p.hess_vec(&active, &pw, pb);
            let curv = pw.dot(&hw) + pb * hb;
            if curv <= 1e-300 {
                break;
            }
            let alpha = rr / curv;
            dw.scaled_add(alpha, &pw);
            db += alpha * pb;
            rw.scaled_add(-alpha, &hw);
            rb -= alpha * hb;
            let rr_new = rw.dot(&rw) + rb * rb;
            let beta = rr_new / rr;
            pw = &rw + &(&pw * beta);
            pb = rb + beta * pb;
            rr = rr_new;
        }
        if dw.iter().all(|&v| v == 0.0) && db == 0.0 {
            // steepest descent fallback when CG made no progress
            dw = -&gw;
            db = -gb;
        }
        let slope = gw.dot(&dw) + gb * db;
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let w2 = &w + &(&dw * step);
            let b2 = b + step * db;
            let f2 = p.objective(&w2, b2);
            if f2 <= f + SIGMA * step * slope {
                w = w2;
                b = b2;
                f = f2;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
        log.objective.push(f);
        s = p.slack(&w, b);
        (gw, gb, active) = p.gradient(&w, &s);
    }
    (w, b, log)
}

/// Mean accuracy helper for raw rows.
pub fn predict_rows(w: &Array2<f64>, b: &Array1<f64>, x: ArrayView2<f64>) -> Vec<usize> {
    let mut s = x.dot(w);
    s += b;
    s.axis_iter(Axis(0))
        .map(|r| crate::classifier::argmax(r.as_slice().expect("standard layout")))
        .collect()
}
