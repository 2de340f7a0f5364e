//! Versioned JSON model files for networks and linear SVMs.
//!
//! Arrays are stored as `{shape, data}` with data in row-major order.
//! Floats are written in shortest round-trip form, so loading returns
//! bit-identical parameters.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::dataset::GaitSample;
use crate::error::{Error, Result};
use crate::lrp::{Explain, RelevanceMap};
use crate::network::{LayerSpec, ModelSpec, Param, TrainedModel, TrainingLog};
use crate::svm::{SvmLog, SvmModel};

pub const FORMAT: &str = "gaitlrp-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Network(TrainedModel),
    Svm(SvmModel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Network,
    LinearSvm,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerParams {
    weight: Tensor,
    bias: Tensor,
}

#[derive(Serialize, Deserialize)]
struct SvmMeta {
    c: f64,
    log: SvmLog,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    family: Family,
    spec: ModelSpec,
    parameters: Vec<Option<LayerParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    svm: Option<SvmMeta>,
}

fn tensor2(a: &Array2<f64>) -> Tensor {
    Tensor {
        shape: vec![a.nrows(), a.ncols()],
        data: a.iter().copied().collect(),
    }
}

fn tensor1(a: &Array1<f64>) -> Tensor {
    Tensor {
        shape: vec![a.len()],
        data: a.to_vec(),
    }
}

fn array2(t: Tensor) -> Result<Array2<f64>> {
    match t.shape[..] {
        [r, c] => Array2::from_shape_vec((r, c), t.data)
            .map_err(|_| Error::Model(format!("weight data does not fill shape {r}x{c}"))),
        _ => Err(Error::Model(format!("expected a 2-d weight, got shape {:?}", t.shape))),
    }
}

fn array1(t: Tensor) -> Result<Array1<f64>> {
    match t.shape[..] {
        [n] if t.data.len() == n => Ok(Array1::from(t.data)),
        _ => Err(Error::Model(format!("bad bias shape {:?}", t.shape))),
    }
}

impl AnyModel {
    pub fn spec(&self) -> &ModelSpec {
        match self {
            AnyModel::Network(m) => &m.spec,
            AnyModel::Svm(m) => &m.spec,
        }
    }

    fn to_file(&self) -> ModelFile {
        match self {
            AnyModel::Network(m) => ModelFile {
                format: FORMAT.into(),
                version: VERSION,
                family: Family::Network,
                spec: m.spec.clone(),
                parameters: m
                    .params
                    .iter()
                    .map(|p| {
                        p.as_ref().map(|p| LayerParams {
                            weight: tensor2(&p.weight),
                            bias: tensor1(&p.bias),
                        })
                    })
                    .collect(),
                training: Some(m.log.clone()),
                svm: None,
            },
            AnyModel::Svm(m) => ModelFile {
                format: FORMAT.into(),
                version: VERSION,
                family: Family::LinearSvm,
                spec: m.spec.clone(),
                parameters: vec![Some(LayerParams {
                    weight: tensor2(&m.weight),
                    bias: tensor1(&m.bias),
                })],
                training: None,
                svm: Some(SvmMeta {
                    c: m.c,
                    log: m.log.clone(),
                }),
            },
        }
    }

    fn from_file(f: ModelFile) -> Result<Self> {
        if f.format != FORMAT {
            return Err(Error::Model(format!("not a model file (format `{}`)", f.format)));
        }
        if f.version != VERSION {
            return Err(Error::Model(format!("unsupported model file version {}", f.version)));
        }
        let params = f
            .parameters
            .into_iter()
            .map(|p| {
                p.map(|p| {
                    Ok(Param {
                        weight: array2(p.weight)?,
                        bias: array1(p.bias)?,
                    })
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        match f.family {
            Family::Network => Ok(AnyModel::Network(TrainedModel::from_parts(
                f.spec,
                params,
                f.training.unwrap_or_default(),
            )?)),
            Family::LinearSvm => {
                let meta = f
                    .svm
                    .ok_or_else(|| Error::Model("SVM model file lacks its `svm` block".into()))?;
                if !matches!(f.spec.layers[..], [LayerSpec::Dense { .. }]) {
                    return Err(Error::Model("SVM spec must be a single dense layer".into()));
                }
                let Some(Some(p)) = params.into_iter().next() else {
                    return Err(Error::Model("SVM model file has no parameters".into()));
                };
                let mut m = SvmModel::new(f.spec.name, f.spec.input, p.weight, p.bias, meta.c)?;
                m.log = meta.log;
                Ok(AnyModel::Svm(m))
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl From<TrainedModel> for AnyModel {
    fn from(m: TrainedModel) -> Self {
        AnyModel::Network(m)
    }
}

impl From<SvmModel> for AnyModel {
    fn from(m: SvmModel) -> Self {
        AnyModel::Svm(m)
    }
}

impl Classifier for AnyModel {
    fn name(&self) -> &str {
        &self.spec().name
    }

    fn n_classes(&self) -> usize {
        self.spec().n_classes
    }

    fn input_len(&self) -> usize {
        self.spec().input.len()
    }

    fn scores(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            AnyModel::Network(m) => m.scores(batch),
            AnyModel::Svm(m) => m.scores(batch),
        }
    }
}

impl Explain for AnyModel {
    fn explain_class(&self, sample: &GaitSample, class: usize, epsilon: f64) -> Result<RelevanceMap> {
        match self {
            AnyModel::Network(m) => m.explain_class(sample, class, epsilon),
            AnyModel::Svm(m) => m.explain_class(sample, class, epsilon),
        }
    }
}
