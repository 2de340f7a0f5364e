//! Architecture catalog, addressable as `<arch>/<feature set>`, e.g.
//! `CNN-A/GRF`, `MLP-3-1024/LBJAX`, `Linear-SGD/FBJA`, `Linear-SVM/GRF`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spec::{LayerSpec, ModelSpec, Shape};
use crate::dataset::{FeatureSet, TIME_POINTS};
use crate::error::{Error, Result};

pub const MLP_WIDTHS: [usize; 5] = [64, 128, 256, 512, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CnnVariant {
    A,
    A3,
    A6,
    C3,
    C33,
    C6,
}

impl CnnVariant {
    pub const ALL: [CnnVariant; 6] = [
        CnnVariant::A,
        CnnVariant::A3,
        CnnVariant::A6,
        CnnVariant::C3,
        CnnVariant::C33,
        CnnVariant::C6,
    ];

    fn tag(self) -> &'static str {
        match self {
            CnnVariant::A => "A",
            CnnVariant::A3 => "A3",
            CnnVariant::A6 => "A6",
            CnnVariant::C3 => "C3",
            CnnVariant::C33 => "C3-3",
            CnnVariant::C6 => "C6",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    LinearSgd,
    LinearSvm,
    /// `layers` counts dense layers: 2 = one hidden layer, 3 = two hidden.
    Mlp { layers: usize, hidden: usize },
    Cnn(CnnVariant),
}

impl Architecture {
    pub fn is_svm(self) -> bool {
        self == Architecture::LinearSvm
    }

    /// Row label in result tables, e.g. `MLP (3, 256)`.
    pub fn table_label(self) -> String {
        match self {
            Architecture::LinearSgd => "Linear (SGD)".into(),
            Architecture::LinearSvm => "Linear (SVM)".into(),
            Architecture::Mlp { layers, hidden } => format!("MLP ({layers}, {hidden})"),
            Architecture::Cnn(v) => format!("CNN-{}", v.tag()),
        }
    }

    /// Lower-case file-name fragment, e.g. `mlp-3-256`.
    pub fn slug(self) -> String {
        self.to_string().to_ascii_lowercase()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Architecture::LinearSgd => f.write_str("Linear-SGD"),
            Architecture::LinearSvm => f.write_str("Linear-SVM"),
            Architecture::Mlp { layers, hidden } => write!(f, "MLP-{layers}-{hidden}"),
            Architecture::Cnn(v) => write!(f, "CNN-{}", v.tag()),
        }
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown architecture `{s}`"));
        let upper = s.trim().to_ascii_uppercase();
        match upper.as_str() {
            "LINEAR-SGD" | "LINEAR" => return Ok(Architecture::LinearSgd),
            "LINEAR-SVM" | "SVM" => return Ok(Architecture::LinearSvm),
            _ => {}
        }
        if let Some(rest) = upper.strip_prefix("MLP-") {
            let (l, h) = rest.split_once('-').ok_or_else(bad)?;
            let layers: usize = l.parse().map_err(|_| bad())?;
            let hidden: usize = h.parse().map_err(|_| bad())?;
            if !(layers == 2 || layers == 3) || hidden == 0 {
                return Err(bad());
            }
            return Ok(Architecture::Mlp { layers, hidden });
        }
        if let Some(rest) = upper.strip_prefix("CNN-") {
            return CnnVariant::ALL
                .into_iter()
                .find(|v| v.tag() == rest)
                .map(Architecture::Cnn)
                .ok_or_else(bad);
        }
        Err(bad())
    }
}

/// Parses `<arch>/<feature set>`.
pub fn parse_name(name: &str) -> Result<(Architecture, FeatureSet)> {
    let (arch, fs) = name
        .rsplit_once('/')
        .ok_or_else(|| Error::InvalidInput(format!("expected `<arch>/<feature set>`, got `{name}`")))?;
    Ok((arch.parse()?, fs.parse()?))
}

pub fn catalog_name(arch: Architecture, fs: FeatureSet) -> String {
    format!("{arch}/{fs}")
}

fn conv_stack(variant: CnnVariant, fs: FeatureSet) -> Option<Vec<LayerSpec>> {
    use CnnVariant::*;
    use FeatureSet::*;
    let c = LayerSpec::conv;
    let strided_pad = LayerSpec::Conv {
        fc: 3,
        ft: 3,
        sc: 3,
        st: 3,
        filters: 64,
        pad_time: 1,
    };
    let stack = match (variant, fs) {
        (A, Grf | Lbjax) => vec![c(6, 6, 1, 1, 32)],
        (A, Fbja) => vec![c(33, 33, 1, 1, 64)],
        (A, Fbjax) => vec![c(10, 10, 1, 1, 32)],
        (A, Lbja) => vec![c(18, 18, 1, 1, 64)],

        (A3, Grf | Lbjax) => vec![c(6, 3, 1, 1, 32), c(1, 3, 1, 1, 32)],
        (A3, Fbja) => vec![c(33, 3, 1, 1, 64), c(1, 3, 1, 1, 32)],
        (A3, Fbjax) => vec![c(10, 3, 1, 1, 32), c(1, 3, 1, 1, 32)],
        (A3, Lbja) => vec![c(18, 3, 1, 1, 64), c(1, 3, 1, 1, 32)],

        (A6, Grf | Lbjax) => vec![c(6, 6, 1, 1, 32), c(1, 6, 1, 1, 32)],
        (A6, Fbja) => vec![c(33, 6, 1, 1, 32), c(1, 6, 1, 1, 32)],
        (A6, Fbjax) => vec![c(10, 6, 1, 1, 32), c(1, 6, 1, 1, 32)],
        (A6, Lbja) => vec![c(18, 6, 1, 1, 64), c(1, 6, 1, 1, 32)],

        (C3, Grf | Lbjax) => vec![c(3, 3, 1, 1, 32), c(3, 3, 1, 1, 32), c(2, 2, 1, 1, 32)],
        (C3, Fbja | Lbja) => vec![c(3, 3, 1, 1, 32), c(3, 3, 1, 1, 32), c(3, 3, 1, 1, 16)],
        (C3, Fbjax) => vec![c(3, 3, 1, 1, 32), c(3, 3, 1, 1, 32), c(3, 3, 1, 1, 32)],

        (C33, Fbja | Lbja) => vec![strided_pad, c(3, 3, 1, 1, 64), c(3, 3, 1, 1, 32)],
        (C33, Grf | Fbjax | Lbjax) => return None,

        (C6, Grf | Lbjax) => vec![c(6, 6, 1, 1, 32)],
        (C6, Fbja | Lbja) => vec![c(6, 6, 1, 1, 32), c(6, 6, 1, 1, 32), c(6, 6, 1, 1, 16)],
        (C6, Fbjax) => vec![c(6, 6, 1, 1, 32), c(3, 3, 1, 1, 32), c(3, 3, 1, 1, 32)],
    };
    Some(stack)
}

/// Builds the layer stack for `arch` on `fs` with `n_classes` outputs.
/// Dense input sizes are derived from the shape chain.
pub fn model_spec(arch: Architecture, fs: FeatureSet, n_classes: usize) -> Result<ModelSpec> {
    if n_classes < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 classes, got {n_classes}")));
    }
    let input = Shape::grid(fs.channels(), TIME_POINTS);
    let d = input.len();
    let layers = match arch {
        Architecture::LinearSgd | Architecture::LinearSvm => {
            vec![LayerSpec::Dense { n_in: d, n_out: n_classes }]
        }
        Architecture::Mlp { layers, hidden } => {
            let mut v = vec![LayerSpec::Dense { n_in: d, n_out: hidden }, LayerSpec::Relu];
            if layers == 3 {
                v.push(LayerSpec::Dense { n_in: hidden, n_out: hidden });
                v.push(LayerSpec::Relu);
            }
            v.push(LayerSpec::Dense { n_in: hidden, n_out: n_classes });
            v.push(LayerSpec::SoftMax);
            v
        }
        Architecture::Cnn(variant) => {
            let convs = conv_stack(variant, fs).ok_or_else(|| {
                Error::InvalidInput(format!("{arch} is not defined for {fs}"))
            })?;
            let mut v = Vec::new();
            let mut shape = input;
            for (i, conv) in convs.into_iter().enumerate() {
                shape = conv.output_shape(shape, 2 * i)?;
                v.push(conv);
                v.push(LayerSpec::Relu);
            }
            v.push(LayerSpec::Flatten);
            v.push(LayerSpec::Dense { n_in: shape.len(), n_out: n_classes });
            v.push(LayerSpec::SoftMax);
            v
        }
    };
    let spec = ModelSpec {
        name: catalog_name(arch, fs),
        input,
        n_classes,
        layers,
    };
    spec.shapes()?;
    Ok(spec)
}

pub fn lookup(name: &str, n_classes: usize) -> Result<ModelSpec> {
    let (arch, fs) = parse_name(name)?;
    model_spec(arch, fs, n_classes)
}

/// Every network architecture defined for `fs` (the SVM is listed
/// separately since it is not trained by SGD).
pub fn network_architectures(fs: FeatureSet) -> Vec<Architecture> {
    let mut v = vec![Architecture::LinearSgd];
    for layers in [2, 3] {
        for hidden in MLP_WIDTHS {
            v.push(Architecture::Mlp { layers, hidden });
        }
    }
    v.extend(
        CnnVariant::ALL
            .into_iter()
            .filter(|&c| conv_stack(c, fs).is_some())
            .map(Architecture::Cnn),
    );
    v
}

/// Dense input sizes as printed in the published architecture tables,
/// kept only to cross-check the shape arithmetic.
pub const PRINTED_DENSE_INPUTS: &[(CnnVariant, FeatureSet, usize)] = &[
    (CnnVariant::A, FeatureSet::Grf, 3072),
    (CnnVariant::A3, FeatureSet::Grf, 3104),
    (CnnVariant::A6, FeatureSet::Grf, 2912),
    (CnnVariant::C3, FeatureSet::Grf, 3072),
    (CnnVariant::C6, FeatureSet::Grf, 3072),
    (CnnVariant::A, FeatureSet::Fbja, 4416),
    (CnnVariant::A3, FeatureSet::Fbja, 3104),
    (CnnVariant::A6, FeatureSet::Fbja, 2912),
    (CnnVariant::C3, FeatureSet::Fbja, 41040),
    (CnnVariant::C33, FeatureSet::Fbja, 6720),
    (CnnVariant::C6, FeatureSet::Fbja, 24768),
    (CnnVariant::A, FeatureSet::Fbjax, 2944),
    (CnnVariant::A3, FeatureSet::Fbjax, 3104),
    (CnnVariant::A6, FeatureSet::Fbjax, 2912),
    (CnnVariant::C3, FeatureSet::Fbjax, 12160),
    (CnnVariant::C6, FeatureSet::Fbjax, 2944),
    (CnnVariant::A, FeatureSet::Lbja, 5376),
    (CnnVariant::A3, FeatureSet::Lbja, 3104),
    (CnnVariant::A6, FeatureSet::Lbja, 2912),
    (CnnVariant::C3, FeatureSet::Lbja, 18240),
    (CnnVariant::C33, FeatureSet::Lbja, 1920),
    (CnnVariant::C6, FeatureSet::Lbja, 4128),
    (CnnVariant::A, FeatureSet::Lbjax, 3072),
    (CnnVariant::A3, FeatureSet::Lbjax, 3104),
    (CnnVariant::A6, FeatureSet::Lbjax, 2912),
    (CnnVariant::C3, FeatureSet::Lbjax, 3072),
    (CnnVariant::C6, FeatureSet::Lbjax, 3072),
];
