use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation grid: channels x time x depth, stored row-major in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub time: usize,
    pub depth: usize,
}

impl Shape {
    pub fn grid(channels: usize, time: usize) -> Self {
        Shape {
            channels,
            time,
            depth: 1,
        }
    }

    pub fn vector(n: usize) -> Self {
        Shape {
            channels: 1,
            time: 1,
            depth: n,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.time * self.depth
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.time, self.depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected layer; the input grid is read row-major.
    Dense { n_in: usize, n_out: usize },
    /// `Conv(fc, ft | sc, st | filters)`: filters span `fc` channels and `ft`
    /// time steps across the full input depth. `pad_time` zero columns are
    /// appended to the end of the time axis before convolving.
    Conv {
        fc: usize,
        ft: usize,
        sc: usize,
        st: usize,
        filters: usize,
        #[serde(default, skip_serializing_if = "is_zero")]
        pad_time: usize,
    },
    Relu,
    SoftMax,
    Flatten,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl LayerSpec {
    pub fn conv(fc: usize, ft: usize, sc: usize, st: usize, filters: usize) -> Self {
        LayerSpec::Conv {
            fc,
            ft,
            sc,
            st,
            filters,
            pad_time: 0,
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv { .. })
    }

    /// Inputs feeding each output neuron.
    pub fn fan_in(&self, input: Shape) -> usize {
        match *self {
            LayerSpec::Dense { n_in, .. } => n_in,
            LayerSpec::Conv { fc, ft, .. } => fc * ft * input.depth,
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: Shape, index: usize) -> Result<Shape> {
        let err = |message: String| Error::Spec {
            layer: index,
            message,
        };
        match *self {
            LayerSpec::Dense { n_in, n_out } => {
                if n_in != input.len() {
                    return Err(err(format!(
                        "{self} expects {n_in} inputs, upstream provides {} ({input})",
                        input.len()
                    )));
                }
                if n_out == 0 {
                    return Err(err("dense layer with zero outputs".into()));
                }
                Ok(Shape::vector(n_out))
            }
            LayerSpec::Conv {
                fc,
                ft,
                sc,
                st,
                filters,
                pad_time,
            } => {
                if sc == 0 || st == 0 || filters == 0 || fc == 0 || ft == 0 {
                    return Err(err(format!("{self}: spans, strides and filters must be >= 1")));
                }
                let time = input.time + pad_time;
                if fc > input.channels || ft > time {
                    return Err(err(format!(
                        "{self}: filter larger than input {input} (time padded to {time})"
                    )));
                }
                Ok(Shape {
                    channels: (input.channels - fc) / sc + 1,
                    time: (time - ft) / st + 1,
                    depth: filters,
                })
            }
            LayerSpec::Relu | LayerSpec::SoftMax => Ok(input),
            LayerSpec::Flatten => Ok(Shape::vector(input.len())),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Dense { n_in, n_out } => write!(f, "Dense({n_in},{n_out})"),
            LayerSpec::Conv {
                fc,
                ft,
                sc,
                st,
                filters,
                pad_time,
            } => {
                write!(f, "Conv({fc},{ft}|{sc},{st}|{filters})")?;
                if pad_time > 0 {
                    write!(f, "+pad({pad_time})")?;
                }
                Ok(())
            }
            LayerSpec::Relu => f.write_str("ReLU"),
            LayerSpec::SoftMax => f.write_str("SoftMax"),
            LayerSpec::Flatten => f.write_str("Flatten"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub input: Shape,
    pub n_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Shape entering each layer plus the final output shape
    /// (`layers.len() + 1` entries). Fails on the first inconsistent layer.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input];
        for (i, layer) in self.layers.iter().enumerate() {
            if *layer == LayerSpec::SoftMax && i + 1 != self.layers.len() {
                return Err(Error::Spec {
                    layer: i,
                    message: "SoftMax must be the final layer".into(),
                });
            }
            let next = layer.output_shape(*shapes.last().expect("non-empty"), i)?;
            shapes.push(next);
        }
        let out = *shapes.last().expect("non-empty");
        if out.len() != self.n_classes {
            return Err(Error::Spec {
                layer: self.layers.len().saturating_sub(1),
                message: format!(
                    "model outputs {} values for {} classes",
                    out.len(),
                    self.n_classes
                ),
            });
        }
        Ok(shapes)
    }

    /// Number of layers producing class scores (a trailing SoftMax excluded).
    pub fn scoring_layers(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::SoftMax) => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Input size of the last dense layer.
    pub fn final_dense_inputs(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::Dense { n_in, .. } => Some(*n_in),
            _ => None,
        })
    }

    pub fn describe(&self) -> String {
        self.layers
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_convolution_arithmetic() {
        // 6x101 -> 4x99 -> 2x97 -> 1x96, 32 filters
        let mut s = Shape::grid(6, 101);
        let chain = [
            (LayerSpec::conv(3, 3, 1, 1, 32), (4, 99)),
            (LayerSpec::conv(3, 3, 1, 1, 32), (2, 97)),
            (LayerSpec::conv(2, 2, 1, 1, 32), (1, 96)),
        ];
        for (i, (layer, (c, t))) in chain.iter().enumerate() {
            s = layer.output_shape(s, i).unwrap();
            // closed form for valid convolutions: (n - f) / stride + 1
            assert_eq!((s.channels, s.time), (*c, *t));
        }
        assert_eq!(LayerSpec::Flatten.output_shape(s, 3).unwrap().len(), 3072);
    }

    #[test]
    fn padding_extends_time_axis() {
        let l = LayerSpec::Conv {
            fc: 3,
            ft: 3,
            sc: 3,
            st: 3,
            filters: 64,
            pad_time: 1,
        };
        let out = l.output_shape(Shape::grid(18, 101), 0).unwrap();
        assert_eq!((out.channels, out.time, out.depth), (6, 34, 64));
        assert_eq!(l.to_string(), "Conv(3,3|3,3|64)+pad(1)");
    }

    #[test]
    fn mismatch_names_layer() {
        let spec = ModelSpec {
            name: "bad".into(),
            input: Shape::grid(6, 101),
            n_classes: 3,
            layers: vec![
                LayerSpec::conv(6, 6, 1, 1, 4),
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { n_in: 100, n_out: 3 },
            ],
        };
        match spec.shapes() {
            Err(Error::Spec { layer, .. }) => assert_eq!(layer, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oversized_filter_and_misplaced_softmax() {
        assert!(LayerSpec::conv(7, 3, 1, 1, 2).output_shape(Shape::grid(6, 101), 0).is_err());
        assert!(LayerSpec::conv(3, 3, 0, 1, 2).output_shape(Shape::grid(6, 101), 0).is_err());
        let spec = ModelSpec {
            name: "sm".into(),
            input: Shape::grid(1, 4),
            n_classes: 2,
            layers: vec![LayerSpec::SoftMax, LayerSpec::Dense { n_in: 4, n_out: 2 }],
        };
        assert!(matches!(spec.shapes(), Err(Error::Spec { layer: 0, .. })));
    }
}
