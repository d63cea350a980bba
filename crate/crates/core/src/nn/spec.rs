use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::activation::PolyActivation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Output spatial size `ceil(in / stride)`, zero fill split top/left-first.
    Same,
    Valid,
}

/// One layer of a model. Kernels are `(kh, kw)`, strides `(sh, sw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        padding: Padding,
    },
    AvgPool2d {
        pool: [usize; 2],
    },
    /// Symmetric zero padding: `rows` above and below, `cols` left and right.
    ZeroPad2d {
        rows: usize,
        cols: usize,
    },
    Dense {
        units: usize,
    },
    Activation {
        surrogate: String,
    },
    Sigmoid,
}

impl LayerSpec {
    pub fn conv_same(filters: usize, k: usize) -> Self {
        Self::Conv2d {
            filters,
            kernel: [k, k],
            stride: [1, 1],
            padding: Padding::Same,
        }
    }

    pub fn conv_valid(filters: usize, k: usize) -> Self {
        Self::Conv2d {
            filters,
            kernel: [k, k],
            stride: [1, 1],
            padding: Padding::Valid,
        }
    }

    pub fn pool(p: usize) -> Self {
        Self::AvgPool2d { pool: [p, p] }
    }

    pub fn pad(w: usize) -> Self {
        Self::ZeroPad2d { rows: w, cols: w }
    }

    pub fn activation(name: &str) -> Self {
        Self::Activation {
            surrogate: name.to_string(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Conv2d { .. } => "conv2d",
            Self::AvgPool2d { .. } => "avg_pool2d",
            Self::ZeroPad2d { .. } => "zero_pad2d",
            Self::Dense { .. } => "dense",
            Self::Activation { .. } => "activation",
            Self::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl Shape {
    pub fn spatial(h: usize, w: usize, c: usize) -> Self {
        Self::Spatial { h, w, c }
    }

    pub fn len(&self) -> usize {
        match *self {
            Self::Spatial { h, w, c } => h * w * c,
            Self::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Spatial { h, w, c } => write!(f, "{h}x{w}x{c}"),
            Self::Flat(n) => write!(f, "{n}"),
        }
    }
}

/// Per-channel affine map `x * scale + offset` applied to raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Preprocessing {
    /// Maps 8-bit channel values onto `[0, 1]`.
    pub fn unit_range(channels: usize) -> Self {
        Self {
            scale: vec![1.0 / 255.0; channels],
            offset: vec![0.0; channels],
        }
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            offset: vec![0.0; channels],
        }
    }

    /// Applies the map to an HWC-ordered image in place.
    pub fn apply(&self, image: &mut [f64]) {
        let c = self.scale.len();
        for (i, v) in image.iter_mut().enumerate() {
            *v = *v * self.scale[i % c] + self.offset[i % c];
        }
    }
}

/// Architecture plus the surrogate registry its activation layers refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[h, w, c]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub activations: BTreeMap<String, PolyActivation>,
    pub preprocessing: Preprocessing,
}

impl ModelSpec {
    pub fn new(input: [usize; 3], layers: Vec<LayerSpec>) -> Self {
        Self {
            input,
            layers,
            activations: BTreeMap::new(),
            preprocessing: Preprocessing::identity(input[2]),
        }
    }

    pub fn with_activation(mut self, name: &str, p: PolyActivation) -> Self {
        self.activations.insert(name.to_string(), p);
        self
    }

    pub fn input_shape(&self) -> Shape {
        Shape::spatial(self.input[0], self.input[1], self.input[2])
    }

    pub fn surrogate(&self, index: usize, name: &str) -> Result<&PolyActivation, NnError> {
        self.activations.get(name).ok_or_else(|| NnError::UnknownSurrogate {
            layer: index,
            name: name.to_string(),
        })
    }

    /// Output shape after each layer.
    pub fn shape_infer(&self) -> Result<Vec<Shape>, NnError> {
        let [h, w, c] = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(NnError::InvalidLayer {
                layer: 0,
                reason: "input dimensions must be positive".into(),
            });
        }
        let mut shape = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            shape = layer_output(i, layer, shape)?;
            if let LayerSpec::Activation { surrogate } = layer {
                self.surrogate(i, surrogate)?;
            }
            if matches!(layer, LayerSpec::Sigmoid) && i + 1 != self.layers.len() {
                return Err(NnError::InvalidLayer {
                    layer: i,
                    reason: "sigmoid is only allowed as the final layer".into(),
                });
            }
            out.push(shape);
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Shape, NnError> {
        Ok(self.shape_infer()?.last().copied().unwrap_or(self.input_shape()))
    }

    /// Levels consumed by each layer under encryption (sigmoid excluded: 0).
    pub fn layer_depths(&self) -> Result<Vec<usize>, NnError> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(match l {
                    LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. } | LayerSpec::AvgPool2d { .. } => 1,
                    LayerSpec::Activation { surrogate } => self.surrogate(i, surrogate)?.depth(),
                    LayerSpec::ZeroPad2d { .. } | LayerSpec::Sigmoid => 0,
                })
            })
            .collect()
    }

    /// Total encrypted depth.
    pub fn depth_cost(&self) -> Result<usize, NnError> {
        Ok(self.layer_depths()?.iter().sum())
    }

    /// `(weights, bias)` lengths for each layer; zero for parameterless layers.
    pub fn parameter_shapes(&self) -> Result<Vec<(usize, usize)>, NnError> {
        let shapes = self.shape_infer()?;
        let mut prev = self.input_shape();
        let mut out = Vec::with_capacity(self.layers.len());
        for (layer, shape) in self.layers.iter().zip(&shapes) {
            out.push(match layer {
                LayerSpec::Conv2d { filters, kernel, .. } => {
                    let in_c = match prev {
                        Shape::Spatial { c, .. } => c,
                        Shape::Flat(_) => unreachable!("checked by shape inference"),
                    };
                    (kernel[0] * kernel[1] * in_c * filters, *filters)
                }
                LayerSpec::Dense { units } => (prev.len() * units, *units),
                _ => (0, 0),
            });
            prev = *shape;
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> Result<usize, NnError> {
        Ok(self.parameter_shapes()?.iter().map(|(w, b)| w + b).sum())
    }
}

fn invalid(layer: usize, reason: impl Into<String>) -> NnError {
    NnError::InvalidLayer {
        layer,
        reason: reason.into(),
    }
}

/// Output size and leading pad of a same-padded window along one axis.
pub(crate) fn same_geometry(input: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(input);
    (out, total / 2)
}

fn layer_output(i: usize, layer: &LayerSpec, shape: Shape) -> Result<Shape, NnError> {
    let spatial = |what: &str| match shape {
        Shape::Spatial { h, w, c } => Ok((h, w, c)),
        Shape::Flat(_) => Err(invalid(i, format!("{what} needs a spatial input, got {shape}"))),
    };
    match layer {
        LayerSpec::Conv2d {
            filters,
            kernel,
            stride,
            padding,
        } => {
            let (h, w, _) = spatial("conv2d")?;
            if *filters == 0 || kernel.contains(&0) || stride.contains(&0) {
                return Err(invalid(i, "conv2d parameters must be positive"));
            }
            let (oh, ow) = match padding {
                Padding::Same => (same_geometry(h, kernel[0], stride[0]).0, same_geometry(w, kernel[1], stride[1]).0),
                Padding::Valid => {
                    if kernel[0] > h || kernel[1] > w {
                        return Err(invalid(i, format!("kernel {}x{} larger than input {shape}", kernel[0], kernel[1])));
                    }
                    ((h - kernel[0]) / stride[0] + 1, (w - kernel[1]) / stride[1] + 1)
                }
            };
            Ok(Shape::spatial(oh, ow, *filters))
        }
        LayerSpec::AvgPool2d { pool } => {
            let (h, w, c) = spatial("avg_pool2d")?;
            if pool.contains(&0) {
                return Err(invalid(i, "pool size must be positive"));
            }
            if pool[0] > h || pool[1] > w {
                return Err(invalid(i, format!("pool {}x{} larger than input {shape}", pool[0], pool[1])));
            }
            Ok(Shape::spatial(h / pool[0], w / pool[1], c))
        }
        LayerSpec::ZeroPad2d { rows, cols } => {
            let (h, w, c) = spatial("zero_pad2d")?;
            Ok(Shape::spatial(h + 2 * rows, w + 2 * cols, c))
        }
        LayerSpec::Dense { units } => {
            if *units == 0 {
                return Err(invalid(i, "dense units must be positive"));
            }
            Ok(Shape::Flat(*units))
        }
        LayerSpec::Activation { .. } | LayerSpec::Sigmoid => Ok(shape),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu() -> PolyActivation {
        PolyActivation::published_relu()
    }

    #[test]
    fn empty_model_keeps_input_shape() {
        let m = ModelSpec::new([5, 6, 2], vec![]);
        assert_eq!(m.shape_infer().unwrap(), vec![]);
        assert_eq!(m.output_shape().unwrap(), Shape::spatial(5, 6, 2));
        assert_eq!(m.depth_cost().unwrap(), 0);
    }

    #[test]
    fn conv_activation_pool_costs_four() {
        let m = ModelSpec::new([8, 8, 1], vec![LayerSpec::conv_same(2, 3), LayerSpec::activation("r"), LayerSpec::pool(2)])
            .with_activation("r", relu());
        assert_eq!(m.depth_cost().unwrap(), 4);
        assert_eq!(m.output_shape().unwrap(), Shape::spatial(4, 4, 2));
    }

    #[test]
    fn same_padding_geometry() {
        assert_eq!(same_geometry(32, 11, 1), (32, 5));
        assert_eq!(same_geometry(5, 2, 2), (3, 0));
        assert_eq!(same_geometry(6, 3, 2), (3, 0));
        assert_eq!(same_geometry(7, 4, 1), (7, 1));
    }

    #[test]
    fn shape_errors() {
        let m = ModelSpec::new([4, 4, 1], vec![LayerSpec::Dense { units: 3 }, LayerSpec::pool(2)]);
        assert!(matches!(m.shape_infer(), Err(NnError::InvalidLayer { layer: 1, .. })));
        let m = ModelSpec::new([4, 4, 1], vec![LayerSpec::conv_valid(1, 5)]);
        assert!(m.shape_infer().is_err());
        let m = ModelSpec::new([4, 4, 1], vec![LayerSpec::activation("missing")]);
        assert!(matches!(m.shape_infer(), Err(NnError::UnknownSurrogate { layer: 0, .. })));
        let m = ModelSpec::new([4, 4, 1], vec![LayerSpec::Sigmoid, LayerSpec::Dense { units: 1 }]);
        assert!(m.shape_infer().is_err());
    }

    #[test]
    fn parameter_shapes_follow_layers() {
        let m = ModelSpec::new([6, 6, 2], vec![LayerSpec::conv_valid(3, 3), LayerSpec::pool(2), LayerSpec::Dense { units: 5 }]);
        assert_eq!(m.parameter_shapes().unwrap(), vec![(54, 3), (0, 0), (60, 5)]);
        assert_eq!(m.parameter_count().unwrap(), 54 + 3 + 60 + 5);
    }

    #[test]
    fn unknown_layer_kind_is_rejected() {
        let text = r#"{"kind": "max_pool2d", "pool": [2, 2]}"#;
        assert!(serde_json::from_str::<LayerSpec>(text).is_err());
        let ok = r#"{"kind": "avg_pool2d", "pool": [2, 2]}"#;
        assert_eq!(serde_json::from_str::<LayerSpec>(ok).unwrap(), LayerSpec::pool(2));
    }
}
