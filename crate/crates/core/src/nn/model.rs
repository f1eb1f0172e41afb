use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::layer::{Conv2d, Dense, Layer, LayerKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::tensor::{ArgmaxIndices, Tensor};

/// The four networks of the experimental protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelName {
    S1,
    S2,
    Al1,
    Al2,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [ModelName::S1, ModelName::S2, ModelName::Al1, ModelName::Al2];

    pub fn recipe_source(self) -> &'static str {
        match self {
            ModelName::S1 => include_str!("../../recipes/s1.recipe"),
            ModelName::S2 => include_str!("../../recipes/s2.recipe"),
            ModelName::Al1 => include_str!("../../recipes/al1.recipe"),
            ModelName::Al2 => include_str!("../../recipes/al2.recipe"),
        }
    }

    pub fn recipe(self) -> Recipe {
        Recipe::parse(self.recipe_source()).expect("built-in recipes parse")
    }

    /// Parameter total reported for the original network of this name.
    pub fn reference_param_count(self) -> usize {
        match self {
            ModelName::S1 => 270_578,
            ModelName::S2 => 273_381,
            ModelName::Al1 => 2_664_138,
            ModelName::Al2 => 2_874_810,
        }
    }

    /// Whether the inputs are enlarged to 140×140.
    pub fn enlarged(self) -> bool {
        matches!(self, ModelName::S2 | ModelName::Al2)
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelName::S1 => "S1",
            ModelName::S2 => "S2",
            ModelName::Al1 => "AL1",
            ModelName::Al2 => "AL2",
        })
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(ModelName::S1),
            "s2" => Ok(ModelName::S2),
            "al1" => Ok(ModelName::Al1),
            "al2" => Ok(ModelName::Al2),
            other => Err(Error::config(format!("unknown model '{other}'"))),
        }
    }
}

/// A layer-by-layer architecture description.
///
/// The text form has one directive per line (`#` starts a comment):
///
/// ```text
/// name S1
/// input 1 28 28
/// conv <out_channels> <kernel> <stride> <pad>
/// maxpool <size> <stride>
/// relu
/// flatten
/// dense <out_features>
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recipe {
    pub name: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerKind>,
}

impl Recipe {
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut input = None;
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let directive = words.next().unwrap_or_default();
            let rest: Vec<&str> = words.collect();
            let bad = |msg: &str| Error::config(format!("recipe line {}: {msg}: '{line}'", lineno + 1));
            let nums = || -> Result<Vec<usize>> {
                rest.iter()
                    .map(|w| w.parse::<usize>().map_err(|_| bad("expected integers")))
                    .collect()
            };
            match (directive, rest.len()) {
                ("name", 1) => name = Some(rest[0].to_string()),
                ("input", 3) => {
                    let n = nums()?;
                    input = Some([n[0], n[1], n[2]]);
                }
                ("conv", 4) => {
                    let n = nums()?;
                    layers.push(LayerKind::Conv {
                        out_channels: n[0],
                        kernel: n[1],
                        stride: n[2],
                        pad: n[3],
                    });
                }
                ("maxpool", 2) => {
                    let n = nums()?;
                    layers.push(LayerKind::MaxPool {
                        size: n[0],
                        stride: n[1],
                    });
                }
                ("dense", 1) => layers.push(LayerKind::Dense {
                    out_features: nums()?[0],
                }),
                ("relu", 0) => layers.push(LayerKind::Relu),
                ("flatten", 0) => layers.push(LayerKind::Flatten),
                _ => return Err(bad("unrecognized directive")),
            }
        }
        let recipe = Recipe {
            name: name.ok_or_else(|| Error::config("recipe has no name"))?,
            input_shape: input.ok_or_else(|| Error::config("recipe has no input line"))?,
            layers,
        };
        if recipe.input_shape.contains(&0) {
            return Err(Error::config("recipe input extents must be positive"));
        }
        Ok(recipe)
    }

    pub fn to_text(&self) -> String {
        let [c, h, w] = self.input_shape;
        let mut out = format!("name {}\ninput {c} {h} {w}\n", self.name);
        for layer in &self.layers {
            let line = match *layer {
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => format!("conv {out_channels} {kernel} {stride} {pad}"),
                LayerKind::MaxPool { size, stride } => format!("maxpool {size} {stride}"),
                LayerKind::Relu => "relu".into(),
                LayerKind::Flatten => "flatten".into(),
                LayerKind::Dense { out_features } => format!("dense {out_features}"),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// An ordered layer stack with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub name: String,
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer>,
}

/// Every intermediate value of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    /// `x⁽⁰⁾ … x⁽ᴸ⁾`; the last entry holds the logits.
    pub inputs: Vec<Tensor>,
    /// One slot per layer, filled for max-pool layers.
    pub pool_argmax: Vec<Option<ArgmaxIndices>>,
}

impl ActivationTrace {
    pub fn logits(&self) -> &Tensor {
        self.inputs.last().expect("trace is never empty")
    }

    pub fn predicted_class(&self) -> usize {
        self.logits().argmax()
    }
}

impl Model {
    /// Instantiates a recipe with fan-in scaled normal weights and zero biases.
    pub fn from_recipe(recipe: &Recipe, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream::INIT]));
        let mut shape: Vec<usize> = recipe.input_shape.to_vec();
        let mut layers = Vec::with_capacity(recipe.layers.len());
        for kind in &recipe.layers {
            let layer = match *kind {
                LayerKind::Conv {
                    out_channels,
                    kernel,
                    stride,
                    pad,
                } => {
                    let [c_in, ..] = shape[..] else {
                        return Err(Error::config(format!("conv after non-spatial shape {shape:?}")));
                    };
                    let weight = kaiming(&mut rng, vec![out_channels, c_in, kernel, kernel], c_in * kernel * kernel);
                    Layer::Conv(Conv2d {
                        weight,
                        bias: Tensor::zeros(vec![out_channels]),
                        stride,
                        pad,
                    })
                }
                LayerKind::Dense { out_features } => {
                    let [in_features] = shape[..] else {
                        return Err(Error::config(format!("dense layer needs a flat input, got {shape:?}")));
                    };
                    Layer::Dense(Dense {
                        weight: kaiming(&mut rng, vec![out_features, in_features], in_features),
                        bias: Tensor::zeros(vec![out_features]),
                    })
                }
                LayerKind::MaxPool { size, stride } => Layer::MaxPool { size, stride },
                LayerKind::Relu => Layer::Relu,
                LayerKind::Flatten => Layer::Flatten,
            };
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::config(format!("recipe '{}' does not compose: {e}", recipe.name)))?;
            layers.push(layer);
        }
        let model = Model {
            name: recipe.name.clone(),
            input_shape: recipe.input_shape,
            layers,
        };
        Ok(model)
    }

    pub fn named(name: ModelName, seed: u64) -> Self {
        Self::from_recipe(&name.recipe(), seed).expect("built-in recipes compose")
    }

    pub fn recipe(&self) -> Recipe {
        Recipe {
            name: self.name.clone(),
            input_shape: self.input_shape,
            layers: self.layers.iter().map(Layer::kind).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Shapes of `x⁽⁰⁾ … x⁽ᴸ⁾`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.to_vec()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_conv())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Total number of weight and bias elements.
    pub fn count_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        x.expect_shape(&self.input_shape, "model input")
    }

    /// Applies every layer in order and keeps all intermediates.
    pub fn forward_with_trace(&self, x: &Tensor) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_argmax = Vec::with_capacity(self.layers.len());
        inputs.push(x.clone());
        for layer in &self.layers {
            let (out, arg) = layer.forward(inputs.last().expect("non-empty"))?;
            inputs.push(out);
            pool_argmax.push(arg);
        }
        Ok(ActivationTrace { inputs, pool_argmax })
    }

    /// Logits only, without retaining intermediates.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?.0;
        }
        Ok(cur)
    }
}

fn kaiming(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt() as f32;
    let normal = Normal::new(0.0f32, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| normal.sample(rng)).collect()).expect("shape matches")
}
