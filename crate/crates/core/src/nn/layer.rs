use crate::error::{Error, Result};
use crate::tensor::{col2im, conv2d_raw, gemm, im2col, maxpool2d, ArgmaxIndices, ConvGeometry, Tensor};

/// Parameter-free description of a layer, as written in a recipe.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        size: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Dense {
        out_features: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    /// `C_out×C_in×kH×kW`
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn geometry(&self, input: &[usize]) -> Result<ConvGeometry> {
        let [c_out, c_in, kh, kw] = self.weight.shape()[..] else {
            return Err(Error::dim("conv weight must be 4-D"));
        };
        match *input {
            [c, h, w] if c == c_in => {
                ConvGeometry::new([c, h, w], c_out, (kh, kw), self.stride, self.pad)
            }
            _ => Err(Error::dim(format!(
                "conv layer expects {c_in}×H×W input, got {input:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out×in`, so `z = W·x + b`.
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    MaxPool { size: usize, stride: usize },
    Relu,
    Flatten,
    Dense(Dense),
}

/// Parameter gradients of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv(c) => LayerKind::Conv {
                out_channels: c.weight.shape()[0],
                kernel: c.weight.shape()[2],
                stride: c.stride,
                pad: c.pad,
            },
            Layer::MaxPool { size, stride } => LayerKind::MaxPool {
                size: *size,
                stride: *stride,
            },
            Layer::Relu => LayerKind::Relu,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Dense(d) => LayerKind::Dense {
                out_features: d.out_features(),
            },
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv(_))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv(c) => Ok(c.geometry(input)?.output_shape().to_vec()),
            Layer::MaxPool { size, stride } => {
                let [c, h, w] = *input else {
                    return Err(Error::dim(format!("maxpool expects C×H×W, got {input:?}")));
                };
                let probe = Tensor::zeros(vec![c, h, w]);
                Ok(maxpool2d(&probe, *size, *stride)?.0.shape().to_vec())
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => {
                if input != [d.in_features()] {
                    return Err(Error::dim(format!(
                        "dense layer expects [{}] input, got {input:?}",
                        d.in_features()
                    )));
                }
                Ok(vec![d.out_features()])
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Option<ArgmaxIndices>)> {
        match self {
            Layer::Conv(c) => {
                let g = c.geometry(x.shape())?;
                let out = conv2d_raw(x.data(), c.weight.data(), Some(c.bias.data()), &g);
                Ok((Tensor::new(g.output_shape().to_vec(), out)?, None))
            }
            Layer::MaxPool { size, stride } => {
                let (out, arg) = maxpool2d(x, *size, *stride)?;
                Ok((out, Some(arg)))
            }
            Layer::Relu => Ok((crate::tensor::relu(x), None)),
            Layer::Flatten => {
                let n = x.len();
                Ok((x.clone().reshape(vec![n])?, None))
            }
            Layer::Dense(d) => {
                x.expect_shape(&[d.in_features()], "dense input")?;
                Ok((Tensor::new(vec![d.out_features()], dense_forward(d, x.data()))?, None))
            }
        }
    }

    /// Reverse-mode step: given the layer input `x` and `dL/d(out)`, returns
    /// `dL/dx` (when requested) and the parameter gradients.
    pub fn backward(
        &self,
        x: &Tensor,
        argmax: Option<&ArgmaxIndices>,
        grad_out: &Tensor,
        need_input_grad: bool,
    ) -> Result<(Option<Tensor>, Option<ParamGrads>)> {
        match self {
            Layer::Conv(c) => {
                let g = c.geometry(x.shape())?;
                grad_out.expect_shape(&g.output_shape(), "conv grad")?;
                let (k, n) = (g.patch_len(), g.out_pixels());
                let cols = im2col(x.data(), &g);
                let mut dw = vec![0.0; g.c_out * k];
                gemm(false, true, g.c_out, k, n, grad_out.data(), &cols, &mut dw, false);
                let db: Vec<f32> = grad_out
                    .data()
                    .chunks(n)
                    .map(|row| row.iter().map(|&v| v as f64).sum::<f64>() as f32)
                    .collect();
                let dx = if need_input_grad {
                    let mut dcols = vec![0.0; k * n];
                    gemm(true, false, k, n, g.c_out, c.weight.data(), grad_out.data(), &mut dcols, false);
                    Some(Tensor::new(x.shape().to_vec(), col2im(&dcols, &g))?)
                } else {
                    None
                };
                let grads = ParamGrads {
                    weight: Tensor::new(c.weight.shape().to_vec(), dw)?,
                    bias: Tensor::new(vec![g.c_out], db)?,
                };
                Ok((dx, Some(grads)))
            }
            Layer::MaxPool { .. } => {
                let arg = argmax.ok_or_else(|| Error::dim("maxpool backward needs argmax indices"))?;
                let dx = need_input_grad.then(|| arg.scatter(grad_out)).transpose()?;
                Ok((dx, None))
            }
            Layer::Relu => {
                grad_out.expect_shape(x.shape(), "relu grad")?;
                let dx = need_input_grad.then(|| {
                    let data = x
                        .data()
                        .iter()
                        .zip(grad_out.data())
                        .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
                        .collect();
                    Tensor::new(x.shape().to_vec(), data)
                });
                Ok((dx.transpose()?, None))
            }
            Layer::Flatten => {
                let dx = need_input_grad
                    .then(|| grad_out.clone().reshape(x.shape().to_vec()))
                    .transpose()?;
                Ok((dx, None))
            }
            Layer::Dense(d) => {
                let (out, inp) = (d.out_features(), d.in_features());
                grad_out.expect_shape(&[out], "dense grad")?;
                let mut dw = vec![0.0; out * inp];
                gemm(false, false, out, inp, 1, grad_out.data(), x.data(), &mut dw, false);
                let dx = if need_input_grad {
                    let mut dx = vec![0.0; inp];
                    gemm(true, false, inp, 1, out, d.weight.data(), grad_out.data(), &mut dx, false);
                    Some(Tensor::new(x.shape().to_vec(), dx)?)
                } else {
                    None
                };
                let grads = ParamGrads {
                    weight: Tensor::new(vec![out, inp], dw)?,
                    bias: grad_out.clone(),
                };
                Ok((dx, Some(grads)))
            }
        }
    }
}

pub(crate) fn dense_forward(d: &Dense, x: &[f32]) -> Vec<f32> {
    let mut z = d.bias.data().to_vec();
    gemm(
        false,
        false,
        d.out_features(),
        1,
        d.in_features(),
        d.weight.data(),
        x,
        &mut z,
        true,
    );
    z
}
