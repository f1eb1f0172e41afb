//! Dense row-major `f32` tensors and the handful of kernels the networks need.
//!
//! Images, feature maps, relevance maps and parameters all live in [`Tensor`].
//! Spatial tensors are laid out channel-major (`C×H×W`).

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that every extent is positive and that the
    /// buffer length matches.
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::dim(format!("invalid shape {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f32) -> Self {
        let shape = shape.into();
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "invalid shape {shape:?}"
        );
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
        }
    }

    pub fn from_vec1(data: Vec<f32>) -> Result<Self> {
        let len = data.len();
        Self::new(vec![len], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f32) -> Tensor {
        self.map(|v| v * c)
    }

    /// Sum with `f64` accumulation.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Index of the largest element; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub(crate) fn expect_shape(&self, shape: &[usize], what: &str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::dim(format!(
                "{what}: expected shape {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn chw(&self, what: &str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::dim(format!(
                "{what}: expected C×H×W tensor, got {:?}",
                self.shape
            ))),
        }
    }
}

/// `C = op(A)·op(B)` (or `C += ...` when `accumulate`), all buffers row-major.
///
/// `op(A)` is `m×k` and `op(B)` is `k×n`; a transposed operand is stored in
/// its untransposed shape.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above guarantee that every (row, col) addressed by
    // these strides lies inside the corresponding slice.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of an `m×k` and a `k×n` tensor.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = match a.shape[..] {
        [m, k] => (m, k),
        _ => return Err(Error::dim(format!("matmul lhs must be 2-D, got {:?}", a.shape))),
    };
    let (k2, n) = match b.shape[..] {
        [k2, n] => (k2, n),
        _ => return Err(Error::dim(format!("matmul rhs must be 2-D, got {:?}", b.shape))),
    };
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner extents differ: {:?} · {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    gemm(false, false, m, n, k, &a.data, &b.data, &mut out, false);
    Tensor::new(vec![m, n], out)
}

/// Shape bookkeeping shared by the convolution kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn output_extent(len: usize, pad: usize, k: usize, stride: usize, axis: &str) -> Result<usize> {
    let padded = len + 2 * pad;
    if stride == 0 || k == 0 || padded < k || (padded - k) % stride != 0 {
        return Err(Error::dim(format!(
            "{axis}: extent {len} with pad {pad}, window {k}, stride {stride} is not integral"
        )));
    }
    Ok((padded - k) / stride + 1)
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 3],
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let [c_in, h, w] = input;
        let (kh, kw) = kernel;
        let out_h = output_extent(h, pad, kh, stride, "conv height")?;
        let out_w = output_extent(w, pad, kw, stride, "conv width")?;
        Ok(ConvGeometry {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad,
            out_h,
            out_w,
        })
    }

    /// Rows of the unrolled patch matrix.
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.c_in, self.h, self.w]
    }

    pub fn output_shape(&self) -> [usize; 3] {
        [self.c_out, self.out_h, self.out_w]
    }

    /// Input coordinate read by kernel tap `(ki, kj)` at output cell `(oy, ox)`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ki: usize, kj: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ki).checked_sub(self.pad)?;
        let x = (ox * self.stride + kj).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// Unrolls `input` (`C×H×W`) into a `(C·kH·kW) × (H'·W')` patch matrix.
pub fn im2col(input: &[f32], g: &ConvGeometry) -> Vec<f32> {
    let cols = g.out_pixels();
    let mut out = vec![0.0; g.patch_len() * cols];
    for c in 0..g.c_in {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(oy, ox, ki, kj) {
                            dst[oy * g.out_w + ox] = plane[y * g.w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters a patch matrix back onto a `C×H×W` buffer,
/// summing overlapping taps.
pub fn col2im(cols: &[f32], g: &ConvGeometry) -> Vec<f32> {
    let n = g.out_pixels();
    let mut out = vec![0.0; g.c_in * g.h * g.w];
    for c in 0..g.c_in {
        let plane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        if let Some((y, x)) = g.source(oy, ox, ki, kj) {
                            plane[y * g.w + x] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlation with zero padding plus a per-channel bias.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (c_in, h, w) = input.chw("conv2d input")?;
    let (c_out, kc, kh, kw) = match kernels.shape[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::dim(format!(
                "conv2d kernels must be 4-D, got {:?}",
                kernels.shape
            )))
        }
    };
    if kc != c_in {
        return Err(Error::dim(format!(
            "conv2d kernels expect {kc} input channels, input has {c_in}"
        )));
    }
    bias.expect_shape(&[c_out], "conv2d bias")?;
    let g = ConvGeometry::new([c_in, h, w], c_out, (kh, kw), stride, pad)?;
    let out = conv2d_raw(&input.data, &kernels.data, Some(&bias.data), &g);
    Tensor::new(g.output_shape().to_vec(), out)
}

pub(crate) fn conv2d_raw(
    input: &[f32],
    kernels: &[f32],
    bias: Option<&[f32]>,
    g: &ConvGeometry,
) -> Vec<f32> {
    let cols = im2col(input, g);
    let n = g.out_pixels();
    let mut out = vec![0.0; g.c_out * n];
    if let Some(bias) = bias {
        for (row, &b) in out.chunks_mut(n).zip(bias) {
            row.fill(b);
        }
    }
    gemm(
        false,
        false,
        g.c_out,
        n,
        g.patch_len(),
        kernels,
        &cols,
        &mut out,
        bias.is_some(),
    );
    out
}

/// Winning input coordinate for every output cell of a max-pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgmaxIndices {
    pub input_shape: [usize; 3],
    pub output_shape: [usize; 3],
    /// Flat index into the `C×H×W` input for each output cell.
    pub indices: Vec<usize>,
}

impl ArgmaxIndices {
    /// Routes each output value to its winning input cell, summing where
    /// windows overlap.
    pub fn scatter(&self, values: &Tensor) -> Result<Tensor> {
        values.expect_shape(&self.output_shape, "argmax scatter")?;
        let mut out = Tensor::zeros(self.input_shape.to_vec());
        for (&src, &v) in self.indices.iter().zip(&values.data) {
            out.data[src] += v;
        }
        Ok(out)
    }
}

/// Window maximum with first-in-scan-order tie breaking.
pub fn maxpool2d(input: &Tensor, size: usize, stride: usize) -> Result<(Tensor, ArgmaxIndices)> {
    let (c, h, w) = input.chw("maxpool2d input")?;
    let oh = output_extent(h, 0, size, stride, "pool height")?;
    let ow = output_extent(w, 0, size, stride, "pool width")?;
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut indices = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                        if input.data[idx] > input.data[best] {
                            best = idx;
                        }
                    }
                }
                out.push(input.data[best]);
                indices.push(best);
            }
        }
    }
    let argmax = ArgmaxIndices {
        input_shape: [c, h, w],
        output_shape: [c, oh, ow],
        indices,
    };
    Ok((Tensor::new(vec![c, oh, ow], out)?, argmax))
}

/// Align-corners bilinear interpolation of every channel to `out_h×out_w`.
pub fn bilinear_resize(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = input.chw("bilinear_resize input")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("bilinear_resize output extent must be positive"));
    }
    let ys = sample_positions(h, out_h);
    let xs = sample_positions(w, out_w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &input.data[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = lerp(plane[y0 * w + x0], plane[y0 * w + x1], fx);
                let bottom = lerp(plane[y1 * w + x0], plane[y1 * w + x1], fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

fn sample_positions(len: usize, out: usize) -> Vec<(usize, usize, f32)> {
    (0..out)
        .map(|i| {
            if out == 1 || len == 1 {
                return (0, 0, 0.0);
            }
            let src = i as f64 * (len - 1) as f64 / (out - 1) as f64;
            let lo = (src.floor() as usize).min(len - 1);
            let hi = (lo + 1).min(len - 1);
            (lo, hi, (src - lo as f64) as f32)
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}
