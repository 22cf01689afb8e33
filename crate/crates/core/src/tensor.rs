//! Dense row-major `f32` tensors and the handful of kernels the simulator needs.
//!
//! Every public operation takes its inputs by reference and returns a fresh
//! tensor. Accumulation order is fixed (ascending inner index) so results are
//! reproducible bit-for-bit across runs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlampError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Element-wise operation selector for [`elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
    Square,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(SlampError::InvalidShape {
                shape,
                reason: format!("expected {numel} elements, got {}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SlampError::NonFinite("Tensor::new"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Mutable access for in-crate kernels that keep the finiteness invariant.
    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().sum()
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(SlampError::NonFinite(op))
        }
    }
}

/// Matrix product of `a` (m×k) and `b` (k×n).
///
/// Each output element is accumulated over the inner index in ascending order,
/// which is the same order as a naive triple loop.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = as_matrix(a, "matmul")?;
    let (k2, n) = as_matrix(b, "matmul")?;
    if k != k2 {
        return Err(SlampError::ShapeMismatch {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
    .ensure_finite("matmul")
}

fn as_matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        _ => Err(SlampError::InvalidShape {
            shape: t.shape.clone(),
            reason: format!("{op} expects a 2-D tensor"),
        }),
    }
}

/// Element-wise arithmetic. `Square` is unary and ignores `b`; the others
/// require `b` with an identical shape.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let data = match op {
        ElementwiseOp::Square => a.data.iter().map(|v| v * v).collect(),
        _ => {
            let b = b.ok_or_else(|| SlampError::Config(format!("{op:?} needs two operands")))?;
            if a.shape != b.shape {
                return Err(SlampError::ShapeMismatch {
                    op: "elementwise",
                    left: a.shape.clone(),
                    right: b.shape.clone(),
                });
            }
            let f: fn(f32, f32) -> f32 = match op {
                ElementwiseOp::Add => |x, y| x + y,
                ElementwiseOp::Sub => |x, y| x - y,
                ElementwiseOp::Mul => |x, y| x * y,
                ElementwiseOp::Square => unreachable!(),
            };
            a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
        }
    };
    Tensor {
        shape: a.shape.clone(),
        data,
    }
    .ensure_finite("elementwise")
}

/// Geometry of a 2-D cross-correlation, shared by the forward and both
/// backward kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn from_shapes(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (&[c_in, h, w], &[c_out, kc, kh, kw]) = (input, kernel) else {
            return Err(SlampError::ShapeMismatch {
                op: "conv2d",
                left: input.to_vec(),
                right: kernel.to_vec(),
            });
        };
        if kc != c_in || kh != kw {
            return Err(SlampError::ShapeMismatch {
                op: "conv2d",
                left: input.to_vec(),
                right: kernel.to_vec(),
            });
        }
        let geo = Self {
            in_channels: c_in,
            in_h: h,
            in_w: w,
            out_channels: c_out,
            kernel: kh,
            stride,
            padding,
        };
        geo.validate()?;
        Ok(geo)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(SlampError::OutOfRange {
                name: "stride",
                value: 0.0,
            });
        }
        if self.kernel == 0
            || self.kernel > self.in_h + 2 * self.padding
            || self.kernel > self.in_w + 2 * self.padding
        {
            return Err(SlampError::InvalidShape {
                shape: vec![self.out_channels, self.in_channels, self.kernel, self.kernel],
                reason: format!(
                    "kernel larger than padded input {}x{} (padding {})",
                    self.in_h, self.in_w, self.padding
                ),
            });
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.in_channels, self.in_h, self.in_w]
    }

    pub fn output_shape(&self) -> [usize; 3] {
        [self.out_channels, self.out_h(), self.out_w()]
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    /// Input pixel touched by output `(oy, ox)` through kernel tap `(ky, kx)`,
    /// or `None` when it falls in the zero padding.
    #[inline]
    pub fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let iy = (oy * self.stride + ky).checked_sub(self.padding)?;
        let ix = (ox * self.stride + kx).checked_sub(self.padding)?;
        (iy < self.in_h && ix < self.in_w).then_some((iy, ix))
    }
}

/// 2-D cross-correlation (no kernel flip) of a `C_in×H×W` input with a
/// `C_out×C_in×k×k` kernel.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let geo = ConvGeometry::from_shapes(&input.shape, &kernel.shape, stride, padding)?;
    let mut out = vec![0.0f32; geo.output_shape().iter().product()];
    conv2d_raw(&geo, &input.data, &kernel.data, &mut out);
    Tensor {
        shape: geo.output_shape().to_vec(),
        data: out,
    }
    .ensure_finite("conv2d")
}

/// Accumulates the correlation into `out`. Summation order per output element
/// is `(c_in, ky, kx)` ascending.
pub(crate) fn conv2d_raw(geo: &ConvGeometry, input: &[f32], kernel: &[f32], out: &mut [f32]) {
    let (oh, ow, k) = (geo.out_h(), geo.out_w(), geo.kernel);
    let plane = geo.in_h * geo.in_w;
    for co in 0..geo.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for ci in 0..geo.in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some((iy, ix)) = geo.source(oy, ox, ky, kx) {
                                let w = kernel[((co * geo.in_channels + ci) * k + ky) * k + kx];
                                acc += w * input[ci * plane + iy * geo.in_w + ix];
                            }
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] += acc;
            }
        }
    }
}

/// Gradient of a correlation with respect to its input, accumulated into
/// `grad_input`.
pub(crate) fn conv2d_grad_input(
    geo: &ConvGeometry,
    grad_out: &[f32],
    kernel: &[f32],
    grad_input: &mut [f32],
) {
    let (oh, ow, k) = (geo.out_h(), geo.out_w(), geo.kernel);
    let plane = geo.in_h * geo.in_w;
    for co in 0..geo.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out[(co * oh + oy) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                for ci in 0..geo.in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some((iy, ix)) = geo.source(oy, ox, ky, kx) {
                                let w = kernel[((co * geo.in_channels + ci) * k + ky) * k + kx];
                                grad_input[ci * plane + iy * geo.in_w + ix] += g * w;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of a correlation with respect to its kernel, accumulated into
/// `grad_kernel`.
pub(crate) fn conv2d_grad_kernel(
    geo: &ConvGeometry,
    grad_out: &[f32],
    input: &[f32],
    grad_kernel: &mut [f32],
) {
    let (oh, ow, k) = (geo.out_h(), geo.out_w(), geo.kernel);
    let plane = geo.in_h * geo.in_w;
    for co in 0..geo.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out[(co * oh + oy) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                for ci in 0..geo.in_channels {
                    for ky in 0..k {
                        for kx in 0..k {
                            if let Some((iy, ix)) = geo.source(oy, ox, ky, kx) {
                                grad_kernel[((co * geo.in_channels + ci) * k + ky) * k + kx] +=
                                    g * input[ci * plane + iy * geo.in_w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
}
