use serde::{Deserialize, Serialize};

use super::linalg::{axpy, dot};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Valid (unpadded) strided 3-d cross-correlation over channel-last volumes.
///
/// Input is `(depth, height, width, in_channels)`, output is
/// `(out_depth, out_height, out_width, filters)` with
/// `out = floor((in - kernel) / stride) + 1` per axis. Weights are stored as
/// `[filter][kd][kh][kw][channel]` so each kernel row lines up with a
/// contiguous run of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv3d {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Input patches gathered during a forward pass, one row per output position.
#[derive(Debug, Clone)]
pub struct Patches {
    pub rows: usize,
    pub data: Vec<f64>,
}

impl Conv3d {
    pub fn new(in_channels: usize, filters: usize, kernel: [usize; 3], stride: [usize; 3]) -> Result<Self> {
        if in_channels == 0 || filters == 0 || kernel.contains(&0) || stride.contains(&0) {
            return Err(Error::Shape(format!(
                "invalid conv layer: channels {in_channels}, filters {filters}, kernel {kernel:?}, stride {stride:?}"
            )));
        }
        let layer = Self {
            in_channels,
            filters,
            kernel,
            stride,
            weights: Vec::new(),
            bias: vec![0.0; filters],
        };
        Ok(Self {
            weights: vec![0.0; filters * layer.patch_len()],
            ..layer
        })
    }

    /// Weights per filter.
    pub fn patch_len(&self) -> usize {
        self.kernel.iter().product::<usize>() * self.in_channels
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for axis in 0..3 {
            if input[axis] < self.kernel[axis] {
                return Err(Error::Shape(format!(
                    "input extent {} on axis {axis} is smaller than kernel {}",
                    input[axis], self.kernel[axis]
                )));
            }
            out[axis] = (input[axis] - self.kernel[axis]) / self.stride[axis] + 1;
        }
        Ok(out)
    }

    fn check_input(&self, input: &Tensor) -> Result<[usize; 3]> {
        let s = input.shape();
        if s.len() != 4 || s[3] != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects (d, h, w, {}) input, got {s:?}",
                self.in_channels
            )));
        }
        self.output_dims([s[0], s[1], s[2]])
    }

    pub fn im2col(&self, input: &Tensor) -> Result<(Patches, [usize; 3])> {
        let out = self.check_input(input)?;
        let s = input.shape();
        let (h, w, c) = (s[1], s[2], s[3]);
        let [kd, kh, kw] = self.kernel;
        let row_len = kw * c;
        let rows = out.iter().product();
        let mut data = Vec::with_capacity(rows * self.patch_len());
        let src = input.data();
        for od in 0..out[0] {
            for oh in 0..out[1] {
                for ow in 0..out[2] {
                    let (d0, h0, w0) = (od * self.stride[0], oh * self.stride[1], ow * self.stride[2]);
                    for dd in 0..kd {
                        for hh in 0..kh {
                            let start = (((d0 + dd) * h + h0 + hh) * w + w0) * c;
                            data.extend_from_slice(&src[start..start + row_len]);
                        }
                    }
                }
            }
        }
        Ok((Patches { rows, data }, out))
    }

    /// Pre-activation output and the patches needed by `backward`.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Patches)> {
        let (patches, out) = self.im2col(input)?;
        let k = self.patch_len();
        let mut values = Vec::with_capacity(patches.rows * self.filters);
        for patch in patches.data.chunks_exact(k) {
            for (f, filter) in self.weights.chunks_exact(k).enumerate() {
                values.push(self.bias[f] + dot(patch, filter));
            }
        }
        let output = Tensor::from_vec(&[out[0], out[1], out[2], self.filters], values)?;
        Ok((output, patches))
    }

    /// Accumulates parameter gradients for `grad_out` (gradient w.r.t. the
    /// pre-activation output) and returns the gradient w.r.t. the input when
    /// `input_shape` is given.
    pub fn backward(
        &self,
        patches: &Patches,
        grad_out: &[f64],
        grad_weights: &mut [f64],
        grad_bias: &mut [f64],
        input_shape: Option<&[usize]>,
    ) -> Result<Option<Tensor>> {
        let k = self.patch_len();
        if grad_out.len() != patches.rows * self.filters {
            return Err(Error::Shape(format!(
                "conv output gradient has {} values, expected {}",
                grad_out.len(),
                patches.rows * self.filters
            )));
        }
        for (patch, g_row) in patches.data.chunks_exact(k).zip(grad_out.chunks_exact(self.filters)) {
            for (f, &g) in g_row.iter().enumerate() {
                if g != 0.0 {
                    axpy(g, patch, &mut grad_weights[f * k..(f + 1) * k]);
                    grad_bias[f] += g;
                }
            }
        }

        let Some(shape) = input_shape else {
            return Ok(None);
        };
        let mut grad_in = Tensor::zeros(shape);
        let out = self.output_dims([shape[0], shape[1], shape[2]])?;
        let (h, w, c) = (shape[1], shape[2], shape[3]);
        let [kd, kh, kw] = self.kernel;
        let row_len = kw * c;
        let mut grad_patch = vec![0.0; k];
        let dst = grad_in.data_mut();
        let mut p = 0;
        for od in 0..out[0] {
            for oh in 0..out[1] {
                for ow in 0..out[2] {
                    let g_row = &grad_out[p * self.filters..(p + 1) * self.filters];
                    p += 1;
                    if g_row.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    grad_patch.iter_mut().for_each(|v| *v = 0.0);
                    for (f, &g) in g_row.iter().enumerate() {
                        if g != 0.0 {
                            axpy(g, &self.weights[f * k..(f + 1) * k], &mut grad_patch);
                        }
                    }
                    let (d0, h0, w0) = (od * self.stride[0], oh * self.stride[1], ow * self.stride[2]);
                    let mut offset = 0;
                    for dd in 0..kd {
                        for hh in 0..kh {
                            let start = (((d0 + dd) * h + h0 + hh) * w + w0) * c;
                            axpy(1.0, &grad_patch[offset..offset + row_len], &mut dst[start..start + row_len]);
                            offset += row_len;
                        }
                    }
                }
            }
        }
        Ok(Some(grad_in))
    }
}

pub fn relu_in_place(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Convolution followed by ReLU.
pub fn conv3d_forward(input: &Tensor, layer: &Conv3d) -> Result<Tensor> {
    let (mut out, _) = layer.forward(input)?;
    relu_in_place(&mut out);
    Ok(out)
}
