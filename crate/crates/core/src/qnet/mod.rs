//! Convolutional Q-network: three valid 3-d convolutions over the
//! (time, asset, feature) history volume, then two fully connected layers
//! producing one value per action. Forward and backward passes are written
//! out by hand.

mod conv3d;
mod dense;
pub mod gradcheck;
mod linalg;
mod optim;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::NUM_FEATURES;
use crate::preprocessing::HistoryBlock;
use crate::tensor::Tensor;

pub use conv3d::{conv3d_forward, relu_in_place, Conv3d, Patches};
pub use dense::{sigmoid, Dense};
pub use optim::{Optimizer, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// `(time, asset, feature)` extent.
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub filters: usize,
}

/// Architecture of a Q-network for a given window and asset count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QNetSpec {
    pub window: usize,
    pub assets: usize,
    pub features: usize,
    pub convs: Vec<ConvSpec>,
    pub hidden: usize,
    pub output: OutputActivation,
}

impl QNetSpec {
    /// The reference architecture: conv 6x2x3/32, 5x4x4/64 stride (2,1,1),
    /// 3x3x3/64 stride (2,1,1), fc 512, fc 2m+1 with sigmoid output.
    pub fn reference(window: usize, assets: usize) -> Self {
        Self {
            window,
            assets,
            features: NUM_FEATURES,
            convs: vec![
                ConvSpec {
                    kernel: [6, 2, 3],
                    stride: [1, 1, 1],
                    filters: 32,
                },
                ConvSpec {
                    kernel: [5, 4, 4],
                    stride: [2, 1, 1],
                    filters: 64,
                },
                ConvSpec {
                    kernel: [3, 3, 3],
                    stride: [2, 1, 1],
                    filters: 64,
                },
            ],
            hidden: 512,
            output: OutputActivation::Sigmoid,
        }
    }

    /// The reference layer stack with every kernel clamped to the extent it
    /// actually sees, for windows or asset counts too small for the full
    /// filters.
    pub fn fitted(window: usize, assets: usize) -> Self {
        let mut spec = Self::reference(window, assets);
        spec.fit_kernels();
        spec
    }

    /// Clamps kernels layer by layer so every convolution has valid output.
    pub fn fit_kernels(&mut self) {
        let mut dims = [self.window, self.assets, self.features];
        for conv in &mut self.convs {
            for axis in 0..3 {
                conv.kernel[axis] = conv.kernel[axis].min(dims[axis]).max(1);
                dims[axis] = (dims[axis] - conv.kernel[axis]) / conv.stride[axis] + 1;
            }
        }
    }

    pub fn with_filters(mut self, filters: &[usize]) -> Result<Self> {
        if filters.len() != self.convs.len() {
            return Err(Error::Config(format!(
                "expected {} filter counts, got {}",
                self.convs.len(),
                filters.len()
            )));
        }
        for (c, &f) in self.convs.iter_mut().zip(filters) {
            c.filters = f;
        }
        Ok(self)
    }

    pub fn num_actions(&self) -> usize {
        2 * self.assets + 1
    }

    /// Activation shapes from input to output, e.g. for window 30 and 8 assets:
    /// `[30,8,9,1] [25,7,7,32] [11,4,4,64] [5,2,2,64] [1280] [512] [17]`.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let mut chain = vec![vec![self.window, self.assets, self.features, 1]];
        let mut dims = [self.window, self.assets, self.features];
        let mut channels = 1;
        for c in &self.convs {
            let layer = Conv3d::new(channels, c.filters, c.kernel, c.stride)?;
            dims = layer.output_dims(dims)?;
            channels = c.filters;
            chain.push(vec![dims[0], dims[1], dims[2], channels]);
        }
        chain.push(vec![dims.iter().product::<usize>() * channels]);
        chain.push(vec![self.hidden]);
        chain.push(vec![self.num_actions()]);
        Ok(chain)
    }
}

/// Gradients (or any per-parameter values) in network parameter order:
/// each conv's weights and bias, then fc1, then fc2.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(shapes: &[usize]) -> Self {
        Self {
            tensors: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    version: u64,
    input_shape: Vec<usize>,
    conv_outputs: Vec<Tensor>,
    patches: Vec<Patches>,
    hidden: Vec<f64>,
    q_values: Vec<f64>,
}

impl ForwardPass {
    pub fn q_values(&self) -> &[f64] {
        &self.q_values
    }

    /// Post-ReLU output of each convolution.
    pub fn conv_outputs(&self) -> &[Tensor] {
        &self.conv_outputs
    }

    /// Post-ReLU hidden layer.
    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    spec: QNetSpec,
    convs: Vec<Conv3d>,
    fc1: Dense,
    fc2: Dense,
    /// Bumped on every parameter update so stale forward passes are caught.
    #[serde(default)]
    version: u64,
}

impl QNetwork {
    /// Zero-initialized parameters.
    pub fn zeroed(spec: QNetSpec) -> Result<Self> {
        let chain = spec.shape_chain()?;
        let mut convs = Vec::with_capacity(spec.convs.len());
        let mut channels = 1;
        for c in &spec.convs {
            convs.push(Conv3d::new(channels, c.filters, c.kernel, c.stride)?);
            channels = c.filters;
        }
        let flat = chain[chain.len() - 3][0];
        let fc1 = Dense::new(flat, spec.hidden)?;
        let fc2 = Dense::new(spec.hidden, spec.num_actions())?;
        Ok(Self {
            spec,
            convs,
            fc1,
            fc2,
            version: 0,
        })
    }

    /// He-uniform weights for the ReLU layers, Xavier-uniform for the output
    /// layer, zero biases.
    pub fn new(spec: QNetSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in &mut net.convs {
            let bound = (6.0 / conv.patch_len() as f64).sqrt();
            conv.weights.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
        }
        let bound = (6.0 / net.fc1.inputs as f64).sqrt();
        net.fc1.weights.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
        let bound = (6.0 / (net.fc2.inputs + net.fc2.outputs) as f64).sqrt();
        net.fc2.weights.iter_mut().for_each(|w| *w = rng.gen_range(-bound..bound));
        Ok(net)
    }

    pub fn spec(&self) -> &QNetSpec {
        &self.spec
    }

    pub fn num_actions(&self) -> usize {
        self.spec.num_actions()
    }

    pub fn convs(&self) -> &[Conv3d] {
        &self.convs
    }

    pub fn fc1(&self) -> &Dense {
        &self.fc1
    }

    pub fn fc2(&self) -> &Dense {
        &self.fc2
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.convs {
            out.push(&c.weights);
            out.push(&c.bias);
        }
        out.extend([&self.fc1.weights[..], &self.fc1.bias, &self.fc2.weights, &self.fc2.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weights);
            out.push(&mut c.bias);
        }
        out.push(&mut self.fc1.weights);
        out.push(&mut self.fc1.bias);
        out.push(&mut self.fc2.weights);
        out.push(&mut self.fc2.bias);
        out
    }

    /// Replaces all parameters (checkpoint restore).
    pub fn set_params(&mut self, values: &[Vec<f64>]) -> Result<()> {
        let shapes = self.param_shapes();
        if values.len() != shapes.len() || values.iter().zip(&shapes).any(|(v, &n)| v.len() != n) {
            return Err(Error::Shape("parameter list does not match the architecture".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        for (dst, src) in self.params_mut().into_iter().zip(values) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn apply_gradients(&mut self, optimizer: &mut Optimizer, grads: &Gradients) -> Result<()> {
        optimizer.step(self.params_mut(), grads)
    }

    /// Deep copy used as the target network.
    pub fn sync_target(&self) -> QNetwork {
        self.clone()
    }

    fn input_tensor(&self, block: &HistoryBlock) -> Result<Tensor> {
        let (w, m, f) = block.shape();
        if (w, m, f) != (self.spec.window, self.spec.assets, self.spec.features) {
            return Err(Error::Shape(format!(
                "network expects ({}, {}, {}) blocks, got ({w}, {m}, {f})",
                self.spec.window, self.spec.assets, self.spec.features
            )));
        }
        block.tensor().clone().reshape(&[w, m, f, 1])
    }

    pub fn forward(&self, block: &HistoryBlock) -> Result<Vec<f64>> {
        Ok(self.forward_cached(block)?.q_values)
    }

    pub fn forward_cached(&self, block: &HistoryBlock) -> Result<ForwardPass> {
        let input = self.input_tensor(block)?;
        self.forward_tensor(input)
    }

    /// Forward pass on a `(window, assets, features, 1)` tensor.
    pub fn forward_tensor(&self, input: Tensor) -> Result<ForwardPass> {
        let input_shape = input.shape().to_vec();
        let mut x = input;
        let mut conv_outputs = Vec::with_capacity(self.convs.len());
        let mut patches = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (mut out, p) = conv.forward(&x)?;
            relu_in_place(&mut out);
            patches.push(p);
            conv_outputs.push(out.clone());
            x = out;
        }
        let mut hidden = self.fc1.forward(x.data())?;
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut q_values = self.fc2.forward(&hidden)?;
        if self.spec.output == OutputActivation::Sigmoid {
            q_values.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        if q_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite q-value".into()));
        }
        Ok(ForwardPass {
            version: self.version,
            input_shape,
            conv_outputs,
            patches,
            hidden,
            q_values,
        })
    }

    /// Gradients of `0.5 * td_error^2` where `td_error = target - Q(s, action)`;
    /// only the selected output contributes.
    pub fn backward(&self, pass: &ForwardPass, action: usize, td_error: f64) -> Result<Gradients> {
        if pass.version != self.version || pass.conv_outputs.len() != self.convs.len() {
            return Err(Error::State(
                "backward needs a forward pass of the current parameters".into(),
            ));
        }
        if action >= self.num_actions() {
            return Err(Error::Argument(format!("action {action} out of range")));
        }
        let mut grads = Gradients::zeros(&self.param_shapes());
        let n_conv = self.convs.len();
        let (conv_grads, fc_grads) = grads.tensors.split_at_mut(2 * n_conv);

        let q = pass.q_values[action];
        let dq = -td_error;
        let dz = match self.spec.output {
            OutputActivation::Sigmoid => dq * q * (1.0 - q),
            OutputActivation::Linear => dq,
        };
        let mut grad_out = vec![0.0; self.num_actions()];
        grad_out[action] = dz;

        let (fc1_part, fc2_part) = fc_grads.split_at_mut(2);
        let (fc2_w, fc2_b) = fc2_part.split_at_mut(1);
        let mut g_hidden = self
            .fc2
            .backward(&pass.hidden, &grad_out, &mut fc2_w[0], &mut fc2_b[0]);
        for (g, h) in g_hidden.iter_mut().zip(&pass.hidden) {
            if *h <= 0.0 {
                *g = 0.0;
            }
        }
        let flat = pass.conv_outputs.last().map(|t| t.data()).unwrap_or(&[]);
        let (fc1_w, fc1_b) = fc1_part.split_at_mut(1);
        let mut g = self.fc1.backward(flat, &g_hidden, &mut fc1_w[0], &mut fc1_b[0]);

        for k in (0..n_conv).rev() {
            for (gi, out) in g.iter_mut().zip(pass.conv_outputs[k].data()) {
                if *out <= 0.0 {
                    *gi = 0.0;
                }
            }
            let input_shape: Option<&[usize]> = if k == 0 {
                None
            } else {
                Some(pass.conv_outputs[k - 1].shape())
            };
            let (w, b) = conv_grads[2 * k..2 * k + 2].split_at_mut(1);
            let g_in = self.convs[k].backward(&pass.patches[k], &g, &mut w[0], &mut b[0], input_shape)?;
            if let Some(t) = g_in {
                g = t.into_data();
            }
        }
        debug_assert_eq!(pass.input_shape.len(), 4);
        Ok(grads)
    }
}
