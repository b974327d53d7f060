//! Finite-difference gradient checks for the network and its layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sigmoid, Conv3d, Dense, OutputActivation, QNetSpec, QNetwork};
use crate::agent::{NetworkConfig, NetworkLayout};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// The reference stack fitted to a 12-minute, 3-asset window with narrow layers.
pub fn small_spec(output: OutputActivation) -> QNetSpec {
    NetworkConfig {
        layout: NetworkLayout::Fitted,
        conv_filters: [4, 5, 6],
        hidden_units: 16,
        output,
    }
    .spec(12, 3)
    .unwrap()
}

/// Largest relative error between backprop and central differences of
/// `0.5 * (target - Q(s, action))^2` over every parameter.
pub fn network_gradient_error(output: OutputActivation, seed: u64) -> f64 {
    let spec = small_spec(output);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = QNetwork::new(spec.clone(), seed).unwrap();
    let input = random_tensor(&[spec.window, spec.assets, spec.features, 1], &mut rng, 0.0, 1.0);
    let action = rng.gen_range(0..spec.num_actions());
    let target = rng.gen_range(-1.0..2.0);

    let loss = |net: &QNetwork| {
        let q = net.forward_tensor(input.clone()).unwrap().q_values()[action];
        0.5 * (target - q) * (target - q)
    };
    let pass = net.forward_tensor(input.clone()).unwrap();
    let td = target - pass.q_values()[action];
    let grads = net.backward(&pass, action, td).unwrap();

    let mut worst = 0.0f64;
    let n_tensors = grads.tensors.len();
    for t in 0..n_tensors {
        for i in 0..grads.tensors[t].len() {
            let original = net.params()[t][i];
            net.params_mut()[t][i] = original + FD_STEP;
            let plus = loss(&net);
            net.params_mut()[t][i] = original - FD_STEP;
            let minus = loss(&net);
            net.params_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads.tensors[t][i], numeric));
        }
    }
    worst
}

/// Conv layer alone: loss `sum(c * out)` on the pre-activation output;
/// checks weights, bias and the input gradient.
pub fn conv_gradient_error(
    in_shape: [usize; 4],
    filters: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Conv3d::new(in_shape[3], filters, kernel, stride).unwrap();
    layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
    layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    let mut input = random_tensor(&in_shape, &mut rng, -1.0, 1.0);
    let (out, patches) = layer.forward(&input).unwrap();
    let coeffs: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |layer: &Conv3d, input: &Tensor| -> f64 {
        let (o, _) = layer.forward(input).unwrap();
        o.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum()
    };

    let mut gw = vec![0.0; layer.weights.len()];
    let mut gb = vec![0.0; layer.bias.len()];
    let gin = layer
        .backward(&patches, &coeffs, &mut gw, &mut gb, Some(&in_shape))
        .unwrap()
        .unwrap();

    let mut worst = 0.0f64;
    for i in 0..layer.weights.len() {
        let w0 = layer.weights[i];
        layer.weights[i] = w0 + FD_STEP;
        let plus = loss(&layer, &input);
        layer.weights[i] = w0 - FD_STEP;
        let minus = loss(&layer, &input);
        layer.weights[i] = w0;
        worst = worst.max(relative_error(gw[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    for i in 0..layer.bias.len() {
        let b0 = layer.bias[i];
        layer.bias[i] = b0 + FD_STEP;
        let plus = loss(&layer, &input);
        layer.bias[i] = b0 - FD_STEP;
        let minus = loss(&layer, &input);
        layer.bias[i] = b0;
        worst = worst.max(relative_error(gb[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    for i in 0..input.len() {
        let x0 = input.data()[i];
        input.data_mut()[i] = x0 + FD_STEP;
        let plus = loss(&layer, &input);
        input.data_mut()[i] = x0 - FD_STEP;
        let minus = loss(&layer, &input);
        input.data_mut()[i] = x0;
        worst = worst.max(relative_error(gin.data()[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}

/// Dense layer alone: loss `sum(c * out)`; checks weights, bias and input.
pub fn dense_gradient_error(inputs: usize, outputs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Dense::new(inputs, outputs).unwrap();
    layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.5..0.5));
    layer.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    let mut x: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let coeffs: Vec<f64> = (0..outputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |layer: &Dense, x: &[f64]| -> f64 {
        layer.forward(x).unwrap().iter().zip(&coeffs).map(|(a, b)| a * b).sum()
    };
    let mut gw = vec![0.0; layer.weights.len()];
    let mut gb = vec![0.0; outputs];
    let gx = layer.backward(&x, &coeffs, &mut gw, &mut gb);

    let mut worst = 0.0f64;
    for i in 0..layer.weights.len() {
        let w0 = layer.weights[i];
        layer.weights[i] = w0 + FD_STEP;
        let plus = loss(&layer, &x);
        layer.weights[i] = w0 - FD_STEP;
        let minus = loss(&layer, &x);
        layer.weights[i] = w0;
        worst = worst.max(relative_error(gw[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    for i in 0..outputs {
        let b0 = layer.bias[i];
        layer.bias[i] = b0 + FD_STEP;
        let plus = loss(&layer, &x);
        layer.bias[i] = b0 - FD_STEP;
        let minus = loss(&layer, &x);
        layer.bias[i] = b0;
        worst = worst.max(relative_error(gb[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    for i in 0..inputs {
        let x0 = x[i];
        x[i] = x0 + FD_STEP;
        let plus = loss(&layer, &x);
        x[i] = x0 - FD_STEP;
        let minus = loss(&layer, &x);
        x[i] = x0;
        worst = worst.max(relative_error(gx[i], (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}

/// Sigmoid and ReLU derivatives against central differences, away from the
/// ReLU kink.
pub fn activation_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let relu = |x: f64| x.max(0.0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x: f64 = rng.gen_range(-8.0..8.0);
        let s = sigmoid(x);
        let numeric = (sigmoid(x + FD_STEP) - sigmoid(x - FD_STEP)) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(s * (1.0 - s), numeric));
        if x.abs() > 10.0 * FD_STEP {
            let analytic = if x > 0.0 { 1.0 } else { 0.0 };
            let numeric = (relu(x + FD_STEP) - relu(x - FD_STEP)) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}
