use dqn_portfolio::qnet::gradcheck::*;
use dqn_portfolio::qnet::OutputActivation;

const TOLERANCE: f64 = 1e-4;

#[test]
fn full_network_sigmoid_output() {
    for seed in 0..3 {
        let err = network_gradient_error(OutputActivation::Sigmoid, seed);
        assert!(err < TOLERANCE, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn full_network_linear_output() {
    let err = network_gradient_error(OutputActivation::Linear, 7);
    assert!(err < TOLERANCE, "max relative error {err:e}");
}

#[test]
fn conv_layer_unit_stride() {
    let err = conv_gradient_error([6, 3, 5, 1], 3, [3, 2, 3], [1, 1, 1], 1);
    assert!(err < TOLERANCE, "{err:e}");
}

#[test]
fn conv_layer_strided_multichannel() {
    let err = conv_gradient_error([9, 4, 4, 3], 4, [3, 2, 2], [2, 1, 1], 2);
    assert!(err < TOLERANCE, "{err:e}");
}

#[test]
fn dense_layer() {
    let err = dense_gradient_error(13, 7, 3);
    assert!(err < TOLERANCE, "{err:e}");
}

#[test]
fn activations() {
    let err = activation_gradient_error(4);
    assert!(err < TOLERANCE, "{err:e}");
}
