//! Finite-difference checks for every differentiable operation.

#[path = "common/grad_suite.rs"]
#[allow(dead_code)]
mod grad_suite;

fn assert_all(cases: Vec<grad_suite::Case>) {
    for (label, err, tol) in cases {
        assert!(err < tol, "{label}: relative error {err:e} exceeds {tol:e}");
    }
}

#[test]
fn conv2d_gradients() {
    assert_all(grad_suite::conv2d());
}

#[test]
fn linear_chain_is_exact() {
    assert_all(grad_suite::linear_chain());
}

#[test]
fn batched_matmul_gradients() {
    assert_all(grad_suite::batched_matmul());
}

#[test]
fn activation_gradients() {
    assert_all(grad_suite::activations());
}

#[test]
fn softmax_gradients() {
    assert_all(grad_suite::softmax());
}

#[test]
fn normalize_gradients() {
    assert_all(grad_suite::normalize());
}

#[test]
fn pooling_and_shape_gradients() {
    assert_all(grad_suite::pooling_and_shape());
}

#[test]
fn elementwise_and_gate_gradients() {
    assert_all(grad_suite::elementwise_and_gate());
}

#[test]
fn cross_entropy_gradients() {
    assert_all(grad_suite::cross_entropy());
}

#[test]
fn conv_relu_pool_cross_entropy_composite() {
    assert_all(grad_suite::composite());
}

#[test]
fn full_model_gradients() {
    assert_all(grad_suite::full_tiny_model());
}
