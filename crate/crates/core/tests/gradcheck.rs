#![allow(clippy::needless_range_loop)]

mod common;

use common::gradcheck::{check_kind, rel_err, KINDS, TOL};

fn assert_kind(kind: &str) {
    let err = check_kind(kind);
    assert!(err <= TOL, "{kind}: worst relative gradient error {err:e}");
}

#[test]
fn conv2d() {
    assert_kind("conv2d");
}

#[test]
fn depthwise_conv2d() {
    assert_kind("depthwise_conv2d");
}

#[test]
fn batchnorm_train() {
    assert_kind("batchnorm_train");
}

#[test]
fn batchnorm_eval() {
    assert_kind("batchnorm_eval");
}

#[test]
fn relu() {
    assert_kind("relu");
}

#[test]
fn maxpool() {
    assert_kind("maxpool");
}

#[test]
fn global_avg_pool() {
    assert_kind("global_avg_pool");
}

#[test]
fn dense() {
    assert_kind("dense");
}

#[test]
fn softmax() {
    assert_kind("softmax");
}

#[test]
fn dropout() {
    assert_kind("dropout");
}

#[test]
fn channel_attention() {
    assert_kind("channel_attention");
}

#[test]
fn residual_add() {
    assert_kind("residual_add");
}

#[test]
fn freq_split() {
    assert_kind("freq_split");
}

#[test]
fn concat() {
    assert_kind("concat");
}

#[test]
fn softmax_cross_entropy() {
    assert_kind("softmax_cross_entropy");
}

#[test]
fn every_layer_kind_is_covered() {
    let graph_kinds = [
        "conv2d",
        "depthwise_conv2d",
        "batchnorm",
        "relu",
        "maxpool",
        "global_avg_pool",
        "dense",
        "softmax",
        "dropout",
        "channel_attention",
        "residual_add",
        "freq_split",
        "concat",
    ];
    for k in graph_kinds {
        assert!(
            KINDS.iter().any(|c| c.starts_with(k)),
            "{k} has no gradient case"
        );
    }
}

#[test]
fn a_wrong_gradient_is_detected() {
    let numeric = [1.0, 2.0, 3.0];
    assert!(rel_err(&[1.01, 2.02, 3.03], &numeric) > TOL);
    assert!(rel_err(&[1.0, 2.0, 3.0 + 1e-7], &numeric) <= TOL);
    assert_eq!(rel_err(&[0.0; 3], &[0.0; 3]), 0.0);
}
