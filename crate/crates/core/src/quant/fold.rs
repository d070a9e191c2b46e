//! Batchnorm folding: `conv'(x) = BN(conv(x))` with the BN layer removed.

use crate::nn::{LayerSpec, Model, ModelGraph, Node, Param};
use crate::{Error, Result};

fn fold_err(layer: usize, reason: impl Into<String>) -> Error {
    Error::Graph {
        layer,
        reason: reason.into(),
    }
}

/// Index of the output-channel axis of a foldable layer's weight tensor.
fn channel_axis(spec: &LayerSpec) -> Option<usize> {
    match spec {
        LayerSpec::Conv2d { .. } => Some(3),
        LayerSpec::DepthwiseConv2d { .. } => Some(2),
        LayerSpec::Dense { .. } => Some(1),
        _ => None,
    }
}

/// Fold every eval-mode batchnorm into the conv, depthwise or dense layer
/// that feeds it. Fails if a batchnorm follows any other layer kind or if
/// the producer's raw output is also consumed elsewhere.
pub fn fold_batchnorm(model: &Model<f32>) -> Result<Model<f32>> {
    let nodes = &model.graph.nodes;
    let mut consumers = vec![0usize; nodes.len()];
    for n in nodes {
        for &i in &n.inputs {
            consumers[i] += 1;
        }
    }
    let mut specs: Vec<LayerSpec> = nodes.iter().map(|n| n.spec.clone()).collect();
    let mut params = model.params.clone();
    let mut removed = vec![false; nodes.len()];
    for (id, node) in nodes.iter().enumerate() {
        let LayerSpec::BatchNorm { eps, .. } = node.spec else {
            continue;
        };
        let p = node.inputs[0];
        let axis = channel_axis(&specs[p]).ok_or_else(|| {
            fold_err(
                id,
                format!(
                    "batchnorm follows {}, which cannot absorb it",
                    specs[p].name()
                ),
            )
        })?;
        if consumers[p] != 1 {
            return Err(fold_err(
                id,
                format!(
                    "layer {p} feeds the batchnorm and {} other layers",
                    consumers[p] - 1
                ),
            ));
        }
        let bn = &model.params[id];
        let scale: Vec<f64> = bn[0]
            .data
            .iter()
            .zip(&bn[3].data)
            .map(|(&g, &v)| f64::from(g) / (f64::from(v) + eps).sqrt())
            .collect();
        let w = &mut params[p][0];
        let stride: usize = w.dims[axis + 1..].iter().product();
        let c = w.dims[axis];
        for (i, v) in w.data.iter_mut().enumerate() {
            *v = (f64::from(*v) * scale[(i / stride) % c]) as f32;
        }
        let old_bias = params[p].get(1).map(|b| b.data.clone());
        let bias: Vec<f32> = (0..c)
            .map(|ch| {
                let b = old_bias.as_ref().map_or(0.0, |b| f64::from(b[ch]));
                ((b - f64::from(bn[2].data[ch])) * scale[ch] + f64::from(bn[1].data[ch])) as f32
            })
            .collect();
        let bias = Param {
            dims: vec![c],
            data: bias,
        };
        if params[p].len() > 1 {
            params[p][1] = bias;
        } else {
            params[p].push(bias);
        }
        match &mut specs[p] {
            LayerSpec::Conv2d { bias, .. } | LayerSpec::DepthwiseConv2d { bias, .. } => {
                *bias = true
            }
            _ => {}
        }
        removed[id] = true;
    }

    let mut remap = vec![0usize; nodes.len()];
    let mut out_nodes = Vec::new();
    let mut out_params = Vec::new();
    for (id, node) in nodes.iter().enumerate() {
        if removed[id] {
            remap[id] = remap[node.inputs[0]];
            continue;
        }
        remap[id] = out_nodes.len();
        out_nodes.push(Node {
            spec: specs[id].clone(),
            inputs: node.inputs.iter().map(|&i| remap[i]).collect(),
        });
        out_params.push(std::mem::take(&mut params[id]));
    }
    Model::from_parts(ModelGraph { nodes: out_nodes }, out_params)
}
