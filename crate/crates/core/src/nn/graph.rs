use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-sample activation shape `[time, frequency, channels]`.
pub type Shape = [usize; 3];

/// One layer of a model graph. Kernel, stride and pool sizes are given as
/// `[time, frequency]`; a `[1, 2]` pool halves only the frequency axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Input {
        shape: Shape,
    },
    Conv2d {
        filters: usize,
        kernel: [usize; 2],
        stride: [usize; 2],
        bias: bool,
    },
    DepthwiseConv2d {
        kernel: [usize; 2],
        stride: [usize; 2],
        bias: bool,
    },
    BatchNorm {
        eps: f64,
        momentum: f64,
    },
    Relu,
    MaxPool {
        pool: [usize; 2],
    },
    GlobalAvgPool,
    Dense {
        units: usize,
    },
    Softmax,
    Dropout {
        rate: f64,
    },
    /// Squeeze-excitation gate: channel means → dense (C/reduction) → ReLU →
    /// dense (C) → sigmoid, multiplied back onto the input.
    ChannelAttention {
        reduction: usize,
    },
    ResidualAdd,
    /// Keep frequency bins `[0, W/2)` (half 0) or `[W/2, W)` (half 1).
    FreqSplit {
        half: usize,
    },
    /// Concatenate along the channel axis.
    Concat,
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Input { .. } => "input",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::DepthwiseConv2d { .. } => "depthwise_conv2d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::GlobalAvgPool => "global_avg_pool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::ChannelAttention { .. } => "channel_attention",
            LayerSpec::ResidualAdd => "residual_add",
            LayerSpec::FreqSplit { .. } => "freq_split",
            LayerSpec::Concat => "concat",
        }
    }

    pub fn batchnorm() -> Self {
        LayerSpec::BatchNorm {
            eps: 1e-3,
            momentum: 0.9,
        }
    }

    pub fn conv(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel: [kernel, kernel],
            stride: [1, 1],
            bias: false,
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            LayerSpec::Input { .. } => Some(0),
            LayerSpec::ResidualAdd => Some(2),
            LayerSpec::Concat => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub spec: LayerSpec,
    pub inputs: Vec<usize>,
}

/// Layers in topological order. Node 0 is the input, the last node the
/// output; every edge points from an earlier node to a later one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub nodes: Vec<Node>,
}

fn conv_out(len: usize, k: usize, s: usize) -> Option<usize> {
    let pad = (k - 1) / 2;
    (len + 2 * pad).checked_sub(k).map(|v| v / s + 1)
}

impl ModelGraph {
    pub fn input_shape(&self) -> Shape {
        match self.nodes.first().map(|n| &n.spec) {
            Some(LayerSpec::Input { shape }) => *shape,
            _ => [0, 0, 0],
        }
    }

    pub fn output_node(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&LayerSpec) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.spec)).count()
    }

    pub fn conv_layers(&self) -> usize {
        self.count(|s| {
            matches!(
                s,
                LayerSpec::Conv2d { .. } | LayerSpec::DepthwiseConv2d { .. }
            )
        })
    }

    /// Check topology and propagate shapes; returns the output shape of
    /// every node for the declared input shape.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        self.shapes_for(self.input_shape())
    }

    /// Shape propagation for an arbitrary input shape (fully convolutional
    /// graphs accept any time length).
    pub fn shapes_for(&self, input: Shape) -> Result<Vec<Shape>> {
        let err = |layer: usize, reason: String| Error::Graph { layer, reason };
        if self.nodes.is_empty() {
            return Err(err(0, "graph is empty".into()));
        }
        let mut consumers = vec![0usize; self.nodes.len()];
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let is_input = matches!(node.spec, LayerSpec::Input { .. });
            if is_input != (id == 0) {
                return Err(err(id, "exactly one input node, at position 0".into()));
            }
            if let Some(a) = node.spec.arity() {
                if node.inputs.len() != a {
                    return Err(err(
                        id,
                        format!(
                            "{} takes {a} inputs, got {}",
                            node.spec.name(),
                            node.inputs.len()
                        ),
                    ));
                }
            } else if node.inputs.len() < 2 {
                return Err(err(id, "concat needs at least two inputs".into()));
            }
            for &i in &node.inputs {
                if i >= id {
                    return Err(err(id, format!("edge from node {i} is not topological")));
                }
                consumers[i] += 1;
            }
            let ins: Vec<Shape> = node.inputs.iter().map(|&i| shapes[i]).collect();
            let shape = match &node.spec {
                LayerSpec::Input { shape } => {
                    if shape.contains(&0) || input.contains(&0) {
                        return Err(err(id, "input dimensions must be positive".into()));
                    }
                    if input[1] != shape[1] || input[2] != shape[2] {
                        return Err(err(
                            id,
                            format!("input {input:?} does not match declared {shape:?} (only time may vary)"),
                        ));
                    }
                    input
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    ..
                } => {
                    if *filters == 0 || kernel.contains(&0) || stride.contains(&0) {
                        return Err(err(id, "conv sizes must be positive".into()));
                    }
                    let [h, w, _] = ins[0];
                    match (
                        conv_out(h, kernel[0], stride[0]),
                        conv_out(w, kernel[1], stride[1]),
                    ) {
                        (Some(oh), Some(ow)) => [oh, ow, *filters],
                        _ => {
                            return Err(err(id, format!("input {:?} smaller than kernel", ins[0])))
                        }
                    }
                }
                LayerSpec::DepthwiseConv2d { kernel, stride, .. } => {
                    if kernel.contains(&0) || stride.contains(&0) {
                        return Err(err(id, "depthwise sizes must be positive".into()));
                    }
                    let [h, w, c] = ins[0];
                    match (
                        conv_out(h, kernel[0], stride[0]),
                        conv_out(w, kernel[1], stride[1]),
                    ) {
                        (Some(oh), Some(ow)) => [oh, ow, c],
                        _ => {
                            return Err(err(id, format!("input {:?} smaller than kernel", ins[0])))
                        }
                    }
                }
                LayerSpec::BatchNorm { eps, momentum } => {
                    if !(*eps > 0.0) || !(0.0..1.0).contains(momentum) {
                        return Err(err(
                            id,
                            "batchnorm needs eps > 0 and momentum in [0,1)".into(),
                        ));
                    }
                    ins[0]
                }
                LayerSpec::Relu | LayerSpec::Softmax => ins[0],
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(err(id, format!("dropout rate {rate} outside [0,1)")));
                    }
                    ins[0]
                }
                LayerSpec::MaxPool { pool } => {
                    let [h, w, c] = ins[0];
                    if pool.contains(&0) {
                        return Err(err(id, "pool sizes must be positive".into()));
                    }
                    let (oh, ow) = (h / pool[0], w / pool[1]);
                    if oh == 0 || ow == 0 {
                        return Err(err(
                            id,
                            format!("input {:?} too small for {pool:?} pooling", ins[0]),
                        ));
                    }
                    [oh, ow, c]
                }
                LayerSpec::GlobalAvgPool => [1, 1, ins[0][2]],
                LayerSpec::Dense { units } => {
                    if *units == 0 {
                        return Err(err(id, "dense needs at least one unit".into()));
                    }
                    [1, 1, *units]
                }
                LayerSpec::ChannelAttention { reduction } => {
                    if *reduction == 0 {
                        return Err(err(id, "attention reduction must be positive".into()));
                    }
                    ins[0]
                }
                LayerSpec::ResidualAdd => {
                    if ins[0] != ins[1] {
                        return Err(err(
                            id,
                            format!("residual operands differ: {:?} vs {:?}", ins[0], ins[1]),
                        ));
                    }
                    ins[0]
                }
                LayerSpec::FreqSplit { half } => {
                    let [h, w, c] = ins[0];
                    if *half > 1 {
                        return Err(err(id, "freq_split half must be 0 or 1".into()));
                    }
                    if w % 2 != 0 {
                        return Err(err(id, format!("cannot split {w} frequency bins evenly")));
                    }
                    [h, w / 2, c]
                }
                LayerSpec::Concat => {
                    let [h, w, _] = ins[0];
                    if ins.iter().any(|s| s[0] != h || s[1] != w) {
                        return Err(err(
                            id,
                            format!("concat operands differ spatially: {ins:?}"),
                        ));
                    }
                    [h, w, ins.iter().map(|s| s[2]).sum()]
                }
            };
            shapes.push(shape);
        }
        let last = self.nodes.len() - 1;
        if let Some(dangling) = (0..last).find(|&i| consumers[i] == 0) {
            return Err(err(
                dangling,
                "output is never consumed (graph must have a single output)".into(),
            ));
        }
        Ok(shapes)
    }

    /// Multiply-accumulates per output element of each weighted layer.
    pub fn macs_per_output(&self) -> Result<Vec<(usize, usize)>> {
        let shapes = self.validate()?;
        let mut out = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let inp = node.inputs.first().map(|&i| shapes[i]);
            let macs = match (&node.spec, inp) {
                (LayerSpec::Conv2d { kernel, .. }, Some(s)) => kernel[0] * kernel[1] * s[2],
                (LayerSpec::DepthwiseConv2d { kernel, .. }, Some(_)) => kernel[0] * kernel[1],
                (LayerSpec::Dense { .. }, Some(s)) => s.iter().product(),
                (LayerSpec::ChannelAttention { .. }, Some(s)) => s[2],
                _ => continue,
            };
            out.push((id, macs));
        }
        Ok(out)
    }
}

/// Incremental graph construction used by the architecture builders.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    pub fn new(input: Shape) -> Self {
        Self {
            nodes: vec![Node {
                spec: LayerSpec::Input { shape: input },
                inputs: vec![],
            }],
        }
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn add(&mut self, spec: LayerSpec, inputs: &[usize]) -> usize {
        self.nodes.push(Node {
            spec,
            inputs: inputs.to_vec(),
        });
        self.nodes.len() - 1
    }

    /// Append a single-input layer after `x`.
    pub fn then(&mut self, x: usize, spec: LayerSpec) -> usize {
        self.add(spec, &[x])
    }

    /// `conv → batchnorm → relu`.
    pub fn conv_bn_relu(&mut self, x: usize, filters: usize, kernel: usize) -> usize {
        let c = self.then(x, LayerSpec::conv(filters, kernel));
        let b = self.then(c, LayerSpec::batchnorm());
        self.then(b, LayerSpec::Relu)
    }

    pub fn finish(self) -> Result<ModelGraph> {
        let g = ModelGraph { nodes: self.nodes };
        g.validate()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_shapes() {
        let mut b = GraphBuilder::new([8, 8, 1]);
        let p = b.then(0, LayerSpec::MaxPool { pool: [1, 2] });
        let q = b.then(p, LayerSpec::MaxPool { pool: [2, 2] });
        let g = b.finish().unwrap();
        let s = g.validate().unwrap();
        assert_eq!(s[p], [8, 4, 1]);
        assert_eq!(s[q], [4, 2, 1]);
    }

    #[test]
    fn residual_rejects_mismatch() {
        let mut b = GraphBuilder::new([4, 4, 2]);
        let c = b.then(0, LayerSpec::conv(3, 3));
        b.add(LayerSpec::ResidualAdd, &[0, c]);
        assert!(matches!(b.finish(), Err(Error::Graph { layer: 2, .. })));
    }

    #[test]
    fn rejects_dangling_and_cycles() {
        let mut b = GraphBuilder::new([4, 4, 2]);
        let _unused = b.then(0, LayerSpec::Relu);
        b.then(0, LayerSpec::GlobalAvgPool);
        assert!(b.finish().is_err());

        let g = ModelGraph {
            nodes: vec![
                Node {
                    spec: LayerSpec::Input { shape: [2, 2, 1] },
                    inputs: vec![],
                },
                Node {
                    spec: LayerSpec::Relu,
                    inputs: vec![1],
                },
            ],
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn split_and_concat() {
        let mut b = GraphBuilder::new([5, 6, 2]);
        let lo = b.then(0, LayerSpec::FreqSplit { half: 0 });
        let hi = b.then(0, LayerSpec::FreqSplit { half: 1 });
        let c = b.add(LayerSpec::Concat, &[lo, hi]);
        let s = b.finish().unwrap().validate().unwrap();
        assert_eq!(s[lo], [5, 3, 2]);
        assert_eq!(s[c], [5, 3, 4]);

        let mut b = GraphBuilder::new([5, 7, 2]);
        b.then(0, LayerSpec::FreqSplit { half: 0 });
        assert!(b.finish().is_err());
    }

    #[test]
    fn strided_conv_rounds_up() {
        let mut b = GraphBuilder::new([9, 8, 1]);
        let c = b.then(
            0,
            LayerSpec::Conv2d {
                filters: 2,
                kernel: [3, 3],
                stride: [2, 2],
                bias: true,
            },
        );
        let s = b.finish().unwrap().validate().unwrap();
        assert_eq!(s[c], [5, 4, 2]);
    }
}
