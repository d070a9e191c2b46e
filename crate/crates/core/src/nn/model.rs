use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::graph::{LayerSpec, ModelGraph, Shape};
use super::loss::{fused_logit_grad, softmax_cross_entropy};
use super::ops::{self, AttentionCache, BnBatch};
use super::tensor::{Real, Tensor4};
use crate::rng::{seeded, Rng};
use crate::{Error, Result};

/// A named parameter blob with its logical dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(dims: Vec<usize>, v: T) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![v; n],
        }
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-node state kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    None,
    BatchNorm(BnBatch<T>),
    MaxPool(Vec<usize>),
    Dropout(Vec<T>),
    Attention(AttentionCache<T>),
}

#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub mode: Mode,
    pub outputs: Vec<Tensor4<T>>,
    pub caches: Vec<Cache<T>>,
}

impl<T: Real> Trace<T> {
    pub fn output(&self) -> &Tensor4<T> {
        self.outputs
            .last()
            .expect("trace has at least the input node")
    }
}

/// Gradients mirroring [`Model::params`]; entries for non-trainable
/// parameters stay zero.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub params: Vec<Vec<Param<T>>>,
    pub input: Tensor4<T>,
}

/// A graph together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub graph: ModelGraph,
    pub params: Vec<Vec<Param<T>>>,
}

fn he_normal<T: Real>(dims: Vec<usize>, fan_in: usize, rng: &mut Rng) -> Param<T> {
    let std = (2.0 / fan_in.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let n = dims.iter().product();
    Param {
        dims,
        data: (0..n).map(|_| T::lit(normal.sample(rng))).collect(),
    }
}

/// Parameter dimensions of a layer given its input shape(s).
fn param_layout(spec: &LayerSpec, inputs: &[Shape]) -> Vec<Vec<usize>> {
    match spec {
        LayerSpec::Conv2d {
            filters,
            kernel,
            bias,
            ..
        } => {
            let mut v = vec![vec![kernel[0], kernel[1], inputs[0][2], *filters]];
            if *bias {
                v.push(vec![*filters]);
            }
            v
        }
        LayerSpec::DepthwiseConv2d { kernel, bias, .. } => {
            let c = inputs[0][2];
            let mut v = vec![vec![kernel[0], kernel[1], c]];
            if *bias {
                v.push(vec![c]);
            }
            v
        }
        LayerSpec::BatchNorm { .. } => vec![vec![inputs[0][2]]; 4],
        LayerSpec::Dense { units } => {
            vec![vec![inputs[0].iter().product(), *units], vec![*units]]
        }
        LayerSpec::ChannelAttention { reduction } => {
            let c = inputs[0][2];
            let h = ops::attention_hidden(c, *reduction);
            vec![vec![c, h], vec![h], vec![h, c], vec![c]]
        }
        _ => vec![],
    }
}

impl<T: Real> Model<T> {
    /// He-normal weights, zero biases, identity batchnorm.
    pub fn init(graph: ModelGraph, seed: u64) -> Result<Self> {
        let shapes = graph.validate()?;
        let mut rng = seeded(seed);
        let mut params = Vec::with_capacity(graph.len());
        for node in &graph.nodes {
            let ins: Vec<Shape> = node.inputs.iter().map(|&i| shapes[i]).collect();
            let layout = param_layout(&node.spec, &ins);
            let p: Vec<Param<T>> = match &node.spec {
                LayerSpec::Conv2d { kernel, .. } => {
                    let fan = kernel[0] * kernel[1] * ins[0][2];
                    layout
                        .into_iter()
                        .enumerate()
                        .map(|(i, d)| {
                            if i == 0 {
                                he_normal(d, fan, &mut rng)
                            } else {
                                Param::zeros(d)
                            }
                        })
                        .collect()
                }
                LayerSpec::DepthwiseConv2d { kernel, .. } => {
                    let fan = kernel[0] * kernel[1];
                    layout
                        .into_iter()
                        .enumerate()
                        .map(|(i, d)| {
                            if i == 0 {
                                he_normal(d, fan, &mut rng)
                            } else {
                                Param::zeros(d)
                            }
                        })
                        .collect()
                }
                LayerSpec::BatchNorm { .. } => {
                    let d = layout[0].clone();
                    vec![
                        Param::filled(d.clone(), T::one()),
                        Param::zeros(d.clone()),
                        Param::zeros(d.clone()),
                        Param::filled(d, T::one()),
                    ]
                }
                LayerSpec::Dense { .. } => {
                    let fan = layout[0][0];
                    vec![
                        he_normal(layout[0].clone(), fan, &mut rng),
                        Param::zeros(layout[1].clone()),
                    ]
                }
                LayerSpec::ChannelAttention { .. } => {
                    let (c, h) = (layout[0][0], layout[0][1]);
                    vec![
                        he_normal(layout[0].clone(), c, &mut rng),
                        Param::zeros(layout[1].clone()),
                        he_normal(layout[2].clone(), h, &mut rng),
                        Param::zeros(layout[3].clone()),
                    ]
                }
                _ => vec![],
            };
            params.push(p);
        }
        Ok(Self { graph, params })
    }

    /// Build a model from explicit parameters, checking every blob's dims.
    pub fn from_parts(graph: ModelGraph, params: Vec<Vec<Param<T>>>) -> Result<Self> {
        let shapes = graph.validate()?;
        if params.len() != graph.len() {
            return Err(Error::Shape(format!(
                "{} parameter groups for {} layers",
                params.len(),
                graph.len()
            )));
        }
        for (id, node) in graph.nodes.iter().enumerate() {
            let ins: Vec<Shape> = node.inputs.iter().map(|&i| shapes[i]).collect();
            let layout = param_layout(&node.spec, &ins);
            let got: Vec<&Vec<usize>> = params[id].iter().map(|p| &p.dims).collect();
            if layout.iter().collect::<Vec<_>>() != got {
                return Err(Error::Graph {
                    layer: id,
                    reason: format!("parameter dims {got:?} do not match expected {layout:?}"),
                });
            }
            if params[id]
                .iter()
                .any(|p| p.data.len() != p.dims.iter().product::<usize>())
            {
                return Err(Error::Graph {
                    layer: id,
                    reason: "parameter data length does not match dims".into(),
                });
            }
        }
        Ok(Self { graph, params })
    }

    /// Whether parameter `idx` of `node` is updated by the optimiser
    /// (batchnorm running statistics are not).
    pub fn is_trainable(&self, node: usize, idx: usize) -> bool {
        !(matches!(self.graph.nodes[node].spec, LayerSpec::BatchNorm { .. }) && idx >= 2)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(|p| p.data.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        let mut n = 0;
        for (id, ps) in self.params.iter().enumerate() {
            for (i, p) in ps.iter().enumerate() {
                if self.is_trainable(id, i) {
                    n += p.data.len();
                }
            }
        }
        n
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            graph: self.graph.clone(),
            params: self
                .params
                .iter()
                .map(|ps| ps.iter().map(Param::cast).collect())
                .collect(),
        }
    }

    pub fn zero_grads(&self, input_dims: [usize; 4]) -> Gradients<T> {
        Gradients {
            params: self
                .params
                .iter()
                .map(|ps| ps.iter().map(|p| Param::zeros(p.dims.clone())).collect())
                .collect(),
            input: Tensor4::zeros(input_dims),
        }
    }

    /// Run the graph. In train mode dropout masks are drawn from `rng` and
    /// batchnorm normalises with batch statistics.
    pub fn forward(&self, x: &Tensor4<T>, mode: Mode, rng: &mut Rng) -> Result<Trace<T>> {
        let expect = self.graph.input_shape();
        let got = x.sample_shape();
        if got[1] != expect[1] || got[2] != expect[2] || x.batch() == 0 {
            return Err(Error::Graph {
                layer: 0,
                reason: format!("input {:?} does not match graph input {expect:?}", x.dims()),
            });
        }
        self.graph.shapes_for(got)?;
        let n = self.graph.len();
        let mut outputs: Vec<Tensor4<T>> = Vec::with_capacity(n);
        let mut caches = Vec::with_capacity(n);
        for (id, node) in self.graph.nodes.iter().enumerate() {
            let p = &self.params[id];
            let input = |k: usize| &outputs[node.inputs[k]];
            let (y, cache) = match &node.spec {
                LayerSpec::Input { .. } => (x.clone(), Cache::None),
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    ..
                } => (
                    ops::conv2d_forward(
                        input(0),
                        &p[0].data,
                        p.get(1).map(|b| b.data.as_slice()),
                        *kernel,
                        *stride,
                        *filters,
                    ),
                    Cache::None,
                ),
                LayerSpec::DepthwiseConv2d { kernel, stride, .. } => (
                    ops::depthwise_forward(
                        input(0),
                        &p[0].data,
                        p.get(1).map(|b| b.data.as_slice()),
                        *kernel,
                        *stride,
                    ),
                    Cache::None,
                ),
                LayerSpec::BatchNorm { eps, .. } => {
                    let eps = T::lit(*eps);
                    match mode {
                        Mode::Train => {
                            let (y, c) =
                                ops::batchnorm_train(input(0), &p[0].data, &p[1].data, eps);
                            (y, Cache::BatchNorm(c))
                        }
                        Mode::Eval => (
                            ops::batchnorm_eval(
                                input(0),
                                &p[0].data,
                                &p[1].data,
                                &p[2].data,
                                &p[3].data,
                                eps,
                            ),
                            Cache::None,
                        ),
                    }
                }
                LayerSpec::Relu => (ops::relu_forward(input(0)), Cache::None),
                LayerSpec::MaxPool { pool } => {
                    let (y, arg) = ops::maxpool_forward(input(0), *pool);
                    (y, Cache::MaxPool(arg))
                }
                LayerSpec::GlobalAvgPool => (ops::gap_forward(input(0)), Cache::None),
                LayerSpec::Dense { units } => (
                    ops::dense_forward(input(0), &p[0].data, &p[1].data, *units),
                    Cache::None,
                ),
                LayerSpec::Softmax => (ops::softmax_forward(input(0)), Cache::None),
                LayerSpec::Dropout { rate } => match mode {
                    Mode::Train if *rate > 0.0 => {
                        let keep = 1.0 - rate;
                        let scale = T::lit(1.0 / keep);
                        let mask: Vec<T> = (0..input(0).len())
                            .map(|_| {
                                if rng.random::<f64>() < keep {
                                    scale
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        let mut y = input(0).clone();
                        for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        (y, Cache::Dropout(mask))
                    }
                    _ => (input(0).clone(), Cache::None),
                },
                LayerSpec::ChannelAttention { .. } => {
                    let (y, c) = ops::attention_forward(
                        input(0),
                        &p[0].data,
                        &p[1].data,
                        &p[2].data,
                        &p[3].data,
                    );
                    (y, Cache::Attention(c))
                }
                LayerSpec::ResidualAdd => {
                    let mut y = input(0).clone();
                    y.add_assign(input(1));
                    (y, Cache::None)
                }
                LayerSpec::FreqSplit { half } => {
                    (ops::freq_split_forward(input(0), *half), Cache::None)
                }
                LayerSpec::Concat => {
                    let xs: Vec<&Tensor4<T>> = node.inputs.iter().map(|&i| &outputs[i]).collect();
                    (ops::concat_forward(&xs), Cache::None)
                }
            };
            if !y.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite activation at layer {id} ({})",
                    node.spec.name()
                )));
            }
            outputs.push(y);
            caches.push(cache);
        }
        Ok(Trace {
            mode,
            outputs,
            caches,
        })
    }

    /// Eval-mode forward returning only the output.
    pub fn predict(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut rng = seeded(0);
        let mut trace = self.forward(x, Mode::Eval, &mut rng)?;
        Ok(trace.outputs.pop().expect("non-empty graph"))
    }

    /// Reverse pass seeded with `grad` at the output node.
    pub fn backward(&self, trace: &Trace<T>, grad: Tensor4<T>) -> Result<Gradients<T>> {
        self.backward_from(trace, self.graph.output_node(), grad)
    }

    /// Reverse pass seeded with `grad` (dL/d output of `start`); nodes after
    /// `start` are ignored.
    pub fn backward_from(
        &self,
        trace: &Trace<T>,
        start: usize,
        grad: Tensor4<T>,
    ) -> Result<Gradients<T>> {
        if grad.dims() != trace.outputs[start].dims() {
            return Err(Error::Shape(format!(
                "gradient {:?} does not match layer {start} output {:?}",
                grad.dims(),
                trace.outputs[start].dims()
            )));
        }
        let mut grads = self.zero_grads(trace.outputs[0].dims());
        let mut node_grads: Vec<Option<Tensor4<T>>> = vec![None; start + 1];
        node_grads[start] = Some(grad);
        let accumulate = |slot: &mut Option<Tensor4<T>>, g: Tensor4<T>| match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        };
        for id in (1..=start).rev() {
            let Some(dy) = node_grads[id].take() else {
                continue;
            };
            let node = &self.graph.nodes[id];
            let p = &self.params[id];
            let x0 = &trace.outputs[node.inputs[0]];
            let gp = &mut grads.params[id];
            let dxs: Vec<Tensor4<T>> = match (&node.spec, &trace.caches[id]) {
                (LayerSpec::Conv2d { kernel, stride, .. }, _) => {
                    let (dx, dw, db) = ops::conv2d_backward(x0, &p[0].data, &dy, *kernel, *stride);
                    gp[0].data = dw;
                    if gp.len() > 1 {
                        gp[1].data = db;
                    }
                    vec![dx]
                }
                (LayerSpec::DepthwiseConv2d { kernel, stride, .. }, _) => {
                    let (dx, dw, db) =
                        ops::depthwise_backward(x0, &p[0].data, &dy, *kernel, *stride);
                    gp[0].data = dw;
                    if gp.len() > 1 {
                        gp[1].data = db;
                    }
                    vec![dx]
                }
                (LayerSpec::BatchNorm { .. }, Cache::BatchNorm(c)) => {
                    let (dx, dg, db) = ops::batchnorm_train_backward(&dy, &p[0].data, c);
                    gp[0].data = dg;
                    gp[1].data = db;
                    vec![dx]
                }
                (LayerSpec::BatchNorm { eps, .. }, _) => {
                    let (dx, dg, db) = ops::batchnorm_eval_backward(
                        x0,
                        &dy,
                        &p[0].data,
                        &p[2].data,
                        &p[3].data,
                        T::lit(*eps),
                    );
                    gp[0].data = dg;
                    gp[1].data = db;
                    vec![dx]
                }
                (LayerSpec::Relu, _) => vec![ops::relu_backward(x0, &dy)],
                (LayerSpec::MaxPool { .. }, Cache::MaxPool(arg)) => {
                    vec![ops::maxpool_backward(x0.dims(), arg, &dy)]
                }
                (LayerSpec::GlobalAvgPool, _) => vec![ops::gap_backward(x0.dims(), &dy)],
                (LayerSpec::Dense { .. }, _) => {
                    let (dx, dw, db) = ops::dense_backward(x0, &p[0].data, &dy);
                    gp[0].data = dw;
                    gp[1].data = db;
                    vec![dx]
                }
                (LayerSpec::Softmax, _) => vec![ops::softmax_backward(&trace.outputs[id], &dy)],
                (LayerSpec::Dropout { .. }, Cache::Dropout(mask)) => {
                    let mut dx = dy;
                    for (v, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *v *= m;
                    }
                    vec![dx]
                }
                (LayerSpec::Dropout { .. }, _) => vec![dy],
                (LayerSpec::ChannelAttention { .. }, Cache::Attention(c)) => {
                    let (dx, [dw1, db1, dw2, db2]) =
                        ops::attention_backward(x0, &p[0].data, &p[2].data, c, &dy);
                    gp[0].data = dw1;
                    gp[1].data = db1;
                    gp[2].data = dw2;
                    gp[3].data = db2;
                    vec![dx]
                }
                (LayerSpec::ResidualAdd, _) => vec![dy.clone(), dy],
                (LayerSpec::FreqSplit { half }, _) => {
                    vec![ops::freq_split_backward(x0.dims(), *half, &dy)]
                }
                (LayerSpec::Concat, _) => {
                    let chans: Vec<usize> = node
                        .inputs
                        .iter()
                        .map(|&i| trace.outputs[i].dims()[3])
                        .collect();
                    ops::concat_backward(&chans, &dy)
                }
                (spec, _) => {
                    return Err(Error::Graph {
                        layer: id,
                        reason: format!("missing forward cache for {}", spec.name()),
                    })
                }
            };
            for (&src, dx) in node.inputs.iter().zip(dxs) {
                accumulate(&mut node_grads[src], dx);
            }
        }
        if let Some(g) = node_grads[0].take() {
            grads.input = g;
        }
        Ok(grads)
    }

    /// Train-mode forward plus mean cross-entropy against soft `targets` and
    /// its gradients. A trailing softmax is differentiated jointly with the
    /// loss.
    pub fn loss_and_grads(
        &self,
        x: &Tensor4<T>,
        targets: &[T],
        rng: &mut Rng,
    ) -> Result<(T, Gradients<T>, Trace<T>)> {
        let trace = self.forward(x, Mode::Train, rng)?;
        let out = self.graph.output_node();
        let (loss, dprobs) = softmax_cross_entropy(trace.output(), targets)?;
        let grads = match &self.graph.nodes[out].spec {
            LayerSpec::Softmax => {
                let src = self.graph.nodes[out].inputs[0];
                self.backward_from(&trace, src, fused_logit_grad(trace.output(), targets))?
            }
            _ => self.backward(&trace, dprobs)?,
        };
        Ok((loss, grads, trace))
    }

    /// Fold a train-mode trace's batch statistics into the running averages.
    pub fn update_running_stats(&mut self, trace: &Trace<T>) {
        for (id, node) in self.graph.nodes.iter().enumerate() {
            if let (LayerSpec::BatchNorm { momentum, .. }, Cache::BatchNorm(c)) =
                (&node.spec, &trace.caches[id])
            {
                let m = T::lit(*momentum);
                let p = &mut self.params[id];
                for ch in 0..c.mean.len() {
                    p[2].data[ch] = m * p[2].data[ch] + (T::one() - m) * c.mean[ch];
                    p[3].data[ch] = m * p[3].data[ch] + (T::one() - m) * c.var[ch];
                }
            }
        }
    }
}
