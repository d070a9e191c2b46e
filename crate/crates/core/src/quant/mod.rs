//! Post-training dynamic-range quantization.
//!
//! Conv, depthwise, dense and attention weights are stored as symmetric
//! per-tensor int8 with zero-point 0; biases and everything else stay `f32`.
//! Batchnorm is folded into the preceding layer first. At inference time
//! activations feeding an int8 layer are quantized per batch with
//! `scale = max|a| / 127` and multiplied in `i32`.

mod fold;
mod format;
pub mod kernels;

use serde::Serialize;

use crate::nn::{ops, LayerSpec, Model, ModelGraph, Param, Tensor4};
use crate::{Error, Result};

pub use fold::fold_batchnorm;
pub use format::{decode_quantized, encode_quantized, load_quantized, save_quantized};

/// Largest representable magnitude; `-128` is never produced.
pub const QMAX: i32 = 127;

/// Upper bound on multiply-accumulates per output that can never overflow
/// an `i32` accumulator when both operands are in `[-127, 127]`.
pub const MAX_MACS_PER_OUTPUT: usize = (i32::MAX as usize) / (127 * 127);

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub dims: Vec<usize>,
    pub values: Vec<i8>,
    pub scale: f32,
}

impl QuantizedTensor {
    pub fn dequantize(&self) -> Vec<f32> {
        self.values
            .iter()
            .map(|&q| f32::from(q) * self.scale)
            .collect()
    }

    pub fn to_param(&self) -> Param<f32> {
        Param {
            dims: self.dims.clone(),
            data: self.dequantize(),
        }
    }
}

fn quantize_values(w: &[f32]) -> (Vec<i8>, f32) {
    let max = w.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return (vec![0; w.len()], 1.0);
    }
    let scale = max / QMAX as f32;
    let q = w
        .iter()
        .map(|&v| (v / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    (q, scale)
}

/// Symmetric per-tensor quantization, rounding half away from zero. An
/// all-zero tensor gets scale 1.
pub fn quantize_tensor(dims: Vec<usize>, w: &[f32]) -> Result<QuantizedTensor> {
    if w.is_empty() {
        return Err(Error::InvalidInput(
            "cannot quantize an empty tensor".into(),
        ));
    }
    if w.len() != dims.iter().product::<usize>() {
        return Err(Error::Shape(format!(
            "{} values for dims {dims:?}",
            w.len()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite weight".into()));
    }
    let (values, scale) = quantize_values(w);
    Ok(QuantizedTensor {
        dims,
        values,
        scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum QParam {
    Int8(QuantizedTensor),
    Float(Param<f32>),
}

impl QParam {
    pub fn dims(&self) -> &[usize] {
        match self {
            QParam::Int8(q) => &q.dims,
            QParam::Float(p) => &p.dims,
        }
    }

    pub fn to_param(&self) -> Param<f32> {
        match self {
            QParam::Int8(q) => q.to_param(),
            QParam::Float(p) => p.clone(),
        }
    }

    fn int8(&self) -> &QuantizedTensor {
        match self {
            QParam::Int8(q) => q,
            QParam::Float(_) => unreachable!("weight blobs are int8 by construction"),
        }
    }

    fn float(&self) -> &[f32] {
        match self {
            QParam::Float(p) => &p.data,
            QParam::Int8(_) => unreachable!("bias blobs are float by construction"),
        }
    }
}

/// Whether parameter `idx` of a layer is stored as int8.
pub fn is_weight_blob(spec: &LayerSpec, idx: usize) -> bool {
    match spec {
        LayerSpec::Conv2d { .. } | LayerSpec::DepthwiseConv2d { .. } | LayerSpec::Dense { .. } => {
            idx == 0
        }
        LayerSpec::ChannelAttention { .. } => idx == 0 || idx == 2,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub graph: ModelGraph,
    pub params: Vec<Vec<QParam>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantMode {
    /// Activations quantized per batch, integer multiply-accumulate.
    #[default]
    Dynamic,
    /// Int8 weights dequantized, float arithmetic.
    WeightOnly,
}

impl std::str::FromStr for QuantMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(QuantMode::Dynamic),
            "weight_only" | "weight-only" => Ok(QuantMode::WeightOnly),
            _ => Err(Error::Config(format!(
                "unknown quantization mode {s:?} (dynamic, weight_only)"
            ))),
        }
    }
}

/// Reject graphs whose integer accumulators could overflow.
pub fn check_accumulators(graph: &ModelGraph) -> Result<()> {
    for (layer, macs) in graph.macs_per_output()? {
        if macs > MAX_MACS_PER_OUTPUT {
            return Err(Error::Graph {
                layer,
                reason: format!(
                    "{macs} multiply-accumulates per output exceed the int32 bound {MAX_MACS_PER_OUTPUT}"
                ),
            });
        }
    }
    Ok(())
}

/// Fold batchnorm, then quantize every weight blob.
pub fn quantize_model(model: &Model<f32>) -> Result<QuantizedModel> {
    let folded = fold_batchnorm(model)?;
    check_accumulators(&folded.graph)?;
    let mut params = Vec::with_capacity(folded.graph.len());
    for (node, ps) in folded.graph.nodes.iter().zip(&folded.params) {
        let mut out = Vec::with_capacity(ps.len());
        for (i, p) in ps.iter().enumerate() {
            if is_weight_blob(&node.spec, i) {
                out.push(QParam::Int8(quantize_tensor(p.dims.clone(), &p.data)?));
            } else {
                out.push(QParam::Float(p.clone()));
            }
        }
        params.push(out);
    }
    Ok(QuantizedModel {
        graph: folded.graph,
        params,
    })
}

/// Float model with the int8 weights expanded back to `f32`.
pub fn dequantize_model(qm: &QuantizedModel) -> Result<Model<f32>> {
    Model::from_parts(
        qm.graph.clone(),
        qm.params
            .iter()
            .map(|ps| ps.iter().map(QParam::to_param).collect())
            .collect(),
    )
}

fn quantize_activations(x: &Tensor4<f32>) -> (Vec<i8>, f32) {
    quantize_values(x.data())
}

fn finish_layer(dims: [usize; 4], acc: Vec<i32>, scale: f32, bias: Option<&[f32]>) -> Tensor4<f32> {
    let c = dims[3];
    let data = acc
        .into_iter()
        .enumerate()
        .map(|(i, a)| a as f32 * scale + bias.map_or(0.0, |b| b[i % c]))
        .collect();
    Tensor4::from_vec(dims, data).expect("kernel output matches dims")
}

impl QuantizedModel {
    pub fn param_count(&self) -> usize {
        self.params
            .iter()
            .flatten()
            .map(|p| p.dims().iter().product::<usize>())
            .sum()
    }

    /// Class scores for a batch. Mirrors the float engine's eval-mode
    /// forward, with int8 arithmetic in conv, depthwise and dense layers.
    pub fn forward(&self, x: &Tensor4<f32>, mode: QuantMode) -> Result<Tensor4<f32>> {
        let expect = self.graph.input_shape();
        let got = x.sample_shape();
        if got[1] != expect[1] || got[2] != expect[2] || x.batch() == 0 {
            return Err(Error::Graph {
                layer: 0,
                reason: format!("input {:?} does not match graph input {expect:?}", x.dims()),
            });
        }
        self.graph.shapes_for(got)?;
        let mut outputs: Vec<Tensor4<f32>> = Vec::with_capacity(self.graph.len());
        for (id, node) in self.graph.nodes.iter().enumerate() {
            let p = &self.params[id];
            let input = |k: usize| &outputs[node.inputs[k]];
            let bias = || p.get(1).map(QParam::float);
            let y = match (&node.spec, mode) {
                (LayerSpec::Input { .. }, _) => x.clone(),
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel,
                        stride,
                        ..
                    },
                    QuantMode::Dynamic,
                ) => {
                    let w = p[0].int8();
                    let (qa, sa) = quantize_activations(input(0));
                    let (dims, acc) = kernels::conv2d_i8(
                        &qa,
                        input(0).dims(),
                        &w.values,
                        *kernel,
                        *stride,
                        *filters,
                    );
                    finish_layer(dims, acc, sa * w.scale, bias())
                }
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel,
                        stride,
                        ..
                    },
                    QuantMode::WeightOnly,
                ) => ops::conv2d_forward(
                    input(0),
                    &p[0].int8().dequantize(),
                    bias(),
                    *kernel,
                    *stride,
                    *filters,
                ),
                (LayerSpec::DepthwiseConv2d { kernel, stride, .. }, QuantMode::Dynamic) => {
                    let w = p[0].int8();
                    let (qa, sa) = quantize_activations(input(0));
                    let (dims, acc) =
                        kernels::depthwise_i8(&qa, input(0).dims(), &w.values, *kernel, *stride);
                    finish_layer(dims, acc, sa * w.scale, bias())
                }
                (LayerSpec::DepthwiseConv2d { kernel, stride, .. }, QuantMode::WeightOnly) => {
                    ops::depthwise_forward(
                        input(0),
                        &p[0].int8().dequantize(),
                        bias(),
                        *kernel,
                        *stride,
                    )
                }
                (LayerSpec::Dense { units }, QuantMode::Dynamic) => {
                    let w = p[0].int8();
                    let b = input(0).batch();
                    let (qa, sa) = quantize_activations(input(0));
                    let acc = kernels::dense_i8(&qa, b, &w.values, *units);
                    finish_layer([b, 1, 1, *units], acc, sa * w.scale, bias())
                }
                (LayerSpec::Dense { units }, QuantMode::WeightOnly) => {
                    ops::dense_forward(input(0), &p[0].int8().dequantize(), p[1].float(), *units)
                }
                (LayerSpec::BatchNorm { eps, .. }, _) => ops::batchnorm_eval(
                    input(0),
                    p[0].float(),
                    p[1].float(),
                    p[2].float(),
                    p[3].float(),
                    *eps as f32,
                ),
                (LayerSpec::Relu, _) => ops::relu_forward(input(0)),
                (LayerSpec::MaxPool { pool }, _) => ops::maxpool_forward(input(0), *pool).0,
                (LayerSpec::GlobalAvgPool, _) => ops::gap_forward(input(0)),
                (LayerSpec::Softmax, _) => ops::softmax_forward(input(0)),
                (LayerSpec::Dropout { .. }, _) => input(0).clone(),
                (LayerSpec::ChannelAttention { .. }, _) => {
                    ops::attention_forward(
                        input(0),
                        &p[0].int8().dequantize(),
                        p[1].float(),
                        &p[2].int8().dequantize(),
                        p[3].float(),
                    )
                    .0
                }
                (LayerSpec::ResidualAdd, _) => {
                    let mut y = input(0).clone();
                    y.add_assign(input(1));
                    y
                }
                (LayerSpec::FreqSplit { half }, _) => ops::freq_split_forward(input(0), *half),
                (LayerSpec::Concat, _) => {
                    let xs: Vec<&Tensor4<f32>> = node.inputs.iter().map(|&i| &outputs[i]).collect();
                    ops::concat_forward(&xs)
                }
            };
            if !y.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite activation at layer {id} ({})",
                    node.spec.name()
                )));
            }
            outputs.push(y);
        }
        Ok(outputs.pop().expect("non-empty graph"))
    }
}

/// Convenience wrapper for [`QuantizedModel::forward`].
pub fn quantized_forward(
    qm: &QuantizedModel,
    x: &Tensor4<f32>,
    mode: QuantMode,
) -> Result<Tensor4<f32>> {
    qm.forward(x, mode)
}

/// Byte counts of one serialized model file, split into sections. Blob
/// sections include each blob's own header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileSections {
    /// Magic, version, topology and blob count.
    pub header: usize,
    /// Conv, depthwise, dense and attention weight blobs.
    pub weights: usize,
    /// Biases, batchnorm and other float blobs.
    pub other: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSize {
    pub layer: usize,
    pub kind: String,
    pub float_bytes: usize,
    pub quant_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeReport {
    pub float: FileSections,
    pub quant: FileSections,
    pub weight_ratio: f64,
    pub file_ratio: f64,
    /// Weight blobs of the quantized model, indexed by folded layer id.
    pub layers: Vec<LayerSize>,
}

impl SizeReport {
    pub fn new(model: &Model<f32>, qm: &QuantizedModel) -> Self {
        let float = format::float_sections(model);
        let quant = format::quant_sections(qm);
        let layers = qm
            .graph
            .nodes
            .iter()
            .zip(&qm.params)
            .enumerate()
            .filter_map(|(layer, (node, ps))| {
                let mut f = 0;
                let mut q = 0;
                for (i, p) in ps.iter().enumerate() {
                    if is_weight_blob(&node.spec, i) {
                        f += format::float_blob_bytes(p.dims());
                        q += format::quant_blob_bytes(p);
                    }
                }
                (q > 0).then(|| LayerSize {
                    layer,
                    kind: node.spec.name().to_string(),
                    float_bytes: f,
                    quant_bytes: q,
                })
            })
            .collect();
        Self {
            weight_ratio: quant.weights as f64 / float.weights.max(1) as f64,
            file_ratio: quant.total as f64 / float.total.max(1) as f64,
            float,
            quant,
            layers,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str("section      float_bytes  quant_bytes\n");
        for (name, f, q) in [
            ("header", self.float.header, self.quant.header),
            ("weights", self.float.weights, self.quant.weights),
            ("other", self.float.other, self.quant.other),
            ("total", self.float.total, self.quant.total),
        ] {
            s.push_str(&format!("{name:<12} {f:>11}  {q:>11}\n"));
        }
        s.push_str(&format!(
            "weight ratio {:.4}\nfile ratio   {:.4}\n",
            self.weight_ratio, self.file_ratio
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::GraphBuilder;
    use crate::rng::seeded;
    use rand::Rng as _;

    #[test]
    fn endpoints() {
        let q = quantize_tensor(vec![3], &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(q.values, vec![-127, 0, 127]);
        assert_eq!(q.scale, 1.0 / 127.0);
    }

    #[test]
    fn zeros_get_unit_scale() {
        let q = quantize_tensor(vec![4], &[0.0; 4]).unwrap();
        assert_eq!(q.scale, 1.0);
        assert_eq!(q.values, vec![0; 4]);
        assert_eq!(q.dequantize(), vec![0.0; 4]);
    }

    #[test]
    fn rounds_half_away_from_zero() {
        // scale 1: 127 is the max, so ±0.5 and ±2.5 sit exactly on ties
        let q = quantize_tensor(vec![5], &[127.0, 0.5, -0.5, 2.5, -2.5]).unwrap();
        assert_eq!(q.scale, 1.0);
        assert_eq!(q.values, vec![127, 1, -1, 3, -3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(quantize_tensor(vec![0], &[]).is_err());
        assert!(quantize_tensor(vec![2], &[1.0, f32::NAN]).is_err());
        assert!(quantize_tensor(vec![3], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn round_trip_within_half_step() {
        let mut rng = seeded(2);
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let amp: f32 = rng.random_range(1e-3..10.0);
            let w: Vec<f32> = (0..n).map(|_| rng.random_range(-amp..amp)).collect();
            let q = quantize_tensor(vec![n], &w).unwrap();
            for (a, b) in w.iter().zip(q.dequantize()) {
                assert!((a - b).abs() <= q.scale * (0.5 + 127.0 * f32::EPSILON));
            }
        }
    }

    fn dense_net(w: Vec<f32>, b: Vec<f32>) -> Model<f32> {
        let mut g = GraphBuilder::new([1, 1, 2]);
        let d = g.then(0, LayerSpec::Dense { units: 2 });
        g.then(d, LayerSpec::Softmax);
        let graph = g.finish().unwrap();
        Model::from_parts(
            graph,
            vec![
                vec![],
                vec![
                    Param {
                        dims: vec![2, 2],
                        data: w,
                    },
                    Param {
                        dims: vec![2],
                        data: b,
                    },
                ],
                vec![],
            ],
        )
        .unwrap()
    }

    #[test]
    fn dense_matches_hand_arithmetic() {
        // w = [[1, 0.5], [-1, 0.25]] -> scale 1/127, q = [[127, 64], [-127, 32]]
        // x = [0.5, -1]               -> scale 1/127, q = [64, -127]
        let m = dense_net(vec![1.0, 0.5, -1.0, 0.25], vec![0.1, -0.2]);
        let qm = quantize_model(&m).unwrap();
        assert_eq!(qm.params[1][0].int8().values, vec![127, 64, -127, 32]);
        let x = Tensor4::from_vec([1, 1, 1, 2], vec![0.5, -1.0]).unwrap();
        let acc0 = 64 * 127 + -127 * -127;
        let acc1 = 64 * 64 + -127 * 32;
        let s = (1.0f32 / 127.0) * (1.0 / 127.0);
        let z = [acc0 as f32 * s + 0.1, acc1 as f32 * s - 0.2];
        let e = [z[0].exp(), z[1].exp()];
        let want = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];
        let got = qm.forward(&x, QuantMode::Dynamic).unwrap();
        for (a, b) in got.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_input_gives_bias_path() {
        let m = dense_net(vec![0.3, -0.7, 0.2, 0.9], vec![0.4, -0.1]);
        let qm = quantize_model(&m).unwrap();
        let x = Tensor4::zeros([3, 1, 1, 2]);
        let want = ops::softmax_forward(&Tensor4::from_vec([1, 1, 1, 2], vec![0.4, -0.1]).unwrap());
        for mode in [QuantMode::Dynamic, QuantMode::WeightOnly] {
            let y = qm.forward(&x, mode).unwrap();
            for row in y.rows() {
                for (a, b) in row.iter().zip(want.data()) {
                    assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn single_conv_error_within_bound() {
        let mut g = GraphBuilder::new([6, 5, 4]);
        g.then(0, LayerSpec::conv(3, 3));
        let m = Model::<f32>::init(g.finish().unwrap(), 8).unwrap();
        let qm = quantize_model(&m).unwrap();
        let mut rng = seeded(4);
        let x = Tensor4::from_vec(
            [2, 6, 5, 4],
            (0..240).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        let sa = x.data().iter().fold(0.0f32, |a, v: &f32| a.max(v.abs())) / 127.0;
        let sw = qm.params[1][0].int8().scale;
        let n_mac = 3 * 3 * 4;
        // each product errs by at most (|a| sw + |w| sa + sa sw / 2) / 2
        let bound = n_mac as f32 * sa * sw * (127.0 + 0.25) * 1.001;
        let f = m.predict(&x).unwrap();
        let q = qm.forward(&x, QuantMode::Dynamic).unwrap();
        let worst = f
            .data()
            .iter()
            .zip(q.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(worst <= bound, "{worst} > {bound}");
        assert!(worst > 0.0);
    }

    #[test]
    fn requantizing_is_idempotent() {
        let mut g = GraphBuilder::new([8, 8, 2]);
        let c = g.conv_bn_relu(0, 4, 3);
        let a = g.then(c, LayerSpec::ChannelAttention { reduction: 2 });
        let p = g.then(a, LayerSpec::GlobalAvgPool);
        let d = g.then(p, LayerSpec::Dense { units: 3 });
        g.then(d, LayerSpec::Softmax);
        let m = Model::<f32>::init(g.finish().unwrap(), 21).unwrap();
        let q1 = quantize_model(&m).unwrap();
        let q2 = quantize_model(&dequantize_model(&q1).unwrap()).unwrap();
        assert_eq!(q1.graph, q2.graph);
        for (a, b) in q1.params.iter().flatten().zip(q2.params.iter().flatten()) {
            match (a, b) {
                (QParam::Int8(a), QParam::Int8(b)) => {
                    assert_eq!(a.values, b.values);
                    assert!((a.scale - b.scale).abs() <= a.scale * 1e-6);
                }
                (QParam::Float(a), QParam::Float(b)) => assert_eq!(a, b),
                _ => panic!("blob kinds differ"),
            }
        }
    }

    #[test]
    fn overflow_guard() {
        assert_eq!(MAX_MACS_PER_OUTPUT, 133_144);
        assert!(MAX_MACS_PER_OUTPUT as i64 * 127 * 127 <= i32::MAX as i64);
        let mut g = GraphBuilder::new([1, 1, 133_145]);
        g.then(0, LayerSpec::Dense { units: 1 });
        let graph = g.finish().unwrap();
        assert!(matches!(
            check_accumulators(&graph),
            Err(Error::Graph { layer: 1, .. })
        ));
    }

    #[test]
    fn mode_parses() {
        assert_eq!("dynamic".parse::<QuantMode>().unwrap(), QuantMode::Dynamic);
        assert_eq!(
            "weight_only".parse::<QuantMode>().unwrap(),
            QuantMode::WeightOnly
        );
        assert!("fp16".parse::<QuantMode>().is_err());
    }
}
