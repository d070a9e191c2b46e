//! Central finite-difference checks of the engine's reverse pass.

use asc_core::nn::{GraphBuilder, LayerSpec, Mode, Model, Shape, Tensor4};
use asc_core::rng::{seeded, Rng};
use rand::Rng as _;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const TRIALS: usize = 20;

/// Every layer kind under test, plus the fused softmax cross-entropy.
pub const KINDS: &[&str] = &[
    "conv2d",
    "depthwise_conv2d",
    "batchnorm_train",
    "batchnorm_eval",
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
    "softmax_cross_entropy",
];

pub struct Case {
    pub model: Model<f64>,
    pub x: Tensor4<f64>,
    pub mode: Mode,
}

fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn case(kind: &str, rng: &mut Rng) -> Case {
    let batch = rng.random_range(2..4);
    let h = rng.random_range(2..6);
    let w = 2 * rng.random_range(1..4);
    let c = rng.random_range(1..4);
    let shape: Shape = [h, w, c];
    let mut b = GraphBuilder::new(shape);
    let x0 = b.input();
    let odd = |rng: &mut Rng| [1, 3][rng.random_range(0..2)];
    let mut mode = Mode::Train;
    match kind {
        "conv2d" => {
            let spec = LayerSpec::Conv2d {
                filters: rng.random_range(1..4),
                kernel: [odd(rng), odd(rng)],
                stride: [rng.random_range(1..3), rng.random_range(1..3)],
                bias: rng.random_bool(0.5),
            };
            b.then(x0, spec);
        }
        "depthwise_conv2d" => {
            let spec = LayerSpec::DepthwiseConv2d {
                kernel: [odd(rng), odd(rng)],
                stride: [rng.random_range(1..3), rng.random_range(1..3)],
                bias: rng.random_bool(0.5),
            };
            b.then(x0, spec);
        }
        "batchnorm_train" => {
            b.then(x0, LayerSpec::batchnorm());
        }
        "batchnorm_eval" => {
            b.then(x0, LayerSpec::batchnorm());
            mode = Mode::Eval;
        }
        "relu" => {
            b.then(x0, LayerSpec::Relu);
        }
        "maxpool" => {
            let pool = [
                rng.random_range(1..3).min(h),
                [1, 2][rng.random_range(0..2)],
            ];
            b.then(x0, LayerSpec::MaxPool { pool });
        }
        "global_avg_pool" => {
            b.then(x0, LayerSpec::GlobalAvgPool);
        }
        "dense" => {
            let units = rng.random_range(1..5);
            b.then(x0, LayerSpec::Dense { units });
        }
        "softmax" | "softmax_cross_entropy" => {
            let g = b.then(x0, LayerSpec::GlobalAvgPool);
            let d = b.then(
                g,
                LayerSpec::Dense {
                    units: rng.random_range(2..5),
                },
            );
            b.then(d, LayerSpec::Softmax);
        }
        "dropout" => {
            let rate = rng.random_range(0.1..0.6);
            b.then(x0, LayerSpec::Dropout { rate });
        }
        "channel_attention" => {
            let reduction = rng.random_range(1..3);
            b.then(x0, LayerSpec::ChannelAttention { reduction });
        }
        "residual_add" => {
            let conv = b.then(x0, LayerSpec::conv(c, 3));
            b.add(LayerSpec::ResidualAdd, &[conv, x0]);
        }
        "freq_split" => {
            let half = rng.random_range(0..2);
            b.then(x0, LayerSpec::FreqSplit { half });
        }
        "concat" => {
            let conv = b.then(x0, LayerSpec::conv(rng.random_range(1..3), 1));
            b.add(LayerSpec::Concat, &[x0, conv]);
        }
        other => panic!("no gradient case for {other}"),
    }
    let graph = b.finish().expect("valid test graph");
    let mut model = Model::<f64>::init(graph, rng.random()).expect("init");
    for (id, node) in model.graph.nodes.clone().iter().enumerate() {
        for (k, p) in model.params[id].iter_mut().enumerate() {
            let n = p.data.len();
            p.data = match (&node.spec, k) {
                (LayerSpec::BatchNorm { .. }, 3) => uniform(rng, n, 0.5, 1.5),
                _ => uniform(rng, n, -1.0, 1.0),
            };
        }
    }
    let x = Tensor4::from_vec([batch, h, w, c], uniform(rng, batch * h * w * c, -1.0, 1.0))
        .expect("dims match");
    Case { model, x, mode }
}

/// Scalar objective: `Σ r ⊙ y` for a fixed random `r`, or mean
/// cross-entropy against soft targets for the fused loss case.
struct Objective {
    weights: Vec<f64>,
    cross_entropy: bool,
    dropout_seed: u64,
}

impl Objective {
    fn value(&self, m: &Model<f64>, x: &Tensor4<f64>, mode: Mode) -> f64 {
        let mut rng = seeded(self.dropout_seed);
        if self.cross_entropy {
            let (loss, _, _) = m.loss_and_grads(x, &self.weights, &mut rng).unwrap();
            return loss;
        }
        let t = m.forward(x, mode, &mut rng).unwrap();
        t.output()
            .data()
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| a * b)
            .sum()
    }
}

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(n)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn = n.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Worst relative error over the input gradient and every trainable
/// parameter gradient of one randomized case.
pub fn check_once(kind: &str, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let Case {
        mut model,
        mut x,
        mode,
    } = case(kind, &mut rng);
    let cross_entropy = kind == "softmax_cross_entropy";
    let probe = model.forward(&x, mode, &mut seeded(0)).unwrap();
    let out_len = probe.output().len();
    let weights = if cross_entropy {
        let classes = probe.output().dims()[3];
        let mut t = Vec::with_capacity(out_len);
        for _ in 0..x.batch() {
            let row = uniform(&mut rng, classes, 0.1, 1.0);
            let s: f64 = row.iter().sum();
            t.extend(row.iter().map(|v| v / s));
        }
        t
    } else {
        uniform(&mut rng, out_len, -1.0, 1.0)
    };
    let obj = Objective {
        weights,
        cross_entropy,
        dropout_seed: rng.random(),
    };

    let grads = if cross_entropy {
        model
            .loss_and_grads(&x, &obj.weights, &mut seeded(obj.dropout_seed))
            .unwrap()
            .1
    } else {
        let trace = model
            .forward(&x, mode, &mut seeded(obj.dropout_seed))
            .unwrap();
        let g = Tensor4::from_vec(trace.output().dims(), obj.weights.clone()).unwrap();
        model.backward(&trace, g).unwrap()
    };

    let mut worst: f64 = 0.0;
    let mut numeric = vec![0.0; x.len()];
    for i in 0..x.len() {
        let v = x.data()[i];
        x.data_mut()[i] = v + H;
        let up = obj.value(&model, &x, mode);
        x.data_mut()[i] = v - H;
        let down = obj.value(&model, &x, mode);
        x.data_mut()[i] = v;
        numeric[i] = (up - down) / (2.0 * H);
    }
    worst = worst.max(rel_err(grads.input.data(), &numeric));

    for node in 0..model.params.len() {
        for k in 0..model.params[node].len() {
            if !model.is_trainable(node, k) {
                continue;
            }
            let n = model.params[node][k].data.len();
            let mut numeric = vec![0.0; n];
            for i in 0..n {
                let v = model.params[node][k].data[i];
                model.params[node][k].data[i] = v + H;
                let up = obj.value(&model, &x, mode);
                model.params[node][k].data[i] = v - H;
                let down = obj.value(&model, &x, mode);
                model.params[node][k].data[i] = v;
                numeric[i] = (up - down) / (2.0 * H);
            }
            worst = worst.max(rel_err(&grads.params[node][k].data, &numeric));
        }
    }
    worst
}

/// Worst error over [`TRIALS`] randomized cases of one kind.
pub fn check_kind(kind: &str) -> f64 {
    (0..TRIALS)
        .map(|t| check_once(kind, 1000 * t as u64 + kind.len() as u64))
        .fold(0.0, f64::max)
}
