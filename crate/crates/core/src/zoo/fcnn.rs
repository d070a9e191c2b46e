use super::{scaled, ArchBuilder, ArchConfig};
use crate::nn::{GraphBuilder, LayerSpec, ModelGraph};
use crate::Result;

pub(crate) const DROPOUT: f64 = 0.3;
pub(crate) const ATTENTION_REDUCTION: usize = 4;

const FCNN_FILTERS: [usize; 9] = [32, 32, 64, 64, 128, 128, 128, 128, 256];
const FSFCNN_FILTERS: [usize; 11] = [32, 32, 64, 64, 128, 128, 128, 128, 256, 256, 256];

/// A VGG-style trunk: conv3×3 → BN → ReLU per entry, dropout from the fifth
/// conv on, and the given pool after selected (1-based) convs.
fn trunk(
    b: &mut GraphBuilder,
    mut x: usize,
    filters: &[usize],
    width: f64,
    pools: &[(usize, [usize; 2])],
) -> usize {
    for (i, &f) in filters.iter().enumerate() {
        x = b.conv_bn_relu(x, scaled(f, width), 3);
        if i + 1 >= 5 {
            x = b.then(x, LayerSpec::Dropout { rate: DROPOUT });
        }
        if let Some((_, pool)) = pools.iter().find(|(after, _)| *after == i + 1) {
            x = b.then(x, LayerSpec::MaxPool { pool: *pool });
        }
    }
    x
}

/// Optional attention, global average pool, dense classifier, softmax.
pub(crate) fn head(b: &mut GraphBuilder, mut x: usize, n_classes: usize, attention: bool) -> usize {
    if attention {
        x = b.then(
            x,
            LayerSpec::ChannelAttention {
                reduction: ATTENTION_REDUCTION,
            },
        );
    }
    let g = b.then(x, LayerSpec::GlobalAvgPool);
    let d = b.then(g, LayerSpec::Dense { units: n_classes });
    b.then(d, LayerSpec::Softmax)
}

const FCNN_POOLS: [(usize, [usize; 2]); 3] = [(2, [2, 2]), (4, [2, 2]), (8, [2, 2])];
const FSFCNN_POOLS: [(usize, [usize; 2]); 4] = [(2, [2, 2]), (4, [2, 2]), (6, [1, 2]), (8, [1, 2])];

fn fcnn(cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new(cfg.input);
    let x = trunk(&mut b, 0, &FCNN_FILTERS, width, &FCNN_POOLS);
    head(&mut b, x, cfg.n_classes, attention);
    b.finish()
}

fn fsfcnn(cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
    let mut b = GraphBuilder::new(cfg.input);
    let x = trunk(&mut b, 0, &FSFCNN_FILTERS, width, &FSFCNN_POOLS);
    head(&mut b, x, cfg.n_classes, attention);
    b.finish()
}

#[derive(Debug, Clone, Copy)]
pub struct Fcnn;

impl ArchBuilder for Fcnn {
    fn name(&self) -> &'static str {
        "fcnn"
    }

    fn default_attention(&self) -> bool {
        true
    }

    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
        fcnn(cfg, width, attention)
    }
}

/// The fcnn topology at reduced width, sized for the low-complexity budget.
#[derive(Debug, Clone, Copy)]
pub struct SmallFcnn;

impl ArchBuilder for SmallFcnn {
    fn name(&self) -> &'static str {
        "small_fcnn"
    }

    fn default_width(&self) -> f64 {
        0.625
    }

    fn default_attention(&self) -> bool {
        true
    }

    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
        fcnn(cfg, width, attention)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FsFcnn;

impl ArchBuilder for FsFcnn {
    fn name(&self) -> &'static str {
        "fsfcnn"
    }

    fn default_attention(&self) -> bool {
        true
    }

    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
        fsfcnn(cfg, width, attention)
    }
}

/// Two independent fsfcnn trunks on the low and high frequency halves,
/// concatenated and followed by two more convs.
#[derive(Debug, Clone, Copy)]
pub struct FsFcnnSplit;

impl ArchBuilder for FsFcnnSplit {
    fn name(&self) -> &'static str {
        "fsfcnn_s"
    }

    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
        let mut b = GraphBuilder::new(cfg.input);
        let lo = b.then(0, LayerSpec::FreqSplit { half: 0 });
        let lo = trunk(&mut b, lo, &FSFCNN_FILTERS, width, &FSFCNN_POOLS);
        let hi = b.then(0, LayerSpec::FreqSplit { half: 1 });
        let hi = trunk(&mut b, hi, &FSFCNN_FILTERS, width, &FSFCNN_POOLS);
        let x = b.add(LayerSpec::Concat, &[lo, hi]);
        let x = b.conv_bn_relu(x, scaled(256, width), 3);
        let x = b.conv_bn_relu(x, scaled(256, width), 3);
        head(&mut b, x, cfg.n_classes, attention);
        b.finish()
    }
}
