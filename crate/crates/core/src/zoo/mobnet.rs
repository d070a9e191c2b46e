use super::fcnn::head;
use super::{scaled, ArchBuilder, ArchConfig};
use crate::nn::{GraphBuilder, LayerSpec, ModelGraph};
use crate::Result;

const EXPANSION: usize = 6;
const STEM: usize = 32;
/// `(output channels, stride)` of the eight inverted-residual blocks.
const BLOCKS: [(usize, usize); 8] = [
    (16, 1),
    (24, 2),
    (24, 1),
    (32, 2),
    (32, 1),
    (64, 2),
    (64, 1),
    (96, 1),
];
const LAST: usize = 640;

/// 1×1 expand → depthwise 3×3 → linear 1×1 project, with a shortcut when
/// the shape is unchanged.
fn inverted_residual(
    b: &mut GraphBuilder,
    x: usize,
    cin: usize,
    cout: usize,
    stride: usize,
) -> usize {
    let hidden = cin * EXPANSION;
    let h = b.conv_bn_relu(x, hidden, 1);
    let h = b.then(
        h,
        LayerSpec::DepthwiseConv2d {
            kernel: [3, 3],
            stride: [stride, stride],
            bias: false,
        },
    );
    let h = b.then(h, LayerSpec::batchnorm());
    let h = b.then(h, LayerSpec::Relu);
    let h = b.then(h, LayerSpec::conv(cout, 1));
    let h = b.then(h, LayerSpec::batchnorm());
    if stride == 1 && cin == cout {
        b.add(LayerSpec::ResidualAdd, &[x, h])
    } else {
        h
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Mobnet;

impl ArchBuilder for Mobnet {
    fn name(&self) -> &'static str {
        "mobnet"
    }

    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
        let mut b = GraphBuilder::new(cfg.input);
        let mut c = scaled(STEM, width);
        let x = b.then(
            0,
            LayerSpec::Conv2d {
                filters: c,
                kernel: [3, 3],
                stride: [2, 2],
                bias: false,
            },
        );
        let x = b.then(x, LayerSpec::batchnorm());
        let mut x = b.then(x, LayerSpec::Relu);
        for (out, stride) in BLOCKS {
            let out = scaled(out, width);
            x = inverted_residual(&mut b, x, c, out, stride);
            c = out;
        }
        let x = b.conv_bn_relu(x, scaled(LAST, width), 1);
        head(&mut b, x, cfg.n_classes, attention);
        b.finish()
    }
}
