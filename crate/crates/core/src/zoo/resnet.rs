use super::fcnn::ATTENTION_REDUCTION;
use super::{scaled, ArchBuilder, ArchConfig};
use crate::nn::{GraphBuilder, LayerSpec, ModelGraph};
use crate::Result;

const BASE_FILTERS: usize = 32;
const BLOCKS_PER_BAND: usize = 3;

/// Two-conv residual block with an identity shortcut.
fn block(b: &mut GraphBuilder, x: usize, filters: usize) -> usize {
    let h = b.conv_bn_relu(x, filters, 3);
    let h = b.then(h, LayerSpec::conv(filters, 3));
    let h = b.then(h, LayerSpec::batchnorm());
    let s = b.add(LayerSpec::ResidualAdd, &[x, h]);
    b.then(s, LayerSpec::Relu)
}

fn band(b: &mut GraphBuilder, half: usize, filters: usize) -> usize {
    let x = b.then(0, LayerSpec::FreqSplit { half });
    let mut x = b.conv_bn_relu(x, filters, 3);
    for _ in 0..BLOCKS_PER_BAND {
        x = block(b, x, filters);
    }
    x
}

/// Residual network over two frequency bands with no pooling at all:
/// per band a stem conv and three residual blocks, then a joint residual
/// block and a 1×1 classifier conv (17 convs in total).
#[derive(Debug, Clone, Copy)]
pub struct Resnet {
    pub doubled: bool,
}

impl ArchBuilder for Resnet {
    fn name(&self) -> &'static str {
        if self.doubled {
            "resnet_d"
        } else {
            "resnet"
        }
    }

    fn build_resolved(&self, cfg: &ArchConfig, width: f64, attention: bool) -> Result<ModelGraph> {
        let f = scaled(BASE_FILTERS, width) * if self.doubled { 2 } else { 1 };
        let mut b = GraphBuilder::new(cfg.input);
        let lo = band(&mut b, 0, f);
        let hi = band(&mut b, 1, f);
        let x = b.add(LayerSpec::Concat, &[lo, hi]);
        let mut x = block(&mut b, x, 2 * f);
        if attention {
            x = b.then(
                x,
                LayerSpec::ChannelAttention {
                    reduction: ATTENTION_REDUCTION,
                },
            );
        }
        let x = b.then(x, LayerSpec::conv(cfg.n_classes, 1));
        let x = b.then(x, LayerSpec::batchnorm());
        let x = b.then(x, LayerSpec::GlobalAvgPool);
        b.then(x, LayerSpec::Softmax);
        b.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::super::audit::*;
    use super::super::{build, ArchConfig, MONO_INPUT};
    use crate::nn::{LayerSpec, Model};

    #[test]
    fn resnet_audit() {
        let g = build(&ArchConfig::new("resnet", 10, MONO_INPUT)).unwrap();
        assert_eq!(convs(&g), 17);
        assert!(pools(&g).is_empty());
        let shapes = g.validate().unwrap();
        // Frequency never shrinks except by the band split itself.
        for (id, n) in g.nodes.iter().enumerate().skip(1) {
            if matches!(
                n.spec,
                LayerSpec::FreqSplit { .. } | LayerSpec::GlobalAvgPool
            ) {
                continue;
            }
            let src = shapes[n.inputs[0]];
            assert_eq!(shapes[id][1], src[1], "layer {id} reduces frequency");
        }
        assert_eq!(g.count(|s| matches!(s, LayerSpec::FreqSplit { .. })), 2);
    }

    #[test]
    fn doubled_has_about_four_times_the_parameters() {
        let count = |arch: &str| {
            let g = build(&ArchConfig::new(arch, 10, MONO_INPUT)).unwrap();
            Model::<f32>::init(g, 0).unwrap().param_count() as f64
        };
        let r = count("resnet_d") / count("resnet");
        assert!((3.5..=4.05).contains(&r), "{r}");
    }

    #[test]
    fn odd_frequency_rejected() {
        assert!(build(&ArchConfig::new("resnet", 10, [100, 127, 3])).is_err());
    }

    #[test]
    fn attention_variant() {
        let mut cfg = ArchConfig::new("resnet_d", 10, MONO_INPUT);
        cfg.attention = Some(true);
        let g = build(&cfg).unwrap();
        assert_eq!(
            g.count(|s| matches!(s, LayerSpec::ChannelAttention { .. })),
            1
        );
        assert_eq!(convs(&g), 17);
    }
}
