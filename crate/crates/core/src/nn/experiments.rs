//! Reference architectures for the five pipelines.
//!
//! Every network ends in the same generator trunk, fed by a 100-wide feature
//! vector (`l4`):
//!
//! ```text
//! l4 ─ reshape 10×10×1 ─ TCL(k3,s2,d1) ──────────────────┐
//!  └── Dense→81 ─ reshape 9×9×1 ─ TCL(k3,s2,d2) ─────────┴ concat 21×21×C
//!      23-canvas: TCL(k3,s1) → 23×23×3
//!      45-canvas: TCL(k3,s2) → 43×43×C' → TCL(k3,s1) → 45×45×3
//! ```
//!
//! Front-end kernels are the minimal solutions of the published shape
//! chains: 512→256 is k2/s2, 256→127 is k4/s2, 127→63 and 63→31 are k3/s2.

use super::spec::{LayerSpec, NetworkBuilder, NetworkSpec};
use crate::experiment::{Experiment, Scale, Variant};
use crate::tensor::ConvSpec;

pub const DROPOUT_RATE: f64 = 0.2;

/// Channel widths of the convolutional parts of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Widths {
    /// Image front-end convolution channels (three stages).
    pub front: [usize; 3],
    /// Channels of each of the two parallel trunk TCL branches.
    pub branch: usize,
    /// Channels of the 43×43 stage on 45-pixel canvases.
    pub mid: usize,
    /// Input image side for image experiments.
    pub image_side: usize,
}

impl Widths {
    /// Published widths at paper scale. Desk trunks are narrow: every
    /// output pixel shares the final kernel, and with wide trunks the pull
    /// toward the black RU majority saturates the sigmoid before position
    /// contrast forms. One channel per branch avoids that on the 23-pixel
    /// tabular canvases; AD, whose strips cover most of its canvas, needs
    /// four to separate its three colors.
    pub fn new(exp: Experiment, scale: Scale) -> Self {
        if scale == Scale::Paper {
            return Self {
                front: [100, 50, 50],
                branch: 50,
                mid: 100,
                image_side: 256,
            };
        }
        let branch = match exp {
            Experiment::Survival | Experiment::Los => 1,
            Experiment::Ad | Experiment::Retina | Experiment::Covid => 4,
        };
        Self {
            front: [8, 8, 8],
            branch,
            mid: if exp == Experiment::Los { 1 } else { 6 },
            image_side: 64,
        }
    }
}

/// Trainable parameter counts reported for the published networks.
pub fn published_param_count(exp: Experiment) -> usize {
    match exp {
        Experiment::Survival => 183_336,
        Experiment::Retina => 2_511_359,
        Experiment::Los => 137_003,
        Experiment::Covid => 10_116_981,
        Experiment::Ad => 36_143,
    }
}

/// Per-sample input shape of an experiment's network.
pub fn input_shape(exp: Experiment, variant: Variant) -> Vec<usize> {
    let w = Widths::new(exp, variant.scale);
    match exp {
        Experiment::Survival => vec![183],
        Experiment::Los => vec![52],
        Experiment::Ad => vec![36],
        Experiment::Retina => vec![w.image_side, w.image_side, 3],
        Experiment::Covid => {
            let side = if variant.scale == Scale::Paper {
                512
            } else {
                w.image_side
            };
            vec![side, side, 3]
        }
    }
}

/// Modality widths of the Alzheimer's network, in input order.
pub const AD_BRANCHES: [(&str, usize); 5] =
    [("mri", 7), ("pet", 3), ("csf", 3), ("cog", 20), ("rf", 3)];

fn hidden_dense(b: &mut NetworkBuilder, from: &str, fin: usize, fout: usize) -> String {
    b.chain(
        from,
        [
            LayerSpec::dense(fin, fout),
            LayerSpec::BatchNorm,
            LayerSpec::relu(),
        ],
    )
}

fn dense_stack(b: &mut NetworkBuilder, from: &str, dims: &[usize]) -> String {
    dims.windows(2).fold(from.to_string(), |prev, w| {
        hidden_dense(b, &prev, w[0], w[1])
    })
}

/// `l4` block: the 100-wide feature layer followed by dropout.
fn l4(b: &mut NetworkBuilder, from: &str, fin: usize) -> String {
    let h = b.named("l4", &[from], LayerSpec::dense(fin, 100));
    let h = b.chain(&h, [LayerSpec::BatchNorm, LayerSpec::relu()]);
    b.named(
        "l4_dropout",
        &[&h],
        LayerSpec::Dropout { rate: DROPOUT_RATE },
    )
}

fn trunk(b: &mut NetworkBuilder, l4: &str, side: usize, w: &Widths) -> String {
    let a = b.chain(
        l4,
        [
            LayerSpec::reshape(&[10, 10, 1]),
            LayerSpec::tconv(ConvSpec::new(3, 2), w.branch),
            LayerSpec::relu(),
        ],
    );
    let head = hidden_dense(b, l4, 100, 81);
    let c = b.chain(
        &head,
        [
            LayerSpec::reshape(&[9, 9, 1]),
            LayerSpec::tconv(ConvSpec::new(3, 2).with_dilation(2), w.branch),
            LayerSpec::relu(),
        ],
    );
    let fused = b.named("trunk_concat", &[&a, &c], LayerSpec::Concat);
    let pre = match side {
        23 => fused,
        45 => b.chain(
            &fused,
            [
                LayerSpec::tconv(ConvSpec::new(3, 2), w.mid),
                LayerSpec::relu(),
            ],
        ),
        _ => unreachable!("canvas sides are 23 or 45"),
    };
    let out = b.layer(&pre, LayerSpec::tconv(ConvSpec::new(3, 1), 3));
    b.named("output", &[&out], LayerSpec::sigmoid())
}

fn conv_relu(conv: ConvSpec, channels: usize) -> [LayerSpec; 2] {
    [LayerSpec::conv(conv, channels), LayerSpec::relu()]
}

/// The reference network for an experiment.
pub fn build_experiment(exp: Experiment, variant: Variant) -> NetworkSpec {
    let w = Widths::new(exp, variant.scale);
    let mut b = NetworkBuilder::new();
    let side = exp.canvas_side();
    let features = match exp {
        Experiment::Survival => {
            let x = b.input("features", &[183]);
            let h = dense_stack(&mut b, &x, &[183, 366, 183]);
            l4(&mut b, &h, 183)
        }
        Experiment::Los => {
            let x = b.input("features", &[52]);
            let h = dense_stack(&mut b, &x, &[52, 104, 52]);
            l4(&mut b, &h, 52)
        }
        Experiment::Ad => {
            let mut tops = Vec::new();
            for (name, width) in AD_BRANCHES {
                let x = b.input(name, &[width]);
                tops.push(dense_stack(&mut b, &x, &[width, 2 * width, width]));
            }
            let refs: Vec<&str> = tops.iter().map(String::as_str).collect();
            let fused = b.named("fusion", &refs, LayerSpec::Concat);
            l4(&mut b, &fused, 36)
        }
        Experiment::Retina => {
            let s = w.image_side;
            let x = b.input("image", &[s, s, 3]);
            let mut layers = Vec::new();
            layers.extend(conv_relu(ConvSpec::new(4, 2), w.front[0]));
            layers.extend(conv_relu(ConvSpec::new(3, 2), w.front[1]));
            layers.extend(conv_relu(ConvSpec::new(3, 2), w.front[2]));
            let h = b.chain(&x, layers);
            let side3 = chain_side(s, &[(4, 2), (3, 2), (3, 2)]);
            let flat = side3 * side3 * w.front[2];
            let h = b.layer(&h, LayerSpec::reshape(&[flat]));
            let h = dense_stack(&mut b, &h, &[flat, 50, 50]);
            l4(&mut b, &h, 50)
        }
        Experiment::Covid => {
            let s = if variant.scale == Scale::Paper {
                512
            } else {
                w.image_side
            };
            let x = b.input("image", &[s, s, 3]);
            let mut layers = Vec::new();
            layers.extend(conv_relu(ConvSpec::new(2, 2), 3));
            layers.extend(conv_relu(ConvSpec::new(4, 2), w.front[0]));
            layers.extend(conv_relu(ConvSpec::new(3, 2), w.front[1]));
            let h = b.chain(&x, layers);
            let side3 = chain_side(s, &[(2, 2), (4, 2), (3, 2)]);
            let flat = side3 * side3 * w.front[1];
            let h = b.layer(&h, LayerSpec::reshape(&[flat]));
            let h = dense_stack(&mut b, &h, &[flat, 50]);
            l4(&mut b, &h, 50)
        }
    };
    let out = trunk(&mut b, &features, side, &w);
    b.finish(&out)
}

fn chain_side(mut side: usize, stages: &[(usize, usize)]) -> usize {
    for &(k, s) in stages {
        side = ConvSpec::new(k, s)
            .conv_out(side)
            .expect("front-end chain valid for supported resolutions");
    }
    side
}
