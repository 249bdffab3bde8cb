//! Central finite-difference verification of the analytic gradients, one
//! small randomized network per layer type.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{mae_grad, mae_loss};
use super::network::{Mode, Network};
use super::spec::{LayerKind, LayerSpec, NetworkBuilder, NetworkSpec};
use crate::error::Result;
use crate::tensor::{ConvSpec, Tensor};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const BATCH: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRow {
    pub layer: LayerKind,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

fn probe_spec(kind: LayerKind) -> NetworkSpec {
    let mut b = NetworkBuilder::new();
    let out = match kind {
        LayerKind::Dense => {
            let x = b.input("x", &[5]);
            b.chain(&x, [LayerSpec::dense(5, 4), LayerSpec::dense(4, 3)])
        }
        LayerKind::Conv2D => {
            let x = b.input("x", &[6, 6, 2]);
            b.chain(
                &x,
                [
                    LayerSpec::conv(ConvSpec::new(3, 2).with_padding(1), 3),
                    LayerSpec::conv(ConvSpec::new(2, 1).with_dilation(2), 2),
                ],
            )
        }
        LayerKind::TConv2D => {
            let x = b.input("x", &[3, 3, 2]);
            b.chain(
                &x,
                [
                    LayerSpec::tconv(ConvSpec::new(3, 2), 3),
                    LayerSpec::tconv(ConvSpec::new(2, 1).with_dilation(2).with_padding(1), 2),
                ],
            )
        }
        LayerKind::Reshape => {
            let x = b.input("x", &[12]);
            b.chain(
                &x,
                [
                    LayerSpec::reshape(&[2, 3, 2]),
                    LayerSpec::conv(ConvSpec::new(2, 1), 2),
                    LayerSpec::reshape(&[4]),
                ],
            )
        }
        LayerKind::Concat => {
            let a = b.input("a", &[2, 2, 1]);
            let c = b.input("c", &[2, 2, 2]);
            let cat = b.concat(&[&a, &c]);
            b.layer(&cat, LayerSpec::conv(ConvSpec::new(1, 1), 2))
        }
        LayerKind::Dropout => {
            let x = b.input("x", &[10]);
            b.chain(
                &x,
                [
                    LayerSpec::dense(10, 6),
                    LayerSpec::Dropout { rate: 0.3 },
                    LayerSpec::dense(6, 4),
                ],
            )
        }
        LayerKind::BatchNorm => {
            let v = b.input("v", &[6]);
            let img = b.input("img", &[3, 3, 2]);
            let h = b.chain(
                &v,
                [
                    LayerSpec::dense(6, 4),
                    LayerSpec::BatchNorm,
                    LayerSpec::dense(4, 18),
                ],
            );
            let h = b.layer(&h, LayerSpec::reshape(&[3, 3, 2]));
            let g = b.layer(&img, LayerSpec::BatchNorm);
            b.concat(&[&h, &g])
        }
        LayerKind::Activation => {
            let x = b.input("x", &[6]);
            b.chain(
                &x,
                [
                    LayerSpec::dense(6, 5),
                    LayerSpec::relu(),
                    LayerSpec::dense(5, 5),
                    LayerSpec::sigmoid(),
                    LayerSpec::linear(),
                ],
            )
        }
    };
    b.finish(&out)
}

/// Max relative error between analytic and central-difference gradients for
/// one layer type and seed. Covers the parameters owned by layers of that type
/// and the gradient w.r.t. the network input.
pub fn check_layer(kind: LayerKind, seed: u64, fault: Option<LayerKind>) -> Result<(f64, usize)> {
    let spec = probe_spec(kind);
    let mut net = Network::build(&spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FFEE);
    for p in net.params_mut() {
        *p = rng.random_range(-1.0..1.0);
    }
    net.inject_backward_fault(fault);
    let d = net.input_size();
    let x = Tensor::from_fn(&[BATCH, d], |_| rng.random_range(-1.0..1.0));
    let out_shape = net.output_shape().to_vec();
    let mut tshape = vec![BATCH];
    tshape.extend_from_slice(&out_shape);
    let target = Tensor::from_fn(&tshape, |_| rng.random_range(-1.0..1.0));
    let mode = Mode::Train { seed };

    let trace = net.forward_trace(&x, mode)?;
    let pred = trace.output(&net);
    let grads = net.backward(&trace, &mae_grad(pred, &target)?, true)?;
    let loss_at =
        |n: &Network, x: &Tensor| -> Result<f64> { mae_loss(&n.forward(x, mode)?, &target) };

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for range in net.param_ranges(kind) {
        for i in range {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + STEP;
            let up = loss_at(&net, &x)?;
            net.params_mut()[i] = orig - STEP;
            let down = loss_at(&net, &x)?;
            net.params_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(grads.params[i], numeric));
            checked += 1;
        }
    }
    let gin = grads.input.expect("input gradient requested");
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += STEP;
        let up = loss_at(&net, &xp)?;
        xp.data_mut()[i] -= 2.0 * STEP;
        let down = loss_at(&net, &xp)?;
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(relative_error(gin[i], numeric));
        checked += 1;
    }
    Ok((worst, checked))
}

/// Run every layer type over `seeds` consecutive seeds starting at `base_seed`.
pub fn run(base_seed: u64, seeds: usize, fault: Option<LayerKind>) -> Result<Vec<GradCheckRow>> {
    LayerKind::ALL
        .iter()
        .map(|&kind| {
            let mut worst: f64 = 0.0;
            let mut checked = 0;
            for s in 0..seeds as u64 {
                let (e, c) = check_layer(kind, base_seed.wrapping_add(s), fault)?;
                worst = worst.max(e);
                checked += c;
            }
            Ok(GradCheckRow {
                layer: kind,
                max_rel_error: worst,
                checked,
                passed: worst < TOLERANCE,
            })
        })
        .collect()
}
