//! Finite-difference verification of the backward kernels.
//!
//! Values are drawn as f32 and upcast; the layer then runs in f64 so central
//! differences are limited by the step, not by storage precision. The probe
//! loss is `sum(output * R)` for a fixed random `R`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::ConvGeom;
use super::tape::{Op, Tape};
use super::weights::{ConvParams, HeadParams, SupernetWeights};

pub const FD_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckedLayer {
    Conv3x3,
    Conv1x1,
    LinearHead,
    /// ReLU with every input at least 0.1 away from the kink.
    Relu,
}

struct Instance {
    op: Op,
    params: SupernetWeights<f64>,
    input: Vec<f64>,
    probe: Vec<f64>,
}

fn draw(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.random_range(-1.0f32..1.0))).collect()
}

fn empty_head() -> HeadParams<f64> {
    HeadParams {
        features: 0,
        classes: 0,
        weight: vec![],
        bias: vec![],
    }
}

/// A conv whose stored kernel is wider than the slice it uses, so the check
/// also covers sliced indexing.
fn conv_instance(rng: &mut ChaCha8Rng, kernel: usize, stride: usize) -> Instance {
    let (batch, cin, cout, h, w) = (2, 3, 3, 5, 5);
    let (stored_out, stored_in) = (cout + 1, cin + 2);
    let geom = ConvGeom {
        batch,
        in_channels: cin,
        out_channels: cout,
        kernel,
        stride,
        in_h: h,
        in_w: w,
        out_h: h.div_ceil(stride),
        out_w: w.div_ceil(stride),
        weight_in_stride: stored_in,
    };
    let params = SupernetWeights {
        skeleton_hash: 0,
        convs: vec![ConvParams {
            out_channels: stored_out,
            in_channels: stored_in,
            kernel,
            weight: draw(rng, stored_out * stored_in * kernel * kernel),
            bias: draw(rng, stored_out),
        }],
        head: empty_head(),
    };
    Instance {
        op: Op::Conv { layer: 0, geom },
        params,
        input: draw(rng, geom.input_len()),
        probe: draw(rng, geom.output_len()),
    }
}

fn instance(layer: CheckedLayer, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match layer {
        CheckedLayer::Conv3x3 => conv_instance(&mut rng, 3, 1),
        CheckedLayer::Conv1x1 => conv_instance(&mut rng, 1, 2),
        CheckedLayer::LinearHead => {
            let (batch, features, stored, classes) = (2, 5, 7, 3);
            let params = SupernetWeights {
                skeleton_hash: 0,
                convs: vec![],
                head: HeadParams {
                    features: stored,
                    classes,
                    weight: draw(&mut rng, stored * classes),
                    bias: draw(&mut rng, classes),
                },
            };
            Instance {
                op: Op::Linear { batch, features, classes },
                params,
                input: draw(&mut rng, batch * features),
                probe: draw(&mut rng, batch * classes),
            }
        }
        CheckedLayer::Relu => {
            let n = 2 * 3 * 4 * 4;
            let input = (0..n)
                .map(|_| {
                    let mag = f64::from(rng.random_range(0.1f32..1.0));
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            Instance {
                op: Op::Relu,
                params: SupernetWeights {
                    skeleton_hash: 0,
                    convs: vec![],
                    head: empty_head(),
                },
                input,
                probe: draw(&mut rng, n),
            }
        }
    }
}

fn probe_loss(op: Op, params: &SupernetWeights<f64>, input: &[f64], probe: &[f64]) -> f64 {
    let out = Tape::inference().apply(op, input.to_vec(), params);
    out.iter().zip(probe).map(|(o, r)| o * r).sum()
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter and input of one seeded layer instance.
pub fn gradient_check(layer: CheckedLayer, seed: u64) -> f64 {
    let Instance {
        op,
        mut params,
        mut input,
        probe,
    } = instance(layer, seed);

    let mut tape = Tape::new();
    let _ = tape.apply(op, input.clone(), &params);
    let mut grads = params.zeros_like();
    let dinput = tape
        .backward(probe.clone(), &params, &mut grads, true)
        .expect("input gradient requested");

    let mut worst = 0.0f64;
    for (i, &analytic) in dinput.iter().enumerate() {
        let orig = input[i];
        input[i] = orig + FD_STEP;
        let up = probe_loss(op, &params, &input, &probe);
        input[i] = orig - FD_STEP;
        let down = probe_loss(op, &params, &input, &probe);
        input[i] = orig;
        worst = worst.max(relative_error(analytic, (up - down) / (2.0 * FD_STEP)));
    }

    let analytic: Vec<f64> = grads.buffers().flat_map(|b| b.iter().copied()).collect();
    let mut flat = 0;
    let buffer_count = params.buffers().count();
    for b in 0..buffer_count {
        let len = params.buffers().nth(b).map_or(0, Vec::len);
        for j in 0..len {
            let orig = params.buffers().nth(b).unwrap()[j];
            params.buffers_mut().nth(b).unwrap()[j] = orig + FD_STEP;
            let up = probe_loss(op, &params, &input, &probe);
            params.buffers_mut().nth(b).unwrap()[j] = orig - FD_STEP;
            let down = probe_loss(op, &params, &input, &probe);
            params.buffers_mut().nth(b).unwrap()[j] = orig;
            worst = worst.max(relative_error(analytic[flat], (up - down) / (2.0 * FD_STEP)));
            flat += 1;
        }
    }
    worst
}
