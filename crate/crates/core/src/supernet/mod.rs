//! Weight-sharing slimmable conv network.
//!
//! A sub-network of width configuration `c` reads the first `Cout(c)` output
//! channels and first `Cin(c)` input channels of every shared kernel, so
//! evaluating a candidate needs no copies. Gradients of a sliced forward pass
//! land only in the slice it read.

pub mod gradcheck;
pub mod kernels;
pub mod tape;
mod tensor;
mod train;
mod weights;

pub use tensor::{Tensor2, Tensor4};
pub use train::{
    train_standalone, train_step_sandwich, train_supernet, EpochLoss, SandwichReport, Sgd, TrainConfig,
    TrainHistory,
};
pub use weights::{ConvParams, HeadParams, SupernetWeights};

use self::kernels::{ConvGeom, Scalar};
use self::tape::{Op, Tape};
use crate::archspace::{ArchConfig, BackboneSkeleton};
use crate::error::{Error, Result};

/// The op sequence of sub-network `config` for a batch of `batch` inputs.
pub fn build_ops(skeleton: &BackboneSkeleton, config: &ArchConfig, batch: usize) -> Result<Vec<Op>> {
    let shapes = skeleton.conv_shapes(config)?;
    let max_shapes = skeleton.max_conv_shapes();
    let mut ops = Vec::with_capacity(2 * shapes.len() + 2);
    for (s, full) in shapes.iter().zip(&max_shapes) {
        ops.push(Op::Conv {
            layer: s.index,
            geom: ConvGeom {
                batch,
                in_channels: s.in_channels,
                out_channels: s.out_channels,
                kernel: s.kernel,
                stride: s.stride,
                in_h: s.in_height,
                in_w: s.in_width,
                out_h: s.out_height,
                out_w: s.out_width,
                weight_in_stride: full.in_channels,
            },
        });
        ops.push(Op::Relu);
    }
    let last = shapes
        .last()
        .ok_or_else(|| Error::Config("skeleton has no conv layers".into()))?;
    ops.push(Op::GlobalAvgPool {
        batch,
        channels: last.out_channels,
        plane: last.out_height * last.out_width,
    });
    ops.push(Op::Linear {
        batch,
        features: last.out_channels,
        classes: skeleton.num_classes,
    });
    Ok(ops)
}

fn check_batch(skeleton: &BackboneSkeleton, batch: &Tensor4) -> Result<()> {
    let expected = [skeleton.input_channels, skeleton.input_height, skeleton.input_width];
    if [batch.c, batch.h, batch.w] != expected {
        return Err(Error::Shape(format!(
            "batch items are {:?}, skeleton expects {:?}",
            [batch.c, batch.h, batch.w],
            expected
        )));
    }
    Ok(())
}

/// Runs `ops` on `input`, recording into `tape`; returns the logits.
pub fn run_ops<T: Scalar>(ops: &[Op], weights: &SupernetWeights<T>, input: Vec<T>, tape: &mut Tape<T>) -> Vec<T> {
    ops.iter().fold(input, |x, &op| tape.apply(op, x, weights))
}

/// Logits of sub-network `config` on `batch`, read from the shared weights.
pub fn forward(
    weights: &SupernetWeights,
    skeleton: &BackboneSkeleton,
    config: &ArchConfig,
    batch: &Tensor4,
) -> Result<Tensor2> {
    weights.check_skeleton(skeleton)?;
    check_batch(skeleton, batch)?;
    let ops = build_ops(skeleton, config, batch.n)?;
    let logits = run_ops(&ops, weights, batch.data.clone(), &mut Tape::inference());
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss {
            config: config.encode(),
            loss: f64::NAN,
        });
    }
    Ok(Tensor2 {
        rows: batch.n,
        cols: skeleton.num_classes,
        data: logits,
    })
}

/// Predicted class per item, evaluated in chunks to bound memory.
pub fn predict(
    weights: &SupernetWeights,
    skeleton: &BackboneSkeleton,
    config: &ArchConfig,
    images: &Tensor4,
    chunk: usize,
) -> Result<Vec<usize>> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(images.n);
    let mut start = 0;
    while start < images.n {
        let end = (start + chunk).min(images.n);
        let idx: Vec<usize> = (start..end).collect();
        out.extend(forward(weights, skeleton, config, &images.gather(&idx))?.argmax_rows());
        start = end;
    }
    Ok(out)
}
