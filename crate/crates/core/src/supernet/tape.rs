//! Reverse-mode tape for chain-structured networks.
//!
//! Each recorded node keeps the input it consumed; `backward` replays the
//! nodes in reverse, accumulating parameter gradients into a buffer with the
//! same (full-width) layout as the shared weights.

use super::kernels::{self, ConvGeom, Scalar};
use super::weights::SupernetWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Conv { layer: usize, geom: ConvGeom },
    Relu,
    GlobalAvgPool { batch: usize, channels: usize, plane: usize },
    Linear { batch: usize, features: usize, classes: usize },
}

#[derive(Debug)]
struct Node<T> {
    op: Op,
    input: Vec<T>,
}

#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    record: bool,
}

impl<T: Scalar> Tape<T> {
    /// A tape that records every node for a later backward pass.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A tape that only evaluates; `backward` is unavailable.
    pub fn inference() -> Self {
        Tape {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply(&mut self, op: Op, input: Vec<T>, params: &SupernetWeights<T>) -> Vec<T> {
        let out = match op {
            Op::Conv { layer, geom } => {
                let p = &params.convs[layer];
                let mut out = vec![T::zero(); geom.output_len()];
                kernels::conv_forward(&geom, &input, &p.weight, &p.bias, &mut out);
                out
            }
            Op::Relu => {
                let mut out = vec![T::zero(); input.len()];
                kernels::relu_forward(&input, &mut out);
                out
            }
            Op::GlobalAvgPool { batch, channels, plane } => {
                let mut out = vec![T::zero(); batch * channels];
                kernels::gap_forward(&input, batch, channels, plane, &mut out);
                out
            }
            Op::Linear { batch, features, classes } => {
                let mut out = vec![T::zero(); batch * classes];
                let h = &params.head;
                kernels::linear_forward(&input, batch, features, classes, &h.weight, &h.bias, &mut out);
                out
            }
        };
        if self.record {
            self.nodes.push(Node { op, input });
        }
        out
    }

    /// Propagates `dout` (gradient of the last node's output) back through
    /// the tape. Parameter gradients are added into `grads`; the gradient
    /// with respect to the first node's input is returned when requested.
    pub fn backward(
        &self,
        mut dout: Vec<T>,
        params: &SupernetWeights<T>,
        grads: &mut SupernetWeights<T>,
        want_input_grad: bool,
    ) -> Option<Vec<T>> {
        assert!(self.record, "backward on an inference tape");
        for (i, node) in self.nodes.iter().enumerate().rev() {
            let need_dx = i > 0 || want_input_grad;
            let mut dx = vec![T::zero(); if need_dx { node.input.len() } else { 0 }];
            match node.op {
                Op::Conv { layer, geom } => {
                    let (p, g) = (&params.convs[layer], &mut grads.convs[layer]);
                    kernels::conv_backward(
                        &geom,
                        &node.input,
                        &p.weight,
                        &dout,
                        &mut g.weight,
                        &mut g.bias,
                        need_dx.then_some(dx.as_mut_slice()),
                    );
                }
                Op::Relu => {
                    if need_dx {
                        kernels::relu_backward(&node.input, &dout, &mut dx);
                    }
                }
                Op::GlobalAvgPool { batch, channels, plane } => {
                    if need_dx {
                        kernels::gap_backward(&dout, batch, channels, plane, &mut dx);
                    }
                }
                Op::Linear { batch, features, classes } => {
                    let mut scratch;
                    let target = if need_dx {
                        dx.as_mut_slice()
                    } else {
                        scratch = vec![T::zero(); node.input.len()];
                        scratch.as_mut_slice()
                    };
                    kernels::linear_backward(
                        &node.input,
                        batch,
                        features,
                        classes,
                        &params.head.weight,
                        &dout,
                        &mut grads.head.weight,
                        &mut grads.head.bias,
                        target,
                    );
                }
            }
            dout = dx;
        }
        want_input_grad.then_some(dout)
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}
