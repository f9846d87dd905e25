use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::Scalar;
use crate::archspace::{ArchConfig, BackboneSkeleton};
use crate::container::{self, Container, RawTensor};
use crate::error::{Error, Result};

/// Kernel `[out, in, k, k]` and bias `[out]` of one conv layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Linear head: matrix `[features, classes]` and bias `[classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T = f32> {
    pub features: usize,
    pub classes: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Full-width parameter tensors shared by every sub-network. The same type
/// holds gradients and optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct SupernetWeights<T = f32> {
    pub skeleton_hash: u64,
    pub convs: Vec<ConvParams<T>>,
    pub head: HeadParams<T>,
}

impl<T: Scalar> SupernetWeights<T> {
    pub fn zeros(skeleton: &BackboneSkeleton) -> Self {
        let shapes = skeleton.max_conv_shapes();
        let convs = shapes
            .iter()
            .map(|s| ConvParams {
                out_channels: s.out_channels,
                in_channels: s.in_channels,
                kernel: s.kernel,
                weight: vec![T::zero(); s.out_channels * s.in_channels * s.kernel * s.kernel],
                bias: vec![T::zero(); s.out_channels],
            })
            .collect();
        let features = shapes.last().map_or(0, |s| s.out_channels);
        SupernetWeights {
            skeleton_hash: skeleton.hash64(),
            convs,
            head: HeadParams {
                features,
                classes: skeleton.num_classes,
                weight: vec![T::zero(); features * skeleton.num_classes],
                bias: vec![T::zero(); skeleton.num_classes],
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(T::zero());
        z
    }

    pub fn fill(&mut self, value: T) {
        for buf in self.buffers_mut() {
            buf.fill(value);
        }
    }

    pub fn buffers(&self) -> impl Iterator<Item = &Vec<T>> {
        self.convs
            .iter()
            .flat_map(|c| [&c.weight, &c.bias])
            .chain([&self.head.weight, &self.head.bias])
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.convs
            .iter_mut()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .chain([&mut self.head.weight, &mut self.head.bias])
    }

    pub fn param_count(&self) -> usize {
        self.buffers().map(Vec::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> SupernetWeights<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from(*x).unwrap()).collect::<Vec<U>>();
        SupernetWeights {
            skeleton_hash: self.skeleton_hash,
            convs: self
                .convs
                .iter()
                .map(|c| ConvParams {
                    out_channels: c.out_channels,
                    in_channels: c.in_channels,
                    kernel: c.kernel,
                    weight: conv(&c.weight),
                    bias: conv(&c.bias),
                })
                .collect(),
            head: HeadParams {
                features: self.head.features,
                classes: self.head.classes,
                weight: conv(&self.head.weight),
                bias: conv(&self.head.bias),
            },
        }
    }

    pub fn check_skeleton(&self, skeleton: &BackboneSkeleton) -> Result<()> {
        let expected = skeleton.hash64();
        if self.skeleton_hash != expected {
            return Err(Error::SkeletonMismatch {
                expected,
                found: self.skeleton_hash,
            });
        }
        Ok(())
    }

    /// Copies the leading slices used by `config` into standalone tensors for
    /// the materialized skeleton (`skeleton.materialize(config)`).
    pub fn materialize(&self, skeleton: &BackboneSkeleton, config: &ArchConfig) -> Result<Self> {
        self.check_skeleton(skeleton)?;
        let shapes = skeleton.conv_shapes(config)?;
        let standalone = skeleton.materialize(config)?;
        let convs = shapes
            .iter()
            .zip(&self.convs)
            .map(|(s, full)| {
                let k2 = s.kernel * s.kernel;
                let mut weight = Vec::with_capacity(s.out_channels * s.in_channels * k2);
                for co in 0..s.out_channels {
                    let row = co * full.in_channels * k2;
                    weight.extend_from_slice(&full.weight[row..row + s.in_channels * k2]);
                }
                ConvParams {
                    out_channels: s.out_channels,
                    in_channels: s.in_channels,
                    kernel: s.kernel,
                    weight,
                    bias: full.bias[..s.out_channels].to_vec(),
                }
            })
            .collect();
        let features = shapes.last().map_or(0, |s| s.out_channels);
        Ok(SupernetWeights {
            skeleton_hash: standalone.hash64(),
            convs,
            head: HeadParams {
                features,
                classes: self.head.classes,
                weight: self.head.weight[..features * self.head.classes].to_vec(),
                bias: self.head.bias.clone(),
            },
        })
    }
}

impl SupernetWeights<f32> {
    /// Fan-in scaled uniform initialization; biases start at zero.
    pub fn init(skeleton: &BackboneSkeleton, seed: u64) -> Self {
        let mut w = SupernetWeights::zeros(skeleton);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in &mut w.convs {
            let fan_in = (conv.in_channels * conv.kernel * conv.kernel) as f32;
            let bound = (6.0 / fan_in).sqrt();
            for v in &mut conv.weight {
                *v = rng.random_range(-bound..bound);
            }
        }
        let bound = (3.0 / w.head.features as f32).sqrt();
        for v in &mut w.head.weight {
            *v = rng.random_range(-bound..bound);
        }
        w
    }

    pub fn to_container(&self) -> Container {
        let mut tensors = Vec::with_capacity(2 * self.convs.len() + 2);
        for c in &self.convs {
            tensors.push(RawTensor {
                dims: vec![c.out_channels as u64, c.in_channels as u64, c.kernel as u64, c.kernel as u64],
                data: c.weight.clone(),
            });
            tensors.push(RawTensor {
                dims: vec![c.out_channels as u64],
                data: c.bias.clone(),
            });
        }
        tensors.push(RawTensor {
            dims: vec![self.head.features as u64, self.head.classes as u64],
            data: self.head.weight.clone(),
        });
        tensors.push(RawTensor {
            dims: vec![self.head.classes as u64],
            data: self.head.bias.clone(),
        });
        Container {
            skeleton_hash: self.skeleton_hash,
            tensors,
            labels: None,
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        let bad = |msg: &str| Error::Format(format!("weights: {msg}"));
        if c.tensors.len() < 4 || c.tensors.len() % 2 != 0 {
            return Err(bad("unexpected tensor count"));
        }
        let dim = |d: u64| usize::try_from(d).map_err(|_| bad("dimension overflow"));
        let mut tensors = c.tensors.into_iter();
        let mut convs = Vec::new();
        let conv_count = tensors.len() / 2 - 1;
        for _ in 0..conv_count {
            let (w, b) = (tensors.next().unwrap(), tensors.next().unwrap());
            if w.dims.len() != 4 || b.dims.len() != 1 || w.dims[2] != w.dims[3] || b.dims[0] != w.dims[0] {
                return Err(bad("malformed conv tensor pair"));
            }
            convs.push(ConvParams {
                out_channels: dim(w.dims[0])?,
                in_channels: dim(w.dims[1])?,
                kernel: dim(w.dims[2])?,
                weight: w.data,
                bias: b.data,
            });
        }
        let (w, b) = (tensors.next().unwrap(), tensors.next().unwrap());
        if w.dims.len() != 2 || b.dims.len() != 1 || b.dims[0] != w.dims[1] {
            return Err(bad("malformed head tensor pair"));
        }
        Ok(SupernetWeights {
            skeleton_hash: c.skeleton_hash,
            convs,
            head: HeadParams {
                features: dim(w.dims[0])?,
                classes: dim(w.dims[1])?,
                weight: w.data,
                bias: b.data,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_container())
    }

    pub fn load(path: &Path) -> Result<Self> {
        SupernetWeights::from_container(container::read_file(path)?)
    }

    pub fn all_finite(&self) -> bool {
        self.buffers().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::LayerDescriptor;

    fn skeleton() -> BackboneSkeleton {
        BackboneSkeleton {
            input_channels: 2,
            input_height: 6,
            input_width: 6,
            num_classes: 3,
            layers: vec![
                LayerDescriptor::conv3x3(8, 1, true),
                LayerDescriptor::conv1x1(6, 2, false),
                LayerDescriptor::conv3x3(4, 1, true),
                LayerDescriptor::global_avg_pool(),
                LayerDescriptor::linear_head(),
            ],
        }
    }

    #[test]
    fn shapes_follow_full_width_skeleton() {
        let w = SupernetWeights::<f32>::zeros(&skeleton());
        let dims: Vec<_> = w.convs.iter().map(|c| (c.out_channels, c.in_channels, c.kernel)).collect();
        assert_eq!(dims, vec![(8, 2, 3), (6, 8, 1), (4, 6, 3)]);
        assert_eq!((w.head.features, w.head.classes), (4, 3));
    }

    #[test]
    fn save_load_is_bit_exact() {
        let sk = skeleton();
        let mut w = SupernetWeights::init(&sk, 5);
        w.head.bias[1] = f32::from_bits(0x3f80_0001);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.snas");
        w.save(&path).unwrap();
        let back = SupernetWeights::load(&path).unwrap();
        let bits = |w: &SupernetWeights| -> Vec<u32> {
            w.buffers().flat_map(|b| b.iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&w), bits(&back));
        assert_eq!(w, back);
    }

    #[test]
    fn materialize_takes_leading_slices() {
        let sk = skeleton();
        let w = SupernetWeights::init(&sk, 1);
        let config: ArchConfig = "21".parse().unwrap();
        let m = w.materialize(&sk, &config).unwrap();
        // layer 0: 4 of 8 outputs; layer 1: 6 outputs over 4 inputs; layer 2: 1 of 4 outputs
        assert_eq!(m.convs[0].weight.len(), 4 * 2 * 9);
        assert_eq!(m.convs[1].weight.len(), 6 * 4);
        assert_eq!(m.convs[1].weight[4..8], w.convs[1].weight[8..12]);
        assert_eq!(m.head.features, 1);
        assert_eq!(m.head.weight, w.head.weight[..3].to_vec());
        assert_eq!(m.skeleton_hash, sk.materialize(&config).unwrap().hash64());
    }
}
