//! Seeded synthetic classification data.
//!
//! Class `k` of `K` is a sinusoidal stripe texture whose orientation is
//! `k * pi / K` and whose spatial frequency cycles through 2, 3 and 4
//! periods per image. Each sample gets a random phase jitter and uniform
//! additive noise, then pixels are clamped to `[0, 1]`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, Container, LabelBlock, RawTensor};
use crate::error::{Error, Result};
use crate::supernet::Tensor4;

pub const DEFAULT_NOISE: f64 = 0.2;
const VAL_FRACTION: f64 = 0.2;
const PHASE_JITTER: f64 = PI / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub images: Tensor4,
    pub labels: Vec<usize>,
    pub split: Split,
    pub num_classes: usize,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn to_container(&self) -> Container {
        let i = &self.images;
        Container {
            skeleton_hash: 0,
            tensors: vec![RawTensor {
                dims: vec![i.n as u64, i.c as u64, i.h as u64, i.w as u64],
                data: i.data.clone(),
            }],
            labels: Some(LabelBlock {
                split: self.split.tag(),
                labels: self.labels.iter().map(|&l| l as u32).collect(),
            }),
        }
    }

    pub fn from_container(c: Container, num_classes: usize) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("dataset: {m}"));
        let [t] = <[RawTensor; 1]>::try_from(c.tensors).map_err(|_| bad("expected one image tensor"))?;
        let block = c.labels.ok_or_else(|| bad("missing label block"))?;
        if t.dims.len() != 4 {
            return Err(bad("image tensor must be 4-d"));
        }
        let d: Vec<usize> = t.dims.iter().map(|&d| d as usize).collect();
        let images = Tensor4::from_vec(d[0], d[1], d[2], d[3], t.data)?;
        if block.labels.len() != images.n {
            return Err(bad("label count differs from image count"));
        }
        let labels: Vec<usize> = block.labels.iter().map(|&l| l as usize).collect();
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(bad("label out of range"));
        }
        let split = match block.split {
            0 => Split::Train,
            1 => Split::Val,
            s => return Err(bad(&format!("unknown split tag {s}"))),
        };
        Ok(LabeledSet {
            images,
            labels,
            split,
            num_classes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_container())
    }

    pub fn load(path: &Path, num_classes: usize) -> Result<Self> {
        LabeledSet::from_container(container::read_file(path)?, num_classes)
    }
}

fn default_classes() -> usize {
    4
}
fn default_per_class() -> usize {
    100
}
fn default_channels() -> usize {
    1
}
fn default_side() -> usize {
    32
}
fn default_noise() -> f64 {
    DEFAULT_NOISE
}

/// Parameters of the generator. Only the seed has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub seed: u64,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

impl DatasetSpec {
    pub fn new(seed: u64) -> Self {
        DatasetSpec {
            seed,
            num_classes: default_classes(),
            per_class: default_per_class(),
            channels: default_channels(),
            height: default_side(),
            width: default_side(),
            noise: default_noise(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("dataset: {m}")));
        if self.num_classes < 2 {
            return fail("num_classes must be at least 2");
        }
        if self.per_class < 2 {
            return fail("per_class must be at least 2 so both splits see every class");
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return fail("image dimensions must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return fail("noise must lie in [0, 1]");
        }
        Ok(())
    }

    /// Items per class in the validation split.
    pub fn val_per_class(&self) -> usize {
        ((self.per_class as f64 * VAL_FRACTION).round() as usize).clamp(1, self.per_class - 1)
    }
}

/// Noise-free pattern value of class `k` at pixel `(x, y)` in channel `ch`.
fn pattern(spec: &DatasetSpec, k: usize, ch: usize, x: usize, y: usize, phase: f64) -> f64 {
    let angle = PI * k as f64 / spec.num_classes as f64;
    let cycles = 2.0 + (k % 3) as f64;
    let side = spec.height.max(spec.width) as f64;
    let proj = (x as f64 * angle.cos() + y as f64 * angle.sin()) / side;
    0.5 + 0.3 * (2.0 * PI * cycles * proj + phase + ch as f64 * PI / 3.0).sin()
}

pub fn generate(spec: &DatasetSpec) -> Result<(LabeledSet, LabeledSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let item_len = spec.channels * spec.height * spec.width;

    // Draw all samples class-major so the stream does not depend on the split.
    let mut per_class: Vec<Vec<Vec<f32>>> = Vec::with_capacity(spec.num_classes);
    for k in 0..spec.num_classes {
        let mut items = Vec::with_capacity(spec.per_class);
        for _ in 0..spec.per_class {
            let phase = rng.random_range(-PHASE_JITTER..=PHASE_JITTER);
            let mut img = Vec::with_capacity(item_len);
            for ch in 0..spec.channels {
                for y in 0..spec.height {
                    for x in 0..spec.width {
                        let noise = if spec.noise > 0.0 {
                            rng.random_range(-spec.noise..=spec.noise)
                        } else {
                            0.0
                        };
                        let v = (pattern(spec, k, ch, x, y, phase) + noise).clamp(0.0, 1.0);
                        img.push(v as f32);
                    }
                }
            }
            items.push(img);
        }
        per_class.push(items);
    }

    let n_val = spec.val_per_class();
    let n_train = spec.per_class - n_val;
    let build = |range: std::ops::Range<usize>, split: Split| -> Result<LabeledSet> {
        let mut data = Vec::with_capacity(range.len() * spec.num_classes * item_len);
        let mut labels = Vec::with_capacity(range.len() * spec.num_classes);
        // interleave classes
        for i in range {
            for (k, items) in per_class.iter().enumerate() {
                data.extend_from_slice(&items[i]);
                labels.push(k);
            }
        }
        Ok(LabeledSet {
            images: Tensor4::from_vec(labels.len(), spec.channels, spec.height, spec.width, data)?,
            labels,
            split,
            num_classes: spec.num_classes,
        })
    };
    Ok((
        build(0..n_train, Split::Train)?,
        build(n_train..spec.per_class, Split::Val)?,
    ))
}
