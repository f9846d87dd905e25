//! Channel-width search space.
//!
//! Every searchable conv layer of a [`BackboneSkeleton`] picks one of four
//! width multipliers (0.25, 0.5, 0.75, 1.0). Multipliers are stored as integer
//! quarters so configurations hash and compare exactly; an [`ArchConfig`] is
//! the genome the evolutionary search works on.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costmodel::{evaluate_cost, HardwareConstraints, RejectionTracker};
use crate::error::{Error, Result};

/// Default cap on consecutive rejections in constrained sampling.
pub const DEFAULT_MAX_RETRIES: usize = 10_000;

/// A width multiplier in quarters: 1 = 0.25, 2 = 0.5, 3 = 0.75, 4 = 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScaleFactor(u8);

impl ScaleFactor {
    pub const QUARTER: ScaleFactor = ScaleFactor(1);
    pub const HALF: ScaleFactor = ScaleFactor(2);
    pub const THREE_QUARTERS: ScaleFactor = ScaleFactor(3);
    pub const FULL: ScaleFactor = ScaleFactor(4);

    pub const ALL: [ScaleFactor; 4] = [
        ScaleFactor::QUARTER,
        ScaleFactor::HALF,
        ScaleFactor::THREE_QUARTERS,
        ScaleFactor::FULL,
    ];

    pub fn from_quarters(quarters: u8) -> Option<ScaleFactor> {
        (1..=4).contains(&quarters).then_some(ScaleFactor(quarters))
    }

    pub fn quarters(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 4.0
    }

    /// Scales a base width, rounding half up and never going below one channel.
    pub fn apply(self, base: usize) -> usize {
        ((base * self.0 as usize + 2) / 4).max(1)
    }

    pub(crate) fn sample<R: Rng + ?Sized>(rng: &mut R) -> ScaleFactor {
        ScaleFactor(rng.random_range(1..=4u8))
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

/// One width multiplier per searchable layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArchConfig {
    factors: Box<[ScaleFactor]>,
}

impl ArchConfig {
    pub fn new(factors: Vec<ScaleFactor>) -> Self {
        ArchConfig {
            factors: factors.into_boxed_slice(),
        }
    }

    pub fn uniform(len: usize, factor: ScaleFactor) -> Self {
        ArchConfig::new(vec![factor; len])
    }

    /// The largest sub-network: every layer at full width.
    pub fn max(skeleton: &BackboneSkeleton) -> Self {
        ArchConfig::uniform(skeleton.searchable_count(), ScaleFactor::FULL)
    }

    /// The smallest sub-network: every layer at a quarter width.
    pub fn min(skeleton: &BackboneSkeleton) -> Self {
        ArchConfig::uniform(skeleton.searchable_count(), ScaleFactor::QUARTER)
    }

    pub fn factors(&self) -> &[ScaleFactor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Canonical string: one quarter digit per layer, e.g. `"44443424334"`.
    pub fn encode(&self) -> String {
        self.factors
            .iter()
            .map(|f| char::from(b'0' + f.quarters()))
            .collect()
    }

    /// Parses a canonical string and checks its length against the skeleton.
    pub fn decode(s: &str, skeleton: &BackboneSkeleton) -> Result<Self> {
        let config: ArchConfig = s.parse()?;
        if config.len() != skeleton.searchable_count() {
            return Err(Error::Parse {
                input: s.to_string(),
                reason: format!(
                    "expected {} digits, found {}",
                    skeleton.searchable_count(),
                    config.len()
                ),
            });
        }
        Ok(config)
    }

    pub(crate) fn check_against(&self, skeleton: &BackboneSkeleton) -> Result<()> {
        if self.len() != skeleton.searchable_count() {
            return Err(Error::Config(format!(
                "architecture {} has {} factors but the skeleton has {} searchable layers",
                self.encode(),
                self.len(),
                skeleton.searchable_count()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Parses the quarter-digit grammar without any length check.
impl FromStr for ArchConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let factors = s
            .chars()
            .enumerate()
            .map(|(i, c)| {
                c.to_digit(10)
                    .and_then(|d| ScaleFactor::from_quarters(d as u8))
                    .ok_or_else(|| Error::Parse {
                        input: s.to_string(),
                        reason: format!("invalid quarter digit {c:?} at position {}", i + 1),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ArchConfig::new(factors))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv3x3,
    Conv1x1,
    GlobalAvgPool,
    LinearHead,
}

impl LayerKind {
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv3x3 | LayerKind::Conv1x1)
    }

    pub fn kernel_size(self) -> usize {
        match self {
            LayerKind::Conv3x3 => 3,
            _ => 1,
        }
    }
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDescriptor {
    pub kind: LayerKind,
    /// Output channels at full width. Conv layers only; the head's output
    /// width is the skeleton's class count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_out_channels: Option<usize>,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub searchable: bool,
    #[serde(default)]
    pub is_neck_output: bool,
}

impl LayerDescriptor {
    pub fn conv3x3(base: usize, stride: usize, searchable: bool) -> Self {
        LayerDescriptor {
            kind: LayerKind::Conv3x3,
            base_out_channels: Some(base),
            stride,
            searchable,
            is_neck_output: false,
        }
    }

    pub fn conv1x1(base: usize, stride: usize, searchable: bool) -> Self {
        LayerDescriptor {
            kind: LayerKind::Conv1x1,
            ..LayerDescriptor::conv3x3(base, stride, searchable)
        }
    }

    pub fn global_avg_pool() -> Self {
        LayerDescriptor {
            kind: LayerKind::GlobalAvgPool,
            base_out_channels: None,
            stride: 1,
            searchable: false,
            is_neck_output: false,
        }
    }

    pub fn linear_head() -> Self {
        LayerDescriptor {
            kind: LayerKind::LinearHead,
            ..LayerDescriptor::global_avg_pool()
        }
    }

    pub fn neck_output(mut self) -> Self {
        self.is_neck_output = true;
        self
    }
}

/// Ordered conv backbone followed by global average pooling and a linear head.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSkeleton {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerDescriptor>,
}

/// A conv layer with its widths resolved for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    /// Index into the skeleton's conv layers.
    pub index: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl BackboneSkeleton {
    /// Checks the structural invariants: conv layers first, then exactly one
    /// pooling layer and one head, positive widths and strides in {1, 2}.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("skeleton: {msg}")));
        if self.input_channels == 0 || self.input_height == 0 || self.input_width == 0 {
            return fail("input dimensions must be positive".into());
        }
        if self.num_classes == 0 {
            return fail("num_classes must be positive".into());
        }
        let n = self.layers.len();
        if n < 2
            || self.layers[n - 1].kind != LayerKind::LinearHead
            || self.layers[n - 2].kind != LayerKind::GlobalAvgPool
        {
            return fail("layers must end with global_avg_pool followed by linear_head".into());
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let pos = i + 1;
            if layer.kind.is_conv() {
                if i >= n - 2 {
                    return fail(format!("layer {pos}: conv layer after pooling"));
                }
                match layer.base_out_channels {
                    Some(c) if c > 0 => {}
                    _ => return fail(format!("layer {pos}: conv needs positive base_out_channels")),
                }
                if layer.stride != 1 && layer.stride != 2 {
                    return fail(format!("layer {pos}: stride must be 1 or 2"));
                }
            } else {
                if i < n - 2 {
                    return fail(format!("layer {pos}: {:?} only allowed at the end", layer.kind));
                }
                if layer.searchable {
                    return fail(format!("layer {pos}: {:?} cannot be searchable", layer.kind));
                }
                if layer.base_out_channels.is_some() {
                    return fail(format!("layer {pos}: {:?} takes no base_out_channels", layer.kind));
                }
                if layer.stride != 1 {
                    return fail(format!("layer {pos}: {:?} takes no stride", layer.kind));
                }
            }
        }
        if n == 2 {
            return fail("at least one conv layer is required".into());
        }
        Ok(())
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.layers.iter().filter(|l| l.kind.is_conv())
    }

    pub fn conv_count(&self) -> usize {
        self.conv_layers().count()
    }

    pub fn searchable_count(&self) -> usize {
        self.layers.iter().filter(|l| l.searchable).count()
    }

    /// The searchable layers in configuration order.
    pub fn searchable_layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.layers.iter().filter(|l| l.searchable)
    }

    /// Output channels of every conv layer, in skeleton order.
    pub fn resolve_channels(&self, config: &ArchConfig) -> Result<Vec<usize>> {
        config.check_against(self)?;
        let mut factors = config.factors().iter();
        Ok(self
            .conv_layers()
            .map(|layer| {
                let base = layer.base_out_channels.unwrap_or(1);
                if layer.searchable {
                    // length checked above
                    factors.next().map_or(base, |f| f.apply(base))
                } else {
                    base
                }
            })
            .collect())
    }

    /// Resolved shapes of every conv layer, propagating spatial size with
    /// same padding (`out = ceil(in / stride)`).
    pub fn conv_shapes(&self, config: &ArchConfig) -> Result<Vec<ConvShape>> {
        let channels = self.resolve_channels(config)?;
        let mut shapes = Vec::with_capacity(channels.len());
        let (mut c, mut h, mut w) = (self.input_channels, self.input_height, self.input_width);
        for ((index, layer), &out) in self.conv_layers().enumerate().zip(&channels) {
            let (oh, ow) = (h.div_ceil(layer.stride), w.div_ceil(layer.stride));
            shapes.push(ConvShape {
                index,
                kernel: layer.kind.kernel_size(),
                stride: layer.stride,
                in_channels: c,
                out_channels: out,
                in_height: h,
                in_width: w,
                out_height: oh,
                out_width: ow,
            });
            c = out;
            h = oh;
            w = ow;
        }
        Ok(shapes)
    }

    /// Shapes of the full-width network.
    pub fn max_conv_shapes(&self) -> Vec<ConvShape> {
        self.conv_shapes(&ArchConfig::max(self))
            .expect("max config always matches its skeleton")
    }

    /// A skeleton whose base widths are the resolved widths of `config` and
    /// in which nothing is searchable: the standalone form of a sub-network.
    pub fn materialize(&self, config: &ArchConfig) -> Result<BackboneSkeleton> {
        let channels = self.resolve_channels(config)?;
        let mut widths = channels.into_iter();
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let mut layer = layer.clone();
                if layer.kind.is_conv() {
                    layer.base_out_channels = widths.next();
                }
                layer.searchable = false;
                layer
            })
            .collect();
        Ok(BackboneSkeleton {
            layers,
            ..self.clone()
        })
    }

    /// Stable 64-bit digest of the canonical JSON form of the skeleton.
    pub fn hash64(&self) -> u64 {
        let canonical = serde_json::to_vec(self).expect("skeleton serializes");
        let digest = Sha256::digest(&canonical);
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(bytes)
    }
}

/// Number of distinct configurations: `factor_count ^ searchable layers`.
pub fn space_cardinality(skeleton: &BackboneSkeleton, factor_count: u32) -> BigUint {
    BigUint::from(factor_count).pow(skeleton.searchable_count() as u32)
}

/// Iterates every configuration of `len` layers in lexicographic order of
/// their canonical strings. Exponential; intended for small spaces.
pub fn enumerate(len: usize) -> impl Iterator<Item = ArchConfig> {
    let total = 4usize.checked_pow(len as u32).expect("space too large to enumerate");
    (0..total).map(move |mut idx| {
        let mut factors = vec![ScaleFactor::QUARTER; len];
        for slot in factors.iter_mut().rev() {
            *slot = ScaleFactor((idx % 4) as u8 + 1);
            idx /= 4;
        }
        ArchConfig::new(factors)
    })
}

/// Draws one factor per searchable layer uniformly at random, rejecting draws
/// that violate `constraints`.
pub fn sample_random<R: Rng + ?Sized>(
    skeleton: &BackboneSkeleton,
    constraints: &HardwareConstraints,
    rng: &mut R,
    max_retries: usize,
) -> Result<ArchConfig> {
    let len = skeleton.searchable_count();
    let mut tracker = RejectionTracker::new(constraints);
    for _ in 0..max_retries.max(1) {
        let config = ArchConfig::new((0..len).map(|_| ScaleFactor::sample(rng)).collect());
        let cost = evaluate_cost(skeleton, &config)?;
        if tracker.accept(&cost) {
            return Ok(config);
        }
    }
    Err(tracker.into_error())
}
