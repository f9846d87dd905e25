//! Analytic parameter and FLOP counts, and the hardware-constraint predicate.
//!
//! One multiply-accumulate counts as two FLOPs. Biases are counted as
//! parameters; there are no normalization layers.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::archspace::{ArchConfig, BackboneSkeleton, ConvShape, LayerKind};
use crate::error::{ConstraintAxis, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceCost {
    pub params: u64,
    pub flops: u64,
}

impl ResourceCost {
    pub fn kparams(&self) -> f64 {
        self.params as f64 / 1e3
    }

    pub fn mflops(&self) -> f64 {
        self.flops as f64 / 1e6
    }
}

impl Add for ResourceCost {
    type Output = ResourceCost;

    fn add(self, rhs: ResourceCost) -> ResourceCost {
        ResourceCost {
            params: self.params + rhs.params,
            flops: self.flops + rhs.flops,
        }
    }
}

impl AddAssign for ResourceCost {
    fn add_assign(&mut self, rhs: ResourceCost) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for ResourceCost {
    fn sum<I: Iterator<Item = ResourceCost>>(iter: I) -> ResourceCost {
        iter.fold(ResourceCost::default(), Add::add)
    }
}

impl fmt::Display for ResourceCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} KParams, {:.3} MFLOPs", self.kparams(), self.mflops())
    }
}

/// Inclusive upper bounds; `None` leaves that axis unconstrained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConstraints {
    #[serde(default)]
    pub max_params: Option<u64>,
    #[serde(default)]
    pub max_flops: Option<u64>,
}

impl HardwareConstraints {
    pub fn none() -> Self {
        HardwareConstraints::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_params == Some(0) || self.max_flops == Some(0) {
            return Err(Error::Config("constraint bounds must be positive".into()));
        }
        Ok(())
    }
}

pub fn satisfies(cost: &ResourceCost, constraints: &HardwareConstraints) -> bool {
    constraints.max_params.is_none_or(|m| cost.params <= m)
        && constraints.max_flops.is_none_or(|m| cost.flops <= m)
}

/// Cost of one conv layer (conv + bias; ReLU is free).
pub fn conv_cost(shape: &ConvShape) -> ResourceCost {
    let k2 = (shape.kernel * shape.kernel) as u64;
    let (cin, cout) = (shape.in_channels as u64, shape.out_channels as u64);
    let spatial = (shape.out_height * shape.out_width) as u64;
    ResourceCost {
        params: k2 * cin * cout + cout,
        flops: 2 * k2 * cin * cout * spatial,
    }
}

/// Per-layer costs in skeleton order (one entry per layer, pooling included).
pub fn layer_costs(skeleton: &BackboneSkeleton, config: &ArchConfig) -> Result<Vec<ResourceCost>> {
    let shapes = skeleton.conv_shapes(config)?;
    let last = shapes
        .last()
        .ok_or_else(|| Error::Config("skeleton has no conv layers".into()))?;
    let features = last.out_channels as u64;
    let pooled_area = (last.out_height * last.out_width) as u64;
    let classes = skeleton.num_classes as u64;

    let mut convs = shapes.iter();
    skeleton
        .layers
        .iter()
        .map(|layer| match layer.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => convs
                .next()
                .map(conv_cost)
                .ok_or_else(|| Error::Config("conv layer count mismatch".into())),
            LayerKind::GlobalAvgPool => Ok(ResourceCost {
                params: 0,
                flops: features * pooled_area,
            }),
            LayerKind::LinearHead => Ok(ResourceCost {
                params: features * classes + classes,
                flops: 2 * features * classes,
            }),
        })
        .collect()
}

pub fn evaluate_cost(skeleton: &BackboneSkeleton, config: &ArchConfig) -> Result<ResourceCost> {
    Ok(layer_costs(skeleton, config)?.into_iter().sum())
}

/// Counts rejections during constrained drawing so an exhausted search can
/// report which bound is to blame.
#[derive(Debug)]
pub(crate) struct RejectionTracker<'a> {
    constraints: &'a HardwareConstraints,
    attempts: usize,
    params_violations: usize,
    flops_violations: usize,
    min_params: u64,
    min_flops: u64,
}

impl<'a> RejectionTracker<'a> {
    pub(crate) fn new(constraints: &'a HardwareConstraints) -> Self {
        RejectionTracker {
            constraints,
            attempts: 0,
            params_violations: 0,
            flops_violations: 0,
            min_params: u64::MAX,
            min_flops: u64::MAX,
        }
    }

    /// Records one draw; returns whether it is feasible.
    pub(crate) fn accept(&mut self, cost: &ResourceCost) -> bool {
        self.attempts += 1;
        self.min_params = self.min_params.min(cost.params);
        self.min_flops = self.min_flops.min(cost.flops);
        let mut ok = true;
        if self.constraints.max_params.is_some_and(|m| cost.params > m) {
            self.params_violations += 1;
            ok = false;
        }
        if self.constraints.max_flops.is_some_and(|m| cost.flops > m) {
            self.flops_violations += 1;
            ok = false;
        }
        ok
    }

    /// The axis violated most often wins; params on a tie.
    pub(crate) fn into_error(self) -> Error {
        let flops_worse = self.flops_violations > self.params_violations;
        let (axis, bound, best_seen) = if flops_worse {
            (ConstraintAxis::Flops, self.constraints.max_flops, self.min_flops)
        } else {
            (ConstraintAxis::Params, self.constraints.max_params, self.min_params)
        };
        Error::Infeasible {
            attempts: self.attempts,
            axis,
            bound: bound.unwrap_or(u64::MAX),
            best_seen,
        }
    }
}
