//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slimnas_core::archspace::enumerate;
use slimnas_core::presets::toy_skeleton;
use slimnas_core::{
    evaluate_cost, satisfies, ArchConfig, BackboneSkeleton, HardwareConstraints, LayerDescriptor, LayerKind,
    ScaleFactor, SurrogateEvaluator,
};

/// Op counts by walking every weight and every multiply-accumulate of the
/// network explicitly. Shares nothing with the cost model except the
/// conventions: one multiply-add is two flops, pooling is one add per input
/// element, padding taps are counted.
pub fn count_ops(sk: &BackboneSkeleton, config: &ArchConfig) -> (u64, u64) {
    let mut factors = config.factors().iter();
    let (mut c, mut h, mut w) = (sk.input_channels, sk.input_height, sk.input_width);
    let (mut params, mut flops) = (0u64, 0u64);
    for layer in &sk.layers {
        match layer.kind {
            LayerKind::Conv3x3 | LayerKind::Conv1x1 => {
                let k = if layer.kind == LayerKind::Conv3x3 { 3 } else { 1 };
                let base = layer.base_out_channels.unwrap();
                let cout = if layer.searchable {
                    let q = factors.next().unwrap().quarters() as f64;
                    ((base as f64 * q / 4.0 + 0.5).floor() as usize).max(1)
                } else {
                    base
                };
                let rows: Vec<usize> = (0..h).step_by(layer.stride).collect();
                let cols: Vec<usize> = (0..w).step_by(layer.stride).collect();
                for _co in 0..cout {
                    for _ci in 0..c {
                        for _tap in 0..k * k {
                            params += 1;
                            for _ in &rows {
                                for _ in &cols {
                                    flops += 2;
                                }
                            }
                        }
                    }
                    params += 1;
                }
                c = cout;
                h = rows.len();
                w = cols.len();
            }
            LayerKind::GlobalAvgPool => {
                for _ in 0..c * h * w {
                    flops += 1;
                }
                h = 1;
                w = 1;
            }
            LayerKind::LinearHead => {
                for _ in 0..c {
                    for _ in 0..sk.num_classes {
                        params += 1;
                        flops += 2;
                    }
                }
                params += sk.num_classes as u64;
            }
        }
    }
    (params, flops)
}

/// A valid skeleton with 1 to 6 conv layers of random kind, width, stride
/// and flags.
pub fn random_skeleton(rng: &mut ChaCha8Rng) -> BackboneSkeleton {
    let convs = rng.random_range(1..=6);
    let mut layers: Vec<LayerDescriptor> = (0..convs)
        .map(|i| {
            let base = rng.random_range(1..=24);
            let stride = rng.random_range(1..=2);
            // at least one searchable layer
            let searchable = i == 0 || rng.random_bool(0.7);
            let l = if rng.random_bool(0.6) {
                LayerDescriptor::conv3x3(base, stride, searchable)
            } else {
                LayerDescriptor::conv1x1(base, stride, searchable)
            };
            if rng.random_bool(0.3) {
                l.neck_output()
            } else {
                l
            }
        })
        .collect();
    layers.push(LayerDescriptor::global_avg_pool());
    layers.push(LayerDescriptor::linear_head());
    BackboneSkeleton {
        input_channels: rng.random_range(1..=3),
        input_height: rng.random_range(3..=17),
        input_width: rng.random_range(3..=17),
        num_classes: rng.random_range(2..=5),
        layers,
    }
}

pub fn random_config(rng: &mut ChaCha8Rng, len: usize) -> ArchConfig {
    ArchConfig::new(
        (0..len)
            .map(|_| ScaleFactor::from_quarters(rng.random_range(1..=4)).unwrap())
            .collect(),
    )
}

/// Every feasible configuration with its score, best first under the
/// search's tie-breaking rules.
pub fn ranked_feasible(
    sk: &BackboneSkeleton,
    constraints: &HardwareConstraints,
    surrogate: &SurrogateEvaluator,
) -> Vec<(ArchConfig, f64)> {
    let mut all: Vec<_> = enumerate(sk.searchable_count())
        .filter_map(|c| {
            let cost = evaluate_cost(sk, &c).unwrap();
            satisfies(&cost, constraints).then(|| (surrogate.score(&c), cost, c))
        })
        .collect();
    all.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then(a.1.flops.cmp(&b.1.flops))
            .then(a.1.params.cmp(&b.1.params))
            .then_with(|| a.2.encode().cmp(&b.2.encode()))
    });
    all.into_iter().map(|(s, _, c)| (c, s)).collect()
}

pub const ORACLE_SURROGATE_SEED: u64 = 0;
pub const ORACLE_PARAMS_QUANTILE: f64 = 0.3;

/// The search-correctness fixture: the 8-layer toy skeleton, a parameter
/// bound at the given quantile of all 65,536 configurations, and the
/// surrogate evaluator.
pub fn search_fixture() -> (BackboneSkeleton, HardwareConstraints, SurrogateEvaluator) {
    let sk = toy_skeleton();
    let mut params: Vec<u64> = enumerate(sk.searchable_count())
        .map(|c| evaluate_cost(&sk, &c).unwrap().params)
        .collect();
    params.sort_unstable();
    let bound = params[(params.len() as f64 * ORACLE_PARAMS_QUANTILE) as usize];
    let constraints = HardwareConstraints {
        max_params: Some(bound),
        max_flops: None,
    };
    let surrogate = SurrogateEvaluator::new(sk.searchable_count(), ORACLE_SURROGATE_SEED);
    (sk, constraints, surrogate)
}

/// Kendall's tau-b; `None` when either ranking is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let a = x[i].partial_cmp(&x[j]).unwrap();
            let b = y[i].partial_cmp(&y[j]).unwrap();
            match (a, b) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tie_x += 1,
                (_, Ordering::Equal) => tie_y += 1,
                _ if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (concordant + discordant + tie_x) as f64;
    let n1 = (concordant + discordant + tie_y) as f64;
    (n0 > 0.0 && n1 > 0.0).then(|| (concordant - discordant) as f64 / (n0 * n1).sqrt())
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
