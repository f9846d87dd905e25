use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernels::softmax_cross_entropy;
use super::tape::Tape;
use super::{build_ops, check_batch, run_ops, SupernetWeights, Tensor4};
use crate::archspace::{ArchConfig, BackboneSkeleton, ScaleFactor};
use crate::datasets::LabeledSet;
use crate::error::{Error, Result};

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.005
}
fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            momentum: default_momentum(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("train.learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("train.momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum: `v = mu * v + g; w -= lr * v`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f32,
    pub velocity: SupernetWeights<f32>,
    grads: SupernetWeights<f32>,
}

impl Sgd {
    pub fn new(weights: &SupernetWeights<f32>, momentum: f64) -> Self {
        Sgd {
            momentum: momentum as f32,
            velocity: weights.zeros_like(),
            grads: weights.zeros_like(),
        }
    }

    pub fn step(&mut self, weights: &mut SupernetWeights<f32>, lr: f32) {
        let mu = self.momentum;
        for ((w, v), g) in weights
            .buffers_mut()
            .zip(self.velocity.buffers_mut())
            .zip(self.grads.buffers())
        {
            for ((w, v), &g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v + g;
                let delta = lr * *v;
                if delta != 0.0 {
                    *w -= delta;
                }
            }
        }
    }

    /// Forward + backward of one sub-network, accumulating into the gradient
    /// buffer. Returns the mean cross-entropy.
    fn accumulate(
        &mut self,
        weights: &SupernetWeights<f32>,
        skeleton: &BackboneSkeleton,
        config: &ArchConfig,
        batch: &Tensor4,
        labels: &[usize],
    ) -> Result<f64> {
        let ops = build_ops(skeleton, config, batch.n)?;
        let mut tape = Tape::new();
        let logits = run_ops(&ops, weights, batch.data.clone(), &mut tape);
        let mut dlogits = vec![0.0f32; logits.len()];
        let loss = softmax_cross_entropy(&logits, labels, skeleton.num_classes, &mut dlogits);
        if !loss.is_finite() || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                config: config.encode(),
                loss,
            });
        }
        tape.backward(dlogits, weights, &mut self.grads, false);
        Ok(loss)
    }
}

/// Configurations and losses of the four sub-networks trained in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub configs: [ArchConfig; 4],
    pub losses: [f64; 4],
}

impl SandwichReport {
    pub fn total(&self) -> f64 {
        self.losses.iter().sum()
    }
}

fn check_labels(batch: &Tensor4, labels: &[usize], classes: usize) -> Result<()> {
    if labels.len() != batch.n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch.n
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Shape(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// One sandwich-rule step: the largest, the smallest and two uniformly drawn
/// sub-networks each contribute a loss; their gradients are summed and a
/// single optimizer step updates the shared weights.
pub fn train_step_sandwich<R: Rng + ?Sized>(
    weights: &mut SupernetWeights<f32>,
    opt: &mut Sgd,
    skeleton: &BackboneSkeleton,
    batch: &Tensor4,
    labels: &[usize],
    rng: &mut R,
    lr: f32,
) -> Result<SandwichReport> {
    check_batch(skeleton, batch)?;
    check_labels(batch, labels, skeleton.num_classes)?;
    let len = skeleton.searchable_count();
    let mut draw = || ArchConfig::new((0..len).map(|_| ScaleFactor::sample(rng)).collect());
    let configs = [ArchConfig::max(skeleton), ArchConfig::min(skeleton), draw(), draw()];

    opt.grads.fill(0.0);
    let mut losses = [0.0; 4];
    for (loss, config) in losses.iter_mut().zip(&configs) {
        *loss = opt.accumulate(weights, skeleton, config, batch, labels)?;
    }
    opt.step(weights, lr);
    Ok(SandwichReport { configs, losses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean over steps of the summed loss of every trained sub-network.
    pub total: f64,
    /// Mean loss of each trained branch (one entry for standalone training,
    /// four for sandwich steps in max, min, random, random order).
    pub branches: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
}

enum Branches<'a> {
    Sandwich,
    Single(&'a ArchConfig),
}

fn train_loop(
    mut weights: SupernetWeights<f32>,
    skeleton: &BackboneSkeleton,
    data: &LabeledSet,
    cfg: &TrainConfig,
    branches: Branches<'_>,
) -> Result<(SupernetWeights<f32>, TrainHistory)> {
    cfg.validate()?;
    weights.check_skeleton(skeleton)?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(&weights, cfg.momentum);
    let lr = cfg.learning_rate as f32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let width = match branches {
        Branches::Sandwich => 4,
        Branches::Single(_) => 1,
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = vec![0.0; width];
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.images.gather(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            match branches {
                Branches::Sandwich => {
                    let report =
                        train_step_sandwich(&mut weights, &mut opt, skeleton, &batch, &labels, &mut rng, lr)?;
                    for (s, l) in sums.iter_mut().zip(report.losses) {
                        *s += l;
                    }
                }
                Branches::Single(config) => {
                    opt.grads.fill(0.0);
                    sums[0] += opt.accumulate(&weights, skeleton, config, &batch, &labels)?;
                    opt.step(&mut weights, lr);
                }
            }
            steps += 1;
        }
        let branches: Vec<f64> = sums.iter().map(|s| s / steps as f64).collect();
        history.epochs.push(EpochLoss {
            epoch: epoch + 1,
            total: branches.iter().sum(),
            branches,
        });
    }
    Ok((weights, history))
}

/// Sandwich-rule training over `cfg.epochs` passes of deterministically
/// shuffled mini-batches.
pub fn train_supernet(
    weights: SupernetWeights<f32>,
    skeleton: &BackboneSkeleton,
    data: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<(SupernetWeights<f32>, TrainHistory)> {
    train_loop(weights, skeleton, data, cfg, Branches::Sandwich)
}

/// Trains one fixed sub-network on its own (used for retraining from scratch
/// on a materialized skeleton).
pub fn train_standalone(
    weights: SupernetWeights<f32>,
    skeleton: &BackboneSkeleton,
    config: &ArchConfig,
    data: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<(SupernetWeights<f32>, TrainHistory)> {
    config.check_against(skeleton)?;
    train_loop(weights, skeleton, data, cfg, Branches::Single(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::LayerDescriptor;
    use crate::datasets::{generate, DatasetSpec};

    fn skeleton() -> BackboneSkeleton {
        BackboneSkeleton {
            input_channels: 1,
            input_height: 8,
            input_width: 8,
            num_classes: 4,
            layers: vec![
                LayerDescriptor::conv3x3(8, 2, true),
                LayerDescriptor::conv3x3(8, 1, true),
                LayerDescriptor::conv3x3(12, 2, true),
                LayerDescriptor::global_avg_pool(),
                LayerDescriptor::linear_head(),
            ],
        }
    }

    fn data() -> LabeledSet {
        generate(&DatasetSpec {
            per_class: 10,
            height: 8,
            width: 8,
            ..DatasetSpec::new(1)
        })
        .unwrap()
        .0
    }

    fn batch_of(set: &LabeledSet, n: usize) -> (Tensor4, Vec<usize>) {
        let idx: Vec<usize> = (0..n).collect();
        (set.images.gather(&idx), set.labels[..n].to_vec())
    }

    #[test]
    fn sandwich_always_includes_extremes() {
        let sk = skeleton();
        let mut w = SupernetWeights::init(&sk, 0);
        let mut opt = Sgd::new(&w, 0.9);
        let set = data();
        let (x, y) = batch_of(&set, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let r = train_step_sandwich(&mut w, &mut opt, &sk, &x, &y, &mut rng, 0.01).unwrap();
            assert_eq!(r.configs[0].encode(), "444");
            assert_eq!(r.configs[1].encode(), "111");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_untouched() {
        let sk = skeleton();
        let mut w = SupernetWeights::init(&sk, 0);
        let before = w.clone();
        let mut opt = Sgd::new(&w, 0.9);
        let set = data();
        let (x, y) = batch_of(&set, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..3 {
            train_step_sandwich(&mut w, &mut opt, &sk, &x, &y, &mut rng, 0.0).unwrap();
        }
        let bits = |w: &SupernetWeights| w.buffers().flat_map(|b| b.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&w), bits(&before));
    }

    #[test]
    fn one_step_reduces_loss_on_the_same_batch() {
        let sk = skeleton();
        let mut w = SupernetWeights::init(&sk, 3);
        let mut opt = Sgd::new(&w, 0.9);
        let set = data();
        let (x, y) = batch_of(&set, 16);
        let first = train_step_sandwich(&mut w, &mut opt, &sk, &x, &y, &mut ChaCha8Rng::seed_from_u64(5), 0.05).unwrap();
        // same rng seed -> same four sub-networks
        let second = train_step_sandwich(&mut w, &mut opt, &sk, &x, &y, &mut ChaCha8Rng::seed_from_u64(5), 0.05).unwrap();
        assert_eq!(first.configs, second.configs);
        assert!(second.total() < first.total(), "{} !< {}", second.total(), first.total());
    }

    #[test]
    fn gradients_stay_inside_touched_slices() {
        // The max sub-network touches every slice, so locality is checked by
        // training the min sub-network alone.
        let sk = skeleton();
        let w0 = SupernetWeights::init(&sk, 7);
        let set = data();
        let min = ArchConfig::min(&sk);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (w1, _) = train_standalone(w0.clone(), &sk, &min, &set, &cfg).unwrap();
        let shapes = sk.conv_shapes(&min).unwrap();
        for (layer, s) in shapes.iter().enumerate() {
            let (a, b) = (&w0.convs[layer], &w1.convs[layer]);
            let k2 = a.kernel * a.kernel;
            for co in 0..a.out_channels {
                for ci in 0..a.in_channels {
                    let inside = co < s.out_channels && ci < s.in_channels;
                    let at = (co * a.in_channels + ci) * k2;
                    let same = a.weight[at..at + k2] == b.weight[at..at + k2];
                    assert!(inside || same, "layer {layer} ({co},{ci}) changed outside slice");
                }
                if co >= s.out_channels {
                    assert_eq!(a.bias[co].to_bits(), b.bias[co].to_bits());
                }
            }
        }
        let f = shapes.last().unwrap().out_channels;
        assert_eq!(w0.head.weight[f * 4..], w1.head.weight[f * 4..]);
        assert_ne!(w0.head.weight[..f * 4], w1.head.weight[..f * 4]);
    }

    #[test]
    fn training_is_deterministic_and_zero_epochs_is_identity() {
        let sk = skeleton();
        let set = data();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 8,
            seed: 11,
            ..TrainConfig::default()
        };
        let w = SupernetWeights::init(&sk, 1);
        let (a, ha) = train_supernet(w.clone(), &sk, &set, &cfg).unwrap();
        let (b, hb) = train_supernet(w.clone(), &sk, &set, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.epochs.len(), 2);
        assert_eq!(ha.epochs[0].branches.len(), 4);

        let (c, hc) = train_supernet(w.clone(), &sk, &set, &TrainConfig { epochs: 0, ..cfg }).unwrap();
        assert_eq!(c, w);
        assert!(hc.epochs.is_empty());
    }

    #[test]
    fn exploding_learning_rate_reports_the_sub_network() {
        let sk = skeleton();
        let set = data();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            learning_rate: 1e30,
            ..TrainConfig::default()
        };
        match train_supernet(SupernetWeights::init(&sk, 1), &sk, &set, &cfg) {
            Err(Error::NonFiniteLoss { config, .. }) => assert_eq!(config.len(), 3),
            other => panic!("expected a non-finite loss, got {other:?}"),
        }
    }
}
