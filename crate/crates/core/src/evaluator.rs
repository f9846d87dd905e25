//! Fitness functions for the search.
//!
//! [`SupernetEvaluator`] scores a candidate by the validation accuracy of its
//! weight-inherited sub-network. [`SurrogateEvaluator`] is a cheap seeded
//! closed-form score whose optimum can be found by enumeration, used to check
//! the search itself. [`Cached`] memoizes any evaluator by canonical string.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archspace::{ArchConfig, BackboneSkeleton};
use crate::datasets::LabeledSet;
use crate::error::{Error, Result};
use crate::supernet::{predict, SupernetWeights};

/// Score in `[0, 1]`; higher is better.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Fitness(f64);

impl Fitness {
    pub fn new(score: f64) -> Option<Fitness> {
        (score.is_finite() && (0.0..=1.0).contains(&score)).then_some(Fitness(score))
    }

    pub fn score(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Fitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

pub trait Evaluator: Send + Sync {
    fn evaluate(&self, config: &ArchConfig) -> Result<Fitness>;

    /// Short identifier recorded in run logs.
    fn id(&self) -> String;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn evaluate(&self, config: &ArchConfig) -> Result<Fitness> {
        (**self).evaluate(config)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&self, config: &ArchConfig) -> Result<Fitness> {
        (**self).evaluate(config)
    }

    fn id(&self) -> String {
        (**self).id()
    }
}

/// Top-1 accuracy of the inherited sub-network on the whole validation set.
pub fn evaluate_supernet(
    weights: &SupernetWeights,
    skeleton: &BackboneSkeleton,
    config: &ArchConfig,
    val: &LabeledSet,
) -> Result<Fitness> {
    if val.is_empty() {
        return Err(Error::Config("validation set is empty".into()));
    }
    let predicted = predict(weights, skeleton, config, &val.images, 256)?;
    let correct = predicted.iter().zip(&val.labels).filter(|(p, l)| p == l).count();
    Ok(Fitness(correct as f64 / val.len() as f64))
}

pub struct SupernetEvaluator<'a> {
    pub weights: &'a SupernetWeights,
    pub skeleton: &'a BackboneSkeleton,
    pub val: &'a LabeledSet,
}

impl<'a> SupernetEvaluator<'a> {
    pub fn new(weights: &'a SupernetWeights, skeleton: &'a BackboneSkeleton, val: &'a LabeledSet) -> Result<Self> {
        weights.check_skeleton(skeleton)?;
        Ok(SupernetEvaluator { weights, skeleton, val })
    }
}

impl Evaluator for SupernetEvaluator<'_> {
    fn evaluate(&self, config: &ArchConfig) -> Result<Fitness> {
        evaluate_supernet(self.weights, self.skeleton, config, self.val).map_err(|e| Error::Evaluation {
            config: config.encode(),
            reason: e.to_string(),
        })
    }

    fn id(&self) -> String {
        format!("supernet:{:016x}", self.weights.skeleton_hash)
    }
}

/// `squash(sum_i w_i f_i + sum_{i<j} u_ij f_i f_j)` over the width factors
/// `f`, with `w` and `u` drawn once from the seed.
///
/// The squash is `0.5 + 0.5 * z / (1 + |z|)`, which uses only IEEE basic
/// operations, so scores are bit-identical on every platform.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEvaluator {
    seed: u64,
    monotone: bool,
    linear: Vec<f64>,
    /// Upper triangle, row-major: `(0,1), (0,2), ..., (1,2), ...`.
    pairwise: Vec<f64>,
}

impl SurrogateEvaluator {
    pub fn new(layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let linear = (0..layers).map(|_| rng.random_range(-0.25..1.0)).collect();
        let scale = 1.0 / (layers.max(1) as f64).sqrt();
        let pairwise = (0..layers * layers.saturating_sub(1) / 2)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        SurrogateEvaluator {
            seed,
            monotone: false,
            linear,
            pairwise,
        }
    }

    /// Positive linear weights and no interactions: larger is always better.
    pub fn monotone(layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SurrogateEvaluator {
            seed,
            monotone: true,
            linear: (0..layers).map(|_| rng.random_range(0.1..1.0)).collect(),
            pairwise: vec![0.0; layers * layers.saturating_sub(1) / 2],
        }
    }

    pub fn layers(&self) -> usize {
        self.linear.len()
    }

    pub fn raw(&self, config: &ArchConfig) -> f64 {
        let f: Vec<f64> = config.factors().iter().map(|x| x.as_f64()).collect();
        let mut z = 0.0;
        for (w, x) in self.linear.iter().zip(&f) {
            z += w * x;
        }
        let mut k = 0;
        for i in 0..f.len() {
            for j in i + 1..f.len() {
                z += self.pairwise[k] * f[i] * f[j];
                k += 1;
            }
        }
        z
    }

    pub fn score(&self, config: &ArchConfig) -> f64 {
        let z = self.raw(config);
        0.5 + 0.5 * z / (1.0 + z.abs())
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, config: &ArchConfig) -> Result<Fitness> {
        if config.len() != self.layers() {
            return Err(Error::Evaluation {
                config: config.encode(),
                reason: format!("surrogate expects {} layers", self.layers()),
            });
        }
        Ok(Fitness(self.score(config)))
    }

    fn id(&self) -> String {
        let kind = if self.monotone { "surrogate-monotone" } else { "surrogate" };
        format!("{kind}:{}", self.seed)
    }
}

/// Memoizes an evaluator by canonical architecture string.
pub struct Cached<E> {
    inner: E,
    memo: Mutex<HashMap<String, Fitness>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<E: Evaluator> Cached<E> {
    pub fn new(inner: E) -> Self {
        Cached {
            inner,
            memo: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Evaluator> Evaluator for Cached<E> {
    fn evaluate(&self, config: &ArchConfig) -> Result<Fitness> {
        let key = config.encode();
        if let Some(&f) = self.memo.lock().expect("cache poisoned").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(f);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        // evaluated outside the lock; a racing duplicate computes the same value
        let f = self.inner.evaluate(config)?;
        self.memo.lock().expect("cache poisoned").insert(key, f);
        Ok(f)
    }

    fn id(&self) -> String {
        self.inner.id()
    }
}
