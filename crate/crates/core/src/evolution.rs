//! Constrained evolutionary search over width configurations.
//!
//! Starting from a baseline, each generation fills the population to `P`
//! with feasible random samples, records the running top-`k`, produces `m`
//! mutants and `m` crossovers of top-`k` parents, merges them and keeps the
//! best `P`. After `T` generations the best `n` are returned.
//!
//! All random draws for a generation happen before its evaluations are
//! dispatched, and results are merged then sorted by [`total_order`], so a
//! parallel evaluator pool reproduces the sequential trajectory exactly.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archspace::{sample_random, ArchConfig, BackboneSkeleton, ScaleFactor, DEFAULT_MAX_RETRIES};
use crate::costmodel::{evaluate_cost, satisfies, HardwareConstraints, RejectionTracker, ResourceCost};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, Fitness};
use crate::runlog::{CandidateRecord, Event, HeaderTag, RunHeader, RunLog, CODE_VERSION};

fn default_population() -> usize {
    50
}
fn default_epochs() -> usize {
    20
}
fn default_probability() -> f64 {
    0.1
}
fn default_times() -> usize {
    25
}
fn default_top_k() -> usize {
    20
}
fn default_top_n() -> usize {
    10
}
fn default_retries() -> usize {
    DEFAULT_MAX_RETRIES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionParams {
    #[serde(default = "default_population")]
    pub population_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Per-layer resampling probability for mutation, and the probability of
    /// taking parent 1's factor in crossover.
    #[serde(default = "default_probability")]
    pub probability: f64,
    #[serde(default = "default_times")]
    pub mutation_times: usize,
    #[serde(default = "default_times")]
    pub crossover_times: usize,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub max_sample_retries: usize,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            population_size: default_population(),
            epochs: default_epochs(),
            probability: default_probability(),
            mutation_times: default_times(),
            crossover_times: default_times(),
            top_k: default_top_k(),
            top_n: default_top_n(),
            seed: 0,
            max_sample_retries: default_retries(),
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("evolution: {m}")));
        if self.population_size == 0 {
            return fail("population_size must be positive".into());
        }
        if self.top_k == 0 || self.top_k > self.population_size {
            return fail(format!("top_k must lie in 1..={}", self.population_size));
        }
        if self.top_n == 0 || self.top_n > self.population_size {
            return fail(format!("top_n must lie in 1..={}", self.population_size));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return fail("probability must lie in [0, 1]".into());
        }
        if self.max_sample_retries == 0 {
            return fail("max_sample_retries must be positive".into());
        }
        Ok(())
    }
}

/// Execution knobs that do not change the result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOptions {
    /// Evaluator threads; 0 or 1 evaluates on the calling thread.
    pub workers: usize,
    /// Record per-evaluation wall time in the log (makes logs differ run to run).
    pub record_wall_time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Random,
    Mutation,
    Crossover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub config: ArchConfig,
    pub cost: ResourceCost,
    pub fitness: Fitness,
    pub origin: Origin,
    pub generation: usize,
}

/// Descending fitness, then ascending FLOPs, ascending params, and finally
/// the canonical string.
pub fn total_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.fitness
        .score()
        .total_cmp(&a.fitness.score())
        .then(a.cost.flops.cmp(&b.cost.flops))
        .then(a.cost.params.cmp(&b.cost.params))
        .then_with(|| a.config.cmp(&b.config))
}

/// Candidates kept sorted by [`total_order`] with unique configurations.
#[derive(Debug, Clone, Default)]
pub struct Population {
    members: Vec<Candidate>,
    keys: HashSet<ArchConfig>,
}

impl Population {
    pub fn new() -> Self {
        Population::default()
    }

    pub fn members(&self) -> &[Candidate] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, config: &ArchConfig) -> bool {
        self.keys.contains(config)
    }

    /// Inserts in sorted position; returns false for a duplicate configuration.
    pub fn insert(&mut self, candidate: Candidate) -> bool {
        if !self.keys.insert(candidate.config.clone()) {
            return false;
        }
        let at = self
            .members
            .partition_point(|m| total_order(m, &candidate) == Ordering::Less);
        self.members.insert(at, candidate);
        true
    }

    pub fn truncate(&mut self, len: usize) {
        for gone in self.members.drain(len.min(self.members.len())..) {
            self.keys.remove(&gone.config);
        }
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.members.first()
    }
}

fn redraw_until_feasible<R, F>(
    skeleton: &BackboneSkeleton,
    constraints: &HardwareConstraints,
    max_retries: usize,
    rng: &mut R,
    mut draw: F,
) -> Result<ArchConfig>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> ArchConfig,
{
    let mut tracker = RejectionTracker::new(constraints);
    for _ in 0..max_retries.max(1) {
        let child = draw(rng);
        if tracker.accept(&evaluate_cost(skeleton, &child)?) {
            return Ok(child);
        }
    }
    Err(tracker.into_error())
}

/// Each layer is redrawn uniformly from all four factors with probability
/// `p` (possibly landing on the parent's value) and kept otherwise. The whole
/// draw repeats until the child is feasible.
pub fn mutate<R: Rng + ?Sized>(
    parent: &ArchConfig,
    p: f64,
    rng: &mut R,
    constraints: &HardwareConstraints,
    skeleton: &BackboneSkeleton,
    max_retries: usize,
) -> Result<ArchConfig> {
    parent.check_against(skeleton)?;
    redraw_until_feasible(skeleton, constraints, max_retries, rng, |rng| {
        ArchConfig::new(
            parent
                .factors()
                .iter()
                .map(|&f| if rng.random_bool(p) { ScaleFactor::sample(rng) } else { f })
                .collect(),
        )
    })
}

/// Each layer takes parent 1's factor with probability `p`, otherwise
/// parent 2's; repeated until the child is feasible.
pub fn crossover<R: Rng + ?Sized>(
    parent1: &ArchConfig,
    parent2: &ArchConfig,
    p: f64,
    rng: &mut R,
    constraints: &HardwareConstraints,
    skeleton: &BackboneSkeleton,
    max_retries: usize,
) -> Result<ArchConfig> {
    parent1.check_against(skeleton)?;
    parent2.check_against(skeleton)?;
    redraw_until_feasible(skeleton, constraints, max_retries, rng, |rng| {
        ArchConfig::new(
            parent1
                .factors()
                .iter()
                .zip(parent2.factors())
                .map(|(&a, &b)| if rng.random_bool(p) { a } else { b })
                .collect(),
        )
    })
}

/// The full-width network when it fits the constraints, else the first
/// feasible random sample drawn from `seed`.
pub fn default_baseline(
    skeleton: &BackboneSkeleton,
    constraints: &HardwareConstraints,
    seed: u64,
    max_retries: usize,
) -> Result<ArchConfig> {
    let full = ArchConfig::max(skeleton);
    if satisfies(&evaluate_cost(skeleton, &full)?, constraints) {
        return Ok(full);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba5e_11e0);
    sample_random(skeleton, constraints, &mut rng, max_retries)
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub top_n: Vec<Candidate>,
    pub log: RunLog,
    /// Evaluator invocations made by the search.
    pub evaluations: usize,
    /// Best fitness in the population after each generation (index 0 is the
    /// initial fill-up).
    pub best_per_generation: Vec<f64>,
}

struct Search<'a, E> {
    skeleton: &'a BackboneSkeleton,
    constraints: &'a HardwareConstraints,
    params: &'a EvolutionParams,
    evaluator: &'a E,
    options: SearchOptions,
    pool: Option<rayon::ThreadPool>,
    log: RunLog,
    evaluations: usize,
}

impl<E: Evaluator> Search<'_, E> {
    fn evaluate_one(&self, config: &ArchConfig) -> Result<(Fitness, u64)> {
        let start = Instant::now();
        let fitness = self.evaluator.evaluate(config).map_err(|e| match e {
            e @ Error::Evaluation { .. } => e,
            other => Error::Evaluation {
                config: config.encode(),
                reason: other.to_string(),
            },
        })?;
        Ok((fitness, start.elapsed().as_millis() as u64))
    }

    /// Costs, evaluates and logs a batch of feasible configurations; the
    /// returned candidates are in input order.
    fn evaluate_batch(&mut self, pending: Vec<(ArchConfig, Origin)>, generation: usize) -> Result<Vec<Candidate>> {
        let results: Vec<Result<(Fitness, u64)>> = match &self.pool {
            Some(pool) => pool.install(|| pending.par_iter().map(|(c, _)| self.evaluate_one(c)).collect()),
            None => pending.iter().map(|(c, _)| self.evaluate_one(c)).collect(),
        };
        self.evaluations += pending.len();
        let mut out = Vec::with_capacity(pending.len());
        for ((config, origin), result) in pending.into_iter().zip(results) {
            let (fitness, ms) = result?;
            let cost = evaluate_cost(self.skeleton, &config)?;
            debug_assert!(satisfies(&cost, self.constraints));
            let candidate = Candidate {
                config,
                cost,
                fitness,
                origin,
                generation,
            };
            let mut record = CandidateRecord::from_candidate(&self.log.header.run_id, Event::Evaluated, None, &candidate);
            if self.options.record_wall_time {
                record.wall_ms = Some(ms);
            }
            self.log.records.push(record);
            out.push(candidate);
        }
        Ok(out)
    }

    /// Draws distinct feasible random configurations until the population
    /// reaches `P`, then evaluates them.
    fn fill(&mut self, population: &mut Population, rng: &mut ChaCha8Rng, generation: usize) -> Result<()> {
        let deficit = self.params.population_size.saturating_sub(population.len());
        let mut pending: Vec<(ArchConfig, Origin)> = Vec::with_capacity(deficit);
        let mut fresh = HashSet::new();
        let mut duplicates = 0usize;
        while pending.len() < deficit {
            let c = sample_random(self.skeleton, self.constraints, rng, self.params.max_sample_retries)?;
            if population.contains(&c) || !fresh.insert(c.clone()) {
                duplicates += 1;
                if duplicates > self.params.max_sample_retries {
                    return Err(Error::PopulationExhausted {
                        found: population.len() + pending.len(),
                        needed: self.params.population_size,
                    });
                }
                continue;
            }
            pending.push((c, Origin::Random));
        }
        for c in self.evaluate_batch(pending, generation)? {
            population.insert(c);
        }
        Ok(())
    }

    /// Logs the leading `len` members; `generation` is the snapshot's
    /// generation, not the members' birth generation.
    fn snapshot(&mut self, population: &Population, event: Event, len: usize, generation: usize) {
        let run_id = self.log.header.run_id.clone();
        for (rank, c) in population.members().iter().take(len).enumerate() {
            let mut record = CandidateRecord::from_candidate(&run_id, event, Some(rank + 1), c);
            record.generation = generation;
            self.log.records.push(record);
        }
    }
}

fn run_id(params: &EvolutionParams, constraints: &HardwareConstraints, skeleton_hash: u64, evaluator: &str, baseline: &str) -> String {
    let material = serde_json::json!({
        "params": params,
        "constraints": constraints,
        "skeleton_hash": format!("{skeleton_hash:016x}"),
        "evaluator": evaluator,
        "baseline": baseline,
    });
    let digest = Sha256::digest(material.to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the evolutionary search and returns the best `n` candidates with a
/// complete run log.
pub fn run_search<E: Evaluator>(
    skeleton: &BackboneSkeleton,
    constraints: &HardwareConstraints,
    params: &EvolutionParams,
    evaluator: &E,
    baseline: &ArchConfig,
    options: SearchOptions,
) -> Result<SearchOutcome> {
    params.validate()?;
    constraints.validate()?;
    skeleton.validate()?;
    baseline.check_against(skeleton)?;
    let base_cost = evaluate_cost(skeleton, baseline)?;
    if !satisfies(&base_cost, constraints) {
        return Err(Error::Config(format!(
            "baseline {baseline} ({base_cost}) violates the hardware constraints"
        )));
    }

    let hash = skeleton.hash64();
    let id = run_id(params, constraints, hash, &evaluator.id(), &baseline.encode());
    let header = RunHeader {
        record: HeaderTag::Header,
        run_id: id,
        seed: params.seed,
        params: params.clone(),
        constraints: *constraints,
        skeleton_hash: format!("{hash:016x}"),
        skeleton: skeleton.clone(),
        evaluator: evaluator.id(),
        code_version: CODE_VERSION.to_string(),
        config: None,
    };
    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| Error::Config(format!("cannot start evaluator pool: {e}")))?,
        )
    } else {
        None
    };
    let mut search = Search {
        skeleton,
        constraints,
        params,
        evaluator,
        options,
        pool,
        log: RunLog {
            header,
            records: Vec::new(),
        },
        evaluations: 0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut population = Population::new();
    for c in search.evaluate_batch(vec![(baseline.clone(), Origin::Seed)], 0)? {
        population.insert(c);
    }
    search.fill(&mut population, &mut rng, 0)?;
    search.snapshot(&population, Event::Member, usize::MAX, 0);
    let mut best_per_generation = vec![population.best().map_or(0.0, |b| b.fitness.score())];

    let mut top_k: Vec<Candidate> = Vec::new();
    for generation in 1..=params.epochs {
        search.fill(&mut population, &mut rng, generation)?;

        // running top-k: best k ever seen
        let mut merged = Population::new();
        for c in top_k.iter().chain(population.members()) {
            merged.insert(c.clone());
        }
        merged.truncate(params.top_k);
        top_k = merged.members().to_vec();

        let mut pending: Vec<(ArchConfig, Origin)> = Vec::new();
        let mut fresh = HashSet::new();
        let mut offer = |c: ArchConfig, origin: Origin, pending: &mut Vec<_>| {
            if !population.contains(&c) && fresh.insert(c.clone()) {
                pending.push((c, origin));
            }
        };
        for _ in 0..params.mutation_times {
            let parent = &top_k[rng.random_range(0..top_k.len())].config;
            let child = mutate(parent, params.probability, &mut rng, constraints, skeleton, params.max_sample_retries)?;
            offer(child, Origin::Mutation, &mut pending);
        }
        for _ in 0..params.crossover_times {
            let (a, b) = if top_k.len() >= 2 {
                let a = rng.random_range(0..top_k.len());
                let mut b = rng.random_range(0..top_k.len() - 1);
                if b >= a {
                    b += 1;
                }
                (a, b)
            } else {
                (0, 0)
            };
            let child = crossover(
                &top_k[a].config,
                &top_k[b].config,
                params.probability,
                &mut rng,
                constraints,
                skeleton,
                params.max_sample_retries,
            )?;
            offer(child, Origin::Crossover, &mut pending);
        }

        for c in search.evaluate_batch(pending, generation)? {
            population.insert(c);
        }
        population.truncate(params.population_size);
        search.snapshot(&population, Event::Member, usize::MAX, generation);
        best_per_generation.push(population.best().map_or(0.0, |b| b.fitness.score()));
    }

    let top_n: Vec<Candidate> = population.members().iter().take(params.top_n).cloned().collect();
    search.snapshot(&population, Event::TopN, params.top_n, params.epochs);
    Ok(SearchOutcome {
        top_n,
        log: search.log,
        evaluations: search.evaluations,
        best_per_generation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{enumerate, LayerDescriptor};
    use crate::evaluator::{Cached, SurrogateEvaluator};

    fn skeleton(layers: usize) -> BackboneSkeleton {
        let mut l: Vec<_> = (0..layers)
            .map(|i| LayerDescriptor::conv3x3(8 + 4 * (i % 3), if i % 3 == 2 { 2 } else { 1 }, true))
            .collect();
        l.push(LayerDescriptor::global_avg_pool());
        l.push(LayerDescriptor::linear_head());
        BackboneSkeleton {
            input_channels: 1,
            input_height: 16,
            input_width: 16,
            num_classes: 4,
            layers: l,
        }
    }

    fn cand(s: &str, fitness: f64, flops: u64, params: u64) -> Candidate {
        Candidate {
            config: s.parse().unwrap(),
            cost: ResourceCost { params, flops },
            fitness: Fitness::new(fitness).unwrap(),
            origin: Origin::Random,
            generation: 0,
        }
    }

    #[test]
    fn total_order_tie_breaks() {
        let a = cand("44", 0.5, 100, 9);
        let b = cand("11", 0.5, 200, 1);
        assert_eq!(total_order(&a, &b), Ordering::Less);
        let c = cand("14", 0.5, 100, 9);
        assert_eq!(total_order(&c, &a), Ordering::Less);
        let d = cand("44", 0.6, 900, 9);
        assert_eq!(total_order(&d, &a), Ordering::Less);
        let e = cand("44", 0.5, 100, 8);
        assert_eq!(total_order(&e, &a), Ordering::Less);
    }

    #[test]
    fn sorting_any_permutation_gives_one_order() {
        let base = vec![
            cand("12", 0.3, 5, 5),
            cand("21", 0.3, 5, 5),
            cand("22", 0.3, 4, 5),
            cand("33", 0.9, 50, 50),
            cand("44", 0.3, 5, 4),
        ];
        let mut expected = base.clone();
        expected.sort_by(total_order);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let mut shuffled = base.clone();
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            shuffled.sort_by(total_order);
            assert_eq!(shuffled, expected);
        }
    }

    #[test]
    fn population_dedups_and_stays_sorted() {
        let mut p = Population::new();
        assert!(p.insert(cand("12", 0.2, 1, 1)));
        assert!(p.insert(cand("33", 0.8, 1, 1)));
        assert!(!p.insert(cand("12", 0.9, 1, 1)));
        assert!(p.insert(cand("44", 0.5, 1, 1)));
        let order: Vec<_> = p.members().iter().map(|c| c.config.encode()).collect();
        assert_eq!(order, ["33", "44", "12"]);
        p.truncate(1);
        assert!(!p.contains(&"12".parse().unwrap()));
        assert!(p.insert(cand("12", 0.2, 1, 1)));
    }

    #[test]
    fn mutation_degenerate_probabilities() {
        let sk = skeleton(6);
        let none = HardwareConstraints::none();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let parent: ArchConfig = "123412".parse().unwrap();
        for _ in 0..200 {
            assert_eq!(mutate(&parent, 0.0, &mut rng, &none, &sk, 10).unwrap(), parent);
        }
    }

    #[test]
    fn crossover_degenerate_cases_and_closure() {
        let sk = skeleton(6);
        let none = HardwareConstraints::none();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: ArchConfig = "123412".parse().unwrap();
        let b: ArchConfig = "441133".parse().unwrap();
        for p in [0.0, 0.1, 0.5, 1.0] {
            assert_eq!(crossover(&a, &a, p, &mut rng, &none, &sk, 10).unwrap(), a);
        }
        for _ in 0..100 {
            assert_eq!(crossover(&a, &b, 1.0, &mut rng, &none, &sk, 10).unwrap(), a);
            assert_eq!(crossover(&a, &b, 0.0, &mut rng, &none, &sk, 10).unwrap(), b);
            let child = crossover(&a, &b, 0.3, &mut rng, &none, &sk, 10).unwrap();
            for ((c, x), y) in child.factors().iter().zip(a.factors()).zip(b.factors()) {
                assert!(c == x || c == y);
            }
        }
    }

    #[test]
    fn offspring_respect_constraints() {
        let sk = skeleton(6);
        let full = evaluate_cost(&sk, &ArchConfig::max(&sk)).unwrap();
        let c = HardwareConstraints {
            max_params: Some(full.params / 2),
            max_flops: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parent = sample_random(&sk, &c, &mut rng, 10_000).unwrap();
        for _ in 0..200 {
            let m = mutate(&parent, 0.5, &mut rng, &c, &sk, 10_000).unwrap();
            assert!(satisfies(&evaluate_cost(&sk, &m).unwrap(), &c));
        }
        // Unreachable bound: every redraw fails.
        let impossible = HardwareConstraints {
            max_params: Some(1),
            max_flops: None,
        };
        assert!(matches!(
            mutate(&parent, 0.5, &mut rng, &impossible, &sk, 50),
            Err(Error::Infeasible { attempts: 50, .. })
        ));
    }

    #[test]
    fn zero_generations_returns_the_filled_initial_population() {
        let sk = skeleton(5);
        let eval = SurrogateEvaluator::new(5, 1);
        let params = EvolutionParams {
            epochs: 0,
            population_size: 12,
            top_k: 4,
            top_n: 3,
            ..EvolutionParams::default()
        };
        let base = ArchConfig::max(&sk);
        let out = run_search(&sk, &HardwareConstraints::none(), &params, &eval, &base, SearchOptions::default()).unwrap();
        assert_eq!(out.evaluations, 12);
        assert_eq!(out.top_n.len(), 3);
        let members: Vec<_> = out.log.records.iter().filter(|r| r.event == Event::Member).collect();
        assert_eq!(members.len(), 12);
        assert!(out.log.records.iter().any(|r| r.origin == Origin::Seed));
        let mut all: Vec<Candidate> = Vec::new();
        for r in out.log.records.iter().filter(|r| r.event == Event::Evaluated) {
            let config: ArchConfig = r.config.parse().unwrap();
            all.push(Candidate {
                fitness: eval.evaluate(&config).unwrap(),
                cost: evaluate_cost(&sk, &config).unwrap(),
                config,
                origin: r.origin,
                generation: r.generation,
            });
        }
        all.sort_by(total_order);
        assert_eq!(out.top_n, all[..3].to_vec());
    }

    #[test]
    fn search_invariants() {
        let sk = skeleton(6);
        let full = evaluate_cost(&sk, &ArchConfig::max(&sk)).unwrap();
        let c = HardwareConstraints {
            max_params: Some(full.params * 2 / 5),
            max_flops: Some(full.flops / 2),
        };
        let eval = Cached::new(SurrogateEvaluator::new(6, 9));
        let params = EvolutionParams {
            population_size: 20,
            epochs: 6,
            mutation_times: 8,
            crossover_times: 8,
            top_k: 6,
            top_n: 5,
            seed: 4,
            ..EvolutionParams::default()
        };
        let base = default_baseline(&sk, &c, 4, 10_000).unwrap();
        let out = run_search(&sk, &c, &params, &eval, &base, SearchOptions::default()).unwrap();

        // feasibility closure
        for r in &out.log.records {
            let cost = evaluate_cost(&sk, &r.config.parse().unwrap()).unwrap();
            assert!(satisfies(&cost, &c));
            assert_eq!((cost.params, cost.flops), (r.params, r.flops));
        }
        // elitism
        assert!(out.best_per_generation.windows(2).all(|w| w[1] >= w[0]));
        // dedup within every generation's snapshot
        let mut per_gen: std::collections::HashMap<usize, HashSet<String>> = Default::default();
        for r in out.log.records.iter().filter(|r| r.event == Event::Member) {
            assert!(per_gen.entry(r.generation).or_default().insert(r.config.clone()));
        }
        assert_eq!(per_gen.len(), params.epochs + 1);
        assert!(per_gen.values().all(|g| g.len() == params.population_size));
        // budget accounting
        let per_generation_limit = params.population_size + params.mutation_times + params.crossover_times;
        assert!(out.evaluations <= 1 + per_generation_limit * (params.epochs + 1));
        let evaluated = out.log.records.iter().filter(|r| r.event == Event::Evaluated).count();
        assert_eq!(evaluated, out.evaluations);
        assert_eq!(eval.misses() as usize, out.evaluations - eval.hits() as usize);
        // no configuration is evaluated twice within a run
        let unique: HashSet<_> = out
            .log
            .records
            .iter()
            .filter(|r| r.event == Event::Evaluated)
            .map(|r| r.config.clone())
            .collect();
        assert!(unique.len() <= evaluated);
    }

    #[test]
    fn search_finds_unconstrained_monotone_optimum() {
        let sk = skeleton(6);
        let eval = SurrogateEvaluator::monotone(6, 2);
        let params = EvolutionParams {
            seed: 1,
            ..EvolutionParams::default()
        };
        let base: ArchConfig = "111111".parse().unwrap();
        let out = run_search(&sk, &HardwareConstraints::none(), &params, &eval, &base, SearchOptions::default()).unwrap();
        assert_eq!(out.top_n[0].config.encode(), "444444");
        let oracle = enumerate(6).max_by(|a, b| eval.score(a).total_cmp(&eval.score(b))).unwrap();
        assert_eq!(out.top_n[0].config, oracle);
    }

    #[test]
    fn infeasible_baseline_is_rejected() {
        let sk = skeleton(4);
        let c = HardwareConstraints {
            max_params: Some(10),
            max_flops: None,
        };
        let eval = SurrogateEvaluator::new(4, 0);
        let err = run_search(&sk, &c, &EvolutionParams::default(), &eval, &ArchConfig::max(&sk), SearchOptions::default());
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(matches!(default_baseline(&sk, &c, 0, 100), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn small_feasible_set_cannot_fill_population() {
        let sk = skeleton(2);
        let eval = SurrogateEvaluator::new(2, 0);
        let params = EvolutionParams {
            population_size: 17,
            top_k: 2,
            top_n: 2,
            max_sample_retries: 500,
            ..EvolutionParams::default()
        };
        let err = run_search(&sk, &HardwareConstraints::none(), &params, &eval, &ArchConfig::max(&sk), SearchOptions::default());
        assert!(matches!(err, Err(Error::PopulationExhausted { found: 16, needed: 17 })));
    }
}
