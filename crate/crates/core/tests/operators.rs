mod support;

use slimnas_core::archspace::ScaleFactor;
use slimnas_core::evolution::{crossover, mutate};
use slimnas_core::{ArchConfig, HardwareConstraints};
use slimnas_core::presets::eleven_layer_skeleton;
use support::{random_config, seeded};

const TRIALS: usize = 40_000;

#[test]
fn mutation_changes_expected_number_of_layers() {
    let sk = eleven_layer_skeleton(16);
    let none = HardwareConstraints::none();
    let mut rng = seeded(11);
    let parent = random_config(&mut rng, 11);
    let mut changed = 0usize;
    for _ in 0..TRIALS {
        let child = mutate(&parent, 0.1, &mut rng, &none, &sk, 1).unwrap();
        changed += child
            .factors()
            .iter()
            .zip(parent.factors())
            .filter(|(a, b)| a != b)
            .count();
    }
    let mean = changed as f64 / TRIALS as f64;
    assert!((mean - 0.825).abs() < 0.05, "mean changed layers {mean}");
}

#[test]
fn full_mutation_is_uniform_per_layer() {
    let sk = eleven_layer_skeleton(16);
    let none = HardwareConstraints::none();
    let mut rng = seeded(12);
    let parent = ArchConfig::max(&sk);
    let mut counts = vec![[0usize; 4]; 11];
    for _ in 0..TRIALS {
        let child = mutate(&parent, 1.0, &mut rng, &none, &sk, 1).unwrap();
        for (slot, f) in counts.iter_mut().zip(child.factors()) {
            slot[f.quarters() as usize - 1] += 1;
        }
    }
    for layer in counts {
        for c in layer {
            let freq = c as f64 / TRIALS as f64;
            assert!((freq - 0.25).abs() < 0.02, "frequency {freq}");
        }
    }
}

#[test]
fn degenerate_probabilities_are_exact() {
    let sk = eleven_layer_skeleton(16);
    let none = HardwareConstraints::none();
    let mut rng = seeded(13);
    for _ in 0..500 {
        let a = random_config(&mut rng, 11);
        let b = random_config(&mut rng, 11);
        assert_eq!(mutate(&a, 0.0, &mut rng, &none, &sk, 1).unwrap(), a);
        assert_eq!(crossover(&a, &b, 1.0, &mut rng, &none, &sk, 1).unwrap(), a);
        assert_eq!(crossover(&a, &b, 0.0, &mut rng, &none, &sk, 1).unwrap(), b);
        assert_eq!(crossover(&a, &a, 0.1, &mut rng, &none, &sk, 1).unwrap(), a);
    }
}

#[test]
fn crossover_genes_come_from_a_parent() {
    let sk = eleven_layer_skeleton(16);
    let none = HardwareConstraints::none();
    let mut rng = seeded(14);
    let mut from_first = 0usize;
    let mut informative = 0usize;
    for _ in 0..5_000 {
        let a = random_config(&mut rng, 11);
        let b = random_config(&mut rng, 11);
        let child = crossover(&a, &b, 0.1, &mut rng, &none, &sk, 1).unwrap();
        for ((c, x), y) in child.factors().iter().zip(a.factors()).zip(b.factors()) {
            assert!(c == x || c == y);
            if x != y {
                informative += 1;
                from_first += usize::from(c == x);
            }
        }
    }
    let share = from_first as f64 / informative as f64;
    assert!((share - 0.1).abs() < 0.01, "parent-1 share {share}");
}

#[test]
fn offspring_respect_constraints() {
    let sk = eleven_layer_skeleton(16);
    let min_params = slimnas_core::evaluate_cost(&sk, &ArchConfig::min(&sk)).unwrap().params;
    let tight = HardwareConstraints {
        max_params: Some(min_params * 3),
        max_flops: None,
    };
    let mut rng = seeded(15);
    let parent = ArchConfig::uniform(11, ScaleFactor::QUARTER);
    let other = ArchConfig::uniform(11, ScaleFactor::HALF);
    for _ in 0..200 {
        let m = mutate(&parent, 0.5, &mut rng, &tight, &sk, 10_000).unwrap();
        let x = crossover(&parent, &other, 0.5, &mut rng, &tight, &sk, 10_000).unwrap();
        for c in [m, x] {
            let cost = slimnas_core::evaluate_cost(&sk, &c).unwrap();
            assert!(slimnas_core::satisfies(&cost, &tight));
        }
    }
}
