use std::time::Instant;

use epmem::oracle::{subset_probability, subset_product_sum};
use epmem::reservoir::{InsertOutcome, MemoryEntry, Reservoir};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stream(weights: &[f64], n: usize, seed: u64) -> Reservoir<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = Reservoir::new(n).unwrap();
    for (t, &w) in weights.iter().enumerate() {
        r.insert(MemoryEntry::new(t, w, t as u64), &mut rng).unwrap();
    }
    r
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn accumulators_match_enumeration(
        n in 1usize..=4,
        weights in prop::collection::vec(0.1f64..1.0, 1..=12),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = Reservoir::new(n).unwrap();
        for (t, &w) in weights.iter().enumerate() {
            r.insert(MemoryEntry::new(t, w, t as u64), &mut rng).unwrap();
            if !r.is_full() {
                continue;
            }
            let scale = 2f64.powi(r.rescale_exponent());
            let mut remaining: Vec<usize> = (0..=t).collect();
            for i in 0..n {
                let omega = subset_product_sum(&weights, &remaining, n - i) * scale;
                let tilde = subset_product_sum(&weights, &remaining, n - i - 1) * scale;
                prop_assert!(rel(r.omega()[i], omega) < 1e-9, "omega[{}] {} vs {}", i, r.omega()[i], omega);
                prop_assert!(rel(r.omega_tilde()[i], tilde) < 1e-9, "tilde[{}]", i);
                let fixed = r.contents()[i].payload;
                remaining.retain(|&c| c != fixed);
            }
            prop_assert_eq!(r.omega()[n], scale);
        }
    }

    #[test]
    fn contents_are_bounded_and_distinct(
        n in 1usize..=6,
        weights in prop::collection::vec(1e-3f64..1.0, 0..40),
        seed in any::<u64>(),
    ) {
        let r = stream(&weights, n, seed);
        prop_assert_eq!(r.contents().len(), weights.len().min(n));
        let mut times: Vec<u64> = r.contents().iter().map(|e| e.time_index).collect();
        times.sort_unstable();
        times.dedup();
        prop_assert_eq!(times.len(), weights.len().min(n));
        for e in r.contents() {
            prop_assert_eq!(e.weight, weights[e.payload]);
        }
        prop_assert!(r.omega().iter().chain(r.omega_tilde()).all(|&x| weights.len() < n || x > 0.0));
    }

    #[test]
    fn swap_probabilities_are_probabilities(
        n in 1usize..=8,
        weights in prop::collection::vec(1e-3f64..1.0, 8..30),
        new_weight in 1e-3f64..1.0,
        seed in any::<u64>(),
    ) {
        let r = stream(&weights, n, seed);
        let p = r.swap_probabilities(new_weight).unwrap();
        prop_assert_eq!(p.len(), n);
        prop_assert!(p.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn same_seed_same_contents(
        n in 1usize..=5,
        weights in prop::collection::vec(1e-3f64..1.0, 0..30),
        seed in any::<u64>(),
    ) {
        let a = stream(&weights, n, seed);
        let b = stream(&weights, n, seed);
        prop_assert_eq!(a.contents(), b.contents());
        prop_assert_eq!(a.omega(), b.omega());
    }

    #[test]
    fn equal_weights_give_flat_swap_schedule(n in 1usize..=5, extra in 0usize..10, seed in any::<u64>()) {
        // With equal weights the new item is kept with probability n/(t+1).
        let t = n + extra;
        let r = stream(&vec![0.5; t], n, seed);
        let p = r.swap_probabilities(0.5).unwrap();
        let kept = 1.0 - p.iter().map(|p| 1.0 - p).product::<f64>();
        prop_assert!((kept - n as f64 / (t + 1) as f64).abs() < 1e-12);
    }
}

#[test]
fn two_slot_example_frequencies() {
    let weights = [1.0, 2.0, 3.0];
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0usize; 3];
    for _ in 0..trials {
        let mut r = Reservoir::new(2).unwrap();
        for (t, &w) in weights.iter().enumerate() {
            r.insert(MemoryEntry::new(t, w, t as u64), &mut rng).unwrap();
        }
        let mut kept: Vec<usize> = r.contents().iter().map(|e| e.payload).collect();
        kept.sort_unstable();
        let k = match kept[..] {
            [1, 2] => 0,
            [0, 2] => 1,
            [0, 1] => 2,
            _ => unreachable!(),
        };
        counts[k] += 1;
    }
    for (k, (subset, expected)) in [([1, 2], 6.0 / 11.0), ([0, 2], 3.0 / 11.0), ([0, 1], 2.0 / 11.0)]
        .iter()
        .enumerate()
    {
        assert!((subset_probability(&weights, subset).unwrap() - expected).abs() < 1e-12);
        let p = counts[k] as f64 / trials as f64;
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!((p - expected).abs() < 4.0 * se, "{subset:?}: {p} vs {expected}");
    }
}

#[test]
fn fuzzed_swap_probabilities_stay_in_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut inserts = 0usize;
    while inserts < 1_000_000 {
        let n = rng.random_range(1..=6);
        let mut r = Reservoir::new(n).unwrap();
        for t in 0..200u64 {
            let w = if rng.random_bool(0.1) {
                rng.random_range(1e-3..2e-3)
            } else {
                rng.random_range(1e-3..1.0)
            };
            if r.is_full() {
                let p = r.swap_probabilities(w).unwrap();
                assert!(p.iter().all(|p| (0.0..=1.0).contains(p)), "{p:?}");
            }
            r.insert(MemoryEntry::new((), w, t), &mut rng).unwrap();
            inserts += 1;
        }
    }
}

#[test]
fn long_stream_with_forced_rescaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut tight = Reservoir::with_rescale_bounds(3, 0.25, 4.0).unwrap();
    let mut plain = Reservoir::new(3).unwrap();
    for t in 0..100_000u64 {
        let w = rng.random_range(0.5..1.0);
        let seed = rng.random::<u64>();
        tight.insert(MemoryEntry::new(t, w, t), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        plain.insert(MemoryEntry::new(t, w, t), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        if t % 1000 == 999 {
            assert!(tight.omega().iter().chain(tight.omega_tilde()).all(|x| x.is_finite() && *x > 0.0));
            assert_eq!(tight.omega()[3], 2f64.powi(tight.rescale_exponent()));
            let a = tight.swap_probabilities(0.75).unwrap();
            let b = plain.swap_probabilities(0.75).unwrap();
            for (a, b) in a.iter().zip(&b) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
    assert_ne!(tight.rescale_exponent(), 0);
    assert!(plain.omega().iter().all(|x| x.is_finite() && *x > 0.0));
}

#[test]
fn rejected_insert_leaves_contents() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut r = Reservoir::new(2).unwrap();
    r.insert(MemoryEntry::new(0, 0.9, 0), &mut rng).unwrap();
    r.insert(MemoryEntry::new(1, 0.9, 1), &mut rng).unwrap();
    for t in 2..500u64 {
        let before = r.contents().to_vec();
        match r.insert(MemoryEntry::new(t, 1e-3, t), &mut rng).unwrap() {
            InsertOutcome::Rejected(e) => {
                assert_eq!(e.time_index, t);
                assert_eq!(r.contents(), &before[..]);
            }
            InsertOutcome::Swapped { first_swap, evicted } => {
                assert!(evicted.time_index < t);
                assert_eq!(r.contents()[first_swap].time_index, t);
            }
            InsertOutcome::Filled { .. } => panic!("reservoir already full"),
        }
    }
}

fn time_inserts(n: usize, inserts: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let weights: Vec<f64> = (0..1024).map(|_| rng.random_range(0.1..1.0)).collect();
    let mut r = Reservoir::new(n).unwrap();
    let start = Instant::now();
    for t in 0..inserts {
        r.insert(MemoryEntry::new(t, weights[t as usize % 1024], t), &mut rng).unwrap();
    }
    std::hint::black_box(r.contents().len());
    start.elapsed().as_secs_f64()
}

#[test]
fn insert_cost_is_linear_in_capacity() {
    let small = time_inserts(2, 1_000_000);
    let large = time_inserts(64, 1_000_000);
    let ratio = large / small;
    assert!(ratio < 40.0, "n=64 took {ratio:.1}x the time of n=2");
}
