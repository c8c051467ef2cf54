//! Trajectory simulation: renewals of linearized walks, reproducibility and
//! the exact law.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use plainwalk::group::{PlainGroup, Word};
use plainwalk::instances;
use plainwalk::linearize::{self, Construction};
use plainwalk::presets;
use plainwalk::simulator::{self, WalkRef};

fn renewal_statistics(construction: Construction) {
    let g = PlainGroup::free(2);
    let w = presets::renewal_walk(&g);
    let lin = match construction {
        Construction::General => linearize::linearize_prefix(&g, &w).unwrap(),
        Construction::Reversible => linearize::linearize_reversible(&g, &w).unwrap(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut counts: HashMap<Word, usize> = HashMap::new();
    let mut taus = Vec::new();
    // first renewals of independent paths are i.i.d. copies of (τ1, X_τ1)
    for _ in 0..20_000 {
        let path = simulator::trajectory(&g, WalkRef::Colored(&lin.kernel, 0), 80, &mut rng).unwrap();
        let t = linearize::extract_renewals(&path, construction)[0];
        *counts.entry(path[t].0.clone()).or_default() += 1;
        taus.push(t as f64);
    }
    let n = taus.len() as f64;
    let mean = taus.iter().sum::<f64>() / n;
    let sd = (taus.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - lin.expected_tau).abs() <= 4.0 * sd / n.sqrt(), "{construction:?}: mean τ1 {mean} vs {}", lin.expected_tau);
    for (word, p) in w.entries() {
        let freq = counts.get(word).copied().unwrap_or(0) as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!((freq - p).abs() <= 5.0 * se, "{construction:?}: {} at {freq} vs {p}", g.format_word(word));
    }
    let outside: usize = counts.iter().filter(|(k, _)| w.prob(k) == 0.0).map(|(_, c)| c).sum();
    assert_eq!(outside, 0);
}

#[test]
fn prefix_renewals_have_the_walk_law() {
    renewal_statistics(Construction::General);
}

#[test]
fn reversible_renewals_have_the_walk_law() {
    renewal_statistics(Construction::Reversible);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let g = PlainGroup::free(2);
    let w = presets::renewal_walk(&g);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulator::empirical_drift(&g, WalkRef::Scalar(&w), 3000, 200, 9).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn exact_law_agrees_with_sampled_frequencies() {
    let g = PlainGroup::free(2);
    let w = presets::entropy_walk(&g);
    let horizon = 4;
    let (law, entropies, states) = simulator::exact_law(&g, WalkRef::Scalar(&w), horizon, 1_000_000).unwrap();
    assert_eq!(entropies.len(), horizon + 1);
    assert_eq!(states[0], 1);
    assert_eq!(entropies[0], 0.0);
    let n = 100_000;
    let mut counts: HashMap<Word, usize> = HashMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..n {
        let path = simulator::trajectory(&g, WalkRef::Scalar(&w), horizon, &mut rng).unwrap();
        *counts.entry(path[horizon].0.clone()).or_default() += 1;
    }
    for (word, c) in &counts {
        let p = law.prob(word, 0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(p > 0.0);
        assert!((*c as f64 / n as f64 - p).abs() <= 5.0 * se + 1e-9, "{}", g.format_word(word));
    }
}

#[test]
fn random_action_entropy_tracks_the_free_walk() {
    let g = PlainGroup::free(2);
    let w = instances::uniform_nearest_neighbor(&g);
    let h = 0.5 * 3f64.ln();
    let s = simulator::random_action_entropy(&g, &w, 1_000_000, 30, h, 2).unwrap();
    let (exact, entropies, _) = simulator::exact_law(&g, WalkRef::Scalar(&w), 6, 1_000_000).unwrap();
    assert!(exact.states() > 0);
    // on a large set the action is nearly injective on short words
    for t in 0..=6 {
        assert!((s.entropy[t] - entropies[t]).abs() <= 0.02, "t={t}: {} vs {}", s.entropy[t], entropies[t]);
    }
    assert!(s.valid_until() < 30);
    assert!(s.entropy.iter().all(|&e| e <= (1e6f64).ln() + 1e-9));
}
