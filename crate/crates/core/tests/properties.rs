//! Property tests over randomly generated groups, walks and kernels.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use plainwalk::boundary;
use plainwalk::drift_entropy;
use plainwalk::group::{FiniteGroup, Generator, PlainGroup};
use plainwalk::instances;
use plainwalk::kernel::check_reversible;
use plainwalk::linalg;
use plainwalk::linearize;

fn plain_group() -> impl Strategy<Value = PlainGroup> {
    (0usize..3, prop::collection::vec(2usize..6, 0..3))
        .prop_filter("nontrivial", |(d, f)| *d + f.len() >= 1)
        .prop_map(|(d, orders)| PlainGroup::new(d, orders.into_iter().map(|n| FiniteGroup::cyclic(n).unwrap()).collect()).unwrap())
}

fn nonamenable_group() -> impl Strategy<Value = PlainGroup> {
    plain_group().prop_filter("nonamenable", |g| g.is_nonamenable())
}

fn letters(g: &PlainGroup, raw: &[usize]) -> Vec<Generator> {
    raw.iter().map(|&i| Generator::from_index(i % g.alphabet_size())).collect()
}

fn group_and_words() -> impl Strategy<Value = (PlainGroup, Vec<usize>, Vec<usize>, Vec<usize>)> {
    let w = || prop::collection::vec(0usize..64, 0..12);
    (plain_group(), w(), w(), w())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reduced_words_respect_next((g, a, _, _) in group_and_words()) {
        let w = g.reduce(&letters(&g, &a));
        for pair in w.letters().windows(2) {
            prop_assert!(g.in_next(pair[0], pair[1]));
        }
        prop_assert_eq!(g.reduce(w.letters()), w.clone());
        prop_assert!(w.len() <= a.len());
    }

    #[test]
    fn multiplication_is_associative((g, a, b, c) in group_and_words()) {
        let (x, y, z) = (g.reduce(&letters(&g, &a)), g.reduce(&letters(&g, &b)), g.reduce(&letters(&g, &c)));
        prop_assert_eq!(g.multiply(&g.multiply(&x, &y), &z), g.multiply(&x, &g.multiply(&y, &z)));
    }

    #[test]
    fn inverses_cancel((g, a, _, _) in group_and_words()) {
        let x = g.reduce(&letters(&g, &a));
        let inv = g.inverse_word(&x);
        prop_assert!(g.multiply(&x, &inv).is_empty());
        prop_assert!(g.multiply(&inv, &x).is_empty());
        prop_assert_eq!(g.inverse_word(&inv), x);
    }

    #[test]
    fn reduction_matches_letter_by_letter_product((g, a, _, _) in group_and_words()) {
        let ls = letters(&g, &a);
        let stepwise = ls.iter().fold(g.reduce(&[]), |acc, &l| g.multiply(&acc, &g.letter_word(l)));
        prop_assert_eq!(stepwise, g.reduce(&ls));
    }

    #[test]
    fn words_of_length_are_reduced_and_distinct(g in plain_group(), n in 0usize..4) {
        let words = g.words_of_length(n);
        let mut sorted = words.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), words.len());
        for w in &words {
            prop_assert_eq!(w.len(), n);
            prop_assert_eq!(&g.reduce(w.letters()), w);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prefix_linearization_reproduces_the_walk(
        seed in 0u64..10_000, max_len in 1usize..4, lazy in any::<bool>(), symmetric in any::<bool>(), g in nonamenable_group()
    ) {
        prop_assume!(g.alphabet_size() <= 6);
        let pe = if lazy { 0.2 } else { 0.0 };
        let w = instances::random_walk(&g, max_len, pe, 0.3, symmetric, &mut ChaCha8Rng::seed_from_u64(seed));
        let lin = linearize::linearize_prefix(&g, &w).unwrap();
        let v = lin.kernel.validate(&g);
        prop_assert!(v.stochastic_residual <= 1e-12);
        prop_assert!(v.irreducible && v.generates);
        let fr = linearize::verify_first_return(&g, &lin, &w).unwrap();
        prop_assert!(fr.law_error <= 1e-12, "law error {}", fr.law_error);
        prop_assert!(fr.tau_error <= 1e-12, "tau error {}", fr.tau_error);
        prop_assert!(lin.kernel.colors() <= linearize::color_counts(&w).colors);
    }

    #[test]
    fn reversible_linearization_is_reversible(seed in 0u64..10_000, max_len in 1usize..4, lazy in any::<bool>(), g in nonamenable_group()) {
        prop_assume!(g.alphabet_size() <= 6);
        let pe = if lazy { 0.2 } else { 0.0 };
        let w = instances::random_walk(&g, max_len, pe, 0.3, true, &mut ChaCha8Rng::seed_from_u64(seed));
        let lin = linearize::linearize_reversible(&g, &w).unwrap();
        prop_assert!(check_reversible(&g, &lin.kernel).unwrap().max_violation <= 1e-12);
        let fr = linearize::verify_first_return(&g, &lin, &w).unwrap();
        prop_assert!(fr.law_error <= 1e-12 && fr.tau_error <= 1e-12);
    }

    #[test]
    fn boundary_solution_is_a_law(seed in 0u64..10_000, r in 1usize..4, g in nonamenable_group()) {
        let k = instances::random_dense_kernel(&g, r, &mut ChaCha8Rng::seed_from_u64(seed));
        let hit = boundary::solve_hitting(&g, &k, 1e-14, 1_000_000).unwrap();
        for q in &hit.q {
            prop_assert!(q.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!(linalg::row_sums(q).iter().all(|&s| s <= 1.0 + 1e-12));
        }
        let sol = boundary::solve_traffic(&g, &k, &hit, 1e-14).unwrap();
        let total = sol.mu.iter().fold(linalg::zeros(r), |acc, m| acc + m);
        prop_assert!(linalg::row_sums(&total).iter().all(|&s| (s - 1.0).abs() <= 1e-10));
        prop_assert!((sol.pi.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(boundary::stationarity_residual(&g, &k, &hit, &sol) <= 1e-10);
        if let Some(d) = sol.cross_check {
            prop_assert!(d <= 1e-8);
        }
        let gamma = drift_entropy::drift_exact(&g, &k, &sol).value;
        prop_assert!(gamma > 0.0 && gamma <= 1.0 + 1e-12);
    }
}
