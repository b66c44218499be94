//! Invariants of the WoE identities over randomly generated Gaussian models.

mod common;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use woe_core::validate::{random_pair, random_partition};
use woe_core::{
    bayes_decomposition, class_conditional_log_density, information_value, posterior,
    set_conditional_log_likelihood, woe, woe_chain, woe_conditional, CovarianceMode, Evidence,
    HypothesisSet, Quadrature,
};

fn mode(full: bool) -> CovarianceMode {
    if full {
        CovarianceMode::Full
    } else {
        CovarianceMode::Diagonal
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn antisymmetry(seed in any::<u64>(), k in 2usize..6, n in 1usize..6, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(k, n, mode(full), &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let (a, b) = random_pair(k, &mut rng);
        let ab = woe(&a, &b, &e, &m).unwrap().0;
        let ba = woe(&b, &a, &e, &m).unwrap().0;
        prop_assert_eq!(ab, -ba);
    }

    #[test]
    fn chain_additivity_and_ordering(seed in any::<u64>(), k in 2usize..6, n in 1usize..7, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(k, n, mode(full), &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let (a, b) = random_pair(k, &mut rng);
        let total = woe(&a, &b, &e, &m).unwrap().0;
        let ord = random_partition(n, &mut rng);
        let mut other = ord.clone();
        other.shuffle(&mut rng);
        let s1: f64 = woe_chain(&a, &b, &ord, &e, &m).unwrap().iter().map(|w| w.0).sum();
        let s2: f64 = woe_chain(&a, &b, &other, &e, &m).unwrap().iter().map(|w| w.0).sum();
        let scale = total.abs().max(1.0);
        prop_assert!((s1 - total).abs() <= 1e-9 * scale, "{} vs {}", s1, total);
        prop_assert!((s1 - s2).abs() <= 1e-9 * scale);
    }

    #[test]
    fn bayes_identity(seed in any::<u64>(), k in 2usize..6, n in 1usize..6, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(k, n, mode(full), &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let (a, b) = random_pair(k, &mut rng);
        let d = bayes_decomposition(&a, &b, &e, &m).unwrap();
        prop_assert!(d.residual().abs() < 1e-9, "residual {}", d.residual());
    }

    #[test]
    fn sign_semantics(seed in any::<u64>(), k in 2usize..6, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(k, n, CovarianceMode::Full, &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let size = rng.random_range(1..k);
        let mut labels: Vec<usize> = (0..k).collect();
        labels.shuffle(&mut rng);
        let a = HypothesisSet::new(labels[..size].iter().copied()).unwrap();
        let rest = HypothesisSet::universe(k).unwrap().difference(&a).unwrap();
        let w = woe(&a, &rest, &e, &m).unwrap().0;
        let post = posterior(&m, &e).unwrap();
        let p_post: f64 = a.iter().map(|c| post[c]).sum();
        let p_prior: f64 = a.iter().map(|c| m.prior(c)).sum();
        prop_assume!(w.abs() > 1e-9);
        prop_assert_eq!(w > 0.0, p_post > p_prior);
    }

    #[test]
    fn naive_bayes_collapse(seed in any::<u64>(), k in 2usize..6, n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(k, n, CovarianceMode::Diagonal, &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let ord = random_partition(n, &mut rng);
        let (a, b) = (HypothesisSet::singleton(0), HypothesisSet::singleton(1));
        let mut prefix = Vec::new();
        for g in &ord {
            let cond = woe_conditional(&a, &b, g, &prefix, &e, &m).unwrap();
            let marg = woe_conditional(&a, &b, g, &[], &e, &m).unwrap();
            prop_assert_eq!(cond, marg);
            prefix.extend(g.iter().copied());
        }
        // Composite sets: only the sum is order independent.
        let (a, b) = random_pair(k, &mut rng);
        let chain: f64 = woe_chain(&a, &b, &ord, &e, &m).unwrap().iter().map(|w| w.0).sum();
        let total = woe(&a, &b, &e, &m).unwrap().0;
        prop_assert!((chain - total).abs() <= 1e-9 * total.abs().max(1.0));
    }

    #[test]
    fn conditioning_consistency(seed in any::<u64>(), n in 2usize..7, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(2, n, mode(full), &mut rng);
        let x = random_point(&m, &mut rng);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let split = rng.random_range(1..n);
        let (s, t) = idx.split_at(split);
        let gather = |ix: &[usize]| ix.iter().map(|&i| x[i]).collect::<Vec<_>>();
        let st: Vec<usize> = s.iter().chain(t).copied().collect();
        for c in 0..2 {
            let joint = class_conditional_log_density(&m, c, &st, &gather(&st), &[], &[]).unwrap();
            let chained = class_conditional_log_density(&m, c, t, &gather(t), &[], &[]).unwrap()
                + class_conditional_log_density(&m, c, s, &gather(s), t, &gather(t)).unwrap();
            prop_assert!((joint - chained).abs() < 1e-10, "{} vs {}", joint, chained);
            let single = set_conditional_log_likelihood(&m, &HypothesisSet::singleton(c), s, &gather(s), t, &gather(t)).unwrap();
            let direct = class_conditional_log_density(&m, c, s, &gather(s), t, &gather(t)).unwrap();
            prop_assert_eq!(single, direct);
        }
    }

    #[test]
    fn information_value_nonnegative(seed in any::<u64>(), k in 2usize..4, n in 1usize..4, full in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(k, n, mode(full), &mut rng);
        let f = rng.random_range(0..n);
        let iv = information_value(f, 0, 1, &m, &Quadrature::Auto { intervals: 2000 }).unwrap();
        prop_assert!(iv >= 0.0);
        prop_assert_eq!(information_value(f, 1, 1, &m, &Quadrature::Auto { intervals: 2000 }).unwrap(), 0.0);
    }
}
