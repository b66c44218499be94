mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Normal};
use woe_core::{
    best_contrast, posterior, regularizer, score_subset, ContrastParams, CovarianceMode, Evidence,
    HypothesisSet,
};

/// Independent enumerator: binary counting over all labels of `v`, scoring
/// each candidate through the public `score_subset`.
fn enumerate_best(
    v: &HypothesisSet,
    c_star: usize,
    e: &Evidence,
    m: &woe_core::GaussianClassModel,
    p: &ContrastParams,
) -> (HypothesisSet, Vec<(HypothesisSet, f64)>) {
    let labels = v.labels();
    let mut all = Vec::new();
    for mask in 1u32..(1 << labels.len()) - 1 {
        let u: Vec<usize> = (0..labels.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| labels[i])
            .collect();
        if !u.contains(&c_star) {
            continue;
        }
        let u = HypothesisSet::new(u).unwrap();
        let s = score_subset(&u, v, e, m, p).unwrap();
        all.push((u, s));
    }
    let mut best = all[0].clone();
    for (u, s) in &all[1..] {
        let key = |u: &HypothesisSet| (u.len(), u.labels().to_vec());
        if *s > best.1 || (*s == best.1 && key(u) < key(&best.0)) {
            best = (u.clone(), *s);
        }
    }
    (best.0, all)
}

#[test]
fn three_class_scores_match_closed_form() {
    let means = [0.0, 1.0, 5.0];
    let m = one_d(&means, &[1.0; 3], &[1.0 / 3.0; 3]);
    let x = 0.4;
    let e = Evidence::full(vec![x]).unwrap();
    let v = HypothesisSet::universe(3).unwrap();
    let p = ContrastParams {
        alpha_reg: 0.3,
        ..Default::default()
    };
    let pdf = |c: usize| Normal::new(means[c], 1.0).unwrap().pdf(x);
    // Equal priors: the set likelihood is the plain average of class pdfs.
    let set_lik = |s: &HypothesisSet| s.iter().map(pdf).sum::<f64>() / s.len() as f64;
    let post = posterior(&m, &e).unwrap();
    let c_star = (0..3).max_by(|&a, &b| post[a].total_cmp(&post[b])).unwrap();
    assert_eq!(c_star, 0);
    for u in [h(&[0]), h(&[0, 1]), h(&[0, 2])] {
        let rest = v.difference(&u).unwrap();
        let d = u.len() as f64 - 1.5;
        let oracle = (set_lik(&u) / set_lik(&rest)).ln() - 0.3 * d * d;
        let got = score_subset(&u, &v, &e, &m, &p).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{u}: {got} vs {oracle}");
    }
}

#[test]
fn complementary_scores_are_antisymmetric() {
    let m = one_d(
        &[0.0, 1.0, 5.0, 2.0],
        &[1.0, 0.5, 2.0, 1.0],
        &[0.1, 0.2, 0.3, 0.4],
    );
    let e = Evidence::full(vec![1.3]).unwrap();
    let v = HypothesisSet::universe(4).unwrap();
    let p = ContrastParams {
        alpha_reg: 0.0,
        ..Default::default()
    };
    let u = h(&[0, 3]);
    let rest = v.difference(&u).unwrap();
    let a = score_subset(&u, &v, &e, &m, &p).unwrap();
    let b = score_subset(&rest, &v, &e, &m, &p).unwrap();
    assert_eq!(a, -b);
}

#[test]
fn six_class_exhaustive_equals_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for _ in 0..20 {
        let m = random_model(6, 3, CovarianceMode::Full, &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let v = HypothesisSet::universe(6).unwrap();
        let p = ContrastParams {
            alpha_reg: rng.random_range(0.0..1.0),
            ..Default::default()
        };
        let c_star = rng.random_range(0..6);
        let (oracle, all) = enumerate_best(&v, c_star, &e, &m, &p);
        assert_eq!(all.len(), 31);
        assert_eq!(best_contrast(&v, c_star, &e, &m, &p).unwrap(), oracle);
    }
}

#[test]
fn well_separated_far_class_is_ruled_out() {
    let m = one_d(&[0.0, 1.0, 10.0], &[1.0; 3], &[1.0 / 3.0; 3]);
    let e = Evidence::full(vec![0.45]).unwrap();
    let v = HypothesisSet::universe(3).unwrap();
    let p = ContrastParams {
        alpha_reg: 0.01,
        ..Default::default()
    };
    let u = best_contrast(&v, 0, &e, &m, &p).unwrap();
    assert!(!u.contains(2));
    assert_eq!(u, enumerate_best(&v, 0, &e, &m, &p).0);
}

#[test]
fn stronger_regularization_moves_towards_even_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..30 {
        let k = rng.random_range(3..8);
        let m = random_model(k, 2, CovarianceMode::Full, &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let v = HypothesisSet::universe(k).unwrap();
        let c_star = rng.random_range(0..k);
        let imbalance = |alpha: f64| {
            let p = ContrastParams {
                alpha_reg: alpha,
                ..Default::default()
            };
            let u = best_contrast(&v, c_star, &e, &m, &p).unwrap();
            (u.len() as f64 - k as f64 / 2.0).abs()
        };
        let mut last = f64::INFINITY;
        for alpha in [0.0, 0.05, 0.2, 1.0, 5.0, 50.0] {
            let d = imbalance(alpha);
            assert!(d <= last, "alpha {alpha}: imbalance rose to {d}");
            last = d;
        }
        // The penalty itself is what is being traded off.
        assert_eq!(regularizer(&h(&[c_star]), &v, 0.0), 0.0);
    }
}

#[test]
fn search_is_deterministic_and_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    for _ in 0..20 {
        let k = rng.random_range(2..9);
        let m = random_model(k, 3, CovarianceMode::Full, &mut rng);
        let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
        let v = HypothesisSet::universe(k).unwrap();
        let c_star = rng.random_range(0..k);
        let p = ContrastParams::default();
        let a = best_contrast(&v, c_star, &e, &m, &p).unwrap();
        let b = best_contrast(&v, c_star, &e, &m, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(c_star) && a.len() < v.len() && a.is_subset(&v));
    }
}

#[test]
fn greedy_fallback_beyond_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let k = 14;
    let m = random_model(k, 2, CovarianceMode::Diagonal, &mut rng);
    let e = Evidence::full(random_point(&m, &mut rng)).unwrap();
    let v = HypothesisSet::universe(k).unwrap();
    let p = ContrastParams::default();
    let u = best_contrast(&v, 3, &e, &m, &p).unwrap();
    assert!(u.contains(3) && u.len() < k);
    // Local optimality: no single addition improves the score.
    let base = score_subset(&u, &v, &e, &m, &p).unwrap();
    for c in v.iter().filter(|&c| !u.contains(c)) {
        let bigger = u.union(&HypothesisSet::singleton(c));
        if bigger.len() < k {
            assert!(score_subset(&bigger, &v, &e, &m, &p).unwrap() <= base);
        }
    }
}
