//! Self-check of the exact identities on sampled data rows: Bayes
//! decomposition, chain-rule additivity, ordering invariance of the chain
//! sum, and agreement of the contrast search with plain enumeration.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contrast::{best_contrast, score_subset, ContrastParams};
use crate::density::{posterior, DensityBackend};
use crate::error::Result;
use crate::evidence::Evidence;
use crate::hypothesis::HypothesisSet;
use crate::par;
use crate::woe::{bayes_decomposition, woe, woe_chain};

/// Absolute tolerance for the identities (relative to `max(1, |woe|)` for
/// the chain checks).
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub row: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub checked: usize,
    pub failures: Vec<Failure>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub trials: usize,
    pub checks: Vec<CheckResult>,
}

impl ValidationSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

struct Trial {
    row: usize,
    entailed: HypothesisSet,
    contrast: HypothesisSet,
    ordering_a: Vec<Vec<usize>>,
    ordering_b: Vec<Vec<usize>>,
}

struct TrialOutcome {
    bayes: f64,
    additivity: f64,
    ordering: f64,
    contrast: Option<f64>,
}

/// Random disjoint nonempty class sets.
pub fn random_pair<R: Rng>(k: usize, rng: &mut R) -> (HypothesisSet, HypothesisSet) {
    loop {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for c in 0..k {
            match rng.random_range(0..3) {
                0 => a.push(c),
                1 => b.push(c),
                _ => {}
            }
        }
        if let (Ok(a), Ok(b)) = (HypothesisSet::new(a), HypothesisSet::new(b)) {
            return (a, b);
        }
    }
}

/// Random partition of `0..n` into a random number of nonempty groups, in
/// random order.
pub fn random_partition<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let m = rng.random_range(1..=n);
    let mut groups = vec![Vec::new(); m];
    let mut features: Vec<usize> = (0..n).collect();
    features.shuffle(rng);
    // Seed each group with one feature so none is empty.
    for (g, &f) in features.iter().take(m).enumerate() {
        groups[g].push(f);
    }
    for &f in &features[m..] {
        groups[rng.random_range(0..m)].push(f);
    }
    groups.iter_mut().for_each(|g| g.sort_unstable());
    groups
}

/// Recursive enumeration of every `U ⊊ V` holding `c_star`, scored through
/// [`score_subset`]; ties go to smaller `|U|`, then smaller label list.
pub fn brute_force_contrast<M: DensityBackend + ?Sized>(
    v: &HypothesisSet,
    c_star: usize,
    evidence: &Evidence,
    model: &M,
    params: &ContrastParams,
) -> Result<HypothesisSet> {
    fn walk(others: &[usize], chosen: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        match others.split_first() {
            None => out.push(chosen.clone()),
            Some((&first, rest)) => {
                walk(rest, chosen, out);
                chosen.push(first);
                walk(rest, chosen, out);
                chosen.pop();
            }
        }
    }
    let others: Vec<usize> = v.iter().filter(|&c| c != c_star).collect();
    let mut subsets = Vec::new();
    walk(&others, &mut vec![c_star], &mut subsets);
    let mut best: Option<(f64, HypothesisSet)> = None;
    for labels in subsets {
        if labels.len() == v.len() {
            continue;
        }
        let u = HypothesisSet::new(labels)?;
        let s = score_subset(&u, v, evidence, model, params)?;
        let better = match &best {
            None => true,
            Some((bs, bu)) => {
                s > *bs
                    || (s == *bs
                        && (u.len() < bu.len()
                            || (u.len() == bu.len() && u.labels() < bu.labels())))
            }
        };
        if better {
            best = Some((s, u));
        }
    }
    Ok(best.expect("|V| >= 2 leaves at least one candidate").1)
}

fn relative(dev: f64, scale: f64) -> f64 {
    dev / scale.abs().max(1.0)
}

/// Runs every check on `trials` rows drawn from `rows` (without replacement
/// when possible). Deterministic for a given `seed`.
pub fn run<M: DensityBackend + ?Sized>(
    model: &M,
    rows: &[Vec<f64>],
    trials: usize,
    seed: u64,
    contrast_params: &ContrastParams,
) -> Result<ValidationSummary> {
    let k = model.num_classes();
    let n = model.num_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if rows.is_empty() || trials == 0 {
        Vec::new()
    } else if trials <= rows.len() {
        index::sample(&mut rng, rows.len(), trials).into_vec()
    } else {
        (0..trials)
            .map(|_| rng.random_range(0..rows.len()))
            .collect()
    };
    let plans: Vec<Trial> = picks
        .into_iter()
        .map(|row| {
            let (entailed, contrast) = random_pair(k, &mut rng);
            let ordering_a = random_partition(n, &mut rng);
            let mut ordering_b = ordering_a.clone();
            ordering_b.shuffle(&mut rng);
            Trial {
                row,
                entailed,
                contrast,
                ordering_a,
                ordering_b,
            }
        })
        .collect();

    let universe = HypothesisSet::universe(k)?;
    let outcomes = par::try_map(&plans, |t| -> Result<TrialOutcome> {
        let e = Evidence::full(rows[t.row].clone())?;
        let d = bayes_decomposition(&t.entailed, &t.contrast, &e, model)?;
        let total = woe(&t.entailed, &t.contrast, &e, model)?.0;
        let sum = |ord: &[Vec<usize>]| -> Result<f64> {
            Ok(woe_chain(&t.entailed, &t.contrast, ord, &e, model)?
                .iter()
                .map(|w| w.0)
                .sum())
        };
        let (sa, sb) = (sum(&t.ordering_a)?, sum(&t.ordering_b)?);
        let contrast = if k <= contrast_params.max_exhaustive_classes {
            let post = posterior(model, &e)?;
            let c_star = (0..k)
                .reduce(|a, b| if post[b] > post[a] { b } else { a })
                .expect("k >= 1");
            let fast = best_contrast(&universe, c_star, &e, model, contrast_params)?;
            let slow = brute_force_contrast(&universe, c_star, &e, model, contrast_params)?;
            Some(if fast == slow { 0.0 } else { 1.0 })
        } else {
            None
        };
        Ok(TrialOutcome {
            bayes: d.residual().abs(),
            additivity: relative((sa - total).abs(), total),
            ordering: relative((sa - sb).abs(), total),
            contrast,
        })
    })?;

    let collect =
        |name: &'static str, tolerance: f64, get: &dyn Fn(&TrialOutcome) -> Option<f64>| {
            let mut result = CheckResult {
                name,
                tolerance,
                max_deviation: 0.0,
                checked: 0,
                failures: Vec::new(),
            };
            for (t, o) in plans.iter().zip(&outcomes) {
                if let Some(dev) = get(o) {
                    result.checked += 1;
                    result.max_deviation = result.max_deviation.max(dev);
                    if dev.is_nan() || dev > tolerance {
                        result.failures.push(Failure {
                            row: t.row,
                            deviation: dev,
                        });
                    }
                }
            }
            result
        };
    let checks = if k < 2 {
        Vec::new()
    } else {
        vec![
            collect("bayes_identity", IDENTITY_TOLERANCE, &|o| Some(o.bayes)),
            collect("chain_additivity", IDENTITY_TOLERANCE, &|o| {
                Some(o.additivity)
            }),
            collect("ordering_invariance", IDENTITY_TOLERANCE, &|o| {
                Some(o.ordering)
            }),
            collect("contrast_brute_force", 0.0, &|o| o.contrast),
        ]
    };
    Ok(ValidationSummary {
        trials: plans.len(),
        checks,
    })
}
