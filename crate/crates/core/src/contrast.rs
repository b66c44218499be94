//! Choice of the entailed set at each explanation round: the subset `U` of
//! the remaining classes `V` (with the predicted class in `U`) maximising
//! `woe(U / V∖U : x) − R(U)`.

use std::cmp::Ordering;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::density::{check_dimension, class_log_likelihoods, DensityBackend};
use crate::error::{Result, WoeError};
use crate::evidence::Evidence;
use crate::hypothesis::HypothesisSet;
use crate::par;
use crate::woe::{check_pair, woe_from_classes};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastParams {
    /// Coefficient of the even-split penalty, in nats per squared class.
    pub alpha_reg: f64,
    /// Largest `|V|` searched exhaustively; above it a greedy search is used.
    pub max_exhaustive_classes: usize,
}

impl Default for ContrastParams {
    fn default() -> Self {
        Self {
            alpha_reg: 0.1,
            max_exhaustive_classes: 12,
        }
    }
}

impl ContrastParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_reg >= 0.0 && self.alpha_reg.is_finite()) {
            return Err(WoeError::InvalidParameter(format!(
                "alpha_reg must be a nonnegative finite number, got {}",
                self.alpha_reg
            )));
        }
        if self.max_exhaustive_classes < 2 {
            return Err(WoeError::InvalidParameter(format!(
                "max_exhaustive_classes must be at least 2, got {}",
                self.max_exhaustive_classes
            )));
        }
        Ok(())
    }
}

/// `R(U) = α (|U| − |V|/2)²`.
pub fn regularizer(u: &HypothesisSet, v: &HypothesisSet, alpha_reg: f64) -> f64 {
    let d = u.len() as f64 - 0.5 * v.len() as f64;
    alpha_reg * d * d
}

/// Objective of one candidate: `woe(U / V∖U : e) − R(U)`.
pub fn score_subset<M: DensityBackend + ?Sized>(
    u: &HypothesisSet,
    v: &HypothesisSet,
    evidence: &Evidence,
    model: &M,
    params: &ContrastParams,
) -> Result<f64> {
    if !u.is_subset(v) {
        return Err(WoeError::InvalidHypothesis(format!(
            "{u} is not a subset of {v}"
        )));
    }
    let rest = v.difference(u).ok_or(WoeError::EmptyContrast)?;
    check_pair(model, u, &rest)?;
    let cache = ScoreCache::new(model, evidence)?;
    Ok(cache.score(u, v, &rest, params.alpha_reg))
}

struct ScoreCache<'a, M: ?Sized> {
    model: &'a M,
    class_ll: Vec<f64>,
}

impl<'a, M: DensityBackend + ?Sized> ScoreCache<'a, M> {
    fn new(model: &'a M, evidence: &Evidence) -> Result<Self> {
        check_dimension(model, evidence)?;
        let target = evidence.observed_indices();
        let x = evidence.gather(&target)?;
        Ok(Self {
            model,
            class_ll: class_log_likelihoods(model, &target, &x)?,
        })
    }

    fn score(&self, u: &HypothesisSet, v: &HypothesisSet, rest: &HypothesisSet, alpha: f64) -> f64 {
        woe_from_classes(self.model, u, rest, &self.class_ll).0 - regularizer(u, v, alpha)
    }
}

/// Total order on candidates: higher score, then smaller `|U|`, then the
/// lexicographically smaller label list.
fn rank(a: (f64, &HypothesisSet), b: (f64, &HypothesisSet)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(a.1.len().cmp(&b.1.len()))
        .then_with(|| a.1.labels().cmp(b.1.labels()))
}

fn check_scores(scored: &[(f64, HypothesisSet)]) -> Result<()> {
    match scored.iter().find(|(s, _)| s.is_nan()) {
        Some((_, u)) => Err(WoeError::NumericalConditioning(format!(
            "candidate {u} has an undefined score"
        ))),
        None => Ok(()),
    }
}

fn pick_best(scored: Vec<(f64, HypothesisSet)>) -> Option<(f64, HypothesisSet)> {
    scored
        .into_iter()
        .min_by(|a, b| rank((a.0, &a.1), (b.0, &b.1)))
}

/// The maximising entailed set `U ⊊ V` with `c_star ∈ U`.
///
/// Exhaustive over all `2^{|V|−1} − 1` candidates when
/// `|V| ≤ max_exhaustive_classes`; otherwise grows `U` from `{c_star}` one
/// class at a time while the score improves (approximate).
pub fn best_contrast<M: DensityBackend + ?Sized>(
    v: &HypothesisSet,
    c_star: usize,
    evidence: &Evidence,
    model: &M,
    params: &ContrastParams,
) -> Result<HypothesisSet> {
    params.validate()?;
    v.check_universe(model.num_classes())?;
    if !v.contains(c_star) {
        return Err(WoeError::InvalidHypothesis(format!(
            "predicted class {c_star} is not in {v}"
        )));
    }
    if v.len() < 2 {
        return Err(WoeError::InvalidHypothesis(format!(
            "{v} has fewer than two classes to contrast"
        )));
    }
    let cache = ScoreCache::new(model, evidence)?;
    let others: Vec<usize> = v.iter().filter(|&c| c != c_star).collect();
    let score = |u: &HypothesisSet| {
        let rest = v.difference(u).expect("candidates are proper subsets");
        cache.score(u, v, &rest, params.alpha_reg)
    };

    if v.len() <= params.max_exhaustive_classes {
        let m = others.len();
        let candidates: Vec<HypothesisSet> = (0u64..(1u64 << m) - 1)
            .map(|mask| {
                let picked = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| others[i]);
                HypothesisSet::new(std::iter::once(c_star).chain(picked)).expect("distinct labels")
            })
            .collect();
        let scored: Vec<(f64, HypothesisSet)> = par::map(&candidates, |u| score(u))
            .into_iter()
            .zip(candidates)
            .collect();
        check_scores(&scored)?;
        let (best, u) = pick_best(scored).expect("at least one candidate");
        debug!("exhaustive contrast search over {v}: {u} scores {best}");
        return Ok(u);
    }

    let mut u = HypothesisSet::singleton(c_star);
    let mut current = score(&u);
    while u.len() + 1 < v.len() {
        let candidates: Vec<HypothesisSet> = others
            .iter()
            .filter(|&&c| !u.contains(c))
            .map(|&c| u.union(&HypothesisSet::singleton(c)))
            .collect();
        let scored: Vec<(f64, HypothesisSet)> = par::map(&candidates, |u| score(u))
            .into_iter()
            .zip(candidates)
            .collect();
        check_scores(&scored)?;
        match pick_best(scored) {
            Some((s, next)) if s > current => {
                current = s;
                u = next;
            }
            _ => break,
        }
    }
    debug!("greedy contrast search over {v}: {u} scores {current}");
    Ok(u)
}
