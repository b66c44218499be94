//! Weight-of-evidence formulas evaluated against a [`DensityBackend`].
//!
//! For composite hypotheses `Y ∈ C` the evidence likelihood is the
//! prior-weighted class mixture, so every identity below (chain rule, Bayes
//! decomposition) holds exactly up to floating-point rounding.

use serde::{Deserialize, Serialize};

use crate::density::{
    check_dimension, class_log_likelihoods, log_posterior_observed, set_conditional_log_likelihood,
    set_log_likelihood_from_classes, DensityBackend,
};
use crate::error::{Result, WoeError};
use crate::evidence::{check_partition_of, Evidence};
use crate::hypothesis::HypothesisSet;
use crate::math::log_sum_exp;
use crate::par;

/// A weight of evidence in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WoeScore(pub f64);

impl WoeScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::ops::Neg for WoeScore {
    type Output = Self;

    fn neg(self) -> Self {
        Self(-self.0)
    }
}

pub(crate) fn check_pair<M: DensityBackend + ?Sized>(
    model: &M,
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
) -> Result<()> {
    let k = model.num_classes();
    entailed.check_universe(k)?;
    contrast.check_universe(k)?;
    if !entailed.is_disjoint(contrast) {
        return Err(WoeError::InvalidHypothesis(format!(
            "entailed {entailed} and contrast {contrast} overlap"
        )));
    }
    Ok(())
}

/// `woe(entailed / contrast : e) = ln P(e | entailed) − ln P(e | contrast)`
/// over the observed coordinates of `e`.
pub fn woe<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    evidence: &Evidence,
    model: &M,
) -> Result<WoeScore> {
    check_pair(model, entailed, contrast)?;
    check_dimension(model, evidence)?;
    let target = evidence.observed_indices();
    let x = evidence.gather(&target)?;
    let class_ll = class_log_likelihoods(model, &target, &x)?;
    Ok(woe_from_classes(model, entailed, contrast, &class_ll))
}

/// Same arithmetic as [`woe`] given precomputed per-class log-likelihoods.
pub(crate) fn woe_from_classes<M: DensityBackend + ?Sized>(
    model: &M,
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    class_ll: &[f64],
) -> WoeScore {
    WoeScore(
        set_log_likelihood_from_classes(model, entailed, class_ll)
            - set_log_likelihood_from_classes(model, contrast, class_ll),
    )
}

/// Conditional WoE of the `target` coordinates given the `prefix`
/// coordinates.
pub fn woe_conditional<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    target: &[usize],
    prefix: &[usize],
    evidence: &Evidence,
    model: &M,
) -> Result<WoeScore> {
    check_pair(model, entailed, contrast)?;
    check_dimension(model, evidence)?;
    if let Some(j) = target.iter().find(|j| prefix.contains(j)) {
        return Err(WoeError::InvalidPartition(format!(
            "feature {j} is in both target and prefix"
        )));
    }
    let x_target = evidence.gather(target)?;
    let x_prefix = evidence.gather(prefix)?;
    let num =
        set_conditional_log_likelihood(model, entailed, target, &x_target, prefix, &x_prefix)?;
    let den =
        set_conditional_log_likelihood(model, contrast, target, &x_target, prefix, &x_prefix)?;
    Ok(WoeScore(num - den))
}

/// Chain-rule decomposition: the i-th score is the WoE of `ordering[i]`
/// conditioned on all earlier groups. `ordering` must partition the observed
/// coordinates of `e`; the scores then sum to [`woe`].
pub fn woe_chain<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    ordering: &[Vec<usize>],
    evidence: &Evidence,
    model: &M,
) -> Result<Vec<WoeScore>> {
    check_pair(model, entailed, contrast)?;
    check_dimension(model, evidence)?;
    check_partition_of(ordering, &evidence.observed_indices())?;
    let steps: Vec<(usize, Vec<usize>)> = ordering
        .iter()
        .enumerate()
        .map(|(i, _)| (i, ordering[..i].concat()))
        .collect();
    par::try_map(&steps, |(i, prefix)| {
        woe_conditional(entailed, contrast, &ordering[*i], prefix, evidence, model)
    })
}

/// Prior log-odds, total WoE and posterior log-odds of `entailed` against
/// `contrast`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesDecomposition {
    pub prior_log_odds: f64,
    pub total_woe: WoeScore,
    pub posterior_log_odds: f64,
}

impl BayesDecomposition {
    /// `posterior − prior − woe`; zero up to rounding.
    pub fn residual(&self) -> f64 {
        self.posterior_log_odds - self.prior_log_odds - self.total_woe.0
    }
}

pub(crate) fn log_prior_mass<M: DensityBackend + ?Sized>(
    model: &M,
    set: &HypothesisSet,
) -> Result<f64> {
    let lp: Vec<f64> = set.iter().map(|c| model.log_prior(c)).collect();
    let mass = log_sum_exp(&lp);
    if mass == f64::NEG_INFINITY || mass.is_nan() {
        return Err(WoeError::DegeneratePrior(set.to_string()));
    }
    Ok(mass)
}

/// Log-odds form of Bayes' rule. The posterior log-odds are computed from
/// the class posterior (softmax over per-class joint likelihoods), not from
/// the mixture terms used by [`woe`], so the identity is a genuine check.
pub fn bayes_decomposition<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    evidence: &Evidence,
    model: &M,
) -> Result<BayesDecomposition> {
    check_pair(model, entailed, contrast)?;
    let prior_log_odds = log_prior_mass(model, entailed)? - log_prior_mass(model, contrast)?;
    let total_woe = woe(entailed, contrast, evidence, model)?;
    let log_post = log_posterior_observed(model, evidence)?;
    Ok(BayesDecomposition {
        prior_log_odds,
        total_woe,
        posterior_log_odds: set_log_odds(&log_post, entailed, contrast),
    })
}

/// `ln Σ_{c∈a} exp(lp_c) − ln Σ_{c∈b} exp(lp_c)`.
pub(crate) fn set_log_odds(log_probs: &[f64], a: &HypothesisSet, b: &HypothesisSet) -> f64 {
    let pick = |s: &HypothesisSet| s.iter().map(|c| log_probs[c]).collect::<Vec<_>>();
    log_sum_exp(&pick(a)) - log_sum_exp(&pick(b))
}

/// Integration grid for [`information_value`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Spans ±10 standard deviations of both marginals (needs closed-form
    /// moments from the backend).
    Auto { intervals: usize },
    Range {
        lower: f64,
        upper: f64,
        intervals: usize,
    },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Auto { intervals: 20_000 }
    }
}

const AUTO_HALF_WIDTH_SDS: f64 = 10.0;
const MIN_HALF_COVERAGE_SDS: f64 = 4.0;

/// Information Value of one feature between two classes:
/// `∫ ln(p_a / p_b) (p_a − p_b) dx`, the symmetrised KL divergence of the two
/// 1-D marginals. Composite Simpson rule on the given grid.
pub fn information_value<M: DensityBackend + ?Sized>(
    feature: usize,
    class_a: usize,
    class_b: usize,
    model: &M,
    grid: &Quadrature,
) -> Result<f64> {
    let k = model.num_classes();
    for label in [class_a, class_b] {
        if label >= k {
            return Err(WoeError::UnknownLabel {
                label,
                num_classes: k,
            });
        }
    }
    if feature >= model.num_features() {
        return Err(WoeError::InvalidParameter(format!(
            "feature {feature} out of range for {} features",
            model.num_features()
        )));
    }
    let mut moments = Vec::new();
    for c in [class_a, class_b] {
        if let Some((mean, var)) = model.marginal_moments(c, feature) {
            if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
                return Err(WoeError::DegenerateDensity(format!(
                    "class {c}, feature {feature}: marginal variance {var}"
                )));
            }
            moments.push((mean, var.sqrt()));
        }
    }
    let (lower, upper, intervals) = match *grid {
        Quadrature::Auto { intervals } => {
            if moments.len() != 2 {
                return Err(WoeError::InvalidParameter(
                    "automatic grid needs closed-form marginal moments".into(),
                ));
            }
            let lo = moments
                .iter()
                .map(|(m, s)| m - AUTO_HALF_WIDTH_SDS * s)
                .fold(f64::INFINITY, f64::min);
            let hi = moments
                .iter()
                .map(|(m, s)| m + AUTO_HALF_WIDTH_SDS * s)
                .fold(f64::NEG_INFINITY, f64::max);
            (lo, hi, intervals)
        }
        Quadrature::Range {
            lower,
            upper,
            intervals,
        } => {
            if !(lower < upper && lower.is_finite() && upper.is_finite()) {
                return Err(WoeError::InvalidParameter(format!(
                    "quadrature range [{lower}, {upper}] is empty or not finite"
                )));
            }
            for (m, s) in &moments {
                if lower > m - MIN_HALF_COVERAGE_SDS * s || upper < m + MIN_HALF_COVERAGE_SDS * s {
                    return Err(WoeError::InvalidParameter(format!(
                        "quadrature range [{lower}, {upper}] does not cover 8 standard deviations of N({m}, {s}²)"
                    )));
                }
            }
            (lower, upper, intervals)
        }
    };
    if intervals < 2 {
        return Err(WoeError::InvalidParameter(
            "quadrature needs at least 2 intervals".into(),
        ));
    }
    let intervals = intervals + intervals % 2;
    let h = (upper - lower) / intervals as f64;
    let integrand = |x: f64| -> Result<f64> {
        let la = model.conditional_log_density(class_a, &[feature], &[x], &[], &[])?;
        let lb = model.conditional_log_density(class_b, &[feature], &[x], &[], &[])?;
        if la == lb {
            return Ok(0.0);
        }
        Ok((la - lb) * (la.exp() - lb.exp()))
    };
    let mut sum = integrand(lower)? + integrand(upper)?;
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(lower + i as f64 * h)?;
    }
    Ok((sum * h / 3.0).max(0.0))
}
