//! Sequential contrastive explanations.
//!
//! Starting from all classes, each round keeps an entailed set `U` that
//! contains the predicted class and rules out the contrast `Ũ = V ∖ U`,
//! reporting prior and posterior log-odds of `U` against `Ũ` together with
//! per-attribute WoE scores. Rounds repeat until only the predicted class is
//! left.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrast::{best_contrast, ContrastParams};
use crate::density::{check_dimension, log_posterior_observed, DensityBackend};
use crate::error::{Result, WoeError};
use crate::evidence::{Attribute, AttributePartition, Evidence};
use crate::hypothesis::HypothesisSet;
use crate::par;
use crate::woe::{check_pair, log_prior_mass, set_log_odds, woe_conditional};

/// Current report format version.
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Above this many size-α candidates the group search goes feature by
/// feature instead of scanning every subset.
pub const MAX_EXHAUSTIVE_GROUP_CANDIDATES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Each attribute conditioned on the attributes scored before it; scores
    /// sum to the total WoE.
    ConditionalChain,
    /// Each attribute scored on its own.
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeSource {
    /// One attribute per feature.
    EachFeature,
    FixedPartition(AttributePartition),
    /// Groups of `size` features picked greedily by marginal WoE, plus one
    /// residual group with whatever is left.
    GreedyGroups {
        size: usize,
    },
}

/// Order in which attributes enter the conditional chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingPolicy {
    /// Next attribute is the one with the largest |conditional WoE| given
    /// those already placed.
    GreedyMaxWoe,
    Fixed,
    Random {
        seed: u64,
    },
}

/// How the remaining class set shrinks after a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemainingUpdate {
    /// `V ← U`: drop the ruled-out classes and keep explaining the
    /// prediction.
    KeepEntailed,
    /// `V ← V ∖ U`: drop the entailed set; later rounds are anchored on the
    /// most probable remaining class.
    RemoveEntailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerParams {
    pub attribute_source: AttributeSource,
    pub scoring_mode: ScoringMode,
    /// Attributes with `|woe| ≥ display_threshold` are flagged for display.
    pub display_threshold: f64,
    pub contrast: ContrastParams,
    pub ordering_policy: OrderingPolicy,
    pub remaining_update: RemainingUpdate,
}

impl Default for ExplainerParams {
    fn default() -> Self {
        Self {
            attribute_source: AttributeSource::EachFeature,
            scoring_mode: ScoringMode::ConditionalChain,
            display_threshold: 2.0,
            contrast: ContrastParams::default(),
            ordering_policy: OrderingPolicy::GreedyMaxWoe,
            remaining_update: RemainingUpdate::KeepEntailed,
        }
    }
}

impl ExplainerParams {
    pub fn validate(&self, num_features: usize) -> Result<()> {
        self.contrast.validate()?;
        if self.display_threshold.is_nan() || self.display_threshold < 0.0 {
            return Err(WoeError::InvalidParameter(format!(
                "display threshold must be nonnegative, got {}",
                self.display_threshold
            )));
        }
        match &self.attribute_source {
            AttributeSource::EachFeature => {}
            AttributeSource::FixedPartition(p) if p.num_features() != num_features => {
                return Err(WoeError::InvalidPartition(format!(
                    "partition covers {} features, model has {num_features}",
                    p.num_features()
                )))
            }
            AttributeSource::FixedPartition(_) => {}
            AttributeSource::GreedyGroups { size } => {
                if *size == 0 || *size > num_features {
                    return Err(WoeError::InvalidParameter(format!(
                        "attribute size {size} must be in 1..={num_features}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        let (attributes, attribute_size) = match &self.attribute_source {
            AttributeSource::EachFeature => ("each_feature", None),
            AttributeSource::FixedPartition(_) => ("fixed_partition", None),
            AttributeSource::GreedyGroups { size } => ("greedy_groups", Some(*size)),
        };
        let (ordering, seed) = match self.ordering_policy {
            OrderingPolicy::GreedyMaxWoe => ("greedy_max_woe", None),
            OrderingPolicy::Fixed => ("fixed", None),
            OrderingPolicy::Random { seed } => ("random", Some(seed)),
        };
        Settings {
            scoring_mode: self.scoring_mode,
            attributes: attributes.into(),
            attribute_size,
            display_threshold: self.display_threshold,
            alpha_reg: self.contrast.alpha_reg,
            max_exhaustive_classes: self.contrast.max_exhaustive_classes,
            ordering: ordering.into(),
            seed,
            remaining_update: self.remaining_update,
            log_base: "e".into(),
        }
    }
}

/// Parameter record stored with every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub scoring_mode: ScoringMode,
    pub attributes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute_size: Option<usize>,
    pub display_threshold: f64,
    pub alpha_reg: f64,
    pub max_exhaustive_classes: usize,
    pub ordering: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub remaining_update: RemainingUpdate,
    pub log_base: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScore {
    pub features: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub woe: f64,
    pub displayed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationStep {
    pub entailed: HypothesisSet,
    pub contrast: HypothesisSet,
    /// `ln P(U) / P(Ũ)`.
    pub prior_log_odds: f64,
    /// `ln P(U | x) / P(Ũ | x)`.
    pub posterior_log_odds: f64,
    pub scoring_mode: ScoringMode,
    pub attributes: Vec<AttributeScore>,
}

impl ExplanationStep {
    pub fn total_woe(&self) -> f64 {
        self.attributes.iter().map(|a| a.woe).sum()
    }

    /// The classes that were still in play for this round.
    pub fn remaining(&self) -> HypothesisSet {
        self.entailed.union(&self.contrast)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub version: u32,
    pub predicted_class: usize,
    pub settings: Settings,
    pub steps: Vec<ExplanationStep>,
}

impl ExplanationReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serialises");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Runs the full sequential explanation of the model's prediction on `e`.
pub fn explain<M: DensityBackend + ?Sized>(
    evidence: &Evidence,
    model: &M,
    params: &ExplainerParams,
) -> Result<ExplanationReport> {
    let k = model.num_classes();
    if k < 2 {
        return Err(WoeError::NothingToExplain);
    }
    check_dimension(model, evidence)?;
    if let Some(i) = (0..evidence.len()).find(|&i| !evidence.is_observed(i)) {
        return Err(WoeError::MissingEvidence { index: i });
    }
    params.validate(model.num_features())?;

    let log_post = log_posterior_observed(model, evidence)?;
    let argmax = |set: &HypothesisSet| {
        set.iter()
            .reduce(|best, c| {
                if log_post[c] > log_post[best] {
                    c
                } else {
                    best
                }
            })
            .expect("nonempty set")
    };
    let universe = HypothesisSet::universe(k)?;
    let predicted_class = argmax(&universe);
    let mut rng = ordering_rng(params.ordering_policy);

    let mut remaining = universe;
    let mut steps = Vec::new();
    while remaining.len() > 1 {
        let anchor = if remaining.contains(predicted_class) {
            predicted_class
        } else {
            argmax(&remaining)
        };
        let entailed = best_contrast(&remaining, anchor, evidence, model, &params.contrast)?;
        let contrast = remaining
            .difference(&entailed)
            .expect("best_contrast returns a proper subset");
        let attributes =
            score_attributes_with(&entailed, &contrast, evidence, model, params, &mut rng)?;
        let step = ExplanationStep {
            prior_log_odds: log_prior_mass(model, &entailed)? - log_prior_mass(model, &contrast)?,
            posterior_log_odds: set_log_odds(&log_post, &entailed, &contrast),
            scoring_mode: params.scoring_mode,
            attributes,
            entailed,
            contrast,
        };
        let step = filter_display(&step, params.display_threshold);
        remaining = match params.remaining_update {
            RemainingUpdate::KeepEntailed => step.entailed.clone(),
            RemainingUpdate::RemoveEntailed => step.contrast.clone(),
        };
        steps.push(step);
    }
    Ok(ExplanationReport {
        version: REPORT_FORMAT_VERSION,
        predicted_class,
        settings: params.settings(),
        steps,
    })
}

fn ordering_rng(policy: OrderingPolicy) -> ChaCha8Rng {
    match policy {
        OrderingPolicy::Random { seed } => ChaCha8Rng::seed_from_u64(seed),
        _ => ChaCha8Rng::seed_from_u64(0),
    }
}

/// Per-attribute WoE of `entailed` against `contrast`, in presentation
/// order. Display flags are left unset; see [`filter_display`].
pub fn score_attributes<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    evidence: &Evidence,
    model: &M,
    params: &ExplainerParams,
) -> Result<Vec<AttributeScore>> {
    let mut rng = ordering_rng(params.ordering_policy);
    score_attributes_with(entailed, contrast, evidence, model, params, &mut rng)
}

fn score_attributes_with<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    evidence: &Evidence,
    model: &M,
    params: &ExplainerParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AttributeScore>> {
    check_pair(model, entailed, contrast)?;
    check_dimension(model, evidence)?;
    let n = model.num_features();
    params.validate(n)?;
    let groups: Vec<Attribute> = match &params.attribute_source {
        AttributeSource::EachFeature => AttributePartition::singletons(n).groups().to_vec(),
        AttributeSource::FixedPartition(p) => p.groups().to_vec(),
        AttributeSource::GreedyGroups { size } => {
            greedy_groups(entailed, contrast, evidence, model, *size)?
        }
    };
    let marginal = |features: &[usize]| {
        woe_conditional(entailed, contrast, features, &[], evidence, model).map(|w| w.0)
    };
    let to_score = |attr: Attribute, woe: f64| AttributeScore {
        features: attr.features,
        name: attr.name,
        woe,
        displayed: false,
    };

    match params.scoring_mode {
        ScoringMode::Marginal => {
            let scores = par::try_map(&groups, |g| marginal(&g.features))?;
            Ok(groups
                .into_iter()
                .zip(scores)
                .map(|(g, w)| to_score(g, w))
                .collect())
        }
        ScoringMode::ConditionalChain => {
            let conditional = |features: &[usize], prefix: &[usize]| {
                woe_conditional(entailed, contrast, features, prefix, evidence, model).map(|w| w.0)
            };
            let mut ordered = groups;
            match params.ordering_policy {
                OrderingPolicy::Fixed => {}
                OrderingPolicy::Random { .. } => ordered.shuffle(rng),
                OrderingPolicy::GreedyMaxWoe => {
                    return greedy_chain(ordered, &conditional)
                        .map(|v| v.into_iter().map(|(g, w)| to_score(g, w)).collect());
                }
            }
            let prefixes: Vec<Vec<usize>> = (0..ordered.len())
                .map(|i| {
                    ordered[..i]
                        .iter()
                        .flat_map(|g| g.features.iter().copied())
                        .collect()
                })
                .collect();
            let jobs: Vec<(&Attribute, &Vec<usize>)> = ordered.iter().zip(&prefixes).collect();
            let scores = par::try_map(&jobs, |(g, prefix)| conditional(&g.features, prefix))?;
            Ok(ordered
                .into_iter()
                .zip(scores)
                .map(|(g, w)| to_score(g, w))
                .collect())
        }
    }
}

/// Places attributes one at a time, each time taking the one whose
/// conditional WoE given the placed prefix is largest in magnitude (ties go
/// to the earlier attribute).
fn greedy_chain<F>(mut pending: Vec<Attribute>, conditional: &F) -> Result<Vec<(Attribute, f64)>>
where
    F: Fn(&[usize], &[usize]) -> Result<f64> + Sync + Send,
{
    let mut placed = Vec::with_capacity(pending.len());
    let mut prefix: Vec<usize> = Vec::new();
    while !pending.is_empty() {
        let scores = par::try_map(&pending, |g| conditional(&g.features, &prefix))?;
        let (best, score) = scores
            .iter()
            .copied()
            .enumerate()
            .reduce(|a, b| if b.1.abs() > a.1.abs() { b } else { a })
            .expect("pending is nonempty");
        let attr = pending.remove(best);
        prefix.extend(attr.features.iter().copied());
        placed.push((attr, score));
    }
    Ok(placed)
}

/// Repeatedly takes the size-`size` subset of the remaining features with the
/// largest marginal WoE until at most `size` features are left, which form a
/// final residual group.
fn greedy_groups<M: DensityBackend + ?Sized>(
    entailed: &HypothesisSet,
    contrast: &HypothesisSet,
    evidence: &Evidence,
    model: &M,
    size: usize,
) -> Result<Vec<Attribute>> {
    let n = model.num_features();
    if size == 0 || size > n {
        return Err(WoeError::InvalidParameter(format!(
            "attribute size {size} must be in 1..={n}"
        )));
    }
    let score = |features: &Vec<usize>| {
        woe_conditional(entailed, contrast, features, &[], evidence, model).map(|w| w.0)
    };
    // Highest score first, ties to the lexicographically smallest set.
    let best_of = |candidates: Vec<Vec<usize>>| -> Result<Vec<usize>> {
        let scores = par::try_map(&candidates, score)?;
        if scores.iter().any(|s| s.is_nan()) {
            return Err(WoeError::NumericalConditioning(
                "attribute candidate has an undefined score".into(),
            ));
        }
        Ok(candidates
            .into_iter()
            .zip(scores)
            .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
            .map(|(c, _)| c)
            .expect("at least one candidate"))
    };

    let mut remaining: Vec<usize> = (0..n).collect();
    let mut groups = Vec::new();
    while remaining.len() > size {
        let group = if binomial(remaining.len(), size) <= MAX_EXHAUSTIVE_GROUP_CANDIDATES {
            best_of(remaining.iter().copied().combinations(size).collect())?
        } else {
            let mut group: Vec<usize> = Vec::with_capacity(size);
            while group.len() < size {
                let candidates = remaining
                    .iter()
                    .filter(|f| !group.contains(f))
                    .map(|&f| {
                        let mut g = group.clone();
                        g.push(f);
                        g.sort_unstable();
                        g
                    })
                    .collect();
                group = best_of(candidates)?;
            }
            group
        };
        remaining.retain(|f| !group.contains(f));
        groups.push(Attribute::new(group));
    }
    groups.push(Attribute::new(remaining));
    Ok(groups)
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Flags attributes with `|woe| ≥ threshold`. Scores are never altered.
pub fn filter_display(step: &ExplanationStep, threshold: f64) -> ExplanationStep {
    let mut out = step.clone();
    for attr in &mut out.attributes {
        attr.displayed = attr.woe.abs() >= threshold;
    }
    out
}
