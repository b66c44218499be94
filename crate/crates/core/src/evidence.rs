//! Evidence vectors and attribute partitions over feature indices.

use serde::{Deserialize, Serialize};

use crate::error::{Result, WoeError};

/// An input vector together with the coordinates treated as observed.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    values: Vec<f64>,
    observed: Vec<bool>,
}

impl Evidence {
    /// Fully observed evidence.
    pub fn full(values: Vec<f64>) -> Result<Self> {
        let observed = vec![true; values.len()];
        Self::with_mask(values, observed)
    }

    pub fn with_mask(values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if values.len() != observed.len() {
            return Err(WoeError::InvalidEvidence(format!(
                "{} values but mask of length {}",
                values.len(),
                observed.len()
            )));
        }
        if let Some(i) = (0..values.len()).find(|&i| observed[i] && !values[i].is_finite()) {
            return Err(WoeError::InvalidEvidence(format!(
                "observed feature {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { values, observed })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_observed(&self, index: usize) -> bool {
        self.observed.get(index).copied().unwrap_or(false)
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Indices of observed coordinates, ascending.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.observed[i]).collect()
    }

    /// Values at `indices`, failing on any unobserved coordinate.
    pub fn gather(&self, indices: &[usize]) -> Result<Vec<f64>> {
        indices
            .iter()
            .map(|&i| {
                if self.is_observed(i) {
                    Ok(self.values[i])
                } else {
                    Err(WoeError::MissingEvidence { index: i })
                }
            })
            .collect()
    }
}

/// One attribute: a named group of feature indices scored as a unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub features: Vec<usize>,
}

impl Attribute {
    pub fn new(features: Vec<usize>) -> Self {
        Self {
            name: None,
            features,
        }
    }

    pub fn named(name: impl Into<String>, features: Vec<usize>) -> Self {
        Self {
            name: Some(name.into()),
            features,
        }
    }
}

/// Disjoint, nonempty attribute groups whose union is `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributePartition {
    groups: Vec<Attribute>,
    num_features: usize,
}

impl AttributePartition {
    pub fn new(groups: Vec<Attribute>, num_features: usize) -> Result<Self> {
        let mut owner: Vec<Option<usize>> = vec![None; num_features];
        for (g, attr) in groups.iter().enumerate() {
            let label = group_label(attr, g);
            if attr.features.is_empty() {
                return Err(WoeError::InvalidPartition(format!(
                    "group {label} is empty"
                )));
            }
            for &f in &attr.features {
                let slot = owner.get_mut(f).ok_or_else(|| {
                    WoeError::InvalidPartition(format!(
                        "group {label} references feature {f}, but there are only {num_features} features"
                    ))
                })?;
                if let Some(prev) = *slot {
                    return Err(WoeError::InvalidPartition(format!(
                        "feature {f} appears in group {label} and group {}",
                        group_label(&groups[prev], prev)
                    )));
                }
                *slot = Some(g);
            }
        }
        if let Some(f) = owner.iter().position(Option::is_none) {
            return Err(WoeError::InvalidPartition(format!(
                "feature {f} is not assigned to any group"
            )));
        }
        Ok(Self {
            groups,
            num_features,
        })
    }

    /// Every feature in its own attribute.
    pub fn singletons(num_features: usize) -> Self {
        Self {
            groups: (0..num_features).map(|f| Attribute::new(vec![f])).collect(),
            num_features,
        }
    }

    /// All features in one attribute.
    pub fn single_group(num_features: usize) -> Result<Self> {
        Self::new(
            vec![Attribute::new((0..num_features).collect())],
            num_features,
        )
    }

    pub fn groups(&self) -> &[Attribute] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Feature index sets in group order.
    pub fn index_sets(&self) -> Vec<Vec<usize>> {
        self.groups.iter().map(|g| g.features.clone()).collect()
    }
}

fn group_label(attr: &Attribute, position: usize) -> String {
    match &attr.name {
        Some(name) => format!("'{name}'"),
        None => format!("#{position}"),
    }
}

/// Checks that `sets` partitions exactly the index set `universe`.
pub(crate) fn check_partition_of(sets: &[Vec<usize>], universe: &[usize]) -> Result<()> {
    let mut seen: Vec<usize> = sets.iter().flatten().copied().collect();
    if sets.iter().any(Vec::is_empty) {
        return Err(WoeError::InvalidPartition(
            "ordering contains an empty group".into(),
        ));
    }
    seen.sort_unstable();
    if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
        return Err(WoeError::InvalidPartition(format!(
            "feature {} appears in more than one group",
            w[0]
        )));
    }
    let mut expected = universe.to_vec();
    expected.sort_unstable();
    if seen != expected {
        return Err(WoeError::InvalidPartition(format!(
            "groups cover {seen:?}, expected exactly {expected:?}"
        )));
    }
    Ok(())
}
