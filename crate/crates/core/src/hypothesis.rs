use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, WoeError};

/// A composite hypothesis `Y ∈ C`: a nonempty, duplicate-free set of class
/// labels, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct HypothesisSet {
    classes: Vec<usize>,
}

impl HypothesisSet {
    pub fn new(labels: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut classes: Vec<usize> = labels.into_iter().collect();
        if classes.is_empty() {
            return Err(WoeError::InvalidHypothesis("empty class set".into()));
        }
        classes.sort_unstable();
        if let Some(w) = classes.windows(2).find(|w| w[0] == w[1]) {
            return Err(WoeError::InvalidHypothesis(format!(
                "label {} listed more than once",
                w[0]
            )));
        }
        Ok(Self { classes })
    }

    pub fn singleton(label: usize) -> Self {
        Self {
            classes: vec![label],
        }
    }

    /// All labels `0..num_classes`.
    pub fn universe(num_classes: usize) -> Result<Self> {
        Self::new(0..num_classes)
    }

    pub fn labels(&self) -> &[usize] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.classes.binary_search(&label).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.classes.iter().copied()
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        !self.iter().any(|c| other.contains(c))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.iter().all(|c| other.contains(c))
    }

    /// `self ∖ other`, or `None` when nothing is left.
    pub fn difference(&self, other: &Self) -> Option<Self> {
        let rest: Vec<usize> = self.iter().filter(|&c| !other.contains(c)).collect();
        (!rest.is_empty()).then_some(Self { classes: rest })
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut classes = self.classes.clone();
        classes.extend(other.iter().filter(|&c| !self.contains(c)));
        classes.sort_unstable();
        Self { classes }
    }

    /// Checks every label against a universe of `num_classes` labels.
    pub fn check_universe(&self, num_classes: usize) -> Result<()> {
        match self.classes.last() {
            Some(&label) if label >= num_classes => {
                Err(WoeError::UnknownLabel { label, num_classes })
            }
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for HypothesisSet {
    type Error = WoeError;

    fn try_from(labels: Vec<usize>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<HypothesisSet> for Vec<usize> {
    fn from(set: HypothesisSet) -> Self {
        set.classes
    }
}

impl fmt::Display for HypothesisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.classes.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}
