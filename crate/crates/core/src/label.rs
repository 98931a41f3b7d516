//! Metastable-set labels.
//!
//! A labeler maps a state to the metastable set it belongs to, or to `None`
//! when the state lies in no declared set. Two states are in the same set iff
//! their labels compare equal.

use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::model::{Observable, ObservableSpec, PopulationState, ReactionNetwork};

pub trait Labeler<S>: Sync {
    type Label: Clone + PartialEq + Send + Sync + fmt::Debug + fmt::Display;

    fn label(&self, x: &S) -> Option<Self::Label>;

    fn contains(&self, label: &Self::Label, x: &S) -> bool {
        self.label(x).as_ref() == Some(label)
    }
}

/// Tuple of slow-observable values. Compared bitwise, with `-0.0` folded into
/// `0.0`.
#[derive(Clone, Debug)]
pub struct Label(Vec<f64>);

impl Label {
    pub fn new(values: Vec<f64>) -> Self {
        Label(values.into_iter().map(|v| v + 0.0).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for Label {}

impl Hash for Label {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.0 {
            v.to_bits().hash(state);
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Labels population states by the values of the slow observables, so the
/// metastable sets are their joint level sets.
#[derive(Clone, Debug, PartialEq)]
pub struct MetastableLabeler {
    slow: Vec<ObservableSpec>,
}

impl MetastableLabeler {
    pub fn new(slow: Vec<ObservableSpec>) -> Result<Self> {
        if slow.is_empty() {
            return Err(Error::Input("at least one slow observable is required".into()));
        }
        Ok(MetastableLabeler { slow })
    }

    /// Like [`MetastableLabeler::new`], also checking that every observable is
    /// constant along every fast reaction.
    pub fn for_network(net: &ReactionNetwork, slow: Vec<ObservableSpec>) -> Result<Self> {
        for f in &slow {
            f.validate(net.species_count())?;
            if let Some(j) = fast_breaking(net, f) {
                return Err(Error::InvalidModel(format!(
                    "slow observable changes along fast reaction {}",
                    j + 1
                )));
            }
        }
        Self::new(slow)
    }

    /// Every observable in `candidates` that is invariant under all fast
    /// reactions.
    pub fn default_slow(net: &ReactionNetwork, candidates: &[ObservableSpec]) -> Vec<ObservableSpec> {
        candidates
            .iter()
            .filter(|f| fast_breaking(net, f).is_none())
            .cloned()
            .collect()
    }

    pub fn observables(&self) -> &[ObservableSpec] {
        &self.slow
    }
}

fn fast_breaking(net: &ReactionNetwork, f: &ObservableSpec) -> Option<usize> {
    net.reactions()
        .iter()
        .enumerate()
        .find(|(j, r)| !net.is_slow(*j) && f.increment(&r.state_change) != 0.0)
        .map(|(j, _)| j)
}

impl Labeler<PopulationState> for MetastableLabeler {
    type Label = Label;

    fn label(&self, x: &PopulationState) -> Option<Label> {
        Some(Label::new(self.slow.iter().map(|f| f.eval(x)).collect()))
    }
}

/// Explicit sets on an enumerated chain. States in no set are unlabeled.
#[derive(Clone, Debug, PartialEq)]
pub struct SetLabeler {
    of: Vec<Option<usize>>,
}

impl SetLabeler {
    pub fn new(states: usize, sets: &[&[usize]]) -> Result<Self> {
        let mut of = vec![None; states];
        for (k, set) in sets.iter().enumerate() {
            for &x in *set {
                let slot = of
                    .get_mut(x)
                    .ok_or_else(|| Error::Input(format!("state {x} is outside the chain")))?;
                if slot.replace(k).is_some() {
                    return Err(Error::Input(format!("state {x} is in two sets")));
                }
            }
        }
        Ok(SetLabeler { of })
    }

    /// Every state its own set.
    pub fn singletons(states: usize) -> Self {
        SetLabeler {
            of: (0..states).map(Some).collect(),
        }
    }
}

impl Labeler<usize> for SetLabeler {
    type Label = usize;

    fn label(&self, x: &usize) -> Option<usize> {
        self.of.get(*x).copied().flatten()
    }
}
