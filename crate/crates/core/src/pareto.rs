//! Dominance, projection and exact front extraction on finite metric sets.
//!
//! All metrics are minimized. Equality inside dominance and deduplication is
//! exact; callers that need tolerance should [`MetricVector::quantize`] first.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute grid used by [`MetricSet::quantized`].
pub const DEFAULT_QUANTUM: f64 = 1e-12;

/// A point in metric space. Entries are finite; the length is fixed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MetricVector(Vec<f64>);

impl MetricVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("metric vector must have at least one entry".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite metric value {v}")));
        }
        Ok(MetricVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Rounds every entry to the nearest multiple of `quantum`.
    pub fn quantize(&self, quantum: f64) -> MetricVector {
        MetricVector(self.0.iter().map(|v| (v / quantum).round() * quantum).collect())
    }

    fn key(&self) -> Vec<u64> {
        // -0.0 and 0.0 compare equal, so they must hash equal too.
        self.0.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
    }
}

impl TryFrom<Vec<f64>> for MetricVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        MetricVector::new(v)
    }
}

impl From<MetricVector> for Vec<f64> {
    fn from(v: MetricVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for MetricVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for MetricVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// A deduplicated collection of equal-length metric vectors, kept in insertion order.
#[derive(Clone, Debug, Default)]
pub struct MetricSet {
    dim: Option<usize>,
    members: Vec<MetricVector>,
    keys: HashSet<Vec<u64>>,
}

impl PartialEq for MetricSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.members == other.members
    }
}

impl MetricSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_vectors<I: IntoIterator<Item = MetricVector>>(vectors: I) -> Result<Self> {
        let mut set = MetricSet::new();
        for v in vectors {
            set.insert(v)?;
        }
        Ok(set)
    }

    /// Builds a set from raw rows, validating finiteness and length.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_vectors(rows.into_iter().map(MetricVector::new).collect::<Result<Vec<_>>>()?)
    }

    /// Inserts `v` unless an identical member exists. Returns whether it was added.
    pub fn insert(&mut self, v: MetricVector) -> Result<bool> {
        match self.dim {
            Some(d) if d != v.len() => return Err(Error::dim(d, v.len())),
            None => self.dim = Some(v.len()),
            _ => {}
        }
        if self.keys.insert(v.key()) {
            self.members.push(v);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Length of the member vectors, `None` for an empty set.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MetricVector> {
        self.members.iter()
    }

    pub fn members(&self) -> &[MetricVector] {
        &self.members
    }

    pub fn contains(&self, v: &MetricVector) -> bool {
        self.keys.contains(&v.key())
    }

    /// Quantizes every member to `quantum` and re-deduplicates.
    pub fn quantized(&self, quantum: f64) -> MetricSet {
        MetricSet::from_vectors(self.members.iter().map(|v| v.quantize(quantum)))
            .expect("quantization preserves length and finiteness")
    }
}

impl<'a> IntoIterator for &'a MetricSet {
    type Item = &'a MetricVector;
    type IntoIter = std::slice::Iter<'a, MetricVector>;
    fn into_iter(self) -> Self::IntoIter {
        self.members.iter()
    }
}

/// `a` dominates `b` when `a <= b` element-wise and the two differ somewhere.
pub fn dominates(a: &MetricVector, b: &MetricVector) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::dim(a.len(), b.len()));
    }
    Ok(dominates_slice(a.as_slice(), b.as_slice()))
}

pub(crate) fn dominates_slice(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strict = true;
        }
    }
    strict
}

/// Keeps the first `i` entries of `f`.
pub fn project(f: &MetricVector, i: usize) -> Result<MetricVector> {
    if i == 0 || i > f.len() {
        return Err(Error::IndexRange { index: i, max: f.len() });
    }
    Ok(MetricVector(f.0[..i].to_vec()))
}

/// Projects every member of `set` to its first `i` entries, collapsing duplicates.
pub fn project_set(set: &MetricSet, i: usize) -> Result<MetricSet> {
    let mut out = MetricSet::new();
    for v in set {
        out.insert(project(v, i)?)?;
    }
    Ok(out)
}

/// Extracts the non-dominated subset of `set`.
///
/// Candidates are visited in lexicographic order, so any dominator of a
/// candidate has already been visited; each candidate is compared pairwise
/// against the retained members only. Worst case O(n²).
pub fn extract_front(set: &MetricSet) -> MetricSet {
    let mut order: Vec<&MetricVector> = set.iter().collect();
    order.sort_by(|a, b| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut front: Vec<MetricVector> = Vec::new();
    for cand in order {
        if !front.iter().any(|kept| dominates_slice(kept.as_slice(), cand.as_slice())) {
            front.push(cand.clone());
        }
    }
    let keys = front.iter().map(MetricVector::key).collect();
    MetricSet { dim: set.dim, members: front, keys }
}
