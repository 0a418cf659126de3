use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{PosiError, Result};

/// A subset of regressor indices, stored as a bitset.
///
/// Indices are 0-based internally and 1-based in every external format.
/// Trailing zero words are trimmed, so equality does not depend on `p`.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelId {
    words: Vec<u64>,
}

impl ModelId {
    pub fn empty() -> Self {
        ModelId { words: Vec::new() }
    }

    pub fn full(p: usize) -> Self {
        Self::from_indices(0..p)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut m = ModelId::empty();
        for j in indices {
            m.insert(j);
        }
        m
    }

    /// From 1-based indices; rejects 0 and anything above `p`.
    pub fn from_one_based(indices: &[usize], p: usize) -> Result<Self> {
        let mut m = ModelId::empty();
        for &j in indices {
            if j == 0 || j > p {
                return Err(PosiError::Validation(format!("model index {j} outside 1..={p}")));
            }
            m.insert(j - 1);
        }
        Ok(m)
    }

    /// Model whose members are the set bits of `mask`.
    pub fn from_mask(mask: u64) -> Self {
        let mut m = ModelId { words: vec![mask] };
        m.trim();
        m
    }

    pub fn insert(&mut self, j: usize) {
        let (w, b) = (j / 64, j % 64);
        if self.words.len() <= w {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1u64 << b;
    }

    pub fn remove(&mut self, j: usize) {
        let (w, b) = (j / 64, j % 64);
        if w < self.words.len() {
            self.words[w] &= !(1u64 << b);
            self.trim();
        }
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    pub fn contains(&self, j: usize) -> bool {
        let (w, b) = (j / 64, j % 64);
        w < self.words.len() && self.words[w] & (1u64 << b) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_subset_of(&self, other: &ModelId) -> bool {
        self.words.len() <= other.words.len() && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn union(&self, other: &ModelId) -> ModelId {
        let n = self.words.len().max(other.words.len());
        let words = (0..n)
            .map(|i| self.words.get(i).copied().unwrap_or(0) | other.words.get(i).copied().unwrap_or(0))
            .collect();
        ModelId { words }
    }

    /// Sorted 0-based indices.
    pub fn indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for (w, &word) in self.words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                out.push(w * 64 + b);
                bits &= bits - 1;
            }
        }
        out
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices().into_iter().map(|j| j + 1).collect()
    }

    /// Complement within `0..p`.
    pub fn complement(&self, p: usize) -> ModelId {
        ModelId::from_indices((0..p).filter(|&j| !self.contains(j)))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices().last().copied()
    }

    /// Parses the 1-based comma-separated form used by universe files.
    /// An empty string, `0` or `{}` denotes the empty model.
    pub fn parse(s: &str, p: usize) -> Result<Self> {
        let t = s.trim().trim_start_matches('{').trim_end_matches('}').trim();
        if t.is_empty() || t == "0" {
            return Ok(ModelId::empty());
        }
        if t.eq_ignore_ascii_case("full") {
            return Ok(ModelId::full(p));
        }
        let mut idx = Vec::new();
        for part in t.split(',') {
            let part = part.trim();
            let j =
                part.parse::<usize>().map_err(|_| PosiError::Parse(format!("bad model index '{part}' in '{s}'")))?;
            idx.push(j);
        }
        ModelId::from_one_based(&idx, p)
    }

    /// The 1-based comma-separated form (empty string for the empty model).
    pub fn to_line(&self) -> String {
        self.one_based().iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl fmt::Debug for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_line())
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_line())
    }
}

impl Serialize for ModelId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ModelId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let idx = Vec::<usize>::deserialize(d)?;
        if idx.contains(&0) {
            return Err(serde::de::Error::custom("model indices are 1-based"));
        }
        Ok(ModelId::from_indices(idx.into_iter().map(|j| j - 1)))
    }
}
