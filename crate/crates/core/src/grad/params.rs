use std::collections::BTreeMap;

use super::{Bindings, Matrix};

/// Named parameter matrices, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet(BTreeMap<String, Matrix>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.0.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.0.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_entries(&self) -> usize {
        self.0.values().map(|m| m.len()).sum()
    }

    pub fn bind_into<'a>(&'a self, bindings: &mut Bindings<'a>) {
        for (name, value) in &self.0 {
            bindings.bind(name.clone(), value);
        }
    }

    /// Merges `other` into `self`, replacing entries with equal names.
    pub fn extend(&mut self, other: ParamSet) {
        self.0.extend(other.0);
    }
}

impl FromIterator<(String, Matrix)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Matrix)>>(iter: I) -> Self {
        ParamSet(iter.into_iter().collect())
    }
}
