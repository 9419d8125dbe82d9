//! Lazy feature evaluation for inference.
//!
//! Models ask a [`FeatureProvider`] for bits one feature at a time, and the provider reports how
//! many LM calls it has made. A provider is scoped to one example: asking for the same feature
//! twice costs nothing the second time.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("feature {feature}: {message}")]
pub struct ProviderError {
    pub feature: usize,
    pub message: String,
    /// Set when the failure is a cache miss in cache-only mode.
    pub cache_miss: Option<(String, u64)>,
}

impl ProviderError {
    pub fn new(feature: usize, message: impl Into<String>) -> Self {
        Self {
            feature,
            message: message.into(),
            cache_miss: None,
        }
    }
}

pub trait FeatureProvider {
    fn bit(&mut self, feature: usize) -> Result<bool, ProviderError>;

    /// LM calls made so far for this example. Repeated features are not recounted.
    fn calls(&self) -> usize;
}

/// Provider over precomputed columns for one row; every distinct feature counts as one call.
#[derive(Debug, Clone)]
pub struct ColumnProvider<'a> {
    columns: &'a [Vec<bool>],
    row: usize,
    seen: BTreeSet<usize>,
}

impl<'a> ColumnProvider<'a> {
    pub fn new(columns: &'a [Vec<bool>], row: usize) -> Self {
        Self {
            columns,
            row,
            seen: BTreeSet::new(),
        }
    }

    pub fn evaluated(&self) -> &BTreeSet<usize> {
        &self.seen
    }
}

impl FeatureProvider for ColumnProvider<'_> {
    fn bit(&mut self, feature: usize) -> Result<bool, ProviderError> {
        let bit = self
            .columns
            .get(feature)
            .and_then(|c| c.get(self.row))
            .copied()
            .ok_or_else(|| ProviderError::new(feature, format!("no value for row {}", self.row)))?;
        self.seen.insert(feature);
        Ok(bit)
    }

    fn calls(&self) -> usize {
        self.seen.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_distinct_features() {
        let cols = vec![vec![true, false], vec![false, true], vec![true, true]];
        let mut p = ColumnProvider::new(&cols, 1);
        assert!(!p.bit(0).unwrap());
        assert!(p.bit(1).unwrap());
        assert!(!p.bit(0).unwrap());
        assert_eq!(p.calls(), 2);
        assert!(p.bit(3).is_err());
        assert_eq!(p.calls(), 2);
    }
}
