use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// An ordered tuple of item sets. Parts may be empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub parts: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(parts: Vec<Vec<usize>>) -> Partition {
        Partition { parts }
    }

    pub fn empty(count: usize) -> Partition {
        Partition { parts: vec![Vec::new(); count] }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Copy with every part sorted, for set-wise comparison.
    pub fn normalized(&self) -> Partition {
        Partition {
            parts: self
                .parts
                .iter()
                .map(|p| {
                    let mut p = p.clone();
                    p.sort_unstable();
                    p
                })
                .collect(),
        }
    }

    pub fn item_count(&self) -> usize {
        self.parts.iter().map(Vec::len).sum()
    }
}

/// Outcome of [`check_partition`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub duplicates: Vec<usize>,
    pub missing: Vec<usize>,
    pub foreign: Vec<usize>,
}

impl PartitionReport {
    pub fn is_valid(&self) -> bool {
        self.duplicates.is_empty() && self.missing.is_empty() && self.foreign.is_empty()
    }
}

/// Lists duplicated, missing and foreign items of `partition` relative to `universe`.
pub fn check_partition(universe: &[usize], partition: &Partition) -> PartitionReport {
    let universe: BTreeSet<usize> = universe.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut duplicates = BTreeSet::new();
    let mut foreign = BTreeSet::new();
    for &g in partition.parts.iter().flatten() {
        if !seen.insert(g) {
            duplicates.insert(g);
        }
        if !universe.contains(&g) {
            foreign.insert(g);
        }
    }
    PartitionReport {
        duplicates: duplicates.into_iter().collect(),
        missing: universe.difference(&seen).copied().collect(),
        foreign: foreign.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_partition() {
        let r = check_partition(&[0, 1, 2], &Partition::new(vec![vec![0, 1], vec![2]]));
        assert!(r.is_valid());
    }

    #[test]
    fn duplicate_and_missing() {
        let r = check_partition(&[0, 1], &Partition::new(vec![vec![0], vec![0]]));
        assert_eq!(r.duplicates, vec![0]);
        assert_eq!(r.missing, vec![1]);
        assert!(r.foreign.is_empty());
        assert!(!r.is_valid());
    }

    #[test]
    fn empty_universe_with_empty_parts() {
        assert!(check_partition(&[], &Partition::empty(2)).is_valid());
    }

    #[test]
    fn foreign_items_reported() {
        let r = check_partition(&[0], &Partition::new(vec![vec![0, 5]]));
        assert_eq!(r.foreign, vec![5]);
    }
}
