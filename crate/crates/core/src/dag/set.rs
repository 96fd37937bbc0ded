use std::fmt;

use fixedbitset::FixedBitSet;

/// Dense index of a block inside a [`super::BlockStore`].
pub type BlockIdx = usize;

/// Growable bitset of block indices.
#[derive(Clone, Default)]
pub struct BlockSet(FixedBitSet);

impl BlockSet {
    pub fn new() -> Self {
        BlockSet(FixedBitSet::new())
    }

    pub fn singleton(i: BlockIdx) -> Self {
        let mut s = Self::new();
        s.insert(i);
        s
    }

    /// Returns true if `i` was not already present.
    pub fn insert(&mut self, i: BlockIdx) -> bool {
        if i >= self.0.len() {
            self.0.grow((i + 1).next_power_of_two().max(64));
        }
        !self.0.put(i)
    }

    pub fn contains(&self, i: BlockIdx) -> bool {
        self.0.contains(i)
    }

    pub fn union_with(&mut self, other: &BlockSet) {
        self.0.union_with(&other.0);
    }

    pub fn difference_with(&mut self, other: &BlockSet) {
        self.0.difference_with(&other.0);
    }

    pub fn is_subset(&self, other: &BlockSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = BlockIdx> + '_ {
        self.0.ones()
    }

    /// Members of `self` not in `other`.
    pub fn difference<'a>(&'a self, other: &'a BlockSet) -> impl Iterator<Item = BlockIdx> + 'a {
        self.0.difference(&other.0)
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }
}

impl PartialEq for BlockSet {
    fn eq(&self, other: &Self) -> bool {
        self.is_subset(other) && other.is_subset(self)
    }
}

impl Eq for BlockSet {}

impl FromIterator<BlockIdx> for BlockSet {
    fn from_iter<T: IntoIterator<Item = BlockIdx>>(iter: T) -> Self {
        let mut s = BlockSet::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for BlockSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_lengths() {
        let small: BlockSet = [1, 3].into_iter().collect();
        let big: BlockSet = [1, 3, 700].into_iter().collect();
        assert!(small.is_subset(&big));
        assert!(!big.is_subset(&small));
        assert_eq!(big.difference(&small).collect::<Vec<_>>(), vec![700]);
        let mut u = small.clone();
        u.union_with(&big);
        assert_eq!(u, big);
        assert_eq!(u.len(), 3);
        let mut d = big.clone();
        d.difference_with(&small);
        assert_eq!(d.iter().collect::<Vec<_>>(), vec![700]);
        assert!(BlockSet::new().is_empty());
        assert_eq!(BlockSet::new(), BlockSet::singleton(5).difference(&BlockSet::singleton(5)).collect());
    }

    #[test]
    fn insert_reports_novelty() {
        let mut s = BlockSet::new();
        assert!(s.insert(10));
        assert!(!s.insert(10));
        assert!(s.contains(10));
        assert!(!s.contains(100_000));
    }
}
