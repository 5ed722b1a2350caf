use std::fmt;

use serde::{Deserialize, Serialize};

/// A subset of a ground set of at most 64 elements, stored as a bit pattern.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemSet(pub u64);

pub const MAX_GROUND: usize = 64;

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);

    /// The full ground set `{0, .., n-1}`.
    pub fn full(n: usize) -> ItemSet {
        debug_assert!(n <= MAX_GROUND);
        if n >= 64 {
            ItemSet(u64::MAX)
        } else {
            ItemSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(e: usize) -> ItemSet {
        ItemSet(1u64 << e)
    }

    pub fn from_elements<I: IntoIterator<Item = usize>>(elems: I) -> ItemSet {
        ItemSet(elems.into_iter().fold(0u64, |acc, e| acc | (1u64 << e)))
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn contains(self, e: usize) -> bool {
        e < 64 && self.0 >> e & 1 == 1
    }

    #[inline]
    pub fn with(self, e: usize) -> ItemSet {
        ItemSet(self.0 | (1u64 << e))
    }

    #[inline]
    pub fn without(self, e: usize) -> ItemSet {
        ItemSet(self.0 & !(1u64 << e))
    }

    #[inline]
    pub fn union(self, other: ItemSet) -> ItemSet {
        ItemSet(self.0 | other.0)
    }

    #[inline]
    pub fn intersection(self, other: ItemSet) -> ItemSet {
        ItemSet(self.0 & other.0)
    }

    #[inline]
    pub fn is_subset_of(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Whether every element is below `n`.
    #[inline]
    pub fn within(self, n: usize) -> bool {
        self.is_subset_of(ItemSet::full(n))
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let e = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(e)
            }
        })
    }

    /// All subsets of `{0, .., n-1}` in increasing bit-pattern order.
    pub fn all_subsets(n: usize) -> impl Iterator<Item = ItemSet> {
        debug_assert!(n < 64);
        (0..1u64 << n).map(ItemSet)
    }
}

impl fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
