use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use itertools::Itertools;

use crate::error::{invalid, Result};

/// Largest ground set a subset mask can index.
pub const MAX_GROUND: usize = 31;

/// Subsets of `{0, .., m-1}` of size at most `dmax`, ordered by size and then
/// lexicographically. Subsets are bitmasks with element `i` at bit `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetBasis {
    m: usize,
    dmax: usize,
    subsets: Vec<u32>,
    /// `offsets[s]..offsets[s + 1]` is the index range of size-`s` subsets.
    offsets: Vec<usize>,
    index: HashMap<u32, usize>,
}

impl SubsetBasis {
    pub fn new(m: usize, dmax: usize) -> Result<Self> {
        if dmax > 4 {
            return invalid(format!("subset bases support dmax <= 4, got {dmax}"));
        }
        if dmax > m {
            return invalid(format!("dmax = {dmax} exceeds the ground set size m = {m}"));
        }
        if m > MAX_GROUND {
            return invalid(format!("ground set size {m} exceeds {MAX_GROUND}"));
        }
        let mut subsets = Vec::new();
        let mut offsets = vec![0];
        for size in 0..=dmax {
            for combo in (0..m).combinations(size) {
                subsets.push(combo.iter().fold(0u32, |acc, &i| acc | 1 << i));
            }
            offsets.push(subsets.len());
        }
        let index = subsets.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Ok(Self { m, dmax, subsets, offsets, index })
    }

    /// Process-wide shared instance.
    pub fn shared(m: usize, dmax: usize) -> Result<Arc<SubsetBasis>> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<SubsetBasis>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(b) = cache.lock().expect("basis cache poisoned").get(&(m, dmax)) {
            return Ok(b.clone());
        }
        let b = Arc::new(SubsetBasis::new(m, dmax)?);
        cache.lock().expect("basis cache poisoned").insert((m, dmax), b.clone());
        Ok(b)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dmax(&self) -> usize {
        self.dmax
    }

    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn subset(&self, i: usize) -> u32 {
        self.subsets[i]
    }

    pub fn index_of(&self, mask: u32) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    /// Index range of the subsets of size `s`.
    pub fn size_range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn size_of(&self, i: usize) -> usize {
        self.subsets[i].count_ones() as usize
    }

    /// Sorted element list of the `i`-th subset.
    pub fn elements(&self, i: usize) -> Vec<usize> {
        mask_elements(self.subsets[i])
    }
}

pub fn mask_elements(mask: u32) -> Vec<usize> {
    (0..32).filter(|b| mask >> b & 1 == 1).collect()
}

pub fn elements_mask(elements: &[usize]) -> u32 {
    elements.iter().fold(0, |acc, &i| acc | 1 << i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_order() {
        assert_eq!(SubsetBasis::new(4, 4).unwrap().len(), 16);
        assert_eq!(SubsetBasis::new(15, 4).unwrap().len(), 1941);
        let b = SubsetBasis::new(4, 2).unwrap();
        assert_eq!(b.subset(0), 0);
        let pairs: Vec<Vec<usize>> = b.size_range(2).map(|i| b.elements(i)).collect();
        assert_eq!(pairs, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert!(SubsetBasis::new(3, 4).is_err());
    }

    #[test]
    fn index_round_trip() {
        for m in 4..=12 {
            let b = SubsetBasis::new(m, 4).unwrap();
            for i in 0..b.len() {
                assert_eq!(b.index_of(b.subset(i)), Some(i));
            }
        }
    }
}
