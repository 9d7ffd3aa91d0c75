//! The hierarchical belief set shared by speaker and listener.
//!
//! Beliefs are addressed two ways: by [`BeliefId`] (1-based level and
//! index, as written in scenario files) and by a flat index into the whole
//! set, which is what [`BeliefMask`] bits refer to. Flat indices run level by
//! level, so level 1 occupies the lowest bits.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Hard limit on the total number of beliefs; masks are a single `u64`.
pub const MAX_BELIEFS: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeliefId {
    pub level: usize,
    pub index: usize,
}

impl BeliefId {
    pub const fn new(level: usize, index: usize) -> Self {
        Self { level, index }
    }
}

impl fmt::Display for BeliefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}.{}", self.level, self.index)
    }
}

/// A set of beliefs stored as bits over flat belief indices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BeliefMask(pub u64);

impl BeliefMask {
    pub const EMPTY: BeliefMask = BeliefMask(0);

    pub fn single(flat: usize) -> Self {
        BeliefMask(1u64 << flat)
    }

    pub fn from_flat<I: IntoIterator<Item = usize>>(flat: I) -> Self {
        BeliefMask(flat.into_iter().fold(0u64, |m, i| m | (1u64 << i)))
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, flat: usize) -> bool {
        self.0 & (1u64 << flat) != 0
    }

    pub fn with(self, flat: usize) -> Self {
        BeliefMask(self.0 | (1u64 << flat))
    }

    pub fn union(self, other: BeliefMask) -> Self {
        BeliefMask(self.0 | other.0)
    }

    pub fn intersection(self, other: BeliefMask) -> Self {
        BeliefMask(self.0 & other.0)
    }

    pub fn difference(self, other: BeliefMask) -> Self {
        BeliefMask(self.0 & !other.0)
    }

    pub fn is_subset(self, other: BeliefMask) -> bool {
        self.0 & !other.0 == 0
    }

    /// Flat indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

/// Leveled belief set with per-belief transmission and inference costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    /// `tx_cost[k][u]` is the speaker cost of belief `(k+1, u+1)`.
    tx_cost: Vec<Vec<f64>>,
    infer_cost: Vec<Vec<f64>>,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl BeliefSet {
    pub fn new(tx_cost: Vec<Vec<f64>>, infer_cost: Vec<Vec<f64>>) -> Result<Self> {
        if tx_cost.len() != infer_cost.len() {
            return Err(Error::Config("cost tables disagree on the number of levels".into()));
        }
        for (k, (t, i)) in tx_cost.iter().zip(&infer_cost).enumerate() {
            if t.is_empty() {
                return Err(Error::Config(format!("level {} has no beliefs", k + 1)));
            }
            if t.len() != i.len() {
                return Err(Error::Config(format!("level {} cost tables differ in size", k + 1)));
            }
            if t.iter().chain(i).any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(Error::Config(format!("level {} has a non-positive cost", k + 1)));
            }
        }
        let mut set = BeliefSet { tx_cost, infer_cost, offsets: Vec::new() };
        set.rebuild_offsets();
        if set.total_count() > MAX_BELIEFS {
            return Err(Error::Config(format!(
                "{} beliefs exceed the supported maximum of {MAX_BELIEFS}",
                set.total_count()
            )));
        }
        Ok(set)
    }

    pub(crate) fn rebuild_offsets(&mut self) {
        let mut offsets = vec![0];
        for lvl in &self.tx_cost {
            offsets.push(offsets.last().unwrap() + lvl.len());
        }
        self.offsets = offsets;
    }

    /// Number of levels `K`.
    pub fn levels(&self) -> usize {
        self.tx_cost.len()
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.tx_cost[level - 1].len()
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.tx_cost.iter().map(Vec::len).collect()
    }

    /// Total number of beliefs `B`.
    pub fn total_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn contains(&self, id: BeliefId) -> bool {
        id.level >= 1 && id.level <= self.levels() && id.index >= 1 && id.index <= self.level_size(id.level)
    }

    pub fn flat(&self, id: BeliefId) -> usize {
        debug_assert!(self.contains(id), "{id} not in belief set");
        self.offsets[id.level - 1] + id.index - 1
    }

    pub fn id(&self, flat: usize) -> BeliefId {
        let level = self.offsets.partition_point(|&o| o <= flat);
        BeliefId::new(level, flat - self.offsets[level - 1] + 1)
    }

    pub fn level_of(&self, flat: usize) -> usize {
        self.offsets.partition_point(|&o| o <= flat)
    }

    /// All beliefs of one level as a mask.
    pub fn level_mask(&self, level: usize) -> BeliefMask {
        let lo = self.offsets[level - 1];
        let hi = self.offsets[level];
        BeliefMask::from_flat(lo..hi)
    }

    pub fn all(&self) -> BeliefMask {
        BeliefMask::from_flat(0..self.total_count())
    }

    pub fn ids(&self) -> impl Iterator<Item = BeliefId> + '_ {
        (0..self.total_count()).map(|f| self.id(f))
    }

    pub fn tx_cost(&self, id: BeliefId) -> f64 {
        self.tx_cost[id.level - 1][id.index - 1]
    }

    pub fn infer_cost(&self, id: BeliefId) -> f64 {
        self.infer_cost[id.level - 1][id.index - 1]
    }

    pub fn tx_cost_flat(&self, flat: usize) -> f64 {
        self.tx_cost(self.id(flat))
    }

    pub fn infer_cost_flat(&self, flat: usize) -> f64 {
        self.infer_cost(self.id(flat))
    }

    /// Sum of speaker costs over a mask, accumulated in flat-index order.
    pub fn tx_cost_of(&self, mask: BeliefMask) -> f64 {
        mask.iter().map(|f| self.tx_cost_flat(f)).sum()
    }

    pub fn infer_cost_of(&self, mask: BeliefMask) -> f64 {
        mask.iter().map(|f| self.infer_cost_flat(f)).sum()
    }

    pub fn tx_costs(&self) -> &[Vec<f64>] {
        &self.tx_cost
    }

    pub fn infer_costs(&self) -> &[Vec<f64>] {
        &self.infer_cost
    }

    /// Multiplies every cost by `factor`.
    pub fn scaled(&self, factor: f64) -> BeliefSet {
        let scale = |t: &Vec<Vec<f64>>| t.iter().map(|l| l.iter().map(|c| c * factor).collect()).collect();
        let mut out = BeliefSet {
            tx_cost: scale(&self.tx_cost),
            infer_cost: scale(&self.infer_cost),
            offsets: Vec::new(),
        };
        out.rebuild_offsets();
        out
    }

    pub fn mask_of(&self, ids: &[BeliefId]) -> BeliefMask {
        BeliefMask::from_flat(ids.iter().map(|&id| self.flat(id)))
    }

    pub fn ids_of(&self, mask: BeliefMask) -> Vec<BeliefId> {
        mask.iter().map(|f| self.id(f)).collect()
    }

    /// Per-level occupancy counts of a mask (index 0 is level 1).
    pub fn occupancy(&self, mask: BeliefMask) -> Vec<u32> {
        (1..=self.levels())
            .map(|k| mask.intersection(self.level_mask(k)).len())
            .collect()
    }

    /// Number of levels a structurally valid mask spans.
    pub fn depth(&self, mask: BeliefMask) -> usize {
        mask.len() as usize
    }

    pub fn format_mask(&self, mask: BeliefMask) -> String {
        let parts: Vec<String> = self.ids_of(mask).iter().map(ToString::to_string).collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// True iff `d` holds at most one belief per level and its occupied levels
/// form a prefix `1..=k` (the hierarchy constraints on a completed
/// description). The empty set is trivially valid; beliefs outside the set
/// make the description invalid.
pub fn validate_descriptor_structure(d: &[BeliefId], bs: &BeliefSet) -> bool {
    if d.iter().any(|&b| !bs.contains(b)) {
        return false;
    }
    validate_mask(bs.mask_of(d), bs)
}

/// Mask form of [`validate_descriptor_structure`].
pub fn validate_mask(mask: BeliefMask, bs: &BeliefSet) -> bool {
    if mask.difference(bs.all()) != BeliefMask::EMPTY {
        return false;
    }
    let occ = bs.occupancy(mask);
    let mut gap = false;
    for c in occ {
        if c > 1 {
            return false;
        }
        if c == 0 {
            gap = true;
        } else if gap {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_3_4_5() -> BeliefSet {
        let tx: Vec<Vec<f64>> = [3, 4, 5].iter().enumerate().map(|(k, &n)| vec![k as f64 + 1.5; n]).collect();
        let inf = tx.iter().map(|l| l.iter().map(|c| c / 2.0).collect()).collect();
        BeliefSet::new(tx, inf).unwrap()
    }

    #[test]
    fn flat_round_trip() {
        let bs = set_3_4_5();
        assert_eq!(bs.total_count(), 12);
        for f in 0..12 {
            assert_eq!(bs.flat(bs.id(f)), f);
        }
        assert_eq!(bs.id(3), BeliefId::new(2, 1));
        assert_eq!(bs.level_of(11), 3);
    }

    #[test]
    fn prefix_pair_is_valid() {
        let bs = set_3_4_5();
        assert!(validate_descriptor_structure(&[BeliefId::new(1, 1), BeliefId::new(2, 3)], &bs));
    }

    #[test]
    fn two_beliefs_one_level_rejected() {
        let bs = set_3_4_5();
        assert!(!validate_descriptor_structure(&[BeliefId::new(1, 1), BeliefId::new(1, 2)], &bs));
    }

    #[test]
    fn missing_parent_level_rejected() {
        let bs = set_3_4_5();
        assert!(!validate_descriptor_structure(&[BeliefId::new(2, 1)], &bs));
        assert!(!validate_descriptor_structure(
            &[BeliefId::new(1, 1), BeliefId::new(3, 1)],
            &bs
        ));
    }

    #[test]
    fn unknown_belief_rejected() {
        let bs = set_3_4_5();
        assert!(!validate_descriptor_structure(&[BeliefId::new(1, 4)], &bs));
        assert!(!validate_descriptor_structure(&[BeliefId::new(4, 1)], &bs));
    }

    #[test]
    fn non_positive_cost_is_a_config_error() {
        assert!(BeliefSet::new(vec![vec![0.0]], vec![vec![1.0]]).is_err());
        assert!(BeliefSet::new(vec![vec![]], vec![vec![]]).is_err());
    }

    #[test]
    fn mask_iteration_is_sorted() {
        let m = BeliefMask::from_flat([7, 2, 40]);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![2, 7, 40]);
        assert_eq!(m.len(), 3);
    }
}
