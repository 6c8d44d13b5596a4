//! Process sets as 64-bit masks.

use core::fmt;

use crate::model::ProcessId;

/// Largest supported process count.
pub const MAX_PROCESSES: usize = 64;

/// A set of processes; bit `i - 1` stands for `p_i`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ProcSet(u64);

impl ProcSet {
    pub const EMPTY: ProcSet = ProcSet(0);

    pub const fn from_bits(bits: u64) -> Self {
        ProcSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    /// `{p_1, ..., p_n}`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_PROCESSES);
        if n == MAX_PROCESSES {
            ProcSet(u64::MAX)
        } else {
            ProcSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(p: ProcessId) -> Self {
        ProcSet(1u64 << p.index0())
    }

    pub fn contains(self, p: ProcessId) -> bool {
        self.0 & (1u64 << p.index0()) != 0
    }

    pub fn insert(&mut self, p: ProcessId) -> bool {
        let fresh = !self.contains(p);
        self.0 |= 1u64 << p.index0();
        fresh
    }

    pub fn remove(&mut self, p: ProcessId) {
        self.0 &= !(1u64 << p.index0());
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 & other.0)
    }

    pub fn difference(self, other: ProcSet) -> ProcSet {
        ProcSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: ProcSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: ProcSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Smallest member, if any.
    pub fn first(self) -> Option<ProcessId> {
        if self.0 == 0 {
            None
        } else {
            Some(ProcessId::from_index0(self.0.trailing_zeros() as usize))
        }
    }

    /// The `k` smallest members.
    pub fn take_smallest(self, k: usize) -> ProcSet {
        self.iter().take(k).collect()
    }

    /// Members in ascending index order.
    pub fn iter(self) -> Iter {
        Iter(self.0)
    }

    /// Lexicographic comparison of the ascending member lists.
    pub fn lex_cmp(self, other: ProcSet) -> core::cmp::Ordering {
        self.iter().cmp(other.iter())
    }
}

impl FromIterator<ProcessId> for ProcSet {
    fn from_iter<I: IntoIterator<Item = ProcessId>>(iter: I) -> Self {
        let mut set = ProcSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl IntoIterator for ProcSet {
    type Item = ProcessId;
    type IntoIter = Iter;

    fn into_iter(self) -> Iter {
        self.iter()
    }
}

pub struct Iter(u64);

impl Iterator for Iter {
    type Item = ProcessId;

    fn next(&mut self) -> Option<ProcessId> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(ProcessId::from_index0(i))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let k = self.0.count_ones() as usize;
        (k, Some(k))
    }
}

impl ExactSizeIterator for Iter {}

impl fmt::Debug for ProcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|p| p.get())).finish()
    }
}

impl fmt::Display for ProcSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, p) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{p}")?;
        }
        f.write_str("}")
    }
}

/// Visits every `k`-element subset of `universe` in lexicographic order of
/// the ascending member lists.
///
/// Returns `false` if `visit` stopped the walk early.
pub fn for_each_k_subset<F>(universe: ProcSet, k: usize, mut visit: F) -> bool
where
    F: FnMut(ProcSet) -> bool,
{
    let members: alloc::vec::Vec<ProcessId> = universe.iter().collect();
    if k > members.len() {
        return true;
    }
    if k == 0 {
        return visit(ProcSet::EMPTY);
    }
    let mut idx: alloc::vec::Vec<usize> = (0..k).collect();
    loop {
        let set: ProcSet = idx.iter().map(|&i| members[i]).collect();
        if !visit(set) {
            return false;
        }
        // advance to the next combination
        let mut pos = k;
        loop {
            if pos == 0 {
                return true;
            }
            pos -= 1;
            if idx[pos] < members.len() - k + pos {
                break;
            }
        }
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All `k`-element subsets of `universe`, in lexicographic order.
pub fn k_subsets(universe: ProcSet, k: usize) -> alloc::vec::Vec<ProcSet> {
    let mut out = alloc::vec::Vec::new();
    for_each_k_subset(universe, k, |s| {
        out.push(s);
        true
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn set(ids: &[u32]) -> ProcSet {
        ids.iter().map(|&i| ProcessId::new(i)).collect()
    }

    #[test]
    fn k_subsets_are_lexicographic_and_complete() {
        let subs = k_subsets(ProcSet::full(4), 2);
        let lists: Vec<Vec<u32>> = subs
            .iter()
            .map(|s| s.iter().map(|p| p.get()).collect())
            .collect();
        assert_eq!(
            lists,
            [[1, 2], [1, 3], [1, 4], [2, 3], [2, 4], [3, 4]]
                .iter()
                .map(|l| l.to_vec())
                .collect::<Vec<_>>()
        );
        assert_eq!(k_subsets(ProcSet::full(6), 3).len(), 20);
        assert_eq!(k_subsets(ProcSet::full(3), 0), [ProcSet::EMPTY]);
        assert!(k_subsets(ProcSet::full(3), 4).is_empty());
    }

    #[test]
    fn lex_cmp_orders_member_lists() {
        use core::cmp::Ordering::*;
        assert_eq!(set(&[1, 4]).lex_cmp(set(&[2, 3])), Less);
        assert_eq!(set(&[1, 2]).lex_cmp(set(&[1, 2])), Equal);
        assert_eq!(set(&[3]).lex_cmp(set(&[1, 5])), Greater);
    }

    #[test]
    fn display_lists_members() {
        assert_eq!(alloc::format!("{}", set(&[1, 3, 5])), "{p1,p3,p5}");
        assert_eq!(alloc::format!("{}", ProcSet::EMPTY), "{}");
        assert_eq!(ProcSet::full(64).len(), 64);
    }
}
