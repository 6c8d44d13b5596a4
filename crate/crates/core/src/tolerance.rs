//! Exact crash-tolerance thresholds.
//!
//! For a bag `L` over `n` processes, the threshold is the largest `t` such
//! that every two process sets `P`, `P'` of size `n - t` either intersect or
//! are bridged by some `S_i` holding a member of each. With `n - t = 0` the
//! two empty sets neither intersect nor are bridged, so `t <= n - 1`.
//!
//! Three routes compute it:
//!
//! - [`t_direct`] enumerates every pair of `(n - t)`-subsets against the bag.
//! - [`t_bridge`] searches the [`BridgeGraph`] for the largest pair of equal,
//!   disjoint, mutually non-adjacent sides.
//! - [`t_uniform`] enumerates pairs against `G²` for a graph-induced system.
//!
//! The first two must agree on every bag, and the third must agree with the
//! first on `G.induce_uniform()`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{Bag, Graph};
use crate::procset::{k_subsets, ProcSet};

/// Largest `n` the exhaustive routes accept by default.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 14;

/// Default node budget for the [`t_bridge`] search.
pub const DEFAULT_SEARCH_BUDGET: u64 = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToleranceError {
    #[error("n = {n} exceeds the exhaustive limit of {limit}; use the bridge method")]
    TooLarge { n: usize, limit: usize },
    #[error("bridge search exceeded its budget of {budget} nodes")]
    BudgetExceeded { budget: u64 },
}

/// Two disjoint process sets that are neither intersecting nor bridged.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Witness {
    pub p: ProcSet,
    pub p_prime: ProcSet,
}

impl Witness {
    fn ordered(a: ProcSet, b: ProcSet) -> Witness {
        if a.lex_cmp(b).is_le() {
            Witness { p: a, p_prime: b }
        } else {
            Witness { p: b, p_prime: a }
        }
    }

    /// Whether this pair shows that `bag` cannot tolerate `t` crashes:
    /// both sides have size `n - t`, they are disjoint, and no `S_i` meets
    /// both.
    pub fn refutes(&self, bag: &Bag, t: usize) -> bool {
        let Some(k) = bag.n().checked_sub(t) else {
            return false;
        };
        k >= 1
            && self.p.len() == k
            && self.p_prime.len() == k
            && self.p.is_subset(bag.processes())
            && self.p_prime.is_subset(bag.processes())
            && !self.p.intersects(self.p_prime)
            && !bag.bridges(self.p, self.p_prime)
    }
}

/// A threshold `t` together with a pair refuting `t + 1`, when one exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToleranceResult {
    pub t: usize,
    pub witness: Option<Witness>,
}

/// `⌊(n - 1) / 2⌋`, the pure message-passing threshold and a floor for every
/// bag.
pub fn lower_bound_floor(n: usize) -> usize {
    n.saturating_sub(1) / 2
}

/// Lexicographically smallest pair of `k`-subsets that neither intersect nor
/// satisfy `linked`; pairs are visited once each.
pub(crate) fn first_unlinked_pair<F>(n: usize, k: usize, linked: F) -> Option<Witness>
where
    F: Fn(ProcSet, ProcSet) -> bool,
{
    let subsets = k_subsets(ProcSet::full(n), k);
    for (i, &a) in subsets.iter().enumerate() {
        for &b in &subsets[i + 1..] {
            if !a.intersects(b) && !linked(a, b) {
                return Some(Witness { p: a, p_prime: b });
            }
        }
    }
    None
}

fn exhaustive<F>(n: usize, limit: usize, linked: F) -> Result<ToleranceResult, ToleranceError>
where
    F: Fn(ProcSet, ProcSet) -> bool,
{
    if n > limit {
        return Err(ToleranceError::TooLarge { n, limit });
    }
    // t = n always fails, with no witness to show for it
    let mut refuting_next: Option<Witness> = None;
    for t in (0..n).rev() {
        match first_unlinked_pair(n, n - t, &linked) {
            None => return Ok(ToleranceResult { t, witness: refuting_next }),
            Some(w) => refuting_next = Some(w),
        }
    }
    unreachable!("t = 0 always holds: the only n-subset intersects itself")
}

/// Threshold by exhaustive enumeration of subset pairs against the bag.
pub fn t_direct(bag: &Bag) -> Result<ToleranceResult, ToleranceError> {
    t_direct_with_limit(bag, DEFAULT_EXHAUSTIVE_LIMIT)
}

pub fn t_direct_with_limit(bag: &Bag, limit: usize) -> Result<ToleranceResult, ToleranceError> {
    exhaustive(bag.n(), limit, |a, b| bag.bridges(a, b))
}

/// Threshold of the uniform system induced by `g`, using `G²` adjacency as
/// the bridging test.
pub fn t_uniform(g: &Graph) -> Result<ToleranceResult, ToleranceError> {
    t_uniform_with_limit(g, DEFAULT_EXHAUSTIVE_LIMIT)
}

pub fn t_uniform_with_limit(g: &Graph, limit: usize) -> Result<ToleranceResult, ToleranceError> {
    let square = g.square();
    exhaustive(g.n(), limit, |a, b| a.iter().any(|u| square.neighbors(u).intersects(b)))
}

/// `p ~ q` iff `p != q` and some `S_i` holds both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BridgeGraph {
    n: usize,
    adj: Vec<ProcSet>,
}

impl BridgeGraph {
    pub fn from_bag(bag: &Bag) -> Self {
        let mut adj = alloc::vec![ProcSet::EMPTY; bag.n()];
        for s in bag.sets() {
            for p in s.iter() {
                adj[p.index0()] = adj[p.index0()].union(s.difference(ProcSet::singleton(p)));
            }
        }
        BridgeGraph { n: bag.n(), adj }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, p: crate::ProcessId) -> ProcSet {
        self.adj[p.index0()]
    }

    /// As an ordinary [`Graph`], for edge listings.
    pub fn to_graph(&self) -> Graph {
        let edges: Vec<(u32, u32)> = ProcSet::full(self.n)
            .iter()
            .flat_map(|u| {
                self.adj[u.index0()]
                    .iter()
                    .filter(move |v| u < *v)
                    .map(move |v| (u.get(), v.get()))
            })
            .collect();
        Graph::new(self.n, &edges).expect("bridge graph is simple")
    }

    /// Largest `s` with two disjoint `s`-sets and no edge between them,
    /// plus one such pair. `s = 0` when the graph is complete.
    ///
    /// A side `A` leaves room for any partner inside `V \ N[A]`, so
    /// `s* = max_A min(|A|, n - |N[A]|)`. Sides grow in index order; a branch
    /// is cut once neither its size nor its free room can beat the best.
    pub fn max_anticomplete_pair(&self, budget: u64) -> Result<(usize, Option<Witness>), ToleranceError> {
        let mut search = SideSearch {
            graph: self,
            budget,
            nodes: 0,
            best: 0,
            best_pair: None,
        };
        search.grow(0, ProcSet::EMPTY, ProcSet::EMPTY)?;
        Ok((search.best, search.best_pair))
    }
}

struct SideSearch<'a> {
    graph: &'a BridgeGraph,
    budget: u64,
    nodes: u64,
    best: usize,
    best_pair: Option<Witness>,
}

impl SideSearch<'_> {
    fn grow(&mut self, next: usize, side: ProcSet, closed: ProcSet) -> Result<(), ToleranceError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(ToleranceError::BudgetExceeded { budget: self.budget });
        }
        let n = self.graph.n;
        let room = n - closed.len();
        let value = side.len().min(room);
        if value > self.best {
            let free = ProcSet::full(n).difference(closed);
            self.best = value;
            self.best_pair = Some(Witness::ordered(side.take_smallest(value), free.take_smallest(value)));
        }
        if side.len() + (n - next) <= self.best || room <= self.best {
            return Ok(());
        }
        for u in next..n {
            let p = crate::ProcessId::from_index0(u);
            let grown = closed.union(self.graph.adj[u]).union(ProcSet::singleton(p));
            if n - grown.len() <= self.best {
                continue;
            }
            self.grow(u + 1, side.union(ProcSet::singleton(p)), grown)?;
        }
        Ok(())
    }
}

/// Threshold via the bridge graph: `t = n - s* - 1`.
pub fn t_bridge(bag: &Bag) -> Result<ToleranceResult, ToleranceError> {
    t_bridge_with_budget(bag, DEFAULT_SEARCH_BUDGET)
}

pub fn t_bridge_with_budget(bag: &Bag, budget: u64) -> Result<ToleranceResult, ToleranceError> {
    let (s, witness) = BridgeGraph::from_bag(bag).max_anticomplete_pair(budget)?;
    Ok(ToleranceResult { t: bag.n() - s - 1, witness })
}
