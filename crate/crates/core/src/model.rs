//! Static topology of an m&m system.
//!
//! A system is a process set `{p_1, ..., p_n}` plus a bag `L = [S_1, ..., S_m]`
//! of non-empty sharing sets. For every `S_i` and every `p` in `S_i` there is
//! one SWMR register `R_i[p]`, written by `p` and readable by exactly `S_i`.
//! A uniform system is the special case induced by an undirected graph, with
//! `S_i` the closed neighbourhood of `p_i`.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::procset::{ProcSet, MAX_PROCESSES};

/// A 1-based process index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(u32);

impl ProcessId {
    /// Panics on 0 or on an index beyond [`MAX_PROCESSES`].
    pub fn new(index: u32) -> Self {
        assert!(
            index >= 1 && index as usize <= MAX_PROCESSES,
            "process index {index} out of range"
        );
        ProcessId(index)
    }

    pub(crate) fn from_index0(i: usize) -> Self {
        ProcessId(i as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based position, for array indexing.
    pub fn index0(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("a system needs at least one process")]
    NoProcesses,
    #[error("{0} processes exceeds the supported maximum of 64")]
    TooManyProcesses(usize),
    #[error("set S_{0} of the bag is empty")]
    EmptySet(usize),
    #[error("process {member} (in set S_{set}) is outside 1..={n}")]
    MemberOutOfRange { set: usize, member: u32, n: usize },
    #[error("edge endpoint {member} is outside 1..={n}")]
    EndpointOutOfRange { member: u32, n: usize },
    #[error("self-loop on process {0}")]
    SelfLoop(u32),
    #[error("writer {writer} is outside 1..={n}")]
    WriterOutOfRange { writer: u32, n: usize },
}

fn check_n(n: usize) -> Result<(), ModelError> {
    match n {
        0 => Err(ModelError::NoProcesses),
        n if n > MAX_PROCESSES => Err(ModelError::TooManyProcesses(n)),
        _ => Ok(()),
    }
}

/// The bag `L` of sharing sets. Order and duplicates are kept: register
/// identities depend on the position of each set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bag {
    n: usize,
    sets: Vec<ProcSet>,
}

impl Bag {
    /// Builds a bag from 1-based member lists.
    pub fn new(n: usize, sets: &[Vec<u32>]) -> Result<Self, ModelError> {
        check_n(n)?;
        let mut out = Vec::with_capacity(sets.len());
        for (i, members) in sets.iter().enumerate() {
            if members.is_empty() {
                return Err(ModelError::EmptySet(i + 1));
            }
            let mut set = ProcSet::EMPTY;
            for &m in members {
                if m == 0 || m as usize > n {
                    return Err(ModelError::MemberOutOfRange { set: i + 1, member: m, n });
                }
                set.insert(ProcessId(m));
            }
            out.push(set);
        }
        Ok(Bag { n, sets: out })
    }

    pub fn from_sets(n: usize, sets: Vec<ProcSet>) -> Result<Self, ModelError> {
        check_n(n)?;
        let universe = ProcSet::full(n);
        for (i, s) in sets.iter().enumerate() {
            if s.is_empty() {
                return Err(ModelError::EmptySet(i + 1));
            }
            if let Some(p) = s.difference(universe).first() {
                return Err(ModelError::MemberOutOfRange { set: i + 1, member: p.get(), n });
            }
        }
        Ok(Bag { n, sets })
    }

    /// `n` singletons: the pure message-passing system.
    pub fn singletons(n: usize) -> Result<Self, ModelError> {
        check_n(n)?;
        Ok(Bag {
            n,
            sets: ProcSet::full(n).iter().map(ProcSet::singleton).collect(),
        })
    }

    /// One set holding every process.
    pub fn full_sharing(n: usize) -> Result<Self, ModelError> {
        check_n(n)?;
        Ok(Bag { n, sets: alloc::vec![ProcSet::full(n)] })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sets(&self) -> &[ProcSet] {
        &self.sets
    }

    /// `S_i` for a 1-based `i`.
    pub fn set(&self, i: usize) -> ProcSet {
        self.sets[i - 1]
    }

    pub fn processes(&self) -> ProcSet {
        ProcSet::full(self.n)
    }

    pub fn covered(&self) -> ProcSet {
        self.sets.iter().fold(ProcSet::EMPTY, |acc, s| acc.union(*s))
    }

    /// Every process lies in some set.
    pub fn is_normalized(&self) -> bool {
        self.covered() == self.processes()
    }

    /// Appends `{p}` for every uncovered `p`, in index order. Existing sets
    /// keep their positions, so the operation is idempotent.
    pub fn normalize(&self) -> Bag {
        let missing = self.processes().difference(self.covered());
        let mut sets = self.sets.clone();
        sets.extend(missing.iter().map(ProcSet::singleton));
        Bag { n: self.n, sets }
    }

    /// Appends one more set; used to probe monotonicity of the threshold.
    pub fn with_set(&self, extra: ProcSet) -> Result<Bag, ModelError> {
        let mut sets = self.sets.clone();
        sets.push(extra);
        Bag::from_sets(self.n, sets)
    }

    /// Some `S_i` meets both `a` and `b`.
    pub fn bridges(&self, a: ProcSet, b: ProcSet) -> bool {
        self.sets.iter().any(|s| s.intersects(a) && s.intersects(b))
    }
}

/// An undirected simple graph over `p_1..p_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<ProcSet>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(u32, u32)]) -> Result<Self, ModelError> {
        check_n(n)?;
        let mut adj = alloc::vec![ProcSet::EMPTY; n];
        for &(u, v) in edges {
            for x in [u, v] {
                if x == 0 || x as usize > n {
                    return Err(ModelError::EndpointOutOfRange { member: x, n });
                }
            }
            if u == v {
                return Err(ModelError::SelfLoop(u));
            }
            adj[u as usize - 1].insert(ProcessId(v));
            adj[v as usize - 1].insert(ProcessId(u));
        }
        Ok(Graph { n, adj })
    }

    pub fn edgeless(n: usize) -> Result<Self, ModelError> {
        Graph::new(n, &[])
    }

    pub fn complete(n: usize) -> Result<Self, ModelError> {
        check_n(n)?;
        let full = ProcSet::full(n);
        let adj = full
            .iter()
            .map(|p| full.difference(ProcSet::singleton(p)))
            .collect();
        Ok(Graph { n, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N(p)`.
    pub fn neighbors(&self, p: ProcessId) -> ProcSet {
        self.adj[p.index0()]
    }

    /// `N⁺(p) = N(p) ∪ {p}`.
    pub fn closed_neighbors(&self, p: ProcessId) -> ProcSet {
        self.adj[p.index0()].union(ProcSet::singleton(p))
    }

    pub fn has_edge(&self, u: ProcessId, v: ProcessId) -> bool {
        self.adj[u.index0()].contains(v)
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(ProcessId, ProcessId)> {
        let mut out = Vec::new();
        for u in ProcSet::full(self.n) {
            for v in self.adj[u.index0()] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Unordered distinct pairs that are not edges, sorted.
    pub fn non_edges(&self) -> Vec<(ProcessId, ProcessId)> {
        let mut out = Vec::new();
        for u in ProcSet::full(self.n) {
            for v in ProcSet::full(self.n) {
                if u < v && !self.has_edge(u, v) {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// `G²`: `u ~ v` iff they are adjacent or share a neighbour.
    pub fn square(&self) -> Graph {
        let adj = ProcSet::full(self.n)
            .iter()
            .map(|u| {
                let two_hop = self
                    .neighbors(u)
                    .iter()
                    .fold(self.neighbors(u), |acc, k| acc.union(self.neighbors(k)));
                two_hop.difference(ProcSet::singleton(u))
            })
            .collect();
        Graph { n: self.n, adj }
    }

    /// The uniform bag `[N⁺(p_1), ..., N⁺(p_n)]`.
    pub fn induce_uniform(&self) -> Bag {
        Bag {
            n: self.n,
            sets: ProcSet::full(self.n).iter().map(|p| self.closed_neighbors(p)).collect(),
        }
    }
}

/// `R_i[p]`: the register of sharing set `i` (1-based) written by `owner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegisterId {
    pub set: usize,
    pub owner: ProcessId,
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}[{}]", self.set, self.owner)
    }
}

/// Register access rules, one entry per register in `(set, owner)` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessMaps {
    pub readable_by: Vec<(RegisterId, ProcSet)>,
    pub writable_by: Vec<(RegisterId, ProcessId)>,
}

/// A normalized bag, the designated writer of the emulated register, and the
/// derived shared registers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemSpec {
    bag: Bag,
    writer: ProcessId,
    registers: Vec<RegisterId>,
}

impl SystemSpec {
    /// Normalizes `bag` and derives its registers.
    pub fn new(bag: &Bag, writer: u32) -> Result<Self, ModelError> {
        let n = bag.n();
        if writer == 0 || writer as usize > n {
            return Err(ModelError::WriterOutOfRange { writer, n });
        }
        let bag = bag.normalize();
        let registers = bag
            .sets()
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |owner| RegisterId { set: i + 1, owner }))
            .collect();
        Ok(SystemSpec { bag, writer: ProcessId(writer), registers })
    }

    pub fn uniform(graph: &Graph, writer: u32) -> Result<Self, ModelError> {
        SystemSpec::new(&graph.induce_uniform(), writer)
    }

    pub fn n(&self) -> usize {
        self.bag.n()
    }

    pub fn bag(&self) -> &Bag {
        &self.bag
    }

    pub fn writer(&self) -> ProcessId {
        self.writer
    }

    /// Same system with a different designated writer.
    pub fn with_writer(&self, writer: ProcessId) -> SystemSpec {
        SystemSpec { writer, ..self.clone() }
    }

    pub fn processes(&self) -> ProcSet {
        self.bag.processes()
    }

    /// All registers, sorted by `(set, owner)`.
    pub fn registers(&self) -> &[RegisterId] {
        &self.registers
    }

    /// Dense position of `reg` in [`Self::registers`].
    pub fn register_index(&self, reg: RegisterId) -> Option<usize> {
        self.registers.binary_search(&reg).ok()
    }

    pub fn readable_by(&self, reg: RegisterId) -> ProcSet {
        self.bag.set(reg.set)
    }

    pub fn writable_by(&self, reg: RegisterId) -> ProcessId {
        reg.owner
    }

    pub fn can_read(&self, p: ProcessId, reg: RegisterId) -> bool {
        self.register_index(reg).is_some() && self.readable_by(reg).contains(p)
    }

    pub fn can_write(&self, p: ProcessId, reg: RegisterId) -> bool {
        self.register_index(reg).is_some() && reg.owner == p
    }

    /// `R_i[p]` for every `i` with `p ∈ S_i`.
    pub fn registers_owned_by(&self, p: ProcessId) -> Vec<RegisterId> {
        self.registers.iter().copied().filter(|r| r.owner == p).collect()
    }

    /// `R_i[q]` for every `i` with `p ∈ S_i` and every `q ∈ S_i`.
    pub fn registers_readable_by(&self, p: ProcessId) -> Vec<RegisterId> {
        self.registers
            .iter()
            .copied()
            .filter(|r| self.readable_by(*r).contains(p))
            .collect()
    }

    pub fn access_maps(&self) -> AccessMaps {
        AccessMaps {
            readable_by: self.registers.iter().map(|r| (*r, self.readable_by(*r))).collect(),
            writable_by: self.registers.iter().map(|r| (*r, r.owner)).collect(),
        }
    }
}

/// The five-process graph used as the running example: edges 1-2, 2-3, 3-4,
/// 3-5, 4-5.
pub fn example_graph() -> Graph {
    Graph::new(5, &[(1, 2), (2, 3), (3, 4), (3, 5), (4, 5)]).expect("valid graph")
}
