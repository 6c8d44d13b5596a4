//! The schedule that breaks the emulation above the threshold.
//!
//! For `t` beyond the threshold there are disjoint sets `P`, `P'` of size
//! `n - t` that no sharing set bridges. With a quorum of `n - t`:
//!
//! 1. the writer (in `P`) completes a write hearing only from `P`, while
//!    every message towards `P' ∪ Q` is held back;
//! 2. a reader in `P'` then completes a read hearing only from `P'`, while
//!    every message from `P ∪ Q` is held back. Nothing `P` wrote is readable
//!    by `P'`, so the read returns the initial value;
//! 3. the held messages are released and the run drains.
//!
//! No process crashes. The write precedes the read and the read returns the
//! initial value, which the checker rejects.

use alloc::vec::Vec;

use thiserror::Error;

use crate::checker::{check_property1, CheckError, PropertyId, Verdict};
use crate::history::{EventKind, OpKind, Trace};
use crate::model::{Bag, ProcessId, SystemSpec};
use crate::procset::{k_subsets, ProcSet};
use crate::protocol::{MsgId, TaggedValue, Threshold};
use crate::sim::{self, Outcome, ScriptEvent, Schedule, SimError, WorkloadOp};
use crate::tolerance::{t_bridge, ToleranceError};

/// Payload written in the constructed execution.
pub const WRITTEN_PAYLOAD: &str = "v";

/// `P`, `P'` and the rest `Q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WitnessPartition {
    pub p: ProcSet,
    pub p_prime: ProcSet,
    pub q: ProcSet,
}

impl WitnessPartition {
    fn new(n: usize, p: ProcSet, p_prime: ProcSet) -> Self {
        WitnessPartition { p, p_prime, q: ProcSet::full(n).difference(p.union(p_prime)) }
    }

    fn swapped(self) -> Self {
        WitnessPartition { p: self.p_prime, p_prime: self.p, q: self.q }
    }

    /// Sides of size `n - t`, disjoint, unbridged, and covering `Π` with `Q`.
    pub fn is_valid(&self, bag: &Bag, t: usize) -> bool {
        let n = bag.n();
        let k = match n.checked_sub(t) {
            Some(k) if k >= 1 => k,
            _ => return false,
        };
        self.p.len() == k
            && self.p_prime.len() == k
            && !self.p.intersects(self.p_prime)
            && !self.q.intersects(self.p.union(self.p_prime))
            && self.p.union(self.p_prime).union(self.q) == ProcSet::full(n)
            && !bag.bridges(self.p, self.p_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LowerBoundError {
    #[error("t = {t} ≤ t_L = {t_l}: the system tolerates {t} crashes, there is nothing to break")]
    NotAboveThreshold { t: usize, t_l: usize },
    #[error("t = {t} must be below n = {n}")]
    TooManyCrashes { t: usize, n: usize },
    #[error("writer {0} is not in P")]
    WriterNotInP(ProcessId),
    #[error("witness sides must have size n - t = {expected}")]
    SideSize { expected: usize },
    #[error("witness sides intersect or are bridged")]
    InvalidWitness,
    #[error(transparent)]
    Tolerance(#[from] ToleranceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

fn check_t(bag: &Bag, t: usize) -> Result<usize, LowerBoundError> {
    let n = bag.n();
    if t >= n {
        return Err(LowerBoundError::TooManyCrashes { t, n });
    }
    let t_l = t_bridge(bag)?.t;
    if t <= t_l {
        return Err(LowerBoundError::NotAboveThreshold { t, t_l });
    }
    Ok(t_l)
}

/// Every witness for `t`, lexicographically ordered with `P < P'`.
pub fn all_witnesses(bag: &Bag, t: usize) -> Result<Vec<WitnessPartition>, LowerBoundError> {
    check_t(bag, t)?;
    let n = bag.n();
    let subsets = k_subsets(ProcSet::full(n), n - t);
    let mut out = Vec::new();
    for (i, &a) in subsets.iter().enumerate() {
        for &b in &subsets[i + 1..] {
            if !a.intersects(b) && !bag.bridges(a, b) {
                out.push(WitnessPartition::new(n, a, b));
            }
        }
    }
    Ok(out)
}

/// The lexicographically smallest witness for `t`.
pub fn find_witness(bag: &Bag, t: usize) -> Result<WitnessPartition, LowerBoundError> {
    check_t(bag, t)?;
    let n = bag.n();
    let w = crate::tolerance::first_unlinked_pair(n, n - t, |a, b| bag.bridges(a, b))
        .expect("a witness exists above the threshold");
    Ok(WitnessPartition::new(n, w.p, w.p_prime))
}

/// The smallest witness with `writer` on one side, oriented so that the
/// writer is in `P`. `None` if the writer shares a set with every candidate
/// partner.
pub fn find_witness_for_writer(
    bag: &Bag,
    t: usize,
    writer: ProcessId,
) -> Result<Option<WitnessPartition>, LowerBoundError> {
    Ok(all_witnesses(bag, t)?.into_iter().find_map(|w| {
        if w.p.contains(writer) {
            Some(w)
        } else if w.p_prime.contains(writer) {
            Some(w.swapped())
        } else {
            None
        }
    }))
}

/// The constructed execution, ready for the simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsolatingRun {
    pub threshold: Threshold,
    pub workload: Vec<WorkloadOp>,
    pub schedule: Schedule,
    pub reader: ProcessId,
    /// Script length of the write phase; the read phase follows.
    pub write_phase_len: usize,
}

/// Workload op ids in [`IsolatingRun::workload`].
pub const WRITE_OP: usize = 0;
pub const READ_OP: usize = 1;

struct ScriptBuilder {
    script: Vec<ScriptEvent>,
    sent: Vec<u64>,
    n: usize,
}

impl ScriptBuilder {
    fn next_id(&mut self, p: ProcessId) -> MsgId {
        let id = MsgId { sender: p, seq: self.sent[p.index0()] };
        self.sent[p.index0()] += 1;
        id
    }

    /// The ids a fan-out from `p` uses, indexed by recipient.
    fn fan_out(&mut self, p: ProcessId) -> Vec<MsgId> {
        (0..self.n).map(|_| self.next_id(p)).collect()
    }

    /// Delivers `sender`'s requests to each member of `side`, runs each
    /// handler for `handler_steps(member)` register steps, and then delivers
    /// all the acknowledgments back to `sender`.
    fn round_trip(&mut self, sender: ProcessId, requests: &[MsgId], side: ProcSet, handler_steps: impl Fn(ProcessId) -> usize) {
        let mut acks = Vec::new();
        for p in side {
            self.script.push(ScriptEvent::Deliver { msg: requests[p.index0()] });
            for _ in 0..handler_steps(p) + 1 {
                self.script.push(ScriptEvent::Step { process: p });
            }
            acks.push(self.next_id(p));
        }
        debug_assert!(acks.iter().all(|a| a.sender != sender || side.contains(sender)));
        for msg in acks {
            self.script.push(ScriptEvent::Deliver { msg });
        }
    }
}

/// Scripts the two isolated phases against a quorum of `n - t`; the
/// simulator's FIFO tail then releases every held message.
///
/// The script pins down every step, so it encodes how handlers behave: in
/// the write phase each register owned by `P` is read and then overwritten
/// (all registers still hold sequence number 0); in the read phase handlers
/// in `P'` only read, since the write-back of the initial value never passes
/// the guard.
pub fn build_e3(spec: &SystemSpec, t: usize, witness: &WitnessPartition) -> Result<IsolatingRun, LowerBoundError> {
    let n = spec.n();
    if t >= n {
        return Err(LowerBoundError::TooManyCrashes { t, n });
    }
    let k = n - t;
    if witness.p.len() != k || witness.p_prime.len() != k {
        return Err(LowerBoundError::SideSize { expected: k });
    }
    if !witness.is_valid(spec.bag(), t) {
        return Err(LowerBoundError::InvalidWitness);
    }
    let writer = spec.writer();
    if !witness.p.contains(writer) {
        return Err(LowerBoundError::WriterNotInP(writer));
    }
    let reader = witness.p_prime.first().expect("non-empty side");
    let threshold = Threshold::tolerating(n, t).map_err(SimError::from)?;
    let workload = alloc::vec![
        WorkloadOp::write(writer, WRITTEN_PAYLOAD, 0),
        WorkloadOp::read(reader, 0),
    ];

    let mut b = ScriptBuilder { script: Vec::new(), sent: alloc::vec![0; n], n };
    // write phase: only P moves
    b.script.push(ScriptEvent::Invoke { op: WRITE_OP });
    let w_msgs = b.fan_out(writer);
    b.round_trip(writer, &w_msgs, witness.p, |p| 2 * spec.registers_owned_by(p).len());
    let write_phase_len = b.script.len();

    // read phase: only P' moves
    b.script.push(ScriptEvent::Invoke { op: READ_OP });
    let r_msgs = b.fan_out(reader);
    b.round_trip(reader, &r_msgs, witness.p_prime, |p| spec.registers_readable_by(p).len());
    let wb_msgs = b.fan_out(reader);
    b.round_trip(reader, &wb_msgs, witness.p_prime, |p| spec.registers_owned_by(p).len());

    Ok(IsolatingRun { threshold, workload, schedule: Schedule::scripted(b.script), reader, write_phase_len })
}

/// Whether every register written by `P` before `until` is unreadable by
/// `P'`.
pub fn isolation_holds(spec: &SystemSpec, witness: &WitnessPartition, trace: &Trace, until: u64) -> bool {
    trace.events.iter().take_while(|e| e.step <= until).all(|e| match &e.kind {
        EventKind::RegWrite { process, reg, .. } if witness.p.contains(*process) => {
            !spec.readable_by(*reg).intersects(witness.p_prime)
        }
        _ => true,
    })
}

/// Everything the pipeline produced.
#[derive(Clone, Debug)]
pub struct DemoReport {
    pub t: usize,
    pub t_l: usize,
    pub witness: WitnessPartition,
    pub writer: ProcessId,
    /// The spec's writer could not be placed in any witness, so the write
    /// was handed to `writer` instead.
    pub writer_reassigned: bool,
    pub reader: ProcessId,
    pub outcome: Outcome,
    pub verdict: Verdict,
    pub crashes: usize,
    pub isolation_held: bool,
}

impl DemoReport {
    /// A crash-free run in which the checker rejects a read of the initial
    /// value that follows a completed write.
    pub fn certified(&self) -> bool {
        let h = &self.outcome.history;
        let (Some(w), Some(r)) = (h.op(WRITE_OP, OpKind::Write), h.op(READ_OP, OpKind::Read)) else {
            return false;
        };
        self.crashes == 0
            && self.isolation_held
            && w.precedes(r)
            && r.value == Some(TaggedValue::initial())
            && self.verdict.violations.iter().any(|v| {
                v.property == PropertyId::ReadsFromLatest && v.ops.contains(&WRITE_OP) && v.ops.contains(&READ_OP)
            })
    }
}

/// Witness, schedule, simulation and check, end to end.
pub fn demo(spec: &SystemSpec, t: usize) -> Result<DemoReport, LowerBoundError> {
    let bag = spec.bag();
    let t_l = check_t(bag, t)?;
    let (witness, writer, writer_reassigned) = match find_witness_for_writer(bag, t, spec.writer())? {
        Some(w) => (w, spec.writer(), false),
        None => {
            let w = find_witness(bag, t)?;
            (w, w.p.first().expect("non-empty side"), true)
        }
    };
    let spec = spec.with_writer(writer);
    let run = build_e3(&spec, t, &witness)?;
    let outcome = sim::run(&spec, run.threshold, &run.workload, &run.schedule)?;
    let verdict = check_property1(&outcome.history)?;
    let read_done = outcome
        .history
        .op(READ_OP, OpKind::Read)
        .and_then(|r| r.response_step)
        .unwrap_or(u64::MAX);
    let isolation_held = isolation_holds(&spec, &witness, &outcome.trace, read_done);
    Ok(DemoReport {
        t,
        t_l,
        witness,
        writer,
        writer_reassigned,
        reader: run.reader,
        crashes: outcome.trace.crashed().len(),
        outcome,
        verdict,
        isolation_held,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_graph;

    fn set(ids: &[u32]) -> ProcSet {
        ids.iter().map(|&i| ProcessId::new(i)).collect()
    }

    #[test]
    fn witness_for_example_system() {
        let bag = example_graph().induce_uniform();
        let w = find_witness(&bag, 4).unwrap();
        assert_eq!((w.p, w.p_prime, w.q), (set(&[1]), set(&[4]), set(&[2, 3, 5])));
        assert!(w.is_valid(&bag, 4));
    }

    #[test]
    fn witness_for_singletons() {
        let bag = Bag::singletons(5).unwrap();
        let w = find_witness(&bag, 3).unwrap();
        assert_eq!((w.p, w.p_prime, w.q), (set(&[1, 2]), set(&[3, 4]), set(&[5])));
    }

    #[test]
    fn no_witness_at_or_below_threshold() {
        let bag = Bag::full_sharing(4).unwrap();
        assert_eq!(find_witness(&bag, 3), Err(LowerBoundError::NotAboveThreshold { t: 3, t_l: 3 }));
        let fig = example_graph().induce_uniform();
        assert_eq!(find_witness(&fig, 3), Err(LowerBoundError::NotAboveThreshold { t: 3, t_l: 3 }));
        assert_eq!(find_witness(&fig, 5), Err(LowerBoundError::TooManyCrashes { t: 5, n: 5 }));
    }

    #[test]
    fn witness_oriented_around_writer() {
        let bag = Bag::singletons(5).unwrap();
        let w = find_witness_for_writer(&bag, 3, ProcessId::new(5)).unwrap().unwrap();
        assert!(w.p.contains(ProcessId::new(5)));
        assert!(w.is_valid(&bag, 3));
        // p3 shares a set with everyone in the example system at t = 4
        let fig = example_graph().induce_uniform();
        assert_eq!(find_witness_for_writer(&fig, 4, ProcessId::new(3)).unwrap(), None);
    }

    #[test]
    fn build_refuses_bad_inputs() {
        let spec = SystemSpec::uniform(&example_graph(), 4).unwrap();
        let w = find_witness(spec.bag(), 4).unwrap();
        assert_eq!(build_e3(&spec, 4, &w), Err(LowerBoundError::WriterNotInP(ProcessId::new(4))));
        let spec = spec.with_writer(ProcessId::new(1));
        assert_eq!(build_e3(&spec, 3, &w), Err(LowerBoundError::SideSize { expected: 2 }));
        let bridged = WitnessPartition::new(5, set(&[1]), set(&[2]));
        assert_eq!(build_e3(&spec, 4, &bridged), Err(LowerBoundError::InvalidWitness));
    }

    #[test]
    fn example_system_read_returns_initial_value() {
        let spec = SystemSpec::uniform(&example_graph(), 1).unwrap();
        let report = demo(&spec, 4).unwrap();
        assert_eq!(report.reader, ProcessId::new(4));
        assert!(!report.writer_reassigned);
        let read = report.outcome.history.op(READ_OP, OpKind::Read).unwrap();
        assert_eq!(read.value, Some(TaggedValue::initial()));
        assert!(report.certified(), "{report:?}");
        assert!(report.outcome.trace.is_quiescent());
    }

    #[test]
    fn demo_refused_at_threshold() {
        let spec = SystemSpec::uniform(&example_graph(), 1).unwrap();
        assert!(matches!(demo(&spec, 3), Err(LowerBoundError::NotAboveThreshold { t: 3, t_l: 3 })));
    }
}
