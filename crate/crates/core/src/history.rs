//! Execution traces and the operation histories projected from them.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{ProcessId, RegisterId};
use crate::procset::ProcSet;
use crate::protocol::{Message, TaggedValue};

/// Position of an operation in the workload.
pub type OpId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Write,
    Read,
    /// The write-back inside a read. Not an operation of the emulated
    /// register; it carries the id of its read.
    WriteBack,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Write => "write",
            OpKind::Read => "read",
            OpKind::WriteBack => "write_back",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Invoke { op: OpId, kind: OpKind, process: ProcessId, value: Option<TaggedValue> },
    WriteBack { op: OpId, process: ProcessId, value: TaggedValue },
    Send { msg: Message },
    Deliver { msg: Message },
    RegRead { process: ProcessId, reg: RegisterId, value: TaggedValue },
    RegWrite { process: ProcessId, reg: RegisterId, value: TaggedValue },
    Crash { process: ProcessId },
    Respond { op: OpId, process: ProcessId, value: Option<TaggedValue> },
}

impl EventKind {
    /// The process taking the step.
    pub fn actor(&self) -> ProcessId {
        match self {
            EventKind::Invoke { process, .. }
            | EventKind::WriteBack { process, .. }
            | EventKind::RegRead { process, .. }
            | EventKind::RegWrite { process, .. }
            | EventKind::Crash { process }
            | EventKind::Respond { process, .. } => *process,
            EventKind::Send { msg } => msg.from(),
            EventKind::Deliver { msg } => msg.to,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Invoke { kind: OpKind::Read, .. } => "invoke_read",
            EventKind::Invoke { .. } => "invoke_write",
            EventKind::WriteBack { .. } => "write_back",
            EventKind::Send { .. } => "send",
            EventKind::Deliver { .. } => "deliver",
            EventKind::RegRead { .. } => "reg_read",
            EventKind::RegWrite { .. } => "reg_write",
            EventKind::Crash { .. } => "crash",
            EventKind::Respond { .. } => "respond",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: EventKind,
}

/// Static facts about the run that produced a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunInfo {
    pub n: usize,
    pub writer: ProcessId,
    pub ack_quorum: usize,
}

impl RunInfo {
    /// Crashes the configured quorum survives: `n - quorum`.
    pub fn tolerated(&self) -> usize {
        self.n - self.ack_quorum
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub info: RunInfo,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn crashed(&self) -> ProcSet {
        self.events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Crash { process } => Some(process),
                _ => None,
            })
            .collect()
    }

    /// True iff no message to a live process is in flight and no live
    /// process is part-way through a message handler.
    pub fn is_quiescent(&self) -> bool {
        quiescence(&self.events)
    }

    pub fn history(&self) -> Result<History, HistoryError> {
        History::project(&self.events)
    }
}

/// Quiescence of a (possibly truncated) event sequence.
pub fn quiescence(events: &[TraceEvent]) -> bool {
    let mut in_flight: BTreeMap<crate::protocol::MsgId, ProcessId> = BTreeMap::new();
    // requests taken off the network minus acknowledgments sent, per process
    let mut open_handlers: BTreeMap<ProcessId, i64> = BTreeMap::new();
    let mut crashed = ProcSet::EMPTY;
    for e in events {
        match &e.kind {
            EventKind::Send { msg } => {
                in_flight.insert(msg.id, msg.to);
                if !msg.payload.is_request() {
                    *open_handlers.entry(msg.from()).or_default() -= 1;
                }
            }
            EventKind::Deliver { msg } => {
                in_flight.remove(&msg.id);
                if msg.payload.is_request() {
                    *open_handlers.entry(msg.to).or_default() += 1;
                }
            }
            EventKind::Crash { process } => {
                crashed.insert(*process);
            }
            _ => {}
        }
    }
    in_flight.values().all(|to| crashed.contains(*to))
        && open_handlers.iter().all(|(p, open)| *open <= 0 || crashed.contains(*p))
}

/// One operation's interval and value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpRecord {
    pub id: OpId,
    pub kind: OpKind,
    pub process: ProcessId,
    pub invoke_step: u64,
    pub response_step: Option<u64>,
    /// Written value for writes; returned value for completed reads.
    pub value: Option<TaggedValue>,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.response_step.is_some()
    }

    /// `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &OpRecord) -> bool {
        matches!(self.response_step, Some(r) if r < other.invoke_step)
    }

    pub fn concurrent_with(&self, other: &OpRecord) -> bool {
        !self.precedes(other) && !other.precedes(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("operation {op} responds at step {step} without an invocation")]
    ResponseWithoutInvoke { op: OpId, step: u64 },
    #[error("operation {op} is invoked twice")]
    DuplicateInvoke { op: OpId },
    #[error("operation {op} responds twice")]
    DuplicateResponse { op: OpId },
    #[error("operation {op} responds at step {response} before its invocation at {invoke}")]
    ResponseBeforeInvoke { op: OpId, invoke: u64, response: u64 },
}

/// Operation records in invocation order, plus the crashed processes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    pub ops: Vec<OpRecord>,
    pub crashed: ProcSet,
}

impl History {
    pub fn project(events: &[TraceEvent]) -> Result<History, HistoryError> {
        let mut history = History::default();
        let mut by_op: BTreeMap<(OpId, bool), usize> = BTreeMap::new();
        for e in events {
            match &e.kind {
                EventKind::Invoke { op, kind, process, value } => {
                    if by_op.insert((*op, false), history.ops.len()).is_some() {
                        return Err(HistoryError::DuplicateInvoke { op: *op });
                    }
                    history.ops.push(OpRecord {
                        id: *op,
                        kind: *kind,
                        process: *process,
                        invoke_step: e.step,
                        response_step: None,
                        value: value.clone(),
                    });
                }
                EventKind::WriteBack { op, process, value } => {
                    if by_op.insert((*op, true), history.ops.len()).is_some() {
                        return Err(HistoryError::DuplicateInvoke { op: *op });
                    }
                    history.ops.push(OpRecord {
                        id: *op,
                        kind: OpKind::WriteBack,
                        process: *process,
                        invoke_step: e.step,
                        response_step: None,
                        value: Some(value.clone()),
                    });
                }
                EventKind::Respond { op, value, .. } => {
                    let idx = *by_op
                        .get(&(*op, false))
                        .ok_or(HistoryError::ResponseWithoutInvoke { op: *op, step: e.step })?;
                    let rec = &mut history.ops[idx];
                    if rec.response_step.is_some() {
                        return Err(HistoryError::DuplicateResponse { op: *op });
                    }
                    if e.step <= rec.invoke_step {
                        return Err(HistoryError::ResponseBeforeInvoke {
                            op: *op,
                            invoke: rec.invoke_step,
                            response: e.step,
                        });
                    }
                    rec.response_step = Some(e.step);
                    if rec.kind == OpKind::Read {
                        rec.value = value.clone();
                    }
                    if let Some(&wb) = by_op.get(&(*op, true)) {
                        history.ops[wb].response_step = Some(e.step);
                    }
                }
                EventKind::Crash { process } => {
                    history.crashed.insert(*process);
                }
                _ => {}
            }
        }
        Ok(history)
    }

    /// Client writes, in invocation order.
    pub fn writes(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| o.kind == OpKind::Write)
    }

    pub fn reads(&self) -> impl Iterator<Item = &OpRecord> {
        self.ops.iter().filter(|o| o.kind == OpKind::Read)
    }

    pub fn op(&self, id: OpId, kind: OpKind) -> Option<&OpRecord> {
        self.ops.iter().find(|o| o.id == id && o.kind == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{MsgId, Payload};
    use alloc::vec;

    fn pid(i: u32) -> ProcessId {
        ProcessId::new(i)
    }

    fn ev(step: u64, kind: EventKind) -> TraceEvent {
        TraceEvent { step, kind }
    }

    #[test]
    fn projection_pairs_invokes_and_responses() {
        let v = TaggedValue::new(1, "a");
        let events = vec![
            ev(1, EventKind::Invoke { op: 0, kind: OpKind::Write, process: pid(1), value: Some(v.clone()) }),
            ev(5, EventKind::Respond { op: 0, process: pid(1), value: None }),
            ev(6, EventKind::Invoke { op: 1, kind: OpKind::Read, process: pid(2), value: None }),
            ev(8, EventKind::WriteBack { op: 1, process: pid(2), value: v.clone() }),
            ev(9, EventKind::Crash { process: pid(3) }),
            ev(12, EventKind::Respond { op: 1, process: pid(2), value: Some(v.clone()) }),
        ];
        let h = History::project(&events).unwrap();
        assert_eq!(h.ops.len(), 3);
        let w = h.op(0, OpKind::Write).unwrap();
        let r = h.op(1, OpKind::Read).unwrap();
        let wb = h.op(1, OpKind::WriteBack).unwrap();
        assert!(w.precedes(r));
        assert_eq!(r.value, Some(v));
        assert_eq!(wb.response_step, Some(12));
        assert_eq!(h.crashed, ProcSet::singleton(pid(3)));
    }

    #[test]
    fn malformed_histories_are_rejected() {
        let resp = ev(3, EventKind::Respond { op: 4, process: pid(1), value: None });
        assert_eq!(
            History::project(&[resp]),
            Err(HistoryError::ResponseWithoutInvoke { op: 4, step: 3 })
        );
        let inv = ev(2, EventKind::Invoke { op: 0, kind: OpKind::Read, process: pid(1), value: None });
        assert_eq!(
            History::project(&[inv.clone(), inv]),
            Err(HistoryError::DuplicateInvoke { op: 0 })
        );
    }

    #[test]
    fn precedence_and_concurrency() {
        let rec = |inv, resp| OpRecord {
            id: 0,
            kind: OpKind::Read,
            process: pid(1),
            invoke_step: inv,
            response_step: resp,
            value: None,
        };
        assert!(rec(1, Some(3)).precedes(&rec(4, Some(5))));
        assert!(rec(1, Some(4)).concurrent_with(&rec(4, Some(5))));
        assert!(!rec(1, None).precedes(&rec(10, Some(11))));
        assert!(rec(1, None).concurrent_with(&rec(10, Some(11))));
    }

    #[test]
    fn quiescence_tracks_flight_and_handlers() {
        let msg = Message { id: MsgId { sender: pid(1), seq: 0 }, to: pid(2), payload: Payload::R { sn_r: 1 } };
        let ack = Message {
            id: MsgId { sender: pid(2), seq: 0 },
            to: pid(1),
            payload: Payload::AckR { sn_r: 1, value: TaggedValue::initial() },
        };
        assert!(quiescence(&[]));
        let mut events = vec![ev(1, EventKind::Send { msg: msg.clone() })];
        assert!(!quiescence(&events));
        events.push(ev(2, EventKind::Deliver { msg }));
        assert!(!quiescence(&events), "handler still open");
        events.push(ev(3, EventKind::Send { msg: ack.clone() }));
        assert!(!quiescence(&events));
        let mut crashed = events.clone();
        crashed.push(ev(4, EventKind::Crash { process: pid(1) }));
        assert!(quiescence(&crashed));
        events.push(ev(4, EventKind::Deliver { msg: ack }));
        assert!(quiescence(&events));
    }
}
