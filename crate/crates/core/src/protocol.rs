//! The register emulation as per-process state machines.
//!
//! `Write(v)` sends `W⟨v⟩` to every process and waits for `ACK-W` from a quorum
//! of distinct processes. On `W⟨sn, u⟩` a process walks every register it
//! owns, overwriting it when `sn` is newer, then acknowledges. `Read()` sends
//! `R⟨sn_r⟩` to every process, waits for a quorum of `ACK-R`, writes back the
//! freshest value it was sent and returns it. On `R⟨sn_r⟩` a process scans
//! every register it can read and answers with the freshest value.
//!
//! The machines do no scheduling. The caller delivers messages with
//! [`Process::receive`] and advances a running message handler one atomic
//! register access at a time with [`Process::step_handler`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::model::{ProcessId, RegisterId, SystemSpec};
use crate::procset::ProcSet;

/// Payload of the initial register value `⟨0, u0⟩`.
pub const INITIAL_PAYLOAD: &str = "u0";

/// `⟨sn, u⟩`: the content of every shared register and every value message.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TaggedValue {
    pub sn: u64,
    pub val: String,
}

impl TaggedValue {
    pub fn new(sn: u64, val: impl Into<String>) -> Self {
        TaggedValue { sn, val: val.into() }
    }

    pub fn initial() -> Self {
        TaggedValue::new(0, INITIAL_PAYLOAD)
    }

    pub fn is_initial(&self) -> bool {
        self.sn == 0
    }
}

impl fmt::Display for TaggedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{},{}⟩", self.sn, self.val)
    }
}

/// Freshest value by sequence number.
///
/// Equal sequence numbers must carry equal payloads; anything else means two
/// different values were minted under one number.
pub fn freshest<'a, I>(values: I) -> Result<Option<TaggedValue>, ProtocolError>
where
    I: IntoIterator<Item = &'a TaggedValue>,
{
    let mut best: Option<&TaggedValue> = None;
    for v in values {
        best = match best {
            None => Some(v),
            Some(b) if v.sn > b.sn => Some(v),
            Some(b) if v.sn == b.sn && v.val != b.val => {
                return Err(ProtocolError::SnConflict { sn: v.sn, a: b.val.clone(), b: v.val.clone() })
            }
            keep => keep,
        };
    }
    Ok(best.cloned())
}

/// `(sender, per-sender counter)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId {
    pub sender: ProcessId,
    pub seq: u64,
}

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.sender, self.seq)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// `W⟨sn_w, u⟩`
    W(TaggedValue),
    /// `ACK-W⟨sn_w⟩`
    AckW { sn: u64 },
    /// `R⟨sn_r⟩`
    R { sn_r: u64 },
    /// `ACK-R⟨sn_r, ⟨r_sn, r_u⟩⟩`
    AckR { sn_r: u64, value: TaggedValue },
}

impl Payload {
    pub fn tag(&self) -> &'static str {
        match self {
            Payload::W(_) => "W",
            Payload::AckW { .. } => "ACK-W",
            Payload::R { .. } => "R",
            Payload::AckR { .. } => "ACK-R",
        }
    }

    /// W and R start a handler at the recipient; acknowledgments do not.
    pub fn is_request(&self) -> bool {
        matches!(self, Payload::W(_) | Payload::R { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub id: MsgId,
    pub to: ProcessId,
    pub payload: Payload,
}

impl Message {
    pub fn from(&self) -> ProcessId {
        self.id.sender
    }
}

/// Number of distinct acknowledgments an operation waits for: `n - t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Threshold {
    ack_quorum: usize,
}

impl Threshold {
    /// Quorum `n - t` for a system meant to survive `t` crashes.
    pub fn tolerating(n: usize, t: usize) -> Result<Self, ProtocolError> {
        if t >= n {
            return Err(ProtocolError::BadThreshold { n, t });
        }
        Ok(Threshold { ack_quorum: n - t })
    }

    pub fn ack_quorum(self) -> usize {
        self.ack_quorum
    }

    pub fn tolerated(self, n: usize) -> usize {
        n - self.ack_quorum
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("t = {t} leaves no quorum among {n} processes")]
    BadThreshold { n: usize, t: usize },
    #[error("{0} is not the writer")]
    NotWriter(ProcessId),
    #[error("{0} already has an operation in progress")]
    OperationPending(ProcessId),
    #[error("{0} received a request while still handling another")]
    HandlerBusy(ProcessId),
    #[error("{0} has no message handler to advance")]
    NoHandler(ProcessId),
    #[error("message {msg} delivered to {at} but addressed to {to}")]
    Misdelivered { msg: MsgId, to: ProcessId, at: ProcessId },
    #[error("sequence number {sn} carries two payloads: {a:?} and {b:?}")]
    SnConflict { sn: u64, a: String, b: String },
}

/// Register access as seen by a handler; each call is one atomic step.
pub trait RegisterAccess {
    type Error: From<ProtocolError>;

    fn read(&mut self, by: ProcessId, reg: RegisterId) -> Result<TaggedValue, Self::Error>;
    fn write(&mut self, by: ProcessId, reg: RegisterId, value: TaggedValue) -> Result<(), Self::Error>;
}

/// What one call to [`Process::step_handler`] did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HandlerStep {
    Read(RegisterId, TaggedValue),
    Wrote(RegisterId, TaggedValue),
    /// The acknowledgment that ends the handler.
    Replied(Message),
}

/// Progress of a local operation reported by [`Process::receive`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OpEvent {
    /// The read collected its quorum and now writes back this value.
    WriteBackStarted(TaggedValue),
    WriteCompleted(TaggedValue),
    ReadCompleted(TaggedValue),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Reaction {
    pub sends: Vec<Message>,
    pub events: Vec<OpEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WritePurpose {
    Client,
    WriteBack,
}

/// The local operation a process is waiting on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PendingOp {
    Write { value: TaggedValue, purpose: WritePurpose, acks: ProcSet },
    Read { sn_r: u64, acks: ProcSet, replies: Vec<TaggedValue> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Handler {
    Write {
        reply_to: ProcessId,
        value: TaggedValue,
        cursor: usize,
        // the register at `cursor` was read and is older than `value`
        overwrite: bool,
    },
    Read {
        reply_to: ProcessId,
        sn_r: u64,
        cursor: usize,
        best: Option<TaggedValue>,
    },
}

/// One process running the emulation.
#[derive(Clone, Debug)]
pub struct Process {
    id: ProcessId,
    n: usize,
    quorum: usize,
    is_writer: bool,
    own: Vec<RegisterId>,
    readable: Vec<RegisterId>,
    sn_r: u64,
    last_sn_w: u64,
    sent: u64,
    pending: Option<PendingOp>,
    handler: Option<Handler>,
}

impl Process {
    pub fn new(spec: &SystemSpec, id: ProcessId, threshold: Threshold) -> Self {
        Process {
            id,
            n: spec.n(),
            quorum: threshold.ack_quorum(),
            is_writer: spec.writer() == id,
            own: spec.registers_owned_by(id),
            readable: spec.registers_readable_by(id),
            sn_r: 0,
            last_sn_w: 0,
            sent: 0,
            pending: None,
            handler: None,
        }
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn pending(&self) -> Option<&PendingOp> {
        self.pending.as_ref()
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_none()
    }

    pub fn has_handler(&self) -> bool {
        self.handler.is_some()
    }

    /// Messages sent so far; the next message gets this as its `seq`.
    pub fn sent(&self) -> u64 {
        self.sent
    }

    fn send(&mut self, to: ProcessId, payload: Payload) -> Message {
        let id = MsgId { sender: self.id, seq: self.sent };
        self.sent += 1;
        Message { id, to, payload }
    }

    fn broadcast(&mut self, payload: Payload) -> Vec<Message> {
        ProcSet::full(self.n)
            .iter()
            .map(|to| self.send(to, payload.clone()))
            .collect()
    }

    fn start_write(&mut self, value: TaggedValue, purpose: WritePurpose) -> Vec<Message> {
        let sends = self.broadcast(Payload::W(value.clone()));
        self.pending = Some(PendingOp::Write { value, purpose, acks: ProcSet::EMPTY });
        sends
    }

    /// Writer only: tags `payload` with the next sequence number and sends it
    /// to every process, itself included.
    pub fn invoke_write(&mut self, payload: impl Into<String>) -> Result<Vec<Message>, ProtocolError> {
        if !self.is_writer {
            return Err(ProtocolError::NotWriter(self.id));
        }
        if self.pending.is_some() {
            return Err(ProtocolError::OperationPending(self.id));
        }
        self.last_sn_w += 1;
        let value = TaggedValue::new(self.last_sn_w, payload);
        Ok(self.start_write(value, WritePurpose::Client))
    }

    /// The sequence number the next client write will carry.
    pub fn next_write_sn(&self) -> u64 {
        self.last_sn_w + 1
    }

    pub fn invoke_read(&mut self) -> Result<Vec<Message>, ProtocolError> {
        if self.pending.is_some() {
            return Err(ProtocolError::OperationPending(self.id));
        }
        self.sn_r += 1;
        let sn_r = self.sn_r;
        let sends = self.broadcast(Payload::R { sn_r });
        self.pending = Some(PendingOp::Read { sn_r, acks: ProcSet::EMPTY, replies: Vec::new() });
        Ok(sends)
    }

    /// Takes one message off the network. Requests install a handler;
    /// acknowledgments feed the pending operation and may finish it or move
    /// a read into its write-back.
    pub fn receive(&mut self, msg: Message) -> Result<Reaction, ProtocolError> {
        if msg.to != self.id {
            return Err(ProtocolError::Misdelivered { msg: msg.id, to: msg.to, at: self.id });
        }
        let from = msg.from();
        let mut reaction = Reaction::default();
        match msg.payload {
            Payload::W(value) => {
                self.install(Handler::Write { reply_to: from, value, cursor: 0, overwrite: false })?;
            }
            Payload::R { sn_r } => {
                self.install(Handler::Read { reply_to: from, sn_r, cursor: 0, best: None })?;
            }
            Payload::AckW { sn } => {
                let Some(PendingOp::Write { value, purpose, acks }) = &mut self.pending else {
                    return Ok(reaction);
                };
                if value.sn != sn {
                    return Ok(reaction);
                }
                acks.insert(from);
                if acks.len() >= self.quorum {
                    let (value, purpose) = (value.clone(), *purpose);
                    self.pending = None;
                    reaction.events.push(match purpose {
                        WritePurpose::Client => OpEvent::WriteCompleted(value),
                        WritePurpose::WriteBack => OpEvent::ReadCompleted(value),
                    });
                }
            }
            Payload::AckR { sn_r, value } => {
                let Some(PendingOp::Read { sn_r: want, acks, replies }) = &mut self.pending else {
                    return Ok(reaction);
                };
                if *want != sn_r || !acks.insert(from) {
                    return Ok(reaction);
                }
                replies.push(value);
                if acks.len() >= self.quorum {
                    let chosen = freshest(replies.iter())?.expect("quorum is at least one reply");
                    reaction.sends = self.start_write(chosen.clone(), WritePurpose::WriteBack);
                    reaction.events.push(OpEvent::WriteBackStarted(chosen));
                }
            }
        }
        Ok(reaction)
    }

    fn install(&mut self, handler: Handler) -> Result<(), ProtocolError> {
        if self.handler.is_some() {
            return Err(ProtocolError::HandlerBusy(self.id));
        }
        self.handler = Some(handler);
        Ok(())
    }

    /// Performs the next atomic step of the running handler: one register
    /// read, one register write, or the closing acknowledgment.
    pub fn step_handler<A: RegisterAccess>(&mut self, regs: &mut A) -> Result<HandlerStep, A::Error> {
        let id = self.id;
        let handler = self.handler.as_mut().ok_or(ProtocolError::NoHandler(id))?;
        let step = match handler {
            Handler::Write { reply_to, value, cursor, overwrite } => {
                if let Some(&reg) = self.own.get(*cursor) {
                    if *overwrite {
                        regs.write(id, reg, value.clone())?;
                        *overwrite = false;
                        *cursor += 1;
                        return Ok(HandlerStep::Wrote(reg, value.clone()));
                    }
                    let current = regs.read(id, reg)?;
                    if value.sn > current.sn {
                        *overwrite = true;
                    } else {
                        *cursor += 1;
                    }
                    return Ok(HandlerStep::Read(reg, current));
                }
                let (to, sn) = (*reply_to, value.sn);
                self.handler = None;
                HandlerStep::Replied(self.send(to, Payload::AckW { sn }))
            }
            Handler::Read { reply_to, sn_r, cursor, best } => {
                if let Some(&reg) = self.readable.get(*cursor) {
                    let current = regs.read(id, reg)?;
                    *best = freshest(best.iter().chain(core::iter::once(&current)))?;
                    *cursor += 1;
                    return Ok(HandlerStep::Read(reg, current));
                }
                let (to, sn_r) = (*reply_to, *sn_r);
                let value = best.take().expect("every process can read its own registers");
                self.handler = None;
                HandlerStep::Replied(self.send(to, Payload::AckR { sn_r, value }))
            }
        };
        Ok(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_graph, Bag};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn pid(i: u32) -> ProcessId {
        ProcessId::new(i)
    }

    #[derive(Default)]
    struct Regs(BTreeMap<RegisterId, TaggedValue>);

    impl RegisterAccess for Regs {
        type Error = ProtocolError;

        fn read(&mut self, _: ProcessId, reg: RegisterId) -> Result<TaggedValue, ProtocolError> {
            Ok(self.0.get(&reg).cloned().unwrap_or_else(TaggedValue::initial))
        }

        fn write(&mut self, _: ProcessId, reg: RegisterId, v: TaggedValue) -> Result<(), ProtocolError> {
            self.0.insert(reg, v);
            Ok(())
        }
    }

    fn run_handler(p: &mut Process, regs: &mut Regs) -> (Vec<HandlerStep>, Message) {
        let mut steps = Vec::new();
        loop {
            match p.step_handler(regs).unwrap() {
                HandlerStep::Replied(m) => return (steps, m),
                s => steps.push(s),
            }
        }
    }

    fn singletons(n: usize) -> SystemSpec {
        SystemSpec::new(&Bag::singletons(n).unwrap(), 1).unwrap()
    }

    #[test]
    fn write_fans_out_to_everyone() {
        let spec = singletons(3);
        let mut w = Process::new(&spec, pid(1), Threshold::tolerating(3, 1).unwrap());
        let sends = w.invoke_write("a").unwrap();
        assert_eq!(sends.len(), 3);
        for (i, m) in sends.iter().enumerate() {
            assert_eq!(m.to, pid(i as u32 + 1));
            assert_eq!(m.payload, Payload::W(TaggedValue::new(1, "a")));
        }
        assert_eq!(w.invoke_write("b"), Err(ProtocolError::OperationPending(pid(1))));
        for from in [2, 3] {
            w.receive(Message {
                id: MsgId { sender: pid(from), seq: 0 },
                to: pid(1),
                payload: Payload::AckW { sn: 1 },
            })
            .unwrap();
        }
        assert!(w.is_idle());
        let second = w.invoke_write("b").unwrap();
        assert!(second.iter().all(|m| m.payload == Payload::W(TaggedValue::new(2, "b"))));
    }

    #[test]
    fn only_the_writer_writes() {
        let spec = singletons(3);
        let mut r = Process::new(&spec, pid(2), Threshold::tolerating(3, 1).unwrap());
        assert_eq!(r.invoke_write("x"), Err(ProtocolError::NotWriter(pid(2))));
    }

    #[test]
    fn w_handler_overwrites_older_register() {
        let spec = singletons(2);
        let mut p = Process::new(&spec, pid(2), Threshold::tolerating(2, 0).unwrap());
        let mut regs = Regs::default();
        p.receive(Message {
            id: MsgId { sender: pid(1), seq: 0 },
            to: pid(2),
            payload: Payload::W(TaggedValue::new(1, "a")),
        })
        .unwrap();
        let (steps, ack) = run_handler(&mut p, &mut regs);
        let reg = RegisterId { set: 2, owner: pid(2) };
        assert_eq!(
            steps,
            vec![
                HandlerStep::Read(reg, TaggedValue::initial()),
                HandlerStep::Wrote(reg, TaggedValue::new(1, "a")),
            ]
        );
        assert_eq!(ack.to, pid(1));
        assert_eq!(ack.payload, Payload::AckW { sn: 1 });
    }

    #[test]
    fn w_handler_keeps_newer_register_and_still_acks() {
        let spec = singletons(2);
        let mut p = Process::new(&spec, pid(2), Threshold::tolerating(2, 0).unwrap());
        let reg = RegisterId { set: 2, owner: pid(2) };
        let mut regs = Regs::default();
        regs.0.insert(reg, TaggedValue::new(4, "d"));
        p.receive(Message {
            id: MsgId { sender: pid(1), seq: 3 },
            to: pid(2),
            payload: Payload::W(TaggedValue::new(2, "b")),
        })
        .unwrap();
        let (steps, ack) = run_handler(&mut p, &mut regs);
        assert_eq!(steps, vec![HandlerStep::Read(reg, TaggedValue::new(4, "d"))]);
        assert_eq!(ack.payload, Payload::AckW { sn: 2 });
        assert_eq!(regs.0[&reg], TaggedValue::new(4, "d"));
    }

    #[test]
    fn w_handler_updates_every_owned_register_before_acking() {
        // p3 lies in S_2, S_3, S_4, S_5 of the example system
        let spec = SystemSpec::uniform(&example_graph(), 1).unwrap();
        let mut p = Process::new(&spec, pid(3), Threshold::tolerating(5, 3).unwrap());
        let mut regs = Regs::default();
        p.receive(Message {
            id: MsgId { sender: pid(1), seq: 0 },
            to: pid(3),
            payload: Payload::W(TaggedValue::new(1, "a")),
        })
        .unwrap();
        let (steps, _) = run_handler(&mut p, &mut regs);
        let written: Vec<usize> = steps
            .iter()
            .filter_map(|s| match s {
                HandlerStep::Wrote(r, _) => Some(r.set),
                _ => None,
            })
            .collect();
        assert_eq!(written, vec![2, 3, 4, 5]);
        assert_eq!(steps.len(), 8);
    }

    #[test]
    fn r_handler_answers_with_freshest_readable_value() {
        let spec = SystemSpec::new(&Bag::full_sharing(3).unwrap(), 1).unwrap();
        let mut p = Process::new(&spec, pid(2), Threshold::tolerating(3, 1).unwrap());
        let mut regs = Regs::default();
        for (owner, v) in [(1, TaggedValue::new(1, "a")), (2, TaggedValue::new(3, "c")), (3, TaggedValue::new(2, "b"))] {
            regs.0.insert(RegisterId { set: 1, owner: pid(owner) }, v);
        }
        p.receive(Message { id: MsgId { sender: pid(3), seq: 0 }, to: pid(2), payload: Payload::R { sn_r: 7 } })
            .unwrap();
        let (steps, ack) = run_handler(&mut p, &mut regs);
        assert_eq!(steps.len(), 3);
        assert_eq!(ack.to, pid(3));
        assert_eq!(ack.payload, Payload::AckR { sn_r: 7, value: TaggedValue::new(3, "c") });
    }

    #[test]
    fn r_handler_on_fresh_system_and_singleton() {
        let spec = singletons(3);
        let mut p = Process::new(&spec, pid(3), Threshold::tolerating(3, 1).unwrap());
        let mut regs = Regs::default();
        p.receive(Message { id: MsgId { sender: pid(1), seq: 0 }, to: pid(3), payload: Payload::R { sn_r: 1 } })
            .unwrap();
        let (steps, ack) = run_handler(&mut p, &mut regs);
        assert_eq!(
            steps,
            vec![HandlerStep::Read(RegisterId { set: 3, owner: pid(3) }, TaggedValue::initial())]
        );
        assert_eq!(ack.payload, Payload::AckR { sn_r: 1, value: TaggedValue::initial() });
    }

    #[test]
    fn handler_busy_is_rejected() {
        let spec = singletons(2);
        let mut p = Process::new(&spec, pid(2), Threshold::tolerating(2, 0).unwrap());
        let req = |seq| Message { id: MsgId { sender: pid(1), seq }, to: pid(2), payload: Payload::R { sn_r: 1 } };
        p.receive(req(0)).unwrap();
        assert_eq!(p.receive(req(1)), Err(ProtocolError::HandlerBusy(pid(2))));
    }

    fn ack_r(from: u32, to: u32, sn_r: u64, value: TaggedValue) -> Message {
        Message { id: MsgId { sender: pid(from), seq: 0 }, to: pid(to), payload: Payload::AckR { sn_r, value } }
    }

    #[test]
    fn read_writes_back_freshest_reply_without_new_sn() {
        let spec = singletons(3);
        let mut q = Process::new(&spec, pid(2), Threshold::tolerating(3, 1).unwrap());
        let sends = q.invoke_read().unwrap();
        assert!(sends.iter().all(|m| m.payload == Payload::R { sn_r: 1 }));
        assert!(q.receive(ack_r(1, 2, 1, TaggedValue::new(5, "x"))).unwrap().sends.is_empty());
        let reaction = q.receive(ack_r(3, 2, 1, TaggedValue::new(2, "b"))).unwrap();
        assert_eq!(reaction.events, vec![OpEvent::WriteBackStarted(TaggedValue::new(5, "x"))]);
        assert_eq!(reaction.sends.len(), 3);
        for m in &reaction.sends {
            assert_eq!(m.from(), pid(2));
            assert_eq!(m.payload, Payload::W(TaggedValue::new(5, "x")));
        }
        // a third ACK-R is stale now
        assert!(q.receive(ack_r(2, 2, 1, TaggedValue::new(9, "z"))).unwrap().events.is_empty());
        let ack_w = |from| Message { id: MsgId { sender: pid(from), seq: 1 }, to: pid(2), payload: Payload::AckW { sn: 5 } };
        assert!(q.receive(ack_w(1)).unwrap().events.is_empty());
        assert!(q.receive(ack_w(1)).unwrap().events.is_empty(), "duplicate responder counts once");
        let done = q.receive(ack_w(3)).unwrap();
        assert_eq!(done.events, vec![OpEvent::ReadCompleted(TaggedValue::new(5, "x"))]);
        assert!(q.is_idle());
    }

    #[test]
    fn stale_ack_r_from_earlier_read_is_ignored() {
        let spec = singletons(3);
        let mut q = Process::new(&spec, pid(2), Threshold::tolerating(3, 1).unwrap());
        q.invoke_read().unwrap();
        q.receive(ack_r(1, 2, 1, TaggedValue::initial())).unwrap();
        q.receive(ack_r(2, 2, 1, TaggedValue::initial())).unwrap();
        for from in [1, 2] {
            q.receive(Message { id: MsgId { sender: pid(from), seq: 9 }, to: pid(2), payload: Payload::AckW { sn: 0 } })
                .unwrap();
        }
        assert!(q.is_idle());
        let second = q.invoke_read().unwrap();
        assert!(second.iter().all(|m| m.payload == Payload::R { sn_r: 2 }));
        let r = q.receive(ack_r(3, 2, 1, TaggedValue::initial())).unwrap();
        assert_eq!(r, Reaction::default());
        match q.pending().unwrap() {
            PendingOp::Read { acks, .. } => assert!(acks.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn readers_keep_independent_counters() {
        let spec = singletons(3);
        let th = Threshold::tolerating(3, 1).unwrap();
        let mut a = Process::new(&spec, pid(2), th);
        let mut b = Process::new(&spec, pid(3), th);
        assert_eq!(a.invoke_read().unwrap()[0].payload, Payload::R { sn_r: 1 });
        assert_eq!(b.invoke_read().unwrap()[0].payload, Payload::R { sn_r: 1 });
    }

    #[test]
    fn freshest_detects_payload_conflicts() {
        let vals = [TaggedValue::new(1, "a"), TaggedValue::new(3, "c"), TaggedValue::new(2, "b")];
        assert_eq!(freshest(vals.iter()).unwrap(), Some(TaggedValue::new(3, "c")));
        let clash = [TaggedValue::new(2, "a"), TaggedValue::new(2, "b")];
        assert!(matches!(freshest(clash.iter()), Err(ProtocolError::SnConflict { sn: 2, .. })));
        assert_eq!(freshest([].iter()).unwrap(), None);
    }

    #[test]
    fn threshold_bounds() {
        assert_eq!(Threshold::tolerating(3, 1).unwrap().ack_quorum(), 2);
        assert_eq!(Threshold::tolerating(3, 3), Err(ProtocolError::BadThreshold { n: 3, t: 3 }));
        assert_eq!(Threshold::tolerating(1, 0).unwrap().ack_quorum(), 1);
    }
}
