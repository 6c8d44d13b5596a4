//! Deterministic discrete-event simulator.
//!
//! Links are reliable and unordered, registers are reliable and survive the
//! crash of their owner, and processes crash by stopping. Every trace event
//! takes one tick of a global logical clock. At each scheduling point the
//! enabled choices are:
//!
//! - invoking a process's next workload operation, once it is idle;
//! - delivering an in-flight message to a live process with no running
//!   handler;
//! - advancing a live process's running handler by one atomic step.
//!
//! A [`Policy`] picks among them. The same inputs always give the same trace.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::history::{EventKind, History, OpId, OpKind, RunInfo, Trace, TraceEvent};
use crate::model::{ProcessId, RegisterId, SystemSpec};
use crate::procset::ProcSet;
use crate::protocol::{
    HandlerStep, Message, MsgId, OpEvent, Process, ProtocolError, RegisterAccess, TaggedValue,
    Threshold,
};

/// Default cap on trace length.
pub const DEFAULT_MAX_STEPS: u64 = 5_000_000;

/// One client operation. Writes carry their payload; `at_step` is the
/// earliest tick at which the operation may be invoked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkloadOp {
    pub kind: OpKind,
    pub process: ProcessId,
    pub value: Option<String>,
    pub at_step: u64,
}

impl WorkloadOp {
    pub fn write(process: ProcessId, value: impl Into<String>, at_step: u64) -> Self {
        WorkloadOp { kind: OpKind::Write, process, value: Some(value.into()), at_step }
    }

    pub fn read(process: ProcessId, at_step: u64) -> Self {
        WorkloadOp { kind: OpKind::Read, process, value: None, at_step }
    }
}

/// A scheduling decision, as named by a scripted schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ScriptEvent {
    Invoke { op: OpId },
    Deliver { msg: MsgId },
    Step { process: ProcessId },
    Crash { process: ProcessId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Uniform choice among enabled events, except that a choice left
    /// waiting more than `n²` ticks is forced (oldest first).
    FairRandom { seed: u64 },
    /// Always the longest-waiting choice.
    Fifo,
    /// The listed decisions in order, then [`Policy::Fifo`] until quiescence.
    Scripted(Vec<ScriptEvent>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub policy: Policy,
    /// `(p, s)`: `p` crashes at the first tick numbered `s` or later.
    pub crash_plan: Vec<(ProcessId, u64)>,
}

impl Schedule {
    pub fn fifo() -> Self {
        Schedule { policy: Policy::Fifo, crash_plan: Vec::new() }
    }

    pub fn fair(seed: u64) -> Self {
        Schedule { policy: Policy::FairRandom { seed }, crash_plan: Vec::new() }
    }

    pub fn scripted(events: Vec<ScriptEvent>) -> Self {
        Schedule { policy: Policy::Scripted(events), crash_plan: Vec::new() }
    }

    pub fn with_crashes(mut self, plan: Vec<(ProcessId, u64)>) -> Self {
        self.crash_plan = plan;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("{by} may not {action} {reg}")]
    AccessViolation { by: ProcessId, reg: RegisterId, action: &'static str },
    #[error("workload op {op}: {reason}")]
    BadWorkload { op: OpId, reason: &'static str },
    #[error("crash target {0} is outside the system")]
    BadCrashTarget(ProcessId),
    #[error("crash plan has {len} entries for {n} processes")]
    CrashPlanTooLarge { len: usize, n: usize },
    #[error("script entry {index} ({event:?}) is not enabled")]
    ScriptNotEnabled { index: usize, event: ScriptEvent },
    #[error("run exceeded {0} steps")]
    StepLimit(u64),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Shared registers with access control.
#[derive(Clone, Debug)]
pub struct RegisterStore<'a> {
    spec: &'a SystemSpec,
    values: Vec<TaggedValue>,
}

impl<'a> RegisterStore<'a> {
    pub fn new(spec: &'a SystemSpec) -> Self {
        RegisterStore { spec, values: alloc::vec![TaggedValue::initial(); spec.registers().len()] }
    }

    pub fn get(&self, reg: RegisterId) -> Option<&TaggedValue> {
        self.spec.register_index(reg).map(|i| &self.values[i])
    }
}

impl RegisterAccess for RegisterStore<'_> {
    type Error = SimError;

    fn read(&mut self, by: ProcessId, reg: RegisterId) -> Result<TaggedValue, SimError> {
        if !self.spec.can_read(by, reg) {
            return Err(SimError::AccessViolation { by, reg, action: "read" });
        }
        Ok(self.values[self.spec.register_index(reg).expect("checked")].clone())
    }

    fn write(&mut self, by: ProcessId, reg: RegisterId, value: TaggedValue) -> Result<(), SimError> {
        if !self.spec.can_write(by, reg) {
            return Err(SimError::AccessViolation { by, reg, action: "write" });
        }
        let i = self.spec.register_index(reg).expect("checked");
        self.values[i] = value;
        Ok(())
    }
}

/// A finished run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub trace: Trace,
    pub history: History,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    since: u64,
    event: ScriptEvent,
}

/// Simulator state; [`run`] drives it to quiescence.
pub struct Simulator<'a> {
    spec: &'a SystemSpec,
    info: RunInfo,
    workload: Vec<WorkloadOp>,
    processes: Vec<Process>,
    store: RegisterStore<'a>,
    in_flight: BTreeMap<MsgId, (Message, u64)>,
    crashed: ProcSet,
    next_op: Vec<usize>,
    current_op: Vec<Option<OpId>>,
    // tick since which a process's handler step or idleness has been waiting
    ready_since: Vec<u64>,
    crash_plan: Vec<(ProcessId, u64)>,
    events: Vec<TraceEvent>,
    max_steps: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        spec: &'a SystemSpec,
        threshold: Threshold,
        workload: Vec<WorkloadOp>,
        crash_plan: Vec<(ProcessId, u64)>,
    ) -> Result<Self, SimError> {
        let n = spec.n();
        for (op, w) in workload.iter().enumerate() {
            if w.process.index0() >= n {
                return Err(SimError::BadWorkload { op, reason: "process outside the system" });
            }
            match w.kind {
                OpKind::Write if w.process != spec.writer() => {
                    return Err(SimError::BadWorkload { op, reason: "writes belong to the writer" })
                }
                OpKind::Write if w.value.is_none() => {
                    return Err(SimError::BadWorkload { op, reason: "write without a value" })
                }
                OpKind::WriteBack => {
                    return Err(SimError::BadWorkload { op, reason: "write-backs are internal" })
                }
                _ => {}
            }
        }
        if crash_plan.len() > n {
            return Err(SimError::CrashPlanTooLarge { len: crash_plan.len(), n });
        }
        if let Some(&(p, _)) = crash_plan.iter().find(|(p, _)| p.index0() >= n) {
            return Err(SimError::BadCrashTarget(p));
        }
        let mut crash_plan = crash_plan;
        crash_plan.sort_by_key(|&(p, s)| (s, p));
        let processes = spec
            .processes()
            .iter()
            .map(|p| Process::new(spec, p, threshold))
            .collect();
        Ok(Simulator {
            spec,
            info: RunInfo { n, writer: spec.writer(), ack_quorum: threshold.ack_quorum() },
            workload,
            processes,
            store: RegisterStore::new(spec),
            in_flight: BTreeMap::new(),
            crashed: ProcSet::EMPTY,
            next_op: alloc::vec![0; n],
            current_op: alloc::vec![None; n],
            ready_since: alloc::vec![0; n],
            crash_plan,
            events: Vec::new(),
            max_steps: DEFAULT_MAX_STEPS,
        })
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn spec(&self) -> &'a SystemSpec {
        self.spec
    }

    pub fn now(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn registers(&self) -> &RegisterStore<'a> {
        &self.store
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &Message> {
        self.in_flight.values().map(|(m, _)| m)
    }

    fn record(&mut self, kind: EventKind) -> Result<u64, SimError> {
        let step = self.now() + 1;
        if step > self.max_steps {
            return Err(SimError::StepLimit(self.max_steps));
        }
        self.events.push(TraceEvent { step, kind });
        Ok(step)
    }

    /// Index into the workload of `p`'s next operation, if it has one.
    fn next_op_of(&self, p: ProcessId) -> Option<OpId> {
        self.workload
            .iter()
            .enumerate()
            .filter(|(_, w)| w.process == p)
            .nth(self.next_op[p.index0()])
            .map(|(i, _)| i)
    }

    /// Enabled choices. Invocations whose `at_step` lies ahead are offered
    /// only when nothing else is enabled.
    fn candidates(&self, honor_at_step: bool) -> Vec<Candidate> {
        let mut out = Vec::new();
        let now = self.now();
        for (msg, sent) in self.in_flight.values() {
            let to = msg.to;
            if !self.crashed.contains(to) && !self.processes[to.index0()].has_handler() {
                out.push(Candidate { since: *sent, event: ScriptEvent::Deliver { msg: msg.id } });
            }
        }
        let mut deferred = Vec::new();
        for proc in &self.processes {
            let p = proc.id();
            if self.crashed.contains(p) {
                continue;
            }
            let since = self.ready_since[p.index0()];
            if proc.has_handler() {
                out.push(Candidate { since, event: ScriptEvent::Step { process: p } });
            }
            if proc.is_idle() {
                if let Some(op) = self.next_op_of(p) {
                    let at = self.workload[op].at_step;
                    let c = Candidate { since: since.max(at), event: ScriptEvent::Invoke { op } };
                    if !honor_at_step || at <= now + 1 {
                        out.push(c);
                    } else {
                        deferred.push(c);
                    }
                }
            }
        }
        if out.is_empty() {
            if let Some(first) = deferred.iter().min() {
                out.push(*first);
            }
        }
        out
    }

    fn is_enabled(&self, event: ScriptEvent) -> bool {
        match event {
            ScriptEvent::Crash { process } => {
                process.index0() < self.info.n && !self.crashed.contains(process)
            }
            other => self.candidates(false).iter().any(|c| c.event == other),
        }
    }

    /// True iff no choice remains.
    pub fn is_quiescent(&self) -> bool {
        self.candidates(false).is_empty()
    }

    fn fire_due_crashes(&mut self) -> Result<(), SimError> {
        while let Some(&(p, at)) = self.crash_plan.first() {
            if at > self.now() + 1 {
                break;
            }
            self.crash_plan.remove(0);
            if !self.crashed.contains(p) {
                self.apply(ScriptEvent::Crash { process: p })?;
            }
        }
        Ok(())
    }

    fn send_all(&mut self, sends: Vec<Message>) -> Result<(), SimError> {
        for msg in sends {
            let step = self.record(EventKind::Send { msg: msg.clone() })?;
            self.in_flight.insert(msg.id, (msg, step));
        }
        Ok(())
    }

    fn respond(&mut self, p: ProcessId, value: Option<TaggedValue>) -> Result<(), SimError> {
        let op = self.current_op[p.index0()].take().expect("completion without an operation");
        let step = self.record(EventKind::Respond { op, process: p, value })?;
        self.ready_since[p.index0()] = step;
        Ok(())
    }

    /// Executes one scheduling decision, which must be enabled.
    pub fn apply(&mut self, event: ScriptEvent) -> Result<(), SimError> {
        match event {
            ScriptEvent::Crash { process } => {
                self.crashed.insert(process);
                self.record(EventKind::Crash { process })?;
            }
            ScriptEvent::Invoke { op } => {
                let w = self.workload[op].clone();
                let p = w.process;
                let proc = &mut self.processes[p.index0()];
                let (sends, value) = match w.kind {
                    OpKind::Write => {
                        let sn = proc.next_write_sn();
                        let payload = w.value.expect("validated");
                        let sends = proc.invoke_write(payload.clone())?;
                        (sends, Some(TaggedValue::new(sn, payload)))
                    }
                    _ => (proc.invoke_read()?, None),
                };
                self.next_op[p.index0()] += 1;
                self.current_op[p.index0()] = Some(op);
                self.record(EventKind::Invoke { op, kind: w.kind, process: p, value })?;
                self.send_all(sends)?;
            }
            ScriptEvent::Deliver { msg } => {
                let (msg, _) = self.in_flight.remove(&msg).expect("enabled delivery");
                let p = msg.to;
                let step = self.record(EventKind::Deliver { msg: msg.clone() })?;
                let reaction = self.processes[p.index0()].receive(msg)?;
                if self.processes[p.index0()].has_handler() {
                    self.ready_since[p.index0()] = step;
                }
                for e in reaction.events {
                    match e {
                        OpEvent::WriteBackStarted(value) => {
                            let op = self.current_op[p.index0()].expect("read in progress");
                            self.record(EventKind::WriteBack { op, process: p, value })?;
                        }
                        OpEvent::WriteCompleted(_) => self.respond(p, None)?,
                        OpEvent::ReadCompleted(v) => self.respond(p, Some(v))?,
                    }
                }
                self.send_all(reaction.sends)?;
            }
            ScriptEvent::Step { process } => {
                let step = self.processes[process.index0()].step_handler(&mut self.store)?;
                let at = match step {
                    HandlerStep::Read(reg, value) => {
                        self.record(EventKind::RegRead { process, reg, value })?
                    }
                    HandlerStep::Wrote(reg, value) => {
                        self.record(EventKind::RegWrite { process, reg, value })?
                    }
                    HandlerStep::Replied(msg) => {
                        self.send_all(alloc::vec![msg])?;
                        self.now()
                    }
                };
                self.ready_since[process.index0()] = at;
            }
        }
        Ok(())
    }

    /// Runs to quiescence under `policy`.
    pub fn run_policy(&mut self, policy: &Policy) -> Result<(), SimError> {
        let mut rng = match policy {
            Policy::FairRandom { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        let mut script = match policy {
            Policy::Scripted(events) => events.as_slice(),
            _ => &[],
        };
        let mut index = 0;
        let patience = (self.info.n * self.info.n) as u64;
        loop {
            self.fire_due_crashes()?;
            if let Some((&next, rest)) = script.split_first() {
                if !self.is_enabled(next) {
                    return Err(SimError::ScriptNotEnabled { index, event: next });
                }
                self.apply(next)?;
                script = rest;
                index += 1;
                continue;
            }
            let candidates = self.candidates(true);
            if candidates.is_empty() {
                if self.crash_plan.is_empty() {
                    return Ok(());
                }
                // nothing to do until the next planned crash
                let (p, _) = self.crash_plan.remove(0);
                if !self.crashed.contains(p) {
                    self.apply(ScriptEvent::Crash { process: p })?;
                }
                continue;
            }
            let chosen = match rng.as_mut() {
                Some(rng) => {
                    let now = self.now();
                    let overdue = candidates.iter().filter(|c| now - c.since.min(now) > patience).min();
                    match overdue {
                        Some(c) => c.event,
                        None => candidates[rng.gen_range(0..candidates.len())].event,
                    }
                }
                None => candidates.iter().min().expect("non-empty").event,
            };
            self.apply(chosen)?;
        }
    }

    pub fn finish(self) -> Result<Outcome, SimError> {
        let trace = Trace { info: self.info, events: self.events };
        let history = trace.history().expect("simulator histories are well formed");
        Ok(Outcome { trace, history })
    }
}

/// Executes `workload` on `spec` with the given quorum and schedule.
pub fn run(
    spec: &SystemSpec,
    threshold: Threshold,
    workload: &[WorkloadOp],
    schedule: &Schedule,
) -> Result<Outcome, SimError> {
    let mut sim = Simulator::new(spec, threshold, workload.to_vec(), schedule.crash_plan.clone())?;
    sim.run_policy(&schedule.policy)?;
    sim.finish()
}

/// The scheduling decisions behind a trace, for exact replay. Crashes become
/// explicit script entries.
pub fn script_of(trace: &Trace) -> Vec<ScriptEvent> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Invoke { op, .. } => Some(ScriptEvent::Invoke { op: *op }),
            EventKind::Deliver { msg } => Some(ScriptEvent::Deliver { msg: msg.id }),
            EventKind::RegRead { process, .. } | EventKind::RegWrite { process, .. } => {
                Some(ScriptEvent::Step { process: *process })
            }
            EventKind::Send { msg } if !msg.payload.is_request() => {
                Some(ScriptEvent::Step { process: msg.from() })
            }
            EventKind::Crash { process } => Some(ScriptEvent::Crash { process: *process }),
            _ => None,
        })
        .collect()
}

/// The invoked operations of a trace, as a workload indexed by op id.
/// Invocation times become `at_step`. `None` if the invoked ids have gaps,
/// since an operation that never started left no trace.
pub fn workload_of(trace: &Trace) -> Option<Vec<WorkloadOp>> {
    let mut ops: Vec<(OpId, WorkloadOp)> = trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Invoke { op, kind: OpKind::Write, process, value } => {
                let payload = value.as_ref().map(|v| v.val.clone()).unwrap_or_default();
                Some((*op, WorkloadOp::write(*process, payload, e.step)))
            }
            EventKind::Invoke { op, process, .. } => Some((*op, WorkloadOp::read(*process, e.step))),
            _ => None,
        })
        .collect();
    ops.sort_by_key(|(id, _)| *id);
    if ops.iter().enumerate().any(|(i, (id, _))| i != *id) {
        return None;
    }
    Some(ops.into_iter().map(|(_, op)| op).collect())
}
