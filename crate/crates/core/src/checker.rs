//! Atomicity and liveness checks.
//!
//! Writes carry distinct sequence numbers, so a read's value names the write
//! that produced it and atomicity reduces to two interval checks:
//!
//! 1. A read returning `v` overlaps the write of `v`, or that write is the
//!    last write to finish before the read starts. A read returning the
//!    initial value has no write finishing before it starts.
//! 2. If read `r` finishes before read `r'` starts, `r'` returns a value at
//!    least as new as `r`'s.
//!
//! Write-backs inside reads are internal and never count as writes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::history::{EventKind, History, OpId, OpKind, OpRecord, Trace, TraceEvent};
use crate::model::RegisterId;
use crate::protocol::TaggedValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropertyId {
    /// Reads return the immediately preceding or a concurrent write.
    ReadsFromLatest,
    /// Reads ordered in time return values in write order.
    NoNewOldInversion,
    /// Register sequence numbers never decrease.
    Monotonicity,
    /// Every operation of a live process responds.
    Completion,
    /// No read returns a value whose write starts after the read ends.
    NoFutureValues,
    /// A read after write `k` returns write `k` or later.
    WriteReadOrder,
}

impl PropertyId {
    pub const ALL: [PropertyId; 6] = [
        PropertyId::ReadsFromLatest,
        PropertyId::NoNewOldInversion,
        PropertyId::Monotonicity,
        PropertyId::Completion,
        PropertyId::NoFutureValues,
        PropertyId::WriteReadOrder,
    ];

    /// Short name used on the command line and in reports.
    pub fn as_str(self) -> &'static str {
        match self {
            PropertyId::ReadsFromLatest => "1",
            PropertyId::NoNewOldInversion => "2",
            PropertyId::Monotonicity => "mono",
            PropertyId::Completion => "live",
            PropertyId::NoFutureValues => "nofuture",
            PropertyId::WriteReadOrder => "order",
        }
    }

    pub fn parse(s: &str) -> Option<PropertyId> {
        PropertyId::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub property: PropertyId,
    pub ops: Vec<OpId>,
    /// Step at which the violation is observable.
    pub step: u64,
    pub explanation: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Verdict {
    pub violations: Vec<Violation>,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, property: PropertyId, ops: Vec<OpId>, step: u64, explanation: String) {
        self.violations.push(Violation { property, ops, step, explanation });
    }

    /// Merges and orders violations by the step they become visible.
    pub fn merge(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut violations: Vec<Violation> = verdicts.into_iter().flat_map(|v| v.violations).collect();
        violations.sort_by_key(|v| (v.step, v.property));
        Verdict { violations }
    }

    pub fn earliest(&self) -> Option<&Violation> {
        self.violations.iter().min_by_key(|v| (v.step, v.property))
    }

    pub fn has(&self, property: PropertyId) -> bool {
        self.violations.iter().any(|v| v.property == property)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("operation {op} ({kind}) responds at {response}, not after its invocation at {invoke}")]
    Malformed { op: OpId, kind: &'static str, invoke: u64, response: u64 },
    #[error("writes {a} and {b} share sequence number {sn}")]
    DuplicateWriteSn { a: OpId, b: OpId, sn: u64 },
    #[error("write {op} carries sequence number 0, the initial value's")]
    WriteOfInitial { op: OpId },
    #[error("write {op} has no value")]
    WriteWithoutValue { op: OpId },
    #[error("{crashed} crashes exceed the tolerated {t}; completion is not promised")]
    TooManyCrashes { crashed: usize, t: usize },
}

fn validate(history: &History) -> Result<(), CheckError> {
    for op in &history.ops {
        if let Some(r) = op.response_step {
            if r <= op.invoke_step {
                return Err(CheckError::Malformed {
                    op: op.id,
                    kind: op.kind.as_str(),
                    invoke: op.invoke_step,
                    response: r,
                });
            }
        }
    }
    let writes: Vec<&OpRecord> = history.writes().collect();
    for (i, w) in writes.iter().enumerate() {
        let v = w.value.as_ref().ok_or(CheckError::WriteWithoutValue { op: w.id })?;
        if v.sn == 0 {
            return Err(CheckError::WriteOfInitial { op: w.id });
        }
        if let Some(other) = writes[..i].iter().find(|o| o.value.as_ref().map(|x| x.sn) == Some(v.sn)) {
            return Err(CheckError::DuplicateWriteSn { a: other.id, b: w.id, sn: v.sn });
        }
    }
    Ok(())
}

fn completed_reads(history: &History) -> impl Iterator<Item = (&OpRecord, &TaggedValue, u64)> {
    history.reads().filter_map(|r| match (&r.value, r.response_step) {
        (Some(v), Some(step)) => Some((r, v, step)),
        _ => None,
    })
}

fn write_of(history: &History, sn: u64) -> Option<&OpRecord> {
    history.writes().find(|w| w.value.as_ref().map(|v| v.sn) == Some(sn))
}

/// Reads return the value of a write that immediately precedes them or
/// overlaps them; the initial value only when no write precedes.
pub fn check_property1(history: &History) -> Result<Verdict, CheckError> {
    validate(history)?;
    let mut verdict = Verdict::default();
    let p = PropertyId::ReadsFromLatest;
    for (r, v, step) in completed_reads(history) {
        if v.sn == 0 {
            if *v != TaggedValue::initial() {
                verdict.push(p, alloc::vec![r.id], step, format!("read {} returned {v}, a corrupted initial value", r.id));
            } else if let Some(w) = history.writes().find(|w| w.precedes(r)) {
                verdict.push(
                    p,
                    alloc::vec![w.id, r.id],
                    step,
                    format!("read {} returned the initial value after write {} of {} completed", r.id, w.id, w.value.as_ref().expect("validated")),
                );
            }
            continue;
        }
        let Some(w) = write_of(history, v.sn) else {
            verdict.push(p, alloc::vec![r.id], step, format!("read {} returned {v}, which no write produced", r.id));
            continue;
        };
        let written = w.value.as_ref().expect("validated");
        if written != v {
            verdict.push(p, alloc::vec![w.id, r.id], step, format!("read {} returned {v} but write {} wrote {written}", r.id, w.id));
        } else if r.precedes(w) {
            verdict.push(p, alloc::vec![w.id, r.id], step, format!("read {} returned {v} before write {} started", r.id, w.id));
        } else if w.precedes(r) {
            if let Some(later) = history.writes().find(|o| w.precedes(o) && o.precedes(r)) {
                verdict.push(
                    p,
                    alloc::vec![w.id, later.id, r.id],
                    step,
                    format!("read {} returned {v} although write {} completed in between", r.id, later.id),
                );
            }
        }
    }
    Ok(verdict)
}

/// No new/old inversion between reads ordered in time.
pub fn check_property2(history: &History) -> Result<Verdict, CheckError> {
    validate(history)?;
    let mut verdict = Verdict::default();
    let reads: Vec<_> = completed_reads(history).collect();
    for &(later, v_later, step) in &reads {
        let newest_before = reads
            .iter()
            .filter(|(r, _, _)| r.precedes(later))
            .max_by_key(|(r, v, _)| (v.sn, core::cmp::Reverse(r.invoke_step)));
        if let Some(&(earlier, v_earlier, _)) = newest_before {
            if v_earlier.sn > v_later.sn {
                verdict.push(
                    PropertyId::NoNewOldInversion,
                    alloc::vec![earlier.id, later.id],
                    step,
                    format!(
                        "read {} returned {v_earlier}, then read {} returned the older {v_later}",
                        earlier.id, later.id
                    ),
                );
            }
        }
    }
    Ok(verdict)
}

/// Register sequence numbers never decrease across writes to the register.
pub fn check_monotonicity(events: &[TraceEvent]) -> Verdict {
    let mut last: alloc::collections::BTreeMap<RegisterId, u64> = Default::default();
    let mut verdict = Verdict::default();
    for e in events {
        if let EventKind::RegWrite { reg, value, process } = &e.kind {
            if let Some(&prev) = last.get(reg) {
                if value.sn < prev {
                    verdict.push(
                        PropertyId::Monotonicity,
                        Vec::new(),
                        e.step,
                        format!("{process} lowered {reg} from sn {prev} to {} at step {}", value.sn, e.step),
                    );
                }
            }
            last.insert(*reg, value.sn);
        }
    }
    verdict
}

/// Every operation of a process that did not crash has responded. Only
/// meaningful on a quiescent run with at most `t` crashes.
pub fn check_completion(history: &History, t: usize) -> Result<Verdict, CheckError> {
    let crashed = history.crashed.len();
    if crashed > t {
        return Err(CheckError::TooManyCrashes { crashed, t });
    }
    let mut verdict = Verdict::default();
    for op in &history.ops {
        if op.kind != OpKind::WriteBack && !op.is_complete() && !history.crashed.contains(op.process) {
            verdict.push(
                PropertyId::Completion,
                alloc::vec![op.id],
                op.invoke_step,
                format!("{} {} by {} never responded", op.kind.as_str(), op.id, op.process),
            );
        }
    }
    Ok(verdict)
}

/// Each read returns the initial value or a value whose write was invoked
/// before the read responded.
pub fn check_no_future_values(history: &History) -> Result<Verdict, CheckError> {
    validate(history)?;
    let mut verdict = Verdict::default();
    for (r, v, step) in completed_reads(history) {
        if v.sn == 0 {
            continue;
        }
        match write_of(history, v.sn) {
            Some(w) if w.invoke_step < step => {}
            _ => verdict.push(
                PropertyId::NoFutureValues,
                alloc::vec![r.id],
                step,
                format!("read {} returned {v} before any write of it began", r.id),
            ),
        }
    }
    Ok(verdict)
}

/// A read that starts after write `k` finished returns `v_l` with `l >= k`.
pub fn check_write_read_order(history: &History) -> Result<Verdict, CheckError> {
    validate(history)?;
    let mut verdict = Verdict::default();
    for (r, v, step) in completed_reads(history) {
        let newest = history
            .writes()
            .filter(|w| w.precedes(r))
            .max_by_key(|w| w.value.as_ref().map(|x| x.sn));
        if let Some(w) = newest {
            let k = w.value.as_ref().expect("validated").sn;
            if v.sn < k {
                verdict.push(
                    PropertyId::WriteReadOrder,
                    alloc::vec![w.id, r.id],
                    step,
                    format!("read {} returned sn {} after write {} of sn {k} completed", r.id, v.sn, w.id),
                );
            }
        }
    }
    Ok(verdict)
}

/// Runs the selected checks over a trace. Completion uses the crash budget
/// implied by the run's quorum.
pub fn check_trace(trace: &Trace, properties: &[PropertyId]) -> Result<Verdict, TraceCheckError> {
    let history = trace.history()?;
    let mut parts = Vec::new();
    for &p in properties {
        parts.push(match p {
            PropertyId::ReadsFromLatest => check_property1(&history)?,
            PropertyId::NoNewOldInversion => check_property2(&history)?,
            PropertyId::Monotonicity => check_monotonicity(&trace.events),
            PropertyId::Completion => {
                if !trace.is_quiescent() {
                    return Err(TraceCheckError::NotQuiescent);
                }
                check_completion(&history, trace.info.tolerated())?
            }
            PropertyId::NoFutureValues => check_no_future_values(&history)?,
            PropertyId::WriteReadOrder => check_write_read_order(&history)?,
        });
    }
    Ok(Verdict::merge(parts))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceCheckError {
    #[error(transparent)]
    History(#[from] crate::history::HistoryError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("completion can only be judged on a quiescent run")]
    NotQuiescent,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProcessId;
    use crate::procset::ProcSet;
    use alloc::vec;

    fn pid(i: u32) -> ProcessId {
        ProcessId::new(i)
    }

    fn write(id: OpId, sn: u64, inv: u64, resp: Option<u64>) -> OpRecord {
        OpRecord {
            id,
            kind: OpKind::Write,
            process: pid(1),
            invoke_step: inv,
            response_step: resp,
            value: Some(TaggedValue::new(sn, alloc::format!("v{sn}"))),
        }
    }

    fn read(id: OpId, proc: u32, inv: u64, resp: u64, sn: u64) -> OpRecord {
        let value = if sn == 0 { TaggedValue::initial() } else { TaggedValue::new(sn, alloc::format!("v{sn}")) };
        OpRecord {
            id,
            kind: OpKind::Read,
            process: pid(proc),
            invoke_step: inv,
            response_step: Some(resp),
            value: Some(value),
        }
    }

    fn history(ops: Vec<OpRecord>) -> History {
        History { ops, crashed: ProcSet::EMPTY }
    }

    #[test]
    fn initial_value_after_completed_write_is_flagged() {
        let h = history(vec![write(0, 1, 1, Some(5)), read(1, 2, 6, 9, 0)]);
        let v = check_property1(&h).unwrap();
        assert!(!v.ok());
        assert_eq!(v.violations[0].ops, vec![0, 1]);
        let good = history(vec![write(0, 1, 1, Some(5)), read(1, 2, 6, 9, 1)]);
        assert!(check_property1(&good).unwrap().ok());
    }

    #[test]
    fn initial_value_without_writes_is_fine() {
        let h = history(vec![read(0, 2, 1, 4, 0), read(1, 3, 2, 8, 0)]);
        assert!(check_property1(&h).unwrap().ok());
        assert!(check_property2(&h).unwrap().ok());
    }

    #[test]
    fn concurrent_read_may_return_old_or_new() {
        for sn in [0, 1] {
            let h = history(vec![write(0, 1, 3, Some(10)), read(1, 2, 4, 8, sn)]);
            assert!(check_property1(&h).unwrap().ok(), "sn {sn}");
        }
        // an unfinished write can still justify a concurrent read
        let h = history(vec![write(0, 1, 3, None), read(1, 2, 4, 8, 1)]);
        assert!(check_property1(&h).unwrap().ok());
    }

    #[test]
    fn overwritten_value_is_flagged() {
        let h = history(vec![write(0, 1, 1, Some(3)), write(1, 2, 4, Some(6)), read(2, 2, 7, 9, 1)]);
        let v = check_property1(&h).unwrap();
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].ops, vec![0, 1, 2]);
        // a write overlapping the read does not break immediacy
        let h = history(vec![write(0, 1, 1, Some(3)), write(1, 2, 4, Some(12)), read(2, 2, 7, 9, 1)]);
        assert!(check_property1(&h).unwrap().ok());
    }

    #[test]
    fn future_and_forged_values_are_flagged() {
        let h = history(vec![read(0, 2, 1, 3, 1), write(1, 1, 5, Some(7))]);
        assert!(!check_property1(&h).unwrap().ok());
        assert!(!check_no_future_values(&h).unwrap().ok());
        let forged = history(vec![read(0, 2, 1, 3, 4)]);
        assert!(!check_property1(&forged).unwrap().ok());
    }

    #[test]
    fn inversion_between_ordered_reads() {
        let h = history(vec![
            write(0, 1, 1, Some(2)),
            write(1, 2, 3, None),
            read(2, 2, 4, 6, 2),
            read(3, 3, 7, 9, 1),
        ]);
        let v = check_property2(&h).unwrap();
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].ops, vec![2, 3]);
        // overlapping reads may invert
        let h = history(vec![write(0, 1, 1, None), read(1, 2, 2, 6, 1), read(2, 3, 5, 9, 0)]);
        assert!(check_property2(&h).unwrap().ok());
    }

    #[test]
    fn write_read_order_follows_completed_writes() {
        let h = history(vec![write(0, 1, 1, Some(2)), write(1, 2, 3, Some(4)), read(2, 2, 5, 7, 1)]);
        assert!(!check_write_read_order(&h).unwrap().ok());
        let h = history(vec![write(0, 1, 1, Some(2)), write(1, 2, 3, Some(4)), read(2, 2, 5, 7, 2)]);
        assert!(check_write_read_order(&h).unwrap().ok());
    }

    #[test]
    fn monotonicity_flags_first_decrease() {
        let reg = RegisterId { set: 1, owner: pid(1) };
        let w = |step, sn| TraceEvent {
            step,
            kind: EventKind::RegWrite { process: pid(1), reg, value: TaggedValue::new(sn, "x") },
        };
        assert!(check_monotonicity(&[w(1, 1), w(2, 3)]).ok());
        let v = check_monotonicity(&[w(1, 3), w(2, 2), w(3, 1)]);
        assert_eq!(v.violations.len(), 2);
        assert_eq!(v.earliest().unwrap().step, 2);
    }

    #[test]
    fn completion_exempts_crashed_processes() {
        let mut h = history(vec![write(0, 1, 1, None), read(1, 2, 2, 5, 0)]);
        assert!(!check_completion(&h, 1).unwrap().ok());
        h.crashed.insert(pid(1));
        assert!(check_completion(&h, 1).unwrap().ok());
        h.crashed.insert(pid(3));
        assert_eq!(check_completion(&h, 1), Err(CheckError::TooManyCrashes { crashed: 2, t: 1 }));
    }

    #[test]
    fn malformed_histories_are_errors() {
        let mut bad = read(0, 2, 5, 5, 0);
        bad.response_step = Some(4);
        assert!(matches!(check_property1(&history(vec![bad])), Err(CheckError::Malformed { .. })));
        let dup = history(vec![write(0, 1, 1, Some(2)), write(1, 1, 3, Some(4))]);
        assert!(matches!(check_property2(&dup), Err(CheckError::DuplicateWriteSn { .. })));
    }

    #[test]
    fn property_names_round_trip() {
        for p in PropertyId::ALL {
            assert_eq!(PropertyId::parse(p.as_str()), Some(p));
        }
        assert_eq!(PropertyId::parse("3"), None);
    }
}
