//! Traces as newline-delimited JSON.
//!
//! The first line describes the run, every further line is one event:
//!
//! ```text
//! {"kind":"run","payload":{"n":3,"writer":1,"ack_quorum":2}}
//! {"step":0,"kind":"invoke_write","actor":1,"payload":{"op":0,"value":{"sn":1,"val":"a"}}}
//! {"step":1,"kind":"send","actor":1,"payload":{"id":{"sender":1,"seq":0},"to":1,"msg":{"W":{"sn":1,"val":"a"}}}}
//! ```
//!
//! Event fields always appear in the order `step, kind, actor, payload`.

use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context, Result};
use mmreg_core::history::{EventKind, RunInfo};
use mmreg_core::protocol::MsgId;
use mmreg_core::{Message, OpKind, Payload, ProcessId, RegisterId, TaggedValue, Trace, TraceEvent};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq)]
pub struct Value {
    pub sn: u64,
    pub val: String,
}

impl From<&TaggedValue> for Value {
    fn from(v: &TaggedValue) -> Self {
        Value { sn: v.sn, val: v.val.clone() }
    }
}

impl From<Value> for TaggedValue {
    fn from(v: Value) -> Self {
        TaggedValue::new(v.sn, v.val)
    }
}

#[derive(Serialize, Deserialize)]
struct OpPayload {
    op: usize,
    value: Option<Value>,
}

#[derive(Serialize, Deserialize)]
struct Id {
    sender: u32,
    seq: u64,
}

#[derive(Serialize, Deserialize)]
enum Msg {
    W(Value),
    #[serde(rename = "ACK-W")]
    AckW { sn: u64 },
    R { sn_r: u64 },
    #[serde(rename = "ACK-R")]
    AckR { sn_r: u64, value: Value },
}

#[derive(Serialize, Deserialize)]
struct MsgPayload {
    id: Id,
    to: u32,
    msg: Msg,
}

#[derive(Serialize, Deserialize)]
struct Reg {
    set: usize,
    owner: u32,
}

#[derive(Serialize, Deserialize)]
struct RegPayload {
    reg: Reg,
    value: Value,
}

#[derive(Serialize, Deserialize)]
struct Empty {}

#[derive(Serialize, Deserialize)]
struct RunPayload {
    n: usize,
    writer: u32,
    ack_quorum: usize,
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    kind: &'a str,
    payload: RunPayload,
}

#[derive(Serialize)]
struct LineOut<'a, P> {
    step: u64,
    kind: &'a str,
    actor: u32,
    payload: P,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    #[serde(default)]
    step: Option<u64>,
    kind: String,
    #[serde(default)]
    actor: Option<u32>,
    payload: serde_json::Value,
}

fn msg_payload(m: &Message) -> MsgPayload {
    let msg = match &m.payload {
        Payload::W(v) => Msg::W(v.into()),
        Payload::AckW { sn } => Msg::AckW { sn: *sn },
        Payload::R { sn_r } => Msg::R { sn_r: *sn_r },
        Payload::AckR { sn_r, value } => Msg::AckR { sn_r: *sn_r, value: value.into() },
    };
    MsgPayload { id: Id { sender: m.id.sender.get(), seq: m.id.seq }, to: m.to.get(), msg }
}

fn message(p: MsgPayload, n: usize) -> Result<Message> {
    let payload = match p.msg {
        Msg::W(v) => Payload::W(v.into()),
        Msg::AckW { sn } => Payload::AckW { sn },
        Msg::R { sn_r } => Payload::R { sn_r },
        Msg::AckR { sn_r, value } => Payload::AckR { sn_r, value: value.into() },
    };
    Ok(Message { id: MsgId { sender: process(p.id.sender, n)?, seq: p.id.seq }, to: process(p.to, n)?, payload })
}

fn process(i: u32, n: usize) -> Result<ProcessId> {
    if i == 0 || i as usize > n {
        bail!("process {i} outside 1..={n}");
    }
    Ok(ProcessId::new(i))
}

fn write_line<W: Write, P: Serialize>(out: &mut W, e: &TraceEvent, payload: P) -> Result<()> {
    let line = LineOut { step: e.step, kind: e.kind.name(), actor: e.kind.actor().get(), payload };
    serde_json::to_writer(&mut *out, &line)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn op_payload(op: usize, value: Option<&TaggedValue>) -> OpPayload {
    OpPayload { op, value: value.map(Value::from) }
}

/// Writes `trace` as JSONL.
pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<()> {
    let header = HeaderOut {
        kind: "run",
        payload: RunPayload { n: trace.info.n, writer: trace.info.writer.get(), ack_quorum: trace.info.ack_quorum },
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for e in &trace.events {
        match &e.kind {
            EventKind::Invoke { op, value, .. } | EventKind::Respond { op, value, .. } => {
                write_line(&mut out, e, op_payload(*op, value.as_ref()))?
            }
            EventKind::WriteBack { op, value, .. } => write_line(&mut out, e, op_payload(*op, Some(value)))?,
            EventKind::Send { msg } | EventKind::Deliver { msg } => write_line(&mut out, e, msg_payload(msg))?,
            EventKind::RegRead { reg, value, .. } | EventKind::RegWrite { reg, value, .. } => {
                let payload = RegPayload { reg: Reg { set: reg.set, owner: reg.owner.get() }, value: value.into() };
                write_line(&mut out, e, payload)?
            }
            EventKind::Crash { .. } => write_line(&mut out, e, Empty {})?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn payload<T: DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    Ok(serde_json::from_value(v)?)
}

fn event(line: LineIn, n: usize) -> Result<TraceEvent> {
    let step = line.step.ok_or_else(|| anyhow!("event without `step`"))?;
    let actor = process(line.actor.ok_or_else(|| anyhow!("event without `actor`"))?, n)?;
    let kind = match line.kind.as_str() {
        "invoke_read" | "invoke_write" => {
            let p: OpPayload = payload(line.payload)?;
            let kind = if line.kind == "invoke_read" { OpKind::Read } else { OpKind::Write };
            EventKind::Invoke { op: p.op, kind, process: actor, value: p.value.map(Into::into) }
        }
        "write_back" => {
            let p: OpPayload = payload(line.payload)?;
            let value = p.value.ok_or_else(|| anyhow!("write_back without value"))?.into();
            EventKind::WriteBack { op: p.op, process: actor, value }
        }
        "respond" => {
            let p: OpPayload = payload(line.payload)?;
            EventKind::Respond { op: p.op, process: actor, value: p.value.map(Into::into) }
        }
        "send" | "deliver" => {
            let msg = message(payload(line.payload)?, n)?;
            let expected = if line.kind == "send" { msg.from() } else { msg.to };
            if expected != actor {
                bail!("{} by {actor} of a message {} → {}", line.kind, msg.from(), msg.to);
            }
            if line.kind == "send" {
                EventKind::Send { msg }
            } else {
                EventKind::Deliver { msg }
            }
        }
        "reg_read" | "reg_write" => {
            let p: RegPayload = payload(line.payload)?;
            let reg = RegisterId { set: p.reg.set, owner: process(p.reg.owner, n)? };
            let value = p.value.into();
            if line.kind == "reg_read" {
                EventKind::RegRead { process: actor, reg, value }
            } else {
                EventKind::RegWrite { process: actor, reg, value }
            }
        }
        "crash" => {
            let _: Empty = payload(line.payload)?;
            EventKind::Crash { process: actor }
        }
        other => bail!("unknown event kind `{other}`"),
    };
    Ok(TraceEvent { step, kind })
}

/// Reads a JSONL trace. Blank lines are skipped.
pub fn read_trace<R: BufRead>(input: R) -> Result<Trace> {
    let mut info = None;
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LineIn = serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
        match info {
            None => {
                if parsed.kind != "run" {
                    bail!("line {}: trace must start with a `run` line", i + 1);
                }
                let p: RunPayload = payload(parsed.payload).with_context(|| format!("line {}", i + 1))?;
                if p.ack_quorum == 0 || p.ack_quorum > p.n {
                    bail!("line {}: quorum {} out of range for n = {}", i + 1, p.ack_quorum, p.n);
                }
                let writer = process(p.writer, p.n)?;
                info = Some(RunInfo { n: p.n, writer, ack_quorum: p.ack_quorum });
            }
            Some(RunInfo { n, .. }) => {
                events.push(event(parsed, n).with_context(|| format!("line {}", i + 1))?);
            }
        }
    }
    let info = info.ok_or_else(|| anyhow!("empty trace"))?;
    Ok(Trace { info, events })
}

pub fn trace_from_str(text: &str) -> Result<Trace> {
    read_trace(text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mmreg_core::sim::{run, Schedule, WorkloadOp};
    use mmreg_core::{Bag, SystemSpec, Threshold};

    fn sample() -> Trace {
        let spec = SystemSpec::new(&Bag::new(3, &[vec![1, 2]]).unwrap(), 1).unwrap();
        let workload = [WorkloadOp::write(ProcessId::new(1), "a", 0), WorkloadOp::read(ProcessId::new(2), 5)];
        let schedule = Schedule::fair(3).with_crashes(vec![(ProcessId::new(3), 20)]);
        run(&spec, Threshold::tolerating(3, 1).unwrap(), &workload, &schedule).unwrap().trace
    }

    #[test]
    fn every_kind_round_trips() {
        let trace = sample();
        let text = trace_to_string(&trace);
        for kind in ["invoke_write", "invoke_read", "send", "deliver", "reg_read", "reg_write", "write_back", "respond", "crash"] {
            assert!(text.contains(&format!(r#""kind":"{kind}""#)), "{kind} missing");
        }
        assert_eq!(trace_from_str(&text).unwrap(), trace);
    }

    #[test]
    fn field_order_is_fixed() {
        let text = trace_to_string(&sample());
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), r#"{"kind":"run","payload":{"n":3,"writer":1,"ack_quorum":2}}"#);
        for line in lines {
            assert!(line.starts_with(r#"{"step":"#), "{line}");
            let k = line.find(r#","kind":"#).unwrap();
            let a = line.find(r#","actor":"#).unwrap();
            let p = line.find(r#","payload":"#).unwrap();
            assert!(k < a && a < p, "{line}");
        }
    }

    #[test]
    fn single_send_line() {
        let msg = Message {
            id: MsgId { sender: ProcessId::new(2), seq: 7 },
            to: ProcessId::new(1),
            payload: Payload::AckW { sn: 4 },
        };
        let trace = Trace {
            info: RunInfo { n: 2, writer: ProcessId::new(1), ack_quorum: 1 },
            events: vec![TraceEvent { step: 0, kind: EventKind::Send { msg } }],
        };
        let text = trace_to_string(&trace);
        assert_eq!(
            text.lines().nth(1).unwrap(),
            r#"{"step":0,"kind":"send","actor":2,"payload":{"id":{"sender":2,"seq":7},"to":1,"msg":{"ACK-W":{"sn":4}}}}"#
        );
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(trace_from_str("").is_err());
        let header = r#"{"kind":"run","payload":{"n":2,"writer":1,"ack_quorum":1}}"#;
        assert!(trace_from_str(r#"{"step":0,"kind":"crash","actor":1,"payload":{}}"#).is_err());
        assert!(trace_from_str(&format!("{header}\n{{\"step\":0,\"kind\":\"crash\",\"actor\":3,\"payload\":{{}}}}")).is_err());
        assert!(trace_from_str(&format!("{header}\n{{\"step\":0,\"kind\":\"jump\",\"actor\":1,\"payload\":{{}}}}")).is_err());
        // a send must be taken by its sender
        let bad = r#"{"step":0,"kind":"send","actor":1,"payload":{"id":{"sender":2,"seq":0},"to":1,"msg":{"R":{"sn_r":1}}}}"#;
        assert!(trace_from_str(&format!("{header}\n{bad}")).is_err());
        assert!(trace_from_str(&format!("{header}\n\n")).unwrap().events.is_empty());
    }
}
