//! Workload files: an ordered list of operations.
//!
//! ```json
//! [{"op": "write", "proc": 1, "value": "a", "at-step": 0},
//!  {"op": "read", "proc": 2, "at-step": 12}]
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mmreg_core::sim::WorkloadOp;
use mmreg_core::ProcessId;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Write,
    Read,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub op: Op,
    pub proc: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(rename = "at-step", default)]
    pub at_step: u64,
}

impl Entry {
    fn to_op(&self, index: usize) -> Result<WorkloadOp> {
        if self.proc == 0 {
            bail!("entry {index}: processes are numbered from 1");
        }
        let p = ProcessId::new(self.proc);
        Ok(match (self.op, &self.value) {
            (Op::Write, Some(v)) => WorkloadOp::write(p, v.clone(), self.at_step),
            (Op::Write, None) => bail!("entry {index}: write needs a value"),
            (Op::Read, None) => WorkloadOp::read(p, self.at_step),
            (Op::Read, Some(_)) => bail!("entry {index}: read takes no value"),
        })
    }

    pub fn from_op(op: &WorkloadOp) -> Self {
        Entry {
            op: if op.value.is_some() { Op::Write } else { Op::Read },
            proc: op.process.get(),
            value: op.value.clone(),
            at_step: op.at_step,
        }
    }
}

pub fn parse(text: &str) -> Result<Vec<WorkloadOp>> {
    let entries: Vec<Entry> = serde_json::from_str(text)?;
    entries.iter().enumerate().map(|(i, e)| e.to_op(i)).collect()
}

pub fn load(path: &Path) -> Result<Vec<WorkloadOp>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn to_json(ops: &[WorkloadOp]) -> String {
    let entries: Vec<Entry> = ops.iter().map(Entry::from_op).collect();
    serde_json::to_string(&entries).expect("plain data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = r#"[{"op":"write","proc":1,"value":"a","at-step":0},{"op":"read","proc":2,"at-step":12}]"#;
        let ops = parse(text).unwrap();
        assert_eq!(ops, vec![WorkloadOp::write(ProcessId::new(1), "a", 0), WorkloadOp::read(ProcessId::new(2), 12)]);
        assert_eq!(to_json(&ops), text);
    }

    #[test]
    fn rejects_malformed_entries() {
        assert!(parse(r#"[{"op":"write","proc":1}]"#).is_err());
        assert!(parse(r#"[{"op":"read","proc":1,"value":"x"}]"#).is_err());
        assert!(parse(r#"[{"op":"read","proc":0}]"#).is_err());
        assert!(parse(r#"[{"op":"cas","proc":1}]"#).is_err());
        assert_eq!(parse(r#"[{"op":"read","proc":3}]"#).unwrap()[0].at_step, 0);
    }
}
