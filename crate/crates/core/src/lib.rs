//! Atomic single-writer multi-reader register emulation for
//! message-and-memory (m&m) systems.
//!
//! Processes in an m&m system talk over reliable asynchronous links and also
//! share SWMR registers inside designated subsets of processes. This crate
//! holds the algorithmic core, free of I/O:
//!
//! - [`model`]: bags of sharing sets, uniform systems induced by a graph, the
//!   graph square and the derived register identities.
//! - [`tolerance`]: the exact crash-tolerance threshold, computed three ways.
//! - [`protocol`]: the register emulation as pure per-process state machines.
//! - [`sim`]: a deterministic discrete-event simulator with crash injection
//!   and pluggable schedulers.
//! - [`history`]: traces and the operation histories projected from them.
//! - [`checker`]: atomicity and liveness checks over histories and traces.
//! - [`lower_bound`]: the adversarial schedule that breaks the emulation
//!   when it is configured to tolerate more crashes than the threshold.
//! - [`fuzz`]: seeded random runs feeding the checker.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod checker;
pub mod fuzz;
pub mod history;
pub mod lower_bound;
pub mod model;
pub mod procset;
pub mod protocol;
pub mod sim;
pub mod tolerance;

pub use checker::{PropertyId, Verdict, Violation};
pub use history::{History, OpKind, OpRecord, Trace, TraceEvent};
pub use model::{Bag, Graph, ModelError, ProcessId, RegisterId, SystemSpec};
pub use procset::ProcSet;
pub use protocol::{Message, Payload, TaggedValue, Threshold};
pub use tolerance::{ToleranceResult, Witness};
