//! File formats and the command line for `mmreg-core`.
//!
//! - [`specfile`]: JSON system descriptions.
//! - [`workload`]: JSON workload files.
//! - [`jsonl`]: traces as newline-delimited JSON.
//! - [`cli`]: the `mmreg` binary's subcommands.

pub mod cli;
pub mod jsonl;
pub mod specfile;
pub mod workload;
