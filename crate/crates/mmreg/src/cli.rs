//! The `mmreg` command line.
//!
//! Exit codes: 0 on success, 1 when a check finds violations, 2 on usage
//! errors, bad input, or a request that cannot be honored.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mmreg_core::checker::{check_trace, TraceCheckError};
use mmreg_core::fuzz::{self, CrashCount, FuzzConfig, RunReport};
use mmreg_core::lower_bound::{self, LowerBoundError};
use mmreg_core::sim::{self, Outcome, Schedule};
use mmreg_core::tolerance::{self, lower_bound_floor, ToleranceResult};
use mmreg_core::{ProcSet, ProcessId, PropertyId, Threshold, Verdict};
use rayon::prelude::*;
use serde::Serialize;

use crate::jsonl;
use crate::specfile::SpecFile;
use crate::workload;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mmreg", version, about = "Atomic SWMR register emulation in m&m systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the crash-tolerance threshold of a system.
    Tolerance {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Also print a pair of process sets refuting `t + 1`.
        #[arg(long)]
        witness: bool,
    },
    /// Run a workload in the simulator and emit its trace.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Crashes the protocol is configured to tolerate (quorum `n - t`).
        #[arg(long)]
        threshold: usize,
        /// Workload file. Defaults to the operations of `--replay`.
        #[arg(long)]
        workload: Option<PathBuf>,
        #[arg(long, env = "MM_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PolicyArg::Fair)]
        policy: PolicyArg,
        /// `p@step`: crash process p at the first step at or after `step`.
        #[arg(long = "crash", value_parser = parse_crash)]
        crashes: Vec<(u32, u64)>,
        /// Replay the scheduling decisions of an earlier trace.
        #[arg(long, conflicts_with_all = ["policy", "crashes"])]
        replay: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check a trace against the register properties.
    Check {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated subset of 1,2,mono,live,nofuture,order.
        #[arg(long, value_delimiter = ',', value_parser = parse_property)]
        properties: Option<Vec<PropertyId>>,
    },
    /// Build and run the schedule that breaks the emulation above the threshold.
    Violate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        t: usize,
        /// Full report, including the trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded random runs through the checker.
    Fuzz {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        /// First seed; run i uses seed + i.
        #[arg(long, env = "MM_SEED", default_value_t = 0)]
        seed: u64,
        /// Crash exactly this many processes per run. By default each run
        /// crashes a random number up to the threshold.
        #[arg(long)]
        crashes: Option<usize>,
        /// Configured crash tolerance. Defaults to the system's threshold.
        #[arg(long)]
        threshold: Option<usize>,
        /// Run the isolating schedule on random witnesses instead.
        #[arg(long)]
        adversarial: bool,
        #[arg(long, default_value_t = 20)]
        max_ops: usize,
        /// Where traces of failing runs go. Defaults to the temp directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Direct,
    Bridge,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PolicyArg {
    Fair,
    Fifo,
}

fn parse_crash(s: &str) -> Result<(u32, u64), String> {
    let (p, step) = s.split_once('@').ok_or_else(|| format!("expected p@step, got `{s}`"))?;
    let p: u32 = p.trim_start_matches('p').parse().map_err(|e| format!("process in `{s}`: {e}"))?;
    let step = step.parse().map_err(|e| format!("step in `{s}`: {e}"))?;
    if p == 0 {
        return Err("processes are numbered from 1".into());
    }
    Ok((p, step))
}

fn parse_property(s: &str) -> Result<PropertyId, String> {
    PropertyId::parse(s).ok_or_else(|| {
        let known: Vec<&str> = PropertyId::ALL.iter().map(|p| p.as_str()).collect();
        format!("unknown property `{s}`; expected one of {}", known.join(","))
    })
}

/// A finished command's exit code.
struct Done {
    code: i32,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(done) => done.code,
        Err(e) => {
            let _ = writeln!(err, "mmreg: {e:#}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<Done> {
    match command {
        Command::Tolerance { spec, method, witness } => cmd_tolerance(&spec, method, witness, out),
        Command::Simulate { spec, threshold, workload, seed, policy, crashes, replay, trace } => cmd_simulate(
            SimulateArgs { spec, threshold, workload, seed, policy, crashes, replay, trace },
            out,
        ),
        Command::Check { trace, properties } => cmd_check(&trace, properties, out),
        Command::Violate { spec, t, out: path } => cmd_violate(&spec, t, path.as_deref(), out),
        Command::Fuzz { spec, runs, seed, crashes, threshold, adversarial, max_ops, trace_dir } => cmd_fuzz(
            FuzzArgs { spec, runs, seed, crashes, threshold, adversarial, max_ops, trace_dir },
            out,
        ),
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn ids(s: ProcSet) -> Vec<u32> {
    s.iter().map(ProcessId::get).collect()
}

#[derive(Serialize)]
struct WitnessJson {
    p: Vec<u32>,
    p_prime: Vec<u32>,
}

#[derive(Serialize)]
struct ToleranceReport {
    t: usize,
    n: usize,
    floor: usize,
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_direct: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_bridge: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_uniform: Option<usize>,
    /// Refutes `t + 1`; absent when `t = n - 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Option<WitnessJson>>,
}

fn cmd_tolerance(path: &Path, method: Method, want_witness: bool, out: &mut dyn Write) -> Result<Done> {
    let file = SpecFile::load(path)?;
    let bag = file.bag()?;
    let direct = match method {
        Method::Direct | Method::Both => Some(tolerance::t_direct(&bag)?),
        Method::Bridge => None,
    };
    let bridge = match method {
        Method::Bridge | Method::Both => Some(tolerance::t_bridge(&bag)?),
        Method::Direct => None,
    };
    let uniform = match (&direct, file.graph()?) {
        (Some(_), Some(g)) => Some(tolerance::t_uniform(&g)?),
        _ => None,
    };
    let primary: &ToleranceResult = direct.as_ref().or(bridge.as_ref()).expect("some method ran");
    let agree = [&bridge, &uniform].iter().all(|r| r.as_ref().is_none_or(|r| r.t == primary.t));
    let report = ToleranceReport {
        t: primary.t,
        n: bag.n(),
        floor: lower_bound_floor(bag.n()),
        method,
        t_direct: direct.as_ref().map(|r| r.t),
        t_bridge: bridge.as_ref().map(|r| r.t),
        t_uniform: uniform.as_ref().map(|r| r.t),
        witness: want_witness
            .then(|| primary.witness.map(|w| WitnessJson { p: ids(w.p), p_prime: ids(w.p_prime) })),
    };
    emit(out, &report)?;
    if !agree {
        bail!("methods disagree on t");
    }
    Ok(Done { code: EXIT_OK })
}

struct SimulateArgs {
    spec: PathBuf,
    threshold: usize,
    workload: Option<PathBuf>,
    seed: u64,
    policy: PolicyArg,
    crashes: Vec<(u32, u64)>,
    replay: Option<PathBuf>,
    trace: Option<PathBuf>,
}

#[derive(Serialize)]
struct OpJson {
    op: usize,
    kind: &'static str,
    process: u32,
    invoke_step: u64,
    response_step: Option<u64>,
    value: Option<jsonl::Value>,
}

#[derive(Serialize)]
struct SimulateConfig {
    spec: SpecFile,
    threshold: usize,
    seed: u64,
    policy: &'static str,
    crashes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    replay: Option<String>,
}

#[derive(Serialize)]
struct SimulateReport {
    config: SimulateConfig,
    steps: u64,
    quiescent: bool,
    crashed: Vec<u32>,
    operations: Vec<OpJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
}

fn load_trace(path: &Path) -> Result<mmreg_core::Trace> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    jsonl::read_trace(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn save_trace(path: &Path, trace: &mmreg_core::Trace) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    jsonl::write_trace(trace, BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))
}

fn ops_json(outcome: &Outcome) -> Vec<OpJson> {
    outcome
        .history
        .ops
        .iter()
        .map(|o| OpJson {
            op: o.id,
            kind: o.kind.as_str(),
            process: o.process.get(),
            invoke_step: o.invoke_step,
            response_step: o.response_step,
            value: o.value.as_ref().map(Into::into),
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<Done> {
    let file = SpecFile::load(&args.spec)?;
    let spec = file.system()?;
    let threshold = Threshold::tolerating(spec.n(), args.threshold)?;
    let (workload, schedule, policy) = match &args.replay {
        Some(path) => {
            let earlier = load_trace(path)?;
            let workload = match &args.workload {
                Some(w) => workload::load(w)?,
                None => sim::workload_of(&earlier)
                    .context("the replayed trace skips operations; pass --workload")?,
            };
            (workload, Schedule::scripted(sim::script_of(&earlier)), "replay")
        }
        None => {
            let Some(w) = &args.workload else { bail!("--workload is required unless --replay is given") };
            let plan = args.crashes.iter().map(|&(p, s)| (ProcessId::new(p), s)).collect();
            let (schedule, name) = match args.policy {
                PolicyArg::Fair => (Schedule::fair(args.seed), "fair"),
                PolicyArg::Fifo => (Schedule::fifo(), "fifo"),
            };
            (workload::load(w)?, schedule.with_crashes(plan), name)
        }
    };
    let outcome = sim::run(&spec, threshold, &workload, &schedule)?;
    if let Some(path) = &args.trace {
        save_trace(path, &outcome.trace)?;
    }
    let report = SimulateReport {
        config: SimulateConfig {
            spec: file,
            threshold: args.threshold,
            seed: args.seed,
            policy,
            crashes: args.crashes.iter().map(|(p, s)| format!("{p}@{s}")).collect(),
            replay: args.replay.as_ref().map(|p| p.display().to_string()),
        },
        steps: outcome.trace.events.len() as u64,
        quiescent: outcome.trace.is_quiescent(),
        crashed: ids(outcome.trace.crashed()),
        operations: ops_json(&outcome),
        trace: args.trace.as_ref().map(|p| p.display().to_string()),
    };
    emit(out, &report)?;
    Ok(Done { code: EXIT_OK })
}

#[derive(Serialize)]
struct ViolationJson {
    property: &'static str,
    ops: Vec<usize>,
    step: u64,
    explanation: String,
}

#[derive(Serialize)]
struct VerdictJson {
    ok: bool,
    violations: Vec<ViolationJson>,
}

impl From<&Verdict> for VerdictJson {
    fn from(v: &Verdict) -> Self {
        VerdictJson {
            ok: v.ok(),
            violations: v
                .violations
                .iter()
                .map(|x| ViolationJson {
                    property: x.property.as_str(),
                    ops: x.ops.clone(),
                    step: x.step,
                    explanation: x.explanation.clone(),
                })
                .collect(),
        }
    }
}

fn cmd_check(path: &Path, properties: Option<Vec<PropertyId>>, out: &mut dyn Write) -> Result<Done> {
    let trace = load_trace(path)?;
    let properties = properties.unwrap_or_else(|| PropertyId::ALL.to_vec());
    let verdict = match check_trace(&trace, &properties) {
        Ok(v) => v,
        Err(TraceCheckError::NotQuiescent) => {
            bail!("{}: the run did not reach quiescence; drop `live` to check safety only", path.display())
        }
        Err(e) => return Err(e).with_context(|| format!("checking {}", path.display())),
    };
    emit(out, &VerdictJson::from(&verdict))?;
    Ok(Done { code: if verdict.ok() { EXIT_OK } else { EXIT_VIOLATION } })
}

#[derive(Serialize)]
struct PartitionJson {
    p: Vec<u32>,
    p_prime: Vec<u32>,
    q: Vec<u32>,
}

#[derive(Serialize)]
struct ViolateConfig {
    spec: SpecFile,
    t: usize,
}

#[derive(Serialize)]
struct ViolateReport {
    config: ViolateConfig,
    t: usize,
    t_l: usize,
    witness: PartitionJson,
    writer: u32,
    writer_reassigned: bool,
    reader: u32,
    crashes: usize,
    certified: bool,
    verdict: VerdictJson,
    operations: Vec<OpJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<serde_json::Value>>,
}

fn cmd_violate(path: &Path, t: usize, out_path: Option<&Path>, out: &mut dyn Write) -> Result<Done> {
    let file = SpecFile::load(path)?;
    let spec = file.system()?;
    let report = match lower_bound::demo(&spec, t) {
        Ok(r) => r,
        Err(e @ LowerBoundError::NotAboveThreshold { .. }) => bail!("refused: {e}"),
        Err(e) => return Err(e.into()),
    };
    let mut json = ViolateReport {
        config: ViolateConfig { spec: file, t },
        t,
        t_l: report.t_l,
        witness: PartitionJson {
            p: ids(report.witness.p),
            p_prime: ids(report.witness.p_prime),
            q: ids(report.witness.q),
        },
        writer: report.writer.get(),
        writer_reassigned: report.writer_reassigned,
        reader: report.reader.get(),
        crashes: report.crashes,
        certified: report.certified(),
        verdict: (&report.verdict).into(),
        operations: ops_json(&report.outcome),
        trace: None,
    };
    if let Some(p) = out_path {
        let lines = jsonl::trace_to_string(&report.outcome.trace)
            .lines()
            .map(serde_json::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        json.trace = Some(lines);
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &json)?;
        writeln!(w)?;
        w.flush()?;
        json.trace = None;
    }
    emit(out, &json)?;
    Ok(Done { code: if json.certified { EXIT_OK } else { EXIT_VIOLATION } })
}

struct FuzzArgs {
    spec: PathBuf,
    runs: u64,
    seed: u64,
    crashes: Option<usize>,
    threshold: Option<usize>,
    adversarial: bool,
    max_ops: usize,
    trace_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct FuzzConfigJson {
    spec: SpecFile,
    runs: u64,
    seed: u64,
    threshold: usize,
    crashes: String,
    adversarial: bool,
    max_ops: usize,
}

#[derive(Serialize)]
struct FailureJson {
    seed: u64,
    properties: Vec<&'static str>,
    starved: usize,
    trace: String,
}

#[derive(Serialize)]
struct FuzzSummary {
    config: FuzzConfigJson,
    t_l: usize,
    runs: u64,
    violations: usize,
    starved: usize,
    mean_steps: f64,
    failures: Vec<FailureJson>,
}

/// Traces of at most this many failing runs are written out.
const MAX_SAVED_TRACES: usize = 10;

fn cmd_fuzz(args: FuzzArgs, out: &mut dyn Write) -> Result<Done> {
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let file = SpecFile::load(&args.spec)?;
    let spec = file.system()?;
    let n = spec.n();
    let t_l = tolerance::t_bridge(spec.bag())?.t;
    let t = args.threshold.unwrap_or(t_l);
    if t >= n {
        bail!("threshold {t} must be below n = {n}");
    }
    if args.adversarial && t <= t_l {
        bail!("refused: adversarial runs need a threshold above t_L = {t_l}, got {t}");
    }
    let crashes = match args.crashes {
        Some(c) if c > n => bail!("cannot crash {c} of {n} processes"),
        Some(c) => CrashCount::Exactly(c),
        None => CrashCount::UpTo(t),
    };
    let config = FuzzConfig { t, crashes, max_ops: args.max_ops };
    let seeds: Vec<u64> = (0..args.runs).map(|i| args.seed.wrapping_add(i)).collect();
    let mut results: Vec<(RunReport, Option<mmreg_core::Trace>)> = seeds
        .par_iter()
        .map(|&s| {
            let (report, outcome) = if args.adversarial {
                fuzz::adversarial_run(&spec, t, s)?
            } else {
                fuzz::fuzz_run(&spec, &config, s)?
            };
            let failed = !report.ok() || report.starved > 0;
            Ok((report, failed.then_some(outcome.trace)))
        })
        .collect::<Result<_, fuzz::FuzzError>>()?;
    results.sort_by_key(|(r, _)| r.seed);

    let dir = args.trace_dir.clone().unwrap_or_else(std::env::temp_dir);
    let mut failures = Vec::new();
    for (report, trace) in &results {
        let Some(trace) = trace else { continue };
        let path = dir.join(format!("mmreg-fuzz-{}.jsonl", report.seed));
        let saved = if failures.len() < MAX_SAVED_TRACES {
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            save_trace(&path, trace)?;
            path.display().to_string()
        } else {
            String::new()
        };
        let mut properties: Vec<&'static str> = report.verdict.violations.iter().map(|v| v.property.as_str()).collect();
        properties.dedup();
        failures.push(FailureJson { seed: report.seed, properties, starved: report.starved, trace: saved });
    }
    let total_steps: u64 = results.iter().map(|(r, _)| r.steps).sum();
    let summary = FuzzSummary {
        config: FuzzConfigJson {
            spec: file,
            runs: args.runs,
            seed: args.seed,
            threshold: t,
            crashes: match crashes {
                CrashCount::Exactly(c) => c.to_string(),
                CrashCount::UpTo(c) => format!("0..={c}"),
            },
            adversarial: args.adversarial,
            max_ops: args.max_ops,
        },
        t_l,
        runs: args.runs,
        violations: results.iter().map(|(r, _)| r.verdict.violations.len()).sum(),
        starved: results.iter().map(|(r, _)| r.starved).sum(),
        mean_steps: total_steps as f64 / args.runs as f64,
        failures,
    };
    emit(out, &summary)?;
    Ok(Done { code: if summary.failures.is_empty() { EXIT_OK } else { EXIT_VIOLATION } })
}
