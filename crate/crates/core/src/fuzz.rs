//! Randomized workloads, crash plans and schedules, checked end to end.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checker::{check_trace, PropertyId, TraceCheckError, Verdict};
use crate::lower_bound::{self, LowerBoundError};
use crate::model::{ProcessId, SystemSpec};
use crate::protocol::Threshold;
use crate::sim::{self, Outcome, Schedule, SimError, WorkloadOp};

/// How many processes a run crashes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashCount {
    Exactly(usize),
    UpTo(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FuzzConfig {
    /// Crash budget the protocol is configured for.
    pub t: usize,
    pub crashes: CrashCount,
    pub max_ops: usize,
}

impl FuzzConfig {
    pub fn new(t: usize) -> Self {
        FuzzConfig { t, crashes: CrashCount::UpTo(t), max_ops: 20 }
    }

    pub fn with_crashes(mut self, crashes: CrashCount) -> Self {
        self.crashes = crashes;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FuzzError {
    #[error("cannot crash {crashes} of {n} processes")]
    TooManyCrashes { crashes: usize, n: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] TraceCheckError),
    #[error(transparent)]
    LowerBound(#[from] LowerBoundError),
}

/// One run's result.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub seed: u64,
    pub steps: u64,
    pub crashes: usize,
    /// Operations by live processes that never returned.
    pub starved: usize,
    pub verdict: Verdict,
}

impl RunReport {
    pub fn ok(&self) -> bool {
        self.verdict.ok()
    }
}

/// Everything but completion, which is reported as starvation.
const SAFETY: [PropertyId; 5] = [
    PropertyId::ReadsFromLatest,
    PropertyId::NoNewOldInversion,
    PropertyId::Monotonicity,
    PropertyId::NoFutureValues,
    PropertyId::WriteReadOrder,
];

/// Up to `max_ops` operations: writes by the writer with fresh payloads,
/// reads by anyone, with invocation times spread over the early run.
pub fn random_workload<R: Rng>(spec: &SystemSpec, rng: &mut R, max_ops: usize) -> Vec<WorkloadOp> {
    let n = spec.n();
    let horizon = 40 * n as u64;
    let count = rng.gen_range(1..=max_ops.max(1));
    let mut writes = 0;
    (0..count)
        .map(|_| {
            let at = rng.gen_range(0..=horizon);
            if rng.gen_bool(0.4) {
                writes += 1;
                WorkloadOp::write(spec.writer(), format!("w{writes}"), at)
            } else {
                let p = ProcessId::new(rng.gen_range(1..=n as u32));
                WorkloadOp::read(p, at)
            }
        })
        .collect()
}

/// `count` distinct processes, each crashing at a random early step.
pub fn random_crash_plan<R: Rng>(n: usize, count: usize, rng: &mut R) -> Result<Vec<(ProcessId, u64)>, FuzzError> {
    if count > n {
        return Err(FuzzError::TooManyCrashes { crashes: count, n });
    }
    let horizon = 60 * n as u64;
    Ok(sample(rng, n, count)
        .into_iter()
        .map(|i| (ProcessId::new(i as u32 + 1), rng.gen_range(0..=horizon)))
        .collect())
}

/// A fair-random run with a random workload and crash plan.
pub fn fuzz_one(spec: &SystemSpec, config: &FuzzConfig, seed: u64) -> Result<RunReport, FuzzError> {
    fuzz_run(spec, config, seed).map(|(report, _)| report)
}

/// [`fuzz_one`], keeping the run itself.
pub fn fuzz_run(spec: &SystemSpec, config: &FuzzConfig, seed: u64) -> Result<(RunReport, Outcome), FuzzError> {
    let n = spec.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let workload = random_workload(spec, &mut rng, config.max_ops);
    let count = match config.crashes {
        CrashCount::Exactly(c) => c,
        CrashCount::UpTo(c) => rng.gen_range(0..=c.min(n)),
    };
    let plan = random_crash_plan(n, count, &mut rng)?;
    let threshold = Threshold::tolerating(n, config.t).map_err(SimError::from)?;
    let schedule = Schedule::fair(rng.gen()).with_crashes(plan);
    let outcome = sim::run(spec, threshold, &workload, &schedule)?;
    let verdict = check_trace(&outcome.trace, &SAFETY)?;
    let crashed = outcome.trace.crashed();
    let starved = outcome
        .history
        .ops
        .iter()
        .filter(|op| !op.is_complete() && !crashed.contains(op.process))
        .count();
    let report = RunReport {
        seed,
        steps: outcome.trace.events.last().map_or(0, |e| e.step + 1),
        crashes: crashed.len(),
        starved,
        verdict,
    };
    Ok((report, outcome))
}

/// A randomly chosen witness and writer, run through the isolating schedule.
/// Only meaningful above the threshold.
pub fn adversarial_one(spec: &SystemSpec, t: usize, seed: u64) -> Result<RunReport, FuzzError> {
    adversarial_run(spec, t, seed).map(|(report, _)| report)
}

/// [`adversarial_one`], keeping the run itself.
pub fn adversarial_run(spec: &SystemSpec, t: usize, seed: u64) -> Result<(RunReport, Outcome), FuzzError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let witnesses = lower_bound::all_witnesses(spec.bag(), t)?;
    let mut w = witnesses[rng.gen_range(0..witnesses.len())];
    if rng.gen_bool(0.5) {
        core::mem::swap(&mut w.p, &mut w.p_prime);
    }
    let members: Vec<ProcessId> = w.p.iter().collect();
    let writer = members[rng.gen_range(0..members.len())];
    let spec = spec.with_writer(writer);
    let run = lower_bound::build_e3(&spec, t, &w)?;
    let outcome = sim::run(&spec, run.threshold, &run.workload, &run.schedule)?;
    let verdict = check_trace(&outcome.trace, &SAFETY)?;
    let report = RunReport {
        seed,
        steps: outcome.trace.events.last().map_or(0, |e| e.step + 1),
        crashes: 0,
        starved: outcome.history.ops.iter().filter(|op| !op.is_complete()).count(),
        verdict,
    };
    Ok((report, outcome))
}
