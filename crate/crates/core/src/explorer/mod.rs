//! Drives a semantics: guided strategies, bounded breadth-first exploration
//! and trace replay.

mod bfs;
mod strategy;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;

use serde::Serialize;

use crate::deadlock::{check_deadlock, DeadlockWitness};
use crate::ir::Program;
use crate::runtime::{
    enabled_choices, initial_configuration, is_local, rule_name, step, Choice, Configuration, EngineError, Machine,
    ProcessorId, Terminal,
};

pub use bfs::{explore, explore_bounded, Bounds, ExploreError};
pub use strategy::{
    run_strategy, run_strategy_with, RuleFilter, RunOptions, Strategy, StrategyError, StrategyRun, StrategyStep,
};
pub use trace::{read_trace, replay, replay_trace, write_trace, ReplayError, Trace, TraceFormatError};

/// Rule names that strategy filters may mention.
pub const RULE_NAMES: [&str; 14] = [
    "create_root",
    "create",
    "command",
    "assign",
    "if",
    "nil",
    "eval",
    "wait",
    "write",
    "lock",
    "apply",
    "request",
    "release",
    "frame_pop",
];

/// A transition system the explorer can drive.
pub trait Semantics: Sync {
    type Config: Clone + Eq + Hash + Send + Sync;

    /// Tag written into trace headers.
    const KIND: &'static str;

    fn program(&self) -> &Program;
    fn initial(&self) -> Result<Self::Config, EngineError>;
    fn enabled(&self, c: &Self::Config) -> Vec<Choice>;
    fn step(&self, c: &Self::Config, ch: Choice) -> Result<Self::Config, EngineError>;
    fn canonical(&self, c: &Self::Config) -> Self::Config;
    fn rule_name(&self, c: &Self::Config, p: ProcessorId) -> Option<&'static str>;
    fn lock_sets(&self, c: &Self::Config) -> BTreeMap<ProcessorId, BTreeSet<ProcessorId>>;
    fn terminal(&self, c: &Self::Config) -> Terminal;
    /// Sets the configuration's terminal status to deadlock on a witness.
    fn check_deadlock(&self, c: &mut Self::Config) -> Option<DeadlockWitness>;
    fn processor_name(&self, c: &Self::Config, p: ProcessorId) -> String;

    /// Whether `p`'s next step is invisible to every other processor.
    fn is_local(&self, _c: &Self::Config, _p: ProcessorId) -> bool {
        false
    }
}

impl Semantics for Machine<'_> {
    type Config = Configuration;

    const KIND: &'static str = "concrete";

    fn program(&self) -> &Program {
        Machine::program(self)
    }

    fn initial(&self) -> Result<Configuration, EngineError> {
        initial_configuration(Machine::program(self))
    }

    fn enabled(&self, c: &Configuration) -> Vec<Choice> {
        enabled_choices(c)
    }

    fn step(&self, c: &Configuration, ch: Choice) -> Result<Configuration, EngineError> {
        step(self, c, ch)
    }

    fn canonical(&self, c: &Configuration) -> Configuration {
        c.canonical()
    }

    fn rule_name(&self, c: &Configuration, p: ProcessorId) -> Option<&'static str> {
        rule_name(c, p)
    }

    fn lock_sets(&self, c: &Configuration) -> BTreeMap<ProcessorId, BTreeSet<ProcessorId>> {
        c.lock_sets()
    }

    fn terminal(&self, c: &Configuration) -> Terminal {
        c.terminal
    }

    fn check_deadlock(&self, c: &mut Configuration) -> Option<DeadlockWitness> {
        check_deadlock(c)
    }

    fn processor_name(&self, c: &Configuration, p: ProcessorId) -> String {
        c.processor_name(p)
    }

    fn is_local(&self, c: &Configuration, p: ProcessorId) -> bool {
        is_local(c, p)
    }
}

/// A deadlocked configuration, the shortest schedule reaching it, and
/// display names of the processors the witness mentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockReport {
    pub trace: Trace,
    pub witness: DeadlockWitness,
    pub names: BTreeMap<ProcessorId, String>,
}

impl DeadlockReport {
    pub(crate) fn new<S: Semantics>(sem: &S, c: &S::Config, trace: Trace, witness: DeadlockWitness) -> Self {
        let names = witness
            .labels
            .iter()
            .flat_map(|((p, q), hs)| [*p, *q].into_iter().chain(hs.iter().copied()))
            .map(|p| (p, sem.processor_name(c, p)))
            .collect();
        DeadlockReport { trace, witness, names }
    }

    pub fn describe(&self) -> Vec<String> {
        self.witness.describe(|p| self.names.get(&p).cloned().unwrap_or_else(|| p.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Default)]
pub struct ExplorationReport {
    pub states_visited: usize,
    pub deadlocks: Vec<DeadlockReport>,
    /// Distinct final configurations where every stack is empty.
    pub completed_traces: usize,
    /// Distinct configurations with nothing enabled that are neither
    /// completed nor marked deadlocked.
    pub stuck_states: usize,
    pub bound_hit: bool,
}

impl ExplorationReport {
    pub fn found_deadlock(&self) -> bool {
        !self.deadlocks.is_empty()
    }
}
