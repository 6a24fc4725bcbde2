//! Concrete small-step semantics over configurations `⟨p₁::St₁ | … | pₙ::Stₙ, σ⟩`.
//!
//! Each processor owns a call stack that doubles as its request queue: local
//! work is pushed on top, requests from other processors are appended at the
//! bottom and served in arrival order. Assignments decompose into
//! `eval(a, s); wait(a); write(t, a)` over a fresh channel `a`.

mod canon;
mod state;
mod step;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{Expression, Instruction, Name, Program};

pub use state::{acquire_locks, evaluate_expression, release_locks, Blocked};
pub(crate) use step::ROOT_SLOT;
pub use step::{
    decompose_assign, enabled_choices, initial_configuration, is_blocked, is_local, rule_name, step,
    uses_separate_types, Machine,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProcessorId(pub u32);

impl ProcessorId {
    pub const BOOTSTRAP: ProcessorId = ProcessorId(0);
}

impl fmt::Display for ProcessorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ObjId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ChannelId(pub u32);

/// A value held in a variable, attribute or channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ref {
    Void,
    Object(ObjId),
    Bool(bool),
}

impl Ref {
    pub fn object(self) -> Option<ObjId> {
        match self {
            Ref::Object(o) => Some(o),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Empty,
    Holding(Ref),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObjectRecord {
    pub class: Name,
    pub handler: ProcessorId,
    pub attributes: BTreeMap<Name, Ref>,
}

/// Index of a procedure inside the program: `(class, procedure)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureRef {
    pub class: u32,
    pub procedure: u32,
}

/// Activation record. The bootstrap frame has no feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub feature: Option<FeatureRef>,
    pub current: Ref,
    pub slots: BTreeMap<Name, Ref>,
}

/// A feature application waiting to run, together with the request-queue
/// locks its issuer acquired for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Call {
    pub feature: FeatureRef,
    pub target: ObjId,
    pub args: Vec<Ref>,
    pub owner: ProcessorId,
    pub acquired: BTreeSet<ProcessorId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StackItem {
    Instr(Arc<Instruction>),
    /// Allocates the root object (bootstrap only).
    CreateRoot,
    Eval {
        channel: ChannelId,
        source: Arc<Expression>,
    },
    Wait(ChannelId),
    Write {
        target: Arc<Expression>,
        channel: ChannelId,
    },
    Lock(BTreeSet<ProcessorId>),
    Apply(Call),
    Release {
        owner: ProcessorId,
        handlers: BTreeSet<ProcessorId>,
    },
    FramePop,
}

/// Call stack, top first.
pub type CallStack = VecDeque<StackItem>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct State {
    pub heap: BTreeMap<ObjId, ObjectRecord>,
    pub stores: BTreeMap<ProcessorId, Vec<Frame>>,
    /// `H(p)`: handlers whose request queues `p` has reserved.
    pub rq_locks: BTreeMap<ProcessorId, BTreeSet<ProcessorId>>,
    pub channels: BTreeMap<ChannelId, Channel>,
    pub procs: BTreeSet<ProcessorId>,
    /// Human-readable processor names, taken from the creating target.
    pub names: BTreeMap<ProcessorId, Name>,
    pub next_object: u32,
    pub next_channel: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    Running,
    Done,
    Deadlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub pool: BTreeMap<ProcessorId, CallStack>,
    pub state: State,
    pub terminal: Terminal,
}

/// Selects which processor's top-of-stack rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Choice {
    pub processor: ProcessorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("root procedure `{0}` takes arguments")]
    RootArity(String),
    #[error("unknown class or feature `{0}`")]
    Unresolved(String),
    #[error("processor {0} is not enabled")]
    NotEnabled(ProcessorId),
    #[error("processor {processor} is stuck on {item}")]
    Stuck { processor: ProcessorId, item: String },
    #[error("void dereference evaluating `{0}`")]
    VoidDereference(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("condition `{0}` is not boolean")]
    NonBoolean(String),
    #[error("channel {0:?} used out of order")]
    Channel(ChannelId),
    #[error("processor {owner} releases locks it does not hold: {handlers:?}")]
    ReleaseUnheld { owner: ProcessorId, handlers: BTreeSet<ProcessorId> },
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Configuration {
    pub fn stack(&self, p: ProcessorId) -> Option<&CallStack> {
        self.pool.get(&p)
    }

    pub fn top(&self, p: ProcessorId) -> Option<&StackItem> {
        self.pool.get(&p).and_then(|s| s.front())
    }

    pub fn all_idle(&self) -> bool {
        self.pool.values().all(|s| s.is_empty())
    }

    /// Copy with channel and object identifiers renumbered in traversal
    /// order, so that configurations differing only in fresh-name choices
    /// compare equal.
    pub fn canonical(&self) -> Configuration {
        canon::canonicalize(self)
    }

    /// Lock sets of every processor, for traces.
    pub fn lock_sets(&self) -> BTreeMap<ProcessorId, BTreeSet<ProcessorId>> {
        self.state.rq_locks.iter().filter(|(_, s)| !s.is_empty()).map(|(p, s)| (*p, s.clone())).collect()
    }

    pub fn processor_name(&self, p: ProcessorId) -> String {
        self.state.names.get(&p).map(|n| n.to_string()).unwrap_or_else(|| p.to_string())
    }
}

impl State {
    pub fn held(&self, p: ProcessorId) -> BTreeSet<ProcessorId> {
        self.rq_locks.get(&p).cloned().unwrap_or_default()
    }

    pub fn holder_of(&self, q: ProcessorId) -> Option<ProcessorId> {
        self.rq_locks.iter().find(|(_, s)| s.contains(&q)).map(|(p, _)| *p)
    }

    pub fn handler(&self, o: ObjId) -> Option<ProcessorId> {
        self.heap.get(&o).map(|r| r.handler)
    }

    /// Lock exclusivity and processor bookkeeping.
    pub fn check_invariants(&self) -> Result<(), EngineError> {
        let mut seen: BTreeMap<ProcessorId, ProcessorId> = BTreeMap::new();
        for (p, held) in &self.rq_locks {
            if !self.procs.contains(p) {
                return Err(EngineError::Invariant(format!("lock holder {p} is not a processor")));
            }
            for q in held {
                if !self.procs.contains(q) {
                    return Err(EngineError::Invariant(format!("locked handler {q} is not a processor")));
                }
                if let Some(other) = seen.insert(*q, *p) {
                    return Err(EngineError::Invariant(format!("{q} locked by both {other} and {p}")));
                }
            }
        }
        Ok(())
    }

    /// Lock exclusivity only: pairwise disjoint `rq_locks`.
    pub fn locks_disjoint(&self) -> bool {
        let mut all = BTreeSet::new();
        self.rq_locks.values().flatten().all(|q| all.insert(*q))
    }
}

/// Serializable one-line record of a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceLine {
    pub step_index: usize,
    pub processor: ProcessorId,
    pub rule_name: &'static str,
    pub lock_sets: BTreeMap<ProcessorId, BTreeSet<ProcessorId>>,
    pub terminal: Terminal,
}

pub(crate) fn feature_name(program: &Program, f: FeatureRef) -> String {
    let class = &program.classes[f.class as usize];
    format!("{}.{}", class.name, class.procedures[f.procedure as usize].name)
}
