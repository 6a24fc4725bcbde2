use std::collections::HashSet;
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use super::{DeadlockReport, ExplorationReport, Semantics, Trace};
use crate::deadlock::DeadlockWitness;
use crate::ir::Program;
use crate::runtime::{Choice, EngineError, Machine, Terminal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    /// Maximum schedule length explored.
    pub depth: usize,
    /// Maximum number of distinct configurations stored.
    pub states: usize,
    pub deadlock_check: bool,
    /// Run a processor's local follow-up items as part of the step that
    /// exposed them. Traces still list every individual step.
    pub fuse_local: bool,
    /// Expand each breadth-first layer on the rayon pool. Results are merged
    /// in frontier order either way.
    pub parallel: bool,
}

impl Bounds {
    pub fn new(depth: usize, states: usize) -> Bounds {
        Bounds { depth, states, deadlock_check: true, fuse_local: true, parallel: cfg!(feature = "parallel") }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("exploration bounds must be at least 1")]
    ZeroBound,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

struct Node {
    parent: usize,
    choice: Option<Choice>,
}

type Successor<C> = (Choice, C, Option<DeadlockWitness>);

/// One step of `ch.processor`, followed by its local items when fusing.
/// Returns the configuration and the individual choices taken.
pub(crate) fn macro_step<S: Semantics>(
    sem: &S,
    c: &S::Config,
    ch: Choice,
    fuse: bool,
    taken: &mut Vec<Choice>,
) -> Result<S::Config, EngineError> {
    let mut next = sem.step(c, ch)?;
    taken.push(ch);
    while fuse && sem.is_local(&next, ch.processor) {
        next = sem.step(&next, ch)?;
        taken.push(ch);
    }
    Ok(next)
}

fn expand<S: Semantics>(sem: &S, c: &S::Config, b: &Bounds) -> Result<Vec<Successor<S::Config>>, EngineError> {
    sem.enabled(c)
        .into_iter()
        .map(|ch| {
            let mut next = macro_step(sem, c, ch, b.fuse_local, &mut Vec::new())?;
            let witness = if b.deadlock_check { sem.check_deadlock(&mut next) } else { None };
            Ok((ch, sem.canonical(&next), witness))
        })
        .collect()
}

#[allow(clippy::type_complexity)]
fn expand_layer<S: Semantics>(
    sem: &S,
    configs: &[Arc<S::Config>],
    frontier: &[usize],
    b: &Bounds,
) -> Result<Vec<Vec<Successor<S::Config>>>, EngineError> {
    #[cfg(feature = "parallel")]
    if b.parallel && frontier.len() > 1 {
        return frontier.par_iter().map(|&i| expand(sem, &configs[i], b)).collect();
    }
    frontier.iter().map(|&i| expand(sem, &configs[i], b)).collect()
}

/// The individual steps leading from the initial configuration to node `i`.
fn choices_to<S: Semantics>(sem: &S, b: &Bounds, nodes: &[Node], mut i: usize) -> Result<Vec<Choice>, EngineError> {
    let mut path = Vec::new();
    while let Some(ch) = nodes[i].choice {
        path.push(ch);
        i = nodes[i].parent;
    }
    let mut c = sem.initial()?;
    let mut out = Vec::new();
    for ch in path.into_iter().rev() {
        c = macro_step(sem, &c, ch, b.fuse_local, &mut out)?;
    }
    Ok(out)
}

/// Breadth-first search over all schedules with deduplication of canonical
/// configurations. `visit` sees every distinct configuration once, in
/// discovery order.
pub fn explore<S: Semantics>(
    sem: &S,
    b: Bounds,
    mut visit: impl FnMut(&S::Config),
) -> Result<ExplorationReport, ExploreError> {
    if b.depth == 0 || b.states == 0 {
        return Err(ExploreError::ZeroBound);
    }
    let mut report = ExplorationReport::default();
    let mut start = sem.initial()?;
    let start_witness = if b.deadlock_check { sem.check_deadlock(&mut start) } else { None };
    let start = Arc::new(sem.canonical(&start));
    let mut configs = vec![start.clone()];
    let mut nodes = vec![Node { parent: 0, choice: None }];
    let mut seen: HashSet<Arc<S::Config>> = HashSet::from([start.clone()]);
    visit(&start);

    let mut frontier = Vec::new();
    let classify = |report: &mut ExplorationReport,
                    frontier: &mut Vec<usize>,
                    nodes: &[Node],
                    i: usize,
                    c: &S::Config,
                    w: Option<DeadlockWitness>|
     -> Result<(), EngineError> {
        match (sem.terminal(c), w) {
            (Terminal::Deadlock, Some(w)) => {
                let trace = Trace::new(sem, b.deadlock_check, choices_to(sem, &b, nodes, i)?, Terminal::Deadlock);
                report.deadlocks.push(DeadlockReport::new(sem, c, trace, w));
            }
            (Terminal::Done, _) => report.completed_traces += 1,
            _ if sem.enabled(c).is_empty() => report.stuck_states += 1,
            _ => frontier.push(i),
        }
        Ok(())
    };
    classify(&mut report, &mut frontier, &nodes, 0, &start, start_witness)?;

    let mut depth = 0;
    'layers: while !frontier.is_empty() {
        if depth == b.depth {
            report.bound_hit = true;
            break;
        }
        let layer = expand_layer(sem, &configs, &frontier, &b)?;
        let mut next_frontier = Vec::new();
        for (&parent, successors) in frontier.iter().zip(layer) {
            for (ch, c, w) in successors {
                if seen.contains(&c) {
                    continue;
                }
                if configs.len() >= b.states {
                    report.bound_hit = true;
                    break 'layers;
                }
                let c = Arc::new(c);
                seen.insert(c.clone());
                let i = configs.len();
                configs.push(c.clone());
                nodes.push(Node { parent, choice: Some(ch) });
                visit(&c);
                classify(&mut report, &mut next_frontier, &nodes, i, &c, w)?;
            }
        }
        frontier = next_frontier;
        depth += 1;
    }
    report.states_visited = configs.len();
    Ok(report)
}

/// Exhaustive exploration of the concrete semantics with deadlock detection.
pub fn explore_bounded(p: &Program, depth_bound: usize, state_bound: usize) -> Result<ExplorationReport, ExploreError> {
    explore(&Machine::new(p), Bounds::new(depth_bound, state_bound), |_| {})
}
