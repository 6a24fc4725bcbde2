//! Coffman deadlock detection over wait-for graphs.
//!
//! `W(p)` is the lock set a blocked processor is waiting on, `H(p)` the
//! request queues it holds. There is an edge `p → p′` when `W(p) ∩ H(p′)` is
//! nonempty; a cycle is a circular wait.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::runtime::{is_blocked, Configuration, ProcessorId, StackItem, State, Terminal};

/// Largest processor count the subset-enumeration oracle accepts.
pub const ORACLE_LIMIT: usize = 20;

pub type Edges = BTreeMap<(ProcessorId, ProcessorId), BTreeSet<ProcessorId>>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WaitForGraph {
    pub nodes: BTreeSet<ProcessorId>,
    /// Edge `(p, p′)` labeled with `W(p) ∩ H(p′)`.
    pub edges: Edges,
}

impl WaitForGraph {
    pub fn successors(&self, p: ProcessorId) -> impl Iterator<Item = ProcessorId> + '_ {
        self.edges.range((p, ProcessorId(0))..=(p, ProcessorId(u32::MAX))).map(|((_, q), _)| *q)
    }

    pub fn out_degree(&self, p: ProcessorId) -> usize {
        self.successors(p).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlockWitness {
    pub processors: BTreeSet<ProcessorId>,
    pub cycle: Vec<ProcessorId>,
    pub labels: Edges,
}

impl DeadlockWitness {
    /// One line per cycle edge: who waits for which handlers held by whom.
    pub fn describe(&self, names: impl Fn(ProcessorId) -> String) -> Vec<String> {
        let name = |p: &ProcessorId| format!("{} ({})", names(*p), p);
        self.labels
            .iter()
            .map(|((p, q), hs)| {
                let hs: Vec<String> = hs.iter().map(name).collect();
                format!("{} waits for {{{}}} held by {}", name(p), hs.join(", "), name(q))
            })
            .collect()
    }
}

struct Labels<'a>(&'a Edges);

impl Serialize for Labels<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for ((p, q), hs) in self.0 {
            map.serialize_entry(&format!("{}→{}", p.0, q.0), hs)?;
        }
        map.end()
    }
}

impl Serialize for DeadlockWitness {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("processors", &self.processors)?;
        map.serialize_entry("cycle", &self.cycle)?;
        map.serialize_entry("labels", &Labels(&self.labels))?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("oracle enumerates subsets of at most {ORACLE_LIMIT} processors, got {0}")]
pub struct OracleTooLarge(pub usize);

/// `W(p)`: the handlers a blocked `lock(Q)` on top of `p`'s stack still
/// needs. Empty when `p` is not blocked on a lock.
pub fn wait_set(c: &Configuration, p: ProcessorId) -> BTreeSet<ProcessorId> {
    match c.top(p) {
        Some(StackItem::Lock(q)) if is_blocked(c, p) => q.difference(&c.state.held(p)).copied().collect(),
        _ => BTreeSet::new(),
    }
}

/// `H(p)`.
pub fn held_set(st: &State, p: ProcessorId) -> BTreeSet<ProcessorId> {
    st.held(p)
}

pub fn build_wait_for_graph(c: &Configuration) -> WaitForGraph {
    let nodes = c.state.procs.clone();
    let mut edges = Edges::new();
    for p in &nodes {
        let w = wait_set(c, *p);
        if w.is_empty() {
            continue;
        }
        for (q, h) in &c.state.rq_locks {
            if q == p {
                continue;
            }
            let label: BTreeSet<_> = w.intersection(h).copied().collect();
            if !label.is_empty() {
                edges.insert((*p, *q), label);
            }
        }
    }
    WaitForGraph { nodes, edges }
}

/// Shortest cycle, ties broken by lowest start node then lexicographically.
/// The search from `s` only visits nodes `≥ s`, so each cycle is found from
/// its least node.
pub fn shortest_cycle(g: &WaitForGraph) -> Option<Vec<ProcessorId>> {
    let mut best: Option<Vec<ProcessorId>> = None;
    for &s in &g.nodes {
        if best.as_ref().is_some_and(|b| b.len() == 2) {
            break;
        }
        let mut parent: BTreeMap<ProcessorId, ProcessorId> = BTreeMap::new();
        let mut queue = VecDeque::from([s]);
        let mut closing = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for v in g.successors(u) {
                if v == s {
                    closing = Some(u);
                    break 'bfs;
                }
                if v > s && !parent.contains_key(&v) {
                    parent.insert(v, u);
                    queue.push_back(v);
                }
            }
        }
        let Some(mut u) = closing else { continue };
        let mut cycle = vec![u];
        while u != s {
            u = parent[&u];
            cycle.push(u);
        }
        cycle.reverse();
        if best.as_ref().is_none_or(|b| cycle.len() < b.len()) {
            best = Some(cycle);
        }
    }
    best
}

pub(crate) fn witness_from_cycle(g: &WaitForGraph, cycle: Vec<ProcessorId>) -> DeadlockWitness {
    let labels =
        cycle.iter().zip(cycle.iter().cycle().skip(1)).map(|(p, q)| ((*p, *q), g.edges[&(*p, *q)].clone())).collect();
    DeadlockWitness { processors: cycle.iter().copied().collect(), cycle, labels }
}

pub fn detect_deadlock(c: &Configuration) -> Option<DeadlockWitness> {
    let g = build_wait_for_graph(c);
    shortest_cycle(&g).map(|cycle| witness_from_cycle(&g, cycle))
}

/// Marks `c` deadlocked when a witness exists.
pub fn check_deadlock(c: &mut Configuration) -> Option<DeadlockWitness> {
    let w = detect_deadlock(c)?;
    c.terminal = Terminal::Deadlock;
    Some(w)
}

/// Brute force over subsets `D` of processors, smallest first and
/// lexicographically within a size: every member blocked and waiting on a
/// handler held by another member.
pub fn detect_deadlock_oracle(c: &Configuration) -> Result<Option<BTreeSet<ProcessorId>>, OracleTooLarge> {
    let procs: Vec<ProcessorId> = c.state.procs.iter().copied().collect();
    let n = procs.len();
    if n > ORACLE_LIMIT {
        return Err(OracleTooLarge(n));
    }
    let waits: Vec<BTreeSet<ProcessorId>> = procs.iter().map(|p| wait_set(c, *p)).collect();
    let holds: Vec<BTreeSet<ProcessorId>> = procs.iter().map(|p| held_set(&c.state, *p)).collect();
    let blocked: Vec<bool> = procs.iter().map(|p| is_blocked(c, *p)).collect();
    let qualifies =
        |d: &[usize]| d.iter().all(|&i| blocked[i] && d.iter().any(|&j| j != i && !waits[i].is_disjoint(&holds[j])));
    for size in 2..=n {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if qualifies(&idx) {
                return Ok(Some(idx.iter().map(|i| procs[*i]).collect()));
            }
            let Some(k) = (0..size).rev().find(|&k| idx[k] < n - size + k) else { break };
            idx[k] += 1;
            for j in k + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::CallStack;

    fn ids(v: &[u32]) -> BTreeSet<ProcessorId> {
        v.iter().map(|i| ProcessorId(*i)).collect()
    }

    /// `n` processors; `holds[i]` held by `i`, `waits[i]` on top of `i`'s stack.
    fn config(n: u32, holds: &[(u32, &[u32])], waits: &[(u32, &[u32])]) -> Configuration {
        let mut state = State { procs: (0..n).map(ProcessorId).collect(), ..State::default() };
        for (p, h) in holds {
            state.rq_locks.insert(ProcessorId(*p), ids(h));
        }
        let mut pool: BTreeMap<ProcessorId, CallStack> = state.procs.iter().map(|p| (*p, CallStack::new())).collect();
        for (p, w) in waits {
            pool.get_mut(&ProcessorId(*p)).unwrap().push_back(StackItem::Lock(ids(w)));
        }
        Configuration { pool, state, terminal: Terminal::Running }
    }

    #[test]
    fn philosophers_cycle() {
        let c = config(7, &[(5, &[3]), (6, &[4])], &[(5, &[4]), (6, &[3])]);
        assert_eq!(wait_set(&c, ProcessorId(5)), ids(&[4]));
        let w = detect_deadlock(&c).unwrap();
        assert_eq!(w.cycle, vec![ProcessorId(5), ProcessorId(6)]);
        assert_eq!(w.labels[&(ProcessorId(5), ProcessorId(6))], ids(&[4]));
        assert_eq!(w.labels[&(ProcessorId(6), ProcessorId(5))], ids(&[3]));
        assert_eq!(detect_deadlock_oracle(&c).unwrap(), Some(ids(&[5, 6])));
        let json = serde_json::to_value(&w).unwrap();
        assert_eq!(json["labels"]["5→6"], serde_json::json!([4]));
    }

    #[test]
    fn chain_is_not_a_deadlock() {
        let c = config(3, &[(1, &[2])], &[(0, &[2])]);
        let g = build_wait_for_graph(&c);
        assert_eq!(g.edges.len(), 1);
        assert!(detect_deadlock(&c).is_none());
        assert_eq!(detect_deadlock_oracle(&c).unwrap(), None);
    }

    #[test]
    fn reentrant_lock_waits_on_nothing() {
        let c = config(3, &[(1, &[2])], &[(1, &[2])]);
        assert!(wait_set(&c, ProcessorId(1)).is_empty());
    }

    #[test]
    fn shortest_cycle_wins_over_lower_start() {
        // 0 → 1 → 2 → 0 and 3 ⇄ 4
        let c = config(
            6,
            &[(0, &[5]), (1, &[0]), (2, &[1]), (3, &[2]), (4, &[3])],
            &[(0, &[0]), (1, &[1]), (2, &[5]), (3, &[3]), (4, &[2])],
        );
        let w = detect_deadlock(&c).unwrap();
        assert_eq!(w.cycle, vec![ProcessorId(3), ProcessorId(4)]);
    }

    #[test]
    fn oracle_size_guard() {
        let c = config(21, &[], &[]);
        assert_eq!(detect_deadlock_oracle(&c), Err(OracleTooLarge(21)));
    }
}
