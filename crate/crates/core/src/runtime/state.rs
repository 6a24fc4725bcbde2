use std::collections::BTreeSet;

use crate::ir::{ExprRoot, Expression};

use super::{EngineError, ObjId, ProcessorId, Ref, State};

/// Lock acquisition failed; `holders` are the processors holding some of the
/// requested handlers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocked {
    pub holders: BTreeSet<ProcessorId>,
}

impl State {
    pub(crate) fn frame_current(&self, p: ProcessorId) -> Ref {
        self.stores.get(&p).and_then(|f| f.last()).map(|f| f.current).unwrap_or(Ref::Void)
    }

    fn attribute(&self, obj: Ref, name: &str, expr: &Expression) -> Result<Ref, EngineError> {
        let Ref::Object(o) = obj else {
            return Err(EngineError::VoidDereference(expr.to_string()));
        };
        self.heap
            .get(&o)
            .and_then(|r| r.attributes.get(name))
            .copied()
            .ok_or_else(|| EngineError::UnknownName(name.to_string()))
    }

    fn eval_root(&self, p: ProcessorId, e: &Expression) -> Result<Ref, EngineError> {
        let frame = self.stores.get(&p).and_then(|f| f.last());
        match &e.root {
            ExprRoot::Bool(b) => Ok(Ref::Bool(*b)),
            ExprRoot::Current { .. } => Ok(frame.map(|f| f.current).unwrap_or(Ref::Void)),
            ExprRoot::Name(id) => {
                if let Some(v) = frame.and_then(|f| f.slots.get(id.as_str())) {
                    return Ok(*v);
                }
                let current = frame.map(|f| f.current).unwrap_or(Ref::Void);
                self.attribute(current, id.as_str(), e)
            }
        }
    }

    /// Evaluates all but the last `drop_last` selectors.
    fn eval_prefix(&self, p: ProcessorId, e: &Expression, drop_last: usize) -> Result<Ref, EngineError> {
        let mut value = self.eval_root(p, e)?;
        for sel in &e.selectors[..e.selectors.len() - drop_last] {
            value = self.attribute(value, sel.as_str(), e)?;
        }
        Ok(value)
    }

    /// Stores `value` into the location denoted by `target` in `p`'s top frame:
    /// a formal or local slot, or an attribute of `Current` (or of the object
    /// reached by the target's prefix).
    pub(crate) fn write_target(&mut self, p: ProcessorId, target: &Expression, value: Ref) -> Result<(), EngineError> {
        let (object, attr) = match (target.selectors.last(), &target.root) {
            (None, ExprRoot::Name(id)) => {
                if let Some(frame) = self.stores.get_mut(&p).and_then(|f| f.last_mut()) {
                    if let Some(slot) = frame.slots.get_mut(id.as_str()) {
                        *slot = value;
                        return Ok(());
                    }
                }
                (self.frame_current(p), id.name.clone())
            }
            (Some(last), _) => (self.eval_prefix(p, target, 1)?, last.name.clone()),
            (None, _) => return Err(EngineError::UnknownName(target.to_string())),
        };
        let Ref::Object(o) = object else {
            return Err(EngineError::VoidDereference(target.to_string()));
        };
        let record = self.heap.get_mut(&o).ok_or_else(|| EngineError::UnknownName(target.to_string()))?;
        match record.attributes.get_mut(&attr) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(EngineError::UnknownName(attr.to_string())),
        }
    }

    pub(crate) fn try_acquire(
        &mut self,
        p: ProcessorId,
        requested: &BTreeSet<ProcessorId>,
    ) -> Result<BTreeSet<ProcessorId>, Blocked> {
        let holders: BTreeSet<ProcessorId> =
            requested.iter().filter_map(|q| self.holder_of(*q)).filter(|h| *h != p).collect();
        if !holders.is_empty() {
            return Err(Blocked { holders });
        }
        let held = self.rq_locks.entry(p).or_default();
        let fresh: BTreeSet<ProcessorId> = requested.difference(held).copied().collect();
        held.extend(fresh.iter().copied());
        Ok(fresh)
    }

    pub(crate) fn release(&mut self, owner: ProcessorId, handlers: &BTreeSet<ProcessorId>) -> Result<(), EngineError> {
        if handlers.is_empty() {
            return Ok(());
        }
        let held = self.rq_locks.get_mut(&owner);
        match held {
            Some(held) if handlers.is_subset(held) => {
                held.retain(|q| !handlers.contains(q));
                if held.is_empty() {
                    self.rq_locks.remove(&owner);
                }
                Ok(())
            }
            _ => Err(EngineError::ReleaseUnheld { owner, handlers: handlers.clone() }),
        }
    }

    pub(crate) fn alloc_object(&mut self) -> ObjId {
        let o = ObjId(self.next_object);
        self.next_object += 1;
        o
    }
}

/// Follows `e` from processor `p`'s top frame through the heap.
pub fn evaluate_expression(st: &State, p: ProcessorId, e: &Expression) -> Result<Ref, EngineError> {
    st.eval_prefix(p, e, 0)
}

/// All-or-nothing acquisition of `q_set` by `p`. Handlers `p` already holds do
/// not block it.
pub fn acquire_locks(st: &State, p: ProcessorId, q_set: &BTreeSet<ProcessorId>) -> Result<State, Blocked> {
    let mut next = st.clone();
    next.try_acquire(p, q_set)?;
    Ok(next)
}

/// Removes exactly `q_set` from `H(p)`. Releasing a handler `p` does not hold
/// is an engine error.
pub fn release_locks(st: &State, p: ProcessorId, q_set: &BTreeSet<ProcessorId>) -> Result<State, EngineError> {
    let mut next = st.clone();
    next.release(p, q_set)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::runtime::{Frame, ObjectRecord};

    fn set(ids: &[u32]) -> BTreeSet<ProcessorId> {
        ids.iter().map(|i| ProcessorId(*i)).collect()
    }

    fn procs(n: u32) -> State {
        State { procs: (0..n).map(ProcessorId).collect(), ..State::default() }
    }

    #[test]
    fn acquire_free_handler() {
        let st = acquire_locks(&procs(4), ProcessorId(1), &set(&[3])).unwrap();
        assert_eq!(st.held(ProcessorId(1)), set(&[3]));
    }

    #[test]
    fn reacquire_is_a_no_op() {
        let st = acquire_locks(&procs(4), ProcessorId(1), &set(&[2, 3])).unwrap();
        let again = acquire_locks(&st, ProcessorId(1), &set(&[2, 3])).unwrap();
        assert_eq!(again, st);
    }

    #[test]
    fn acquire_held_elsewhere_blocks() {
        let st = acquire_locks(&procs(4), ProcessorId(1), &set(&[3])).unwrap();
        let err = acquire_locks(&st, ProcessorId(2), &set(&[3])).unwrap_err();
        assert_eq!(err.holders, set(&[1]));
        // all-or-nothing: a partially free request acquires nothing
        let err = acquire_locks(&st, ProcessorId(2), &set(&[0, 3])).unwrap_err();
        assert_eq!(err.holders, set(&[1]));
    }

    #[test]
    fn release_paths() {
        let st = acquire_locks(&procs(5), ProcessorId(1), &set(&[3, 4])).unwrap();
        let after = release_locks(&st, ProcessorId(1), &set(&[3, 4])).unwrap();
        assert!(after.held(ProcessorId(1)).is_empty());
        assert_eq!(release_locks(&st, ProcessorId(1), &BTreeSet::new()).unwrap(), st);
        assert!(matches!(release_locks(&st, ProcessorId(2), &set(&[3])), Err(EngineError::ReleaseUnheld { .. })));
    }

    #[test]
    fn evaluate_paths_and_void() {
        let mut st = procs(2);
        let mut attrs = BTreeMap::new();
        attrs.insert("y".into(), Ref::Void);
        st.heap.insert(ObjId(0), ObjectRecord { class: "A".into(), handler: ProcessorId(1), attributes: attrs });
        st.stores.insert(
            ProcessorId(1),
            vec![Frame { feature: None, current: Ref::Object(ObjId(0)), slots: BTreeMap::new() }],
        );
        let p = ProcessorId(1);
        assert_eq!(evaluate_expression(&st, p, &Expression::current()).unwrap(), Ref::Object(ObjId(0)));
        assert_eq!(evaluate_expression(&st, p, &Expression::name("y")).unwrap(), Ref::Void);
        let e = Expression::current().dot("y").dot("z");
        assert!(matches!(evaluate_expression(&st, p, &e), Err(EngineError::VoidDereference(_))));
    }
}
