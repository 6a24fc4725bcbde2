use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use super::expr::{AliasExpr, Root};
use super::relation::{alias_after_assign, alias_kill, may_alias, AliasRelation};
use crate::deadlock::{shortest_cycle, witness_from_cycle, DeadlockWitness, Edges, WaitForGraph};
use crate::explorer::Semantics;
use crate::ir::{ExprRoot, Expression, Ident, Instruction, Name, Program, TypeAnnot};
use crate::runtime::{Choice, EngineError, FeatureRef, Machine, ProcessorId, Terminal, ROOT_SLOT};

/// The processors an abstract handler expression may denote. A singleton
/// is definite.
pub type HandlerName = BTreeSet<ProcessorId>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbsObject {
    pub class: Name,
    pub handler: ProcessorId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbsFrame {
    pub feature: Option<FeatureRef>,
    pub current: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbsArg {
    /// Booleans and `Void`.
    Value,
    Objects(BTreeSet<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbsCall {
    pub feature: FeatureRef,
    pub target: u32,
    pub args: Vec<AbsArg>,
    pub owner: ProcessorId,
    pub acquired: BTreeSet<HandlerName>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbsItem {
    /// A weak instruction may or may not run: its effects are joined with
    /// the relation before it.
    Instr {
        instr: Arc<Instruction>,
        weak: bool,
    },
    CreateRoot,
    Lock(BTreeSet<HandlerName>),
    Apply(AbsCall),
    Release {
        owner: ProcessorId,
        names: BTreeSet<HandlerName>,
    },
    FramePop,
}

/// Heap-free state: one label per created object, frames without slots,
/// held handler names with multiplicity, and the alias relation.
///
/// The relation is kept in points-to form: every pair relates a bare label
/// to a variable or to a label with one selector. Labels are object
/// identities, so longer paths are resolved one selector at a time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct AbstractState {
    pub objects: BTreeMap<u32, AbsObject>,
    pub frames: BTreeMap<ProcessorId, Vec<AbsFrame>>,
    pub held: BTreeMap<ProcessorId, BTreeMap<HandlerName, u32>>,
    pub procs: BTreeSet<ProcessorId>,
    pub names: BTreeMap<ProcessorId, Name>,
    pub alias: AliasRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstractConfiguration {
    pub pool: BTreeMap<ProcessorId, VecDeque<AbsItem>>,
    pub state: AbstractState,
    pub terminal: Terminal,
}

impl AbstractState {
    /// Handlers `p` holds under a definite name.
    pub fn definitely_held(&self, p: ProcessorId) -> BTreeSet<ProcessorId> {
        self.held.get(&p).into_iter().flat_map(|m| m.keys()).filter(|n| n.len() == 1).flatten().copied().collect()
    }

    /// `H(p)`: every processor named by a handler name `p` holds.
    pub fn may_hold(&self, p: ProcessorId) -> BTreeSet<ProcessorId> {
        self.held.get(&p).into_iter().flat_map(|m| m.keys()).flatten().copied().collect()
    }

    pub fn handler(&self, label: u32) -> Option<ProcessorId> {
        self.objects.get(&label).map(|o| o.handler)
    }

    fn definite_holder(&self, q: ProcessorId) -> Option<ProcessorId> {
        let key = BTreeSet::from([q]);
        self.held.iter().find(|(_, m)| m.contains_key(&key)).map(|(p, _)| *p)
    }

    /// Labels `e` may evaluate to, following one selector at a time.
    pub fn resolve(&self, e: &AliasExpr) -> BTreeSet<u32> {
        let mut current: BTreeSet<u32> = match &e.root {
            Root::Label(n) => BTreeSet::from([*n]),
            root => self.labels_aliasing(&AliasExpr::new(root.clone())),
        };
        for sel in &e.selectors {
            current = current.iter().flat_map(|o| self.labels_aliasing(&AliasExpr::label(*o).dot(sel))).collect();
        }
        current
    }

    /// Whether `e1` and `e2` may resolve to a common label.
    pub fn may_alias(&self, e1: &AliasExpr, e2: &AliasExpr) -> bool {
        e1.same_path(e2) || !self.resolve(e1).is_disjoint(&self.resolve(e2))
    }

    fn labels_aliasing(&self, e: &AliasExpr) -> BTreeSet<u32> {
        self.objects.keys().copied().filter(|l| may_alias(&self.alias, e, &AliasExpr::label(*l))).collect()
    }

    fn fresh_processor(&mut self, name: &str) -> ProcessorId {
        let q = ProcessorId(self.procs.len() as u32);
        self.procs.insert(q);
        self.names.insert(q, name.into());
        self.frames.insert(q, Vec::new());
        q
    }
}

impl AbstractConfiguration {
    pub fn top(&self, p: ProcessorId) -> Option<&AbsItem> {
        self.pool.get(&p).and_then(|s| s.front())
    }

    pub fn processor_name(&self, p: ProcessorId) -> String {
        self.state.names.get(&p).map(|n| n.to_string()).unwrap_or_else(|| p.to_string())
    }
}

/// The abstract semantics of a program: objects are labels, the heap is
/// replaced by an alias relation of bounded depth, conditions are ignored
/// and an assignment is a single step.
#[derive(Debug)]
pub struct AbstractMachine<'p> {
    concrete: Machine<'p>,
    depth: usize,
}

impl<'p> AbstractMachine<'p> {
    pub fn new(program: &'p Program, depth: usize) -> Self {
        AbstractMachine { concrete: Machine::new(program), depth }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn frame<'s>(&self, st: &'s AbstractState, p: ProcessorId) -> Result<&'s AbsFrame, EngineError> {
        st.frames
            .get(&p)
            .and_then(|f| f.last())
            .ok_or_else(|| EngineError::Stuck { processor: p, item: "no frame".into() })
    }

    fn frame_root(st: &AbstractState, p: ProcessorId, name: &Ident) -> Root {
        let depth = st.frames.get(&p).map_or(0, |f| f.len().saturating_sub(1)) as u32;
        Root::Frame { name: name.name.clone(), processor: p, depth }
    }

    /// `e` with its root replaced by a frame variable or `Current`'s label.
    /// `None` for boolean literals.
    pub fn qualify(
        &self,
        st: &AbstractState,
        p: ProcessorId,
        e: &Expression,
    ) -> Result<Option<AliasExpr>, EngineError> {
        let frame = self.frame(st, p)?;
        let current = || frame.current.ok_or_else(|| EngineError::UnknownName("Current".into()));
        let mut q = match &e.root {
            ExprRoot::Bool(_) => return Ok(None),
            ExprRoot::Current { .. } => AliasExpr::label(current()?),
            ExprRoot::Name(id) => {
                let is_var = match frame.feature {
                    Some(f) => {
                        let proc_ = self.concrete.procedure(f);
                        proc_.formal(id.as_str()).or_else(|| proc_.local(id.as_str())).is_some()
                    }
                    None => id.as_str() == ROOT_SLOT,
                };
                if is_var {
                    AliasExpr::new(Self::frame_root(st, p, id))
                } else {
                    AliasExpr::label(current()?).dot(id.as_str())
                }
            }
        };
        q.selectors.extend(e.selectors.iter().map(|s| s.name.clone()));
        Ok(Some(q))
    }

    /// Locations an assignment to `target` may write. Attribute paths are
    /// rooted at the labels their prefix resolves to.
    fn write_targets(
        &self,
        st: &AbstractState,
        p: ProcessorId,
        target: &Expression,
    ) -> Result<Vec<AliasExpr>, EngineError> {
        let q = self.qualify(st, p, target)?.ok_or_else(|| EngineError::UnknownName(target.to_string()))?;
        let Some((prefix, last)) = q.parent() else { return Ok(vec![q]) };
        if matches!(prefix.root, Root::Label(_)) && prefix.selectors.is_empty() {
            return Ok(vec![q]);
        }
        Ok(st.resolve(&prefix).into_iter().map(|o| AliasExpr::label(o).dot(last)).collect())
    }

    fn assign(
        &self,
        st: &mut AbstractState,
        p: ProcessorId,
        target: &Expression,
        source: &Expression,
        weak: bool,
    ) -> Result<(), EngineError> {
        let targets = self.write_targets(st, p, target)?;
        let labels = match self.qualify(st, p, source)? {
            Some(s) => st.resolve(&s),
            None => BTreeSet::new(),
        };
        st.alias = join(&st.alias, &targets, &labels, weak);
        Ok(())
    }

    fn target_type(&self, st: &AbstractState, p: ProcessorId, target: &Expression) -> Result<TypeAnnot, EngineError> {
        let unresolved = || EngineError::UnknownName(target.to_string());
        let frame = self.frame(st, p)?;
        if let (ExprRoot::Name(id), true, Some(f)) = (&target.root, target.selectors.is_empty(), frame.feature) {
            let proc_ = self.concrete.procedure(f);
            if let Some(d) = proc_.formal(id.as_str()).or_else(|| proc_.local(id.as_str())) {
                return Ok(d.ty.clone());
            }
        }
        let q = self.qualify(st, p, target)?.ok_or_else(unresolved)?;
        let (prefix, attr) = q.parent().ok_or_else(unresolved)?;
        let owner = *st.resolve(&prefix).first().ok_or_else(|| EngineError::VoidDereference(target.to_string()))?;
        let class = &st.objects[&owner].class;
        self.concrete
            .program()
            .class(class)
            .and_then(|c| c.attribute(attr))
            .map(|a| a.ty.clone())
            .ok_or_else(unresolved)
    }

    fn feature_of(&self, st: &AbstractState, label: u32, feature: &Ident) -> Result<FeatureRef, EngineError> {
        let class = &st.objects[&label].class;
        self.concrete
            .feature(class, feature.as_str())
            .ok_or_else(|| EngineError::Unresolved(format!("{class}.{feature}")))
    }

    fn all_assignments(branch: &[Instruction]) -> bool {
        branch.iter().all(|i| matches!(i, Instruction::Assign { .. } | Instruction::Nil))
    }

    fn fire(
        &self,
        c: &mut AbstractConfiguration,
        p: ProcessorId,
        stack: &mut VecDeque<AbsItem>,
        item: AbsItem,
    ) -> Result<(), EngineError> {
        let st = &mut c.state;
        match item {
            AbsItem::CreateRoot => {
                let root_class = self.concrete.program().settings.root_class.as_str();
                let q = if self.concrete.separate() { st.fresh_processor(&root_class.to_lowercase()) } else { p };
                let label = st.objects.len() as u32;
                st.objects.insert(label, AbsObject { class: root_class.into(), handler: q });
                let slot = AliasExpr::new(Self::frame_root(st, p, &Ident::new(ROOT_SLOT)));
                st.alias = join(&st.alias, &[slot], &BTreeSet::from([label]), false);
            }
            AbsItem::Instr { instr, weak } => match &*instr {
                Instruction::Create { target, creator, args } => {
                    let ty = self.target_type(st, p, target)?;
                    let handler = if ty.is_separate() {
                        let name = target
                            .selectors
                            .last()
                            .map(|s| s.as_str().to_string())
                            .unwrap_or_else(|| target.to_string());
                        st.fresh_processor(&name)
                    } else {
                        p
                    };
                    let label = st.objects.len() as u32;
                    st.objects.insert(label, AbsObject { class: ty.class_name.name.clone(), handler });
                    let targets = self.write_targets(st, p, target)?;
                    st.alias = join(&st.alias, &targets, &BTreeSet::from([label]), weak);
                    let call =
                        Instruction::Command { target: target.clone(), feature: creator.clone(), args: args.clone() };
                    stack.push_front(AbsItem::Instr { instr: Arc::new(call), weak });
                }
                Instruction::Command { target, feature, args } => {
                    let q =
                        self.qualify(st, p, target)?.ok_or_else(|| EngineError::VoidDereference(target.to_string()))?;
                    let candidates = st.resolve(&q);
                    if candidates.is_empty() {
                        return Ok(());
                    }
                    let values = args
                        .iter()
                        .map(|a| {
                            Ok(match self.qualify(st, p, a)? {
                                None => AbsArg::Value,
                                Some(e) => AbsArg::Objects(st.resolve(&e)),
                            })
                        })
                        .collect::<Result<Vec<_>, EngineError>>()?;
                    let mut wanted: BTreeSet<HandlerName> = BTreeSet::new();
                    let target_name: HandlerName = candidates.iter().filter_map(|o| st.handler(*o)).collect();
                    if target_name != BTreeSet::from([p]) {
                        wanted.insert(target_name);
                    }
                    let mut calls = Vec::new();
                    for o in &candidates {
                        let f = self.feature_of(st, *o, feature)?;
                        for (formal, value) in self.concrete.procedure(f).formals.iter().zip(&values) {
                            if let (true, AbsArg::Objects(ls)) = (formal.ty.is_separate(), value) {
                                let name: HandlerName = ls.iter().filter_map(|l| st.handler(*l)).collect();
                                if !name.is_empty() && name != BTreeSet::from([p]) {
                                    wanted.insert(name);
                                }
                            }
                        }
                        calls.push(AbsCall {
                            feature: f,
                            target: *o,
                            args: values.clone(),
                            owner: p,
                            acquired: BTreeSet::new(),
                        });
                    }
                    for call in calls.into_iter().rev() {
                        stack.push_front(AbsItem::Apply(call));
                    }
                    let held = st.definitely_held(p);
                    if !wanted.iter().all(|n| n.len() == 1 && n.is_subset(&held)) {
                        stack.push_front(AbsItem::Lock(wanted));
                    }
                }
                Instruction::Assign { target, source } => self.assign(st, p, target, source, weak)?,
                Instruction::If { then_branch, else_branch, .. } => {
                    if Self::all_assignments(then_branch) && Self::all_assignments(else_branch) {
                        let before = st.alias.clone();
                        let mut joined = if weak { before.clone() } else { AliasRelation::new(before.depth()) };
                        for branch in [then_branch, else_branch] {
                            st.alias = before.clone();
                            for i in branch {
                                if let Instruction::Assign { target, source } = i {
                                    self.assign(st, p, target, source, false)?;
                                }
                            }
                            joined = joined.union(&st.alias);
                        }
                        st.alias = joined;
                    } else {
                        for i in then_branch.iter().chain(else_branch).rev() {
                            stack.push_front(AbsItem::Instr { instr: Arc::new(i.clone()), weak: true });
                        }
                    }
                }
                Instruction::Nil => {}
            },
            AbsItem::Lock(names) => {
                let held = st.definitely_held(p);
                let acquired: BTreeSet<HandlerName> =
                    names.into_iter().filter(|n| !(n.len() == 1 && n.is_subset(&held))).collect();
                let mine = st.held.entry(p).or_default();
                for n in &acquired {
                    *mine.entry(n.clone()).or_default() += 1;
                }
                match stack.front_mut() {
                    Some(AbsItem::Apply(call)) => call.acquired = acquired,
                    other => {
                        return Err(EngineError::Stuck {
                            processor: p,
                            item: format!("lock not followed by an application: {other:?}"),
                        })
                    }
                }
            }
            AbsItem::Apply(call) => {
                let handler =
                    st.handler(call.target).ok_or_else(|| EngineError::UnknownName(format!("o{}", call.target)))?;
                if handler != p {
                    c.pool.entry(handler).or_default().push_back(AbsItem::Apply(call));
                    return Ok(());
                }
                st.frames
                    .entry(p)
                    .or_default()
                    .push(AbsFrame { feature: Some(call.feature), current: Some(call.target) });
                let procedure = self.concrete.procedure(call.feature);
                for (formal, arg) in procedure.formals.iter().zip(&call.args) {
                    if let AbsArg::Objects(ls) = arg {
                        let slot = AliasExpr::new(Self::frame_root(st, p, &formal.name));
                        st.alias = join(&st.alias, &[slot], ls, false);
                    }
                }
                stack.push_front(AbsItem::FramePop);
                stack.push_front(AbsItem::Release { owner: call.owner, names: call.acquired });
                for i in self.concrete.body(call.feature).iter().rev() {
                    stack.push_front(AbsItem::Instr { instr: i.clone(), weak: false });
                }
            }
            AbsItem::Release { owner, names } => {
                let mine = st.held.entry(owner).or_default();
                for n in names {
                    match mine.get_mut(&n) {
                        Some(k) if *k > 1 => *k -= 1,
                        Some(_) => {
                            mine.remove(&n);
                        }
                        None => return Err(EngineError::ReleaseUnheld { owner, handlers: n }),
                    }
                }
                if mine.is_empty() {
                    st.held.remove(&owner);
                }
            }
            AbsItem::FramePop => {
                let frames = st.frames.entry(p).or_default();
                if frames.pop().is_none() {
                    return Err(EngineError::Stuck { processor: p, item: "frame_pop on empty store".into() });
                }
                let depth = frames.len() as u32;
                st.alias.forget_roots(
                    |r| matches!(r, Root::Frame { processor, depth: d, .. } if *processor == p && *d == depth),
                );
            }
        }
        Ok(())
    }
}

/// Relation after writing one of `labels` into each of `targets`, or
/// `Void` when there are none. Several targets or a weak write keep the old
/// relation as an alternative.
fn join(r: &AliasRelation, targets: &[AliasExpr], labels: &BTreeSet<u32>, weak: bool) -> AliasRelation {
    let mut out = if weak || targets.len() != 1 { r.clone() } else { AliasRelation::new(r.depth()) };
    for t in targets {
        if labels.is_empty() {
            out = out.union(&alias_kill(r, t));
        }
        for l in labels {
            out = out.union(&alias_after_assign(r, t, &AliasExpr::label(*l)));
        }
    }
    out.retain(points_to);
    out
}

fn points_to(a: &AliasExpr, b: &AliasExpr) -> bool {
    let bare = |e: &AliasExpr| matches!(e.root, Root::Label(_)) && e.selectors.is_empty() && !e.widened;
    let source = |e: &AliasExpr| {
        !e.widened && (e.selectors.is_empty() || (e.selectors.len() == 1 && matches!(e.root, Root::Label(_))))
    };
    (bare(a) && source(b) && !bare(b)) || (bare(b) && source(a) && !bare(a))
}

/// A lock is blocked only by a definite name held by someone else.
pub fn is_blocked(c: &AbstractConfiguration, p: ProcessorId) -> bool {
    match c.top(p) {
        Some(AbsItem::Lock(names)) => names
            .iter()
            .filter(|n| n.len() == 1)
            .flatten()
            .any(|q| matches!(c.state.definite_holder(*q), Some(o) if o != p)),
        _ => false,
    }
}

pub fn initial_abstract(m: &AbstractMachine<'_>) -> Result<AbstractConfiguration, EngineError> {
    let program = m.concrete.program();
    let s = &program.settings;
    let root = crate::ir::lookup_feature(program, s.root_class.as_str(), s.root_procedure.as_str())
        .map_err(|e| EngineError::Unresolved(e.to_string()))?;
    if !root.formals.is_empty() {
        return Err(EngineError::RootArity(s.root_procedure.to_string()));
    }
    let boot = ProcessorId::BOOTSTRAP;
    let mut state = AbstractState { alias: AliasRelation::new(m.depth), ..AbstractState::default() };
    state.procs.insert(boot);
    state.names.insert(boot, "bootstrap".into());
    state.frames.insert(boot, vec![AbsFrame { feature: None, current: None }]);
    let call = Instruction::Command {
        target: Expression::name(ROOT_SLOT),
        feature: Ident::new(s.root_procedure.as_str()),
        args: Vec::new(),
    };
    let stack = VecDeque::from([AbsItem::CreateRoot, AbsItem::Instr { instr: Arc::new(call), weak: false }]);
    Ok(AbstractConfiguration { pool: BTreeMap::from([(boot, stack)]), state, terminal: Terminal::Running })
}

pub fn abstract_enabled(c: &AbstractConfiguration) -> Vec<Choice> {
    if c.terminal != Terminal::Running {
        return Vec::new();
    }
    c.pool.iter().filter(|(p, s)| !s.is_empty() && !is_blocked(c, **p)).map(|(p, _)| Choice { processor: *p }).collect()
}

pub fn abstract_step(
    m: &AbstractMachine<'_>,
    c: &AbstractConfiguration,
    ch: Choice,
) -> Result<AbstractConfiguration, EngineError> {
    let p = ch.processor;
    if c.terminal != Terminal::Running || c.pool.get(&p).is_none_or(|s| s.is_empty()) || is_blocked(c, p) {
        return Err(EngineError::NotEnabled(p));
    }
    let mut next = c.clone();
    let mut stack = next.pool.remove(&p).unwrap_or_default();
    let item = stack.pop_front().expect("nonempty stack");
    m.fire(&mut next, p, &mut stack, item)?;
    next.pool.insert(p, stack);
    for q in &next.state.procs {
        next.pool.entry(*q).or_default();
    }
    if next.pool.values().all(|s| s.is_empty()) {
        next.terminal = Terminal::Done;
    }
    Ok(next)
}

pub fn abstract_rule_name(c: &AbstractConfiguration, p: ProcessorId) -> Option<&'static str> {
    Some(match c.top(p)? {
        AbsItem::Instr { instr, .. } => match &**instr {
            Instruction::Create { .. } => "create",
            Instruction::Assign { .. } => "assign",
            Instruction::Command { .. } => "command",
            Instruction::If { .. } => "if",
            Instruction::Nil => "nil",
        },
        AbsItem::CreateRoot => "create_root",
        AbsItem::Lock(_) => "lock",
        AbsItem::Apply(call) => {
            if c.state.handler(call.target) == Some(p) {
                "apply"
            } else {
                "request"
            }
        }
        AbsItem::Release { .. } => "release",
        AbsItem::FramePop => "frame_pop",
    })
}

/// `W(p)` under may-wait: a processor with a lock on top may wait for every
/// handler it names, except those it definitely holds already.
pub fn abstract_wait_set(c: &AbstractConfiguration, p: ProcessorId) -> BTreeSet<ProcessorId> {
    let Some(AbsItem::Lock(names)) = c.top(p) else { return BTreeSet::new() };
    let held = c.state.definitely_held(p);
    names.iter().filter(|n| !(n.len() == 1 && n.is_subset(&held))).flatten().copied().collect()
}

pub fn abstract_wait_for_graph(c: &AbstractConfiguration) -> WaitForGraph {
    let nodes = c.state.procs.clone();
    let mut edges = Edges::new();
    for p in &nodes {
        let w = abstract_wait_set(c, *p);
        if w.is_empty() {
            continue;
        }
        for q in &nodes {
            if q == p {
                continue;
            }
            let label: BTreeSet<_> = w.intersection(&c.state.may_hold(*q)).copied().collect();
            if !label.is_empty() {
                edges.insert((*p, *q), label);
            }
        }
    }
    WaitForGraph { nodes, edges }
}

/// A cycle of may-wait edges. Sound for deadlocks of the concrete program,
/// not complete: ambiguous handler names yield false positives.
pub fn abstract_deadlock_check(c: &AbstractConfiguration) -> Option<DeadlockWitness> {
    let g = abstract_wait_for_graph(c);
    shortest_cycle(&g).map(|cycle| witness_from_cycle(&g, cycle))
}

fn is_local(c: &AbstractConfiguration, p: ProcessorId) -> bool {
    match c.top(p) {
        Some(AbsItem::Instr { instr, .. }) => {
            matches!(&**instr, Instruction::Nil | Instruction::If { .. } | Instruction::Assign { .. })
        }
        Some(AbsItem::FramePop | AbsItem::Release { .. }) => true,
        Some(AbsItem::Apply(call)) => {
            c.state.handler(call.target).is_some_and(|q| q == p || c.state.definitely_held(p).contains(&q))
        }
        _ => false,
    }
}

impl Semantics for AbstractMachine<'_> {
    type Config = AbstractConfiguration;

    const KIND: &'static str = "abstract";

    fn program(&self) -> &Program {
        self.concrete.program()
    }

    fn initial(&self) -> Result<AbstractConfiguration, EngineError> {
        initial_abstract(self)
    }

    fn enabled(&self, c: &AbstractConfiguration) -> Vec<Choice> {
        abstract_enabled(c)
    }

    fn step(&self, c: &AbstractConfiguration, ch: Choice) -> Result<AbstractConfiguration, EngineError> {
        abstract_step(self, c, ch)
    }

    fn canonical(&self, c: &AbstractConfiguration) -> AbstractConfiguration {
        c.clone()
    }

    fn rule_name(&self, c: &AbstractConfiguration, p: ProcessorId) -> Option<&'static str> {
        abstract_rule_name(c, p)
    }

    fn lock_sets(&self, c: &AbstractConfiguration) -> BTreeMap<ProcessorId, BTreeSet<ProcessorId>> {
        c.state.held.keys().map(|p| (*p, c.state.may_hold(*p))).filter(|(_, s)| !s.is_empty()).collect()
    }

    fn terminal(&self, c: &AbstractConfiguration) -> Terminal {
        c.terminal
    }

    fn check_deadlock(&self, c: &mut AbstractConfiguration) -> Option<DeadlockWitness> {
        let w = abstract_deadlock_check(c)?;
        c.terminal = Terminal::Deadlock;
        Some(w)
    }

    fn processor_name(&self, c: &AbstractConfiguration, p: ProcessorId) -> String {
        c.processor_name(p)
    }

    fn is_local(&self, c: &AbstractConfiguration, p: ProcessorId) -> bool {
        is_local(c, p)
    }
}
