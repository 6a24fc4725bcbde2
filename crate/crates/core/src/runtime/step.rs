use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::ir::{Expression, Ident, Instruction, Procedure, Program, TypeAnnot, BOOLEAN_CLASS};

use super::*;

/// Name of the bootstrap frame slot that receives the root object.
pub(crate) const ROOT_SLOT: &str = "root";

/// Program plus pre-shared procedure bodies, so that pushing a body onto a
/// stack clones reference counts instead of instruction trees.
#[derive(Debug)]
pub struct Machine<'p> {
    program: &'p Program,
    bodies: Vec<Vec<Vec<Arc<Instruction>>>>,
    separate: bool,
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program) -> Self {
        let bodies = program
            .classes
            .iter()
            .map(|c| c.procedures.iter().map(|p| p.body.iter().cloned().map(Arc::new).collect()).collect())
            .collect();
        Machine { program, bodies, separate: uses_separate_types(program) }
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    /// Whether the root object gets its own processor.
    pub fn separate(&self) -> bool {
        self.separate
    }

    pub fn feature(&self, class: &str, procedure: &str) -> Option<FeatureRef> {
        let ci = self.program.class_index(class)?;
        let pi = self.program.classes[ci].procedures.iter().position(|p| p.name.as_str() == procedure)?;
        Some(FeatureRef { class: ci as u32, procedure: pi as u32 })
    }

    pub fn procedure(&self, f: FeatureRef) -> &'p Procedure {
        &self.program.classes[f.class as usize].procedures[f.procedure as usize]
    }

    pub(crate) fn body(&self, f: FeatureRef) -> &[Arc<Instruction>] {
        &self.bodies[f.class as usize][f.procedure as usize]
    }

    pub fn feature_name(&self, f: FeatureRef) -> String {
        feature_name(self.program, f)
    }

    /// Default value of a variable or attribute of type `ty`.
    pub(crate) fn default_value(ty: &TypeAnnot) -> Ref {
        if ty.class_name.as_str() == BOOLEAN_CLASS {
            Ref::Bool(false)
        } else {
            Ref::Void
        }
    }

    pub(crate) fn new_record(&self, class: &str, handler: ProcessorId) -> Result<ObjectRecord, EngineError> {
        let decl = self.program.class(class).ok_or_else(|| EngineError::Unresolved(class.to_string()))?;
        let attributes = decl.attributes.iter().map(|a| (a.name.name.clone(), Self::default_value(&a.ty))).collect();
        Ok(ObjectRecord { class: decl.name.name.clone(), handler, attributes })
    }

    /// Declared type of the location `target` names in `p`'s top frame.
    pub(crate) fn target_type(
        &self,
        st: &State,
        p: ProcessorId,
        target: &Expression,
    ) -> Result<TypeAnnot, EngineError> {
        let frame = st.stores.get(&p).and_then(|f| f.last());
        let unresolved = || EngineError::UnknownName(target.to_string());
        let (owner, attr) = match (target.selectors.last(), &target.root) {
            (None, crate::ir::ExprRoot::Name(id)) => {
                if let Some(f) = frame.and_then(|f| f.feature) {
                    let proc_ = self.procedure(f);
                    if let Some(d) = proc_.formal(id.as_str()).or_else(|| proc_.local(id.as_str())) {
                        return Ok(d.ty.clone());
                    }
                }
                (st.frame_current(p), id.as_str())
            }
            (Some(last), _) => {
                let mut prefix = target.clone();
                prefix.selectors.pop();
                (evaluate_expression(st, p, &prefix)?, last.as_str())
            }
            (None, _) => return Err(unresolved()),
        };
        let Ref::Object(o) = owner else {
            return Err(EngineError::VoidDereference(target.to_string()));
        };
        let class = &st.heap.get(&o).ok_or_else(unresolved)?.class;
        self.program.class(class).and_then(|c| c.attribute(attr)).map(|a| a.ty.clone()).ok_or_else(unresolved)
    }
}

/// Whether any attribute, formal or local is declared separate. Programs
/// without separate types run entirely on the bootstrap processor.
pub fn uses_separate_types(program: &Program) -> bool {
    program.classes.iter().any(|c| {
        c.attributes.iter().any(|a| a.ty.is_separate())
            || c.procedures.iter().any(|p| p.formals.iter().chain(&p.locals).any(|d| d.ty.is_separate()))
    })
}

/// One bootstrap processor whose stack creates the root object (on a fresh
/// processor when the program uses separate types) and then calls the root creation procedure on it.
pub fn initial_configuration(program: &Program) -> Result<Configuration, EngineError> {
    let s = &program.settings;
    let root = crate::ir::lookup_feature(program, s.root_class.as_str(), s.root_procedure.as_str())
        .map_err(|e| EngineError::Unresolved(e.to_string()))?;
    if !root.formals.is_empty() {
        return Err(EngineError::RootArity(s.root_procedure.to_string()));
    }
    let boot = ProcessorId::BOOTSTRAP;
    let mut state = State::default();
    state.procs.insert(boot);
    state.names.insert(boot, "bootstrap".into());
    let mut slots = BTreeMap::new();
    slots.insert(ROOT_SLOT.into(), Ref::Void);
    state.stores.insert(boot, vec![Frame { feature: None, current: Ref::Void, slots }]);
    let call = Instruction::Command {
        target: Expression::name(ROOT_SLOT),
        feature: Ident::new(s.root_procedure.as_str()),
        args: Vec::new(),
    };
    let mut stack = VecDeque::new();
    stack.push_back(StackItem::CreateRoot);
    stack.push_back(StackItem::Instr(Arc::new(call)));
    let mut pool = BTreeMap::new();
    pool.insert(boot, stack);
    Ok(Configuration { pool, state, terminal: Terminal::Running })
}

/// The assignment rule: `t := s` becomes `eval(a, s); wait(a); write(t, a)`
/// with `a` a fresh, empty channel.
pub fn decompose_assign(state: &mut State, target: &Expression, source: &Expression) -> [StackItem; 3] {
    let a = ChannelId(state.next_channel);
    state.next_channel += 1;
    state.channels.insert(a, Channel::Empty);
    [
        StackItem::Eval { channel: a, source: Arc::new(source.clone()) },
        StackItem::Wait(a),
        StackItem::Write { target: Arc::new(target.clone()), channel: a },
    ]
}

/// Whether `p`'s top item cannot fire: a lock on a handler held elsewhere,
/// or a wait on an empty channel.
pub fn is_blocked(c: &Configuration, p: ProcessorId) -> bool {
    match c.top(p) {
        Some(StackItem::Lock(q)) => q.iter().any(|h| matches!(c.state.holder_of(*h), Some(o) if o != p)),
        Some(StackItem::Wait(a)) => !matches!(c.state.channels.get(a), Some(Channel::Holding(_))),
        _ => false,
    }
}

/// Processors whose top item can fire, in ascending order.
pub fn enabled_choices(c: &Configuration) -> Vec<Choice> {
    if c.terminal != Terminal::Running {
        return Vec::new();
    }
    c.pool.iter().filter(|(p, s)| !s.is_empty() && !is_blocked(c, **p)).map(|(p, _)| Choice { processor: *p }).collect()
}

/// Whether `p`'s top item can run right after `p`'s previous step without
/// changing which deadlocks and final configurations are reachable. It
/// either touches only `p`'s own frames, channels and objects, enqueues onto
/// a request queue `p` holds, or releases locks.
pub fn is_local(c: &Configuration, p: ProcessorId) -> bool {
    match c.top(p) {
        Some(StackItem::Instr(i)) => matches!(&**i, Instruction::Nil | Instruction::If { .. }),
        Some(StackItem::Eval { .. } | StackItem::Write { .. } | StackItem::FramePop | StackItem::Release { .. }) => {
            true
        }
        Some(StackItem::Wait(_)) => !is_blocked(c, p),
        Some(StackItem::Apply(call)) => {
            c.state.handler(call.target).is_some_and(|q| q == p || c.state.held(p).contains(&q))
        }
        _ => false,
    }
}

/// Name of the rule `p`'s top item would fire.
pub fn rule_name(c: &Configuration, p: ProcessorId) -> Option<&'static str> {
    Some(match c.top(p)? {
        StackItem::Instr(i) => match &**i {
            Instruction::Create { .. } => "create",
            Instruction::Assign { .. } => "assign",
            Instruction::Command { .. } => "command",
            Instruction::If { .. } => "if",
            Instruction::Nil => "nil",
        },
        StackItem::CreateRoot => "create_root",
        StackItem::Eval { .. } => "eval",
        StackItem::Wait(_) => "wait",
        StackItem::Write { .. } => "write",
        StackItem::Lock(_) => "lock",
        StackItem::Apply(call) => {
            if c.state.handler(call.target) == Some(p) {
                "apply"
            } else {
                "request"
            }
        }
        StackItem::Release { .. } => "release",
        StackItem::FramePop => "frame_pop",
    })
}

/// Applies the rule for `ch.processor`'s top item.
pub fn step(m: &Machine<'_>, c: &Configuration, ch: Choice) -> Result<Configuration, EngineError> {
    let p = ch.processor;
    if c.terminal != Terminal::Running || c.pool.get(&p).is_none_or(|s| s.is_empty()) || is_blocked(c, p) {
        return Err(EngineError::NotEnabled(p));
    }
    let mut next = c.clone();
    let mut stack = next.pool.remove(&p).unwrap_or_default();
    let item = stack.pop_front().expect("nonempty stack");
    fire(m, &mut next, p, &mut stack, item)?;
    normalize(&mut next.state, &mut stack);
    next.pool.insert(p, stack);
    for q in &next.state.procs {
        next.pool.entry(*q).or_default();
    }
    if next.all_idle() {
        next.terminal = Terminal::Done;
    }
    next.state.check_invariants()?;
    Ok(next)
}

/// Assignments reaching the top of a stack are decomposed immediately: the
/// expansion is administrative, not a scheduling point.
fn normalize(state: &mut State, stack: &mut CallStack) {
    while let Some(StackItem::Instr(i)) = stack.front() {
        let Instruction::Assign { target, source } = &**i else { break };
        let items = decompose_assign(state, target, source);
        stack.pop_front();
        for it in items.into_iter().rev() {
            stack.push_front(it);
        }
    }
}

fn fire(
    m: &Machine<'_>,
    c: &mut Configuration,
    p: ProcessorId,
    stack: &mut CallStack,
    item: StackItem,
) -> Result<(), EngineError> {
    let st = &mut c.state;
    match item {
        StackItem::CreateRoot => {
            let root_class = m.program().settings.root_class.as_str();
            let q = if m.separate { fresh_processor(st, &root_class.to_lowercase()) } else { p };
            let o = st.alloc_object();
            st.heap.insert(o, m.new_record(root_class, q)?);
            st.write_target(p, &Expression::name(ROOT_SLOT), Ref::Object(o))?;
        }
        StackItem::Instr(instr) => match &*instr {
            Instruction::Create { target, creator, args } => {
                let ty = m.target_type(st, p, target)?;
                let handler = if ty.is_separate() {
                    let name =
                        target.selectors.last().map(|s| s.as_str().to_string()).unwrap_or_else(|| target.to_string());
                    fresh_processor(st, &name)
                } else {
                    p
                };
                let o = st.alloc_object();
                st.heap.insert(o, m.new_record(ty.class_name.as_str(), handler)?);
                st.write_target(p, target, Ref::Object(o))?;
                stack.push_front(StackItem::Instr(Arc::new(Instruction::Command {
                    target: target.clone(),
                    feature: creator.clone(),
                    args: args.clone(),
                })));
            }
            Instruction::Command { target, feature, args } => {
                let Ref::Object(o) = evaluate_expression(st, p, target)? else {
                    return Err(EngineError::VoidDereference(target.to_string()));
                };
                let record = st.heap.get(&o).ok_or_else(|| EngineError::UnknownName(target.to_string()))?;
                let f = m
                    .feature(&record.class, feature.as_str())
                    .ok_or_else(|| EngineError::Unresolved(format!("{}.{}", record.class, feature)))?;
                let q = record.handler;
                let values = args.iter().map(|a| evaluate_expression(st, p, a)).collect::<Result<Vec<_>, _>>()?;
                let procedure = m.procedure(f);
                let mut wanted = BTreeSet::new();
                if q != p {
                    wanted.insert(q);
                }
                for (formal, value) in procedure.formals.iter().zip(&values) {
                    if let (true, Ref::Object(a)) = (formal.ty.is_separate(), value) {
                        if let Some(h) = st.handler(*a) {
                            if h != p {
                                wanted.insert(h);
                            }
                        }
                    }
                }
                stack.push_front(StackItem::Apply(Call {
                    feature: f,
                    target: o,
                    args: values,
                    owner: p,
                    acquired: BTreeSet::new(),
                }));
                if !wanted.is_subset(&st.held(p)) {
                    stack.push_front(StackItem::Lock(wanted));
                }
            }
            Instruction::Assign { target, source } => {
                let items = decompose_assign(st, target, source);
                for it in items.into_iter().rev() {
                    stack.push_front(it);
                }
            }
            Instruction::If { condition, then_branch, else_branch } => {
                let branch = match evaluate_expression(st, p, condition)? {
                    Ref::Bool(true) => then_branch,
                    Ref::Bool(false) => else_branch,
                    _ => return Err(EngineError::NonBoolean(condition.to_string())),
                };
                for i in branch.iter().rev() {
                    stack.push_front(StackItem::Instr(Arc::new(i.clone())));
                }
            }
            Instruction::Nil => {}
        },
        StackItem::Eval { channel, source } => {
            if st.channels.get(&channel) != Some(&Channel::Empty) {
                return Err(EngineError::Channel(channel));
            }
            let value = evaluate_expression(st, p, &source)?;
            st.channels.insert(channel, Channel::Holding(value));
        }
        StackItem::Wait(channel) => {
            if !matches!(st.channels.get(&channel), Some(Channel::Holding(_))) {
                return Err(EngineError::Channel(channel));
            }
        }
        StackItem::Write { target, channel } => {
            let Some(Channel::Holding(value)) = st.channels.remove(&channel) else {
                return Err(EngineError::Channel(channel));
            };
            st.write_target(p, &target, value)?;
        }
        StackItem::Lock(q_set) => {
            let acquired = st.try_acquire(p, &q_set).map_err(|_| EngineError::NotEnabled(p))?;
            match stack.front_mut() {
                Some(StackItem::Apply(call)) => call.acquired = acquired,
                other => {
                    return Err(EngineError::Stuck {
                        processor: p,
                        item: format!("lock not followed by an application: {other:?}"),
                    })
                }
            }
        }
        StackItem::Apply(call) => {
            let handler =
                st.handler(call.target).ok_or_else(|| EngineError::UnknownName(format!("{:?}", call.target)))?;
            if handler != p {
                c.pool.entry(handler).or_default().push_back(StackItem::Apply(call));
                return Ok(());
            }
            let procedure = m.procedure(call.feature);
            let mut slots: BTreeMap<_, _> =
                procedure.formals.iter().zip(&call.args).map(|(d, v)| (d.name.name.clone(), *v)).collect();
            for l in &procedure.locals {
                slots.insert(l.name.name.clone(), Machine::default_value(&l.ty));
            }
            st.stores.entry(p).or_default().push(Frame {
                feature: Some(call.feature),
                current: Ref::Object(call.target),
                slots,
            });
            stack.push_front(StackItem::FramePop);
            stack.push_front(StackItem::Release { owner: call.owner, handlers: call.acquired });
            for i in m.body(call.feature).iter().rev() {
                stack.push_front(StackItem::Instr(i.clone()));
            }
        }
        StackItem::Release { owner, handlers } => st.release(owner, &handlers)?,
        StackItem::FramePop => {
            let frames = st.stores.entry(p).or_default();
            if frames.pop().is_none() {
                return Err(EngineError::Stuck { processor: p, item: "frame_pop on empty store".into() });
            }
        }
    }
    Ok(())
}

fn fresh_processor(st: &mut State, name: &str) -> ProcessorId {
    let q = ProcessorId(st.procs.len() as u32);
    st.procs.insert(q);
    st.names.insert(q, name.into());
    st.stores.insert(q, Vec::new());
    q
}
