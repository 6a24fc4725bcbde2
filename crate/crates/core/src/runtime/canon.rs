use std::collections::BTreeMap;

use super::*;

#[derive(Default)]
struct Renaming {
    objects: BTreeMap<ObjId, ObjId>,
    order: Vec<ObjId>,
    channels: BTreeMap<ChannelId, ChannelId>,
}

impl Renaming {
    fn see_object(&mut self, o: ObjId) {
        if !self.objects.contains_key(&o) {
            self.objects.insert(o, ObjId(self.order.len() as u32));
            self.order.push(o);
        }
    }

    fn see_ref(&mut self, r: Ref) {
        if let Ref::Object(o) = r {
            self.see_object(o);
        }
    }

    fn see_channel(&mut self, a: ChannelId) {
        let n = self.channels.len() as u32;
        self.channels.entry(a).or_insert(ChannelId(n));
    }

    fn obj(&self, o: ObjId) -> ObjId {
        self.objects[&o]
    }

    fn r(&self, r: Ref) -> Ref {
        match r {
            Ref::Object(o) => Ref::Object(self.obj(o)),
            other => other,
        }
    }

    fn ch(&self, a: ChannelId) -> ChannelId {
        self.channels[&a]
    }
}

/// Renumbers objects and channels in order of first occurrence: stacks by
/// processor, then frames, then heap attributes breadth-first, then any
/// remaining objects by old id.
pub(super) fn canonicalize(c: &Configuration) -> Configuration {
    let mut ren = Renaming::default();
    for stack in c.pool.values() {
        for item in stack {
            match item {
                StackItem::Eval { channel, .. } | StackItem::Wait(channel) | StackItem::Write { channel, .. } => {
                    ren.see_channel(*channel)
                }
                StackItem::Apply(call) => {
                    ren.see_object(call.target);
                    call.args.iter().for_each(|a| ren.see_ref(*a));
                }
                _ => {}
            }
        }
    }
    for frames in c.state.stores.values() {
        for f in frames {
            ren.see_ref(f.current);
            f.slots.values().for_each(|v| ren.see_ref(*v));
        }
    }
    for ch in c.state.channels.keys() {
        ren.see_channel(*ch);
    }
    for ch in c.state.channels.values() {
        if let Channel::Holding(r) = ch {
            ren.see_ref(*r);
        }
    }
    let mut cursor = 0;
    loop {
        if cursor >= ren.order.len() {
            match c.state.heap.keys().find(|o| !ren.objects.contains_key(o)) {
                Some(o) => {
                    ren.see_object(*o);
                    continue;
                }
                None => break,
            }
        }
        if let Some(rec) = c.state.heap.get(&ren.order[cursor]) {
            rec.attributes.values().for_each(|v| ren.see_ref(*v));
        }
        cursor += 1;
    }

    let pool = c
        .pool
        .iter()
        .map(|(p, stack)| {
            let items = stack
                .iter()
                .map(|item| match item {
                    StackItem::Eval { channel, source } => {
                        StackItem::Eval { channel: ren.ch(*channel), source: source.clone() }
                    }
                    StackItem::Wait(channel) => StackItem::Wait(ren.ch(*channel)),
                    StackItem::Write { target, channel } => {
                        StackItem::Write { target: target.clone(), channel: ren.ch(*channel) }
                    }
                    StackItem::Apply(call) => StackItem::Apply(Call {
                        target: ren.obj(call.target),
                        args: call.args.iter().map(|a| ren.r(*a)).collect(),
                        ..call.clone()
                    }),
                    other => other.clone(),
                })
                .collect();
            (*p, items)
        })
        .collect();
    let st = &c.state;
    let heap = st
        .heap
        .iter()
        .map(|(o, rec)| {
            let attributes = rec.attributes.iter().map(|(k, v)| (k.clone(), ren.r(*v))).collect();
            (ren.obj(*o), ObjectRecord { attributes, ..rec.clone() })
        })
        .collect();
    let stores = st
        .stores
        .iter()
        .map(|(p, frames)| {
            let frames = frames
                .iter()
                .map(|f| Frame {
                    feature: f.feature,
                    current: ren.r(f.current),
                    slots: f.slots.iter().map(|(k, v)| (k.clone(), ren.r(*v))).collect(),
                })
                .collect();
            (*p, frames)
        })
        .collect();
    let channels = st
        .channels
        .iter()
        .map(|(a, ch)| {
            let ch = match ch {
                Channel::Holding(r) => Channel::Holding(ren.r(*r)),
                Channel::Empty => Channel::Empty,
            };
            (ren.ch(*a), ch)
        })
        .collect();
    Configuration {
        pool,
        state: State {
            heap,
            stores,
            rq_locks: st.rq_locks.clone(),
            channels,
            procs: st.procs.clone(),
            names: st.names.clone(),
            next_object: ren.objects.len() as u32,
            next_channel: ren.channels.len() as u32,
        },
        terminal: c.terminal,
    }
}
