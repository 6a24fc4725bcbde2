use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scooplock_core::alias::{abstract_step, initial_abstract, AbstractConfiguration, AbstractMachine, AliasExpr, Root};
use scooplock_core::explorer::{explore, explore_bounded, run_strategy_with, Bounds, RunOptions, Semantics, Strategy};
use scooplock_core::ir::{parse_program, Program};
use scooplock_core::runtime::{
    enabled_choices, initial_configuration, rule_name, step, Configuration, Machine, ProcessorId, Ref,
};

fn load(path: PathBuf) -> Program {
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn corpus(name: &str) -> Program {
    load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name))
}

fn fixture(name: &str) -> Program {
    load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name))
}

fn all_programs() -> Vec<(&'static str, Program)> {
    let mut v: Vec<_> = ["dining_wrong.scp", "dining_correct.scp", "dining_conditional.scp", "straight_line.scp"]
        .into_iter()
        .map(|f| (f, corpus(f)))
        .collect();
    v.push(("tiny_forks.scp", fixture("tiny_forks.scp")));
    v
}

#[test]
fn abstract_check_flags_every_concrete_deadlock() {
    for (f, p) in all_programs() {
        let concrete = explore_bounded(&p, 200, 100_000).unwrap();
        let abs = explore(&AbstractMachine::new(&p, 3), Bounds::new(200, 100_000), |_| {}).unwrap();
        assert!(!abs.bound_hit, "{f}");
        if concrete.found_deadlock() {
            assert!(abs.found_deadlock(), "{f}");
        }
    }
}

#[test]
fn conditional_aliasing_is_a_false_positive() {
    let p = corpus("dining_conditional.scp");
    assert!(!explore_bounded(&p, 200, 100_000).unwrap().found_deadlock());
    let m = AbstractMachine::new(&p, 3);
    let abs = explore(&m, Bounds::new(200, 100_000), |_| {}).unwrap();
    assert!(abs.found_deadlock());
    let d = &abs.deadlocks[0];
    assert_eq!(d.witness.processors, BTreeSet::from([ProcessorId(5), ProcessorId(6)]));
    let guided = run_strategy_with(&m, &Strategy::guided(), RunOptions::for_program(&p)).unwrap();
    assert_eq!(guided.report.deadlocks.len(), 1);
}

#[test]
fn atomic_variant_is_not_flagged() {
    let p = corpus("dining_correct.scp");
    let abs = explore(&AbstractMachine::new(&p, 3), Bounds::new(200, 100_000), |_| {}).unwrap();
    assert!(!abs.found_deadlock());
    assert_eq!(abs.completed_traces, 1);
}

#[test]
fn abstract_assignment_saves_two_steps_each() {
    let p = corpus("straight_line.scp");
    let run: Strategy = "run".parse().unwrap();
    let opts = RunOptions::for_program(&p);
    let concrete = run_strategy_with(&Machine::new(&p), &run, opts).unwrap();
    let abs = run_strategy_with(&AbstractMachine::new(&p, 3), &run, opts).unwrap();
    assert_eq!(concrete.trace.choices.len(), abs.trace.choices.len() + 20);
    assert_eq!(abs.report.completed_traces, 1);
}

#[test]
fn sequential_program_never_locks() {
    let p = corpus("straight_line.scp");
    let m = AbstractMachine::new(&p, 3);
    let mut seen = 0;
    explore(&m, Bounds::new(200, 1000), |c| {
        seen += 1;
        assert!(m.lock_sets(c).is_empty());
        assert!(c.state.held.is_empty());
    })
    .unwrap();
    assert!(seen > 1);
}

type Pattern = BTreeMap<ProcessorId, BTreeSet<ProcessorId>>;

fn patterns<S: Semantics>(sem: &S) -> BTreeSet<Pattern> {
    let mut b = Bounds::new(200, 100_000);
    b.deadlock_check = false;
    let mut out = BTreeSet::new();
    let r = explore(sem, b, |c| {
        out.insert(sem.lock_sets(c));
    })
    .unwrap();
    assert!(!r.bound_hit);
    out
}

/// Every concrete lock pattern is matched by an abstract one that holds at
/// least the same handlers per processor.
#[test]
fn abstract_lock_patterns_cover_concrete_ones() {
    for (f, p) in all_programs() {
        let concrete = patterns(&Machine::new(&p));
        let abs = patterns(&AbstractMachine::new(&p, 3));
        for pc in &concrete {
            let covered =
                abs.iter().any(|pa| pc.keys().eq(pa.keys()) && pc.iter().all(|(q, held)| held.is_subset(&pa[q])));
            assert!(covered, "{f}: {pc:?} not covered");
        }
    }
}

/// Every object reachable within `depth` selectors from a frame variable or
/// object is among the labels the abstract state resolves that path to.
fn assert_covers(c: &Configuration, a: &AbstractConfiguration, depth: usize) {
    let mut work = Vec::new();
    for (p, frames) in &c.state.stores {
        for (d, frame) in frames.iter().enumerate() {
            for (name, v) in &frame.slots {
                if let Ref::Object(o) = v {
                    let root = Root::Frame { name: name.clone(), processor: *p, depth: d as u32 };
                    work.push((AliasExpr::new(root), *o));
                }
            }
        }
    }
    work.extend(c.state.heap.keys().map(|o| (AliasExpr::label(o.0), *o)));
    while let Some((e, o)) = work.pop() {
        assert!(
            a.state.resolve(&e).contains(&o.0),
            "{e} evaluates to o{} but resolves to {:?}",
            o.0,
            a.state.resolve(&e)
        );
        if e.depth() < depth {
            for (attr, v) in &c.state.heap[&o].attributes {
                if let Ref::Object(next) = v {
                    work.push((e.clone().dot(attr), *next));
                }
            }
        }
    }
}

/// Follows random concrete schedules, mirroring each step abstractly except
/// `eval` and `wait`, whose effect the abstract assignment performs at once.
/// Used on programs without conditionals.
fn lockstep(p: &Program, seed: u64) {
    let m = Machine::new(p);
    let am = AbstractMachine::new(p, 3);
    let mut c = initial_configuration(p).unwrap();
    let mut a = initial_abstract(&am).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let enabled = enabled_choices(&c);
        if enabled.is_empty() {
            break;
        }
        let ch = enabled[rng.gen_range(0..enabled.len())];
        let rule = rule_name(&c, ch.processor).unwrap();
        c = step(&m, &c, ch).unwrap();
        if !matches!(rule, "eval" | "wait") {
            a = abstract_step(&am, &a, ch).unwrap();
        }
        assert_covers(&c, &a, 2);
    }
}

#[test]
fn abstract_states_over_approximate_concrete_aliasing() {
    for (f, p) in all_programs() {
        if f == "dining_conditional.scp" {
            continue;
        }
        for seed in 0..12 {
            lockstep(&p, seed);
        }
    }
}
