use std::collections::BTreeSet;
use std::path::PathBuf;

use scooplock_core::explorer::{
    explore, explore_bounded, read_trace, replay, replay_trace, run_strategy, write_trace, Bounds, ExploreError,
    ReplayError, Strategy, Trace,
};
use scooplock_core::ir::{parse_program, Program};
use scooplock_core::runtime::{Machine, ProcessorId, Terminal};

fn load(path: PathBuf) -> Program {
    parse_program(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn corpus(name: &str) -> Program {
    load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name))
}

fn fixture(name: &str) -> Program {
    load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name))
}

fn ids(v: &[u32]) -> BTreeSet<ProcessorId> {
    v.iter().map(|i| ProcessorId(*i)).collect()
}

#[test]
fn guided_run_deadlocks_between_the_philosophers() {
    let r = run_strategy(&corpus("dining_wrong.scp"), &Strategy::guided()).unwrap();
    assert_eq!(r.deadlocks.len(), 1);
    assert_eq!(r.completed_traces, 0);
    let d = &r.deadlocks[0];
    assert_eq!(d.witness.cycle, vec![ProcessorId(5), ProcessorId(6)]);
    assert_eq!(d.witness.labels[&(ProcessorId(5), ProcessorId(6))], ids(&[4]));
    assert_eq!(d.witness.labels[&(ProcessorId(6), ProcessorId(5))], ids(&[3]));
    assert_eq!(
        d.describe(),
        ["p1 (#5) waits for {f2 (#4)} held by p2 (#6)", "p2 (#6) waits for {f1 (#3)} held by p1 (#5)"]
    );
    assert_eq!(d.trace.terminal, Terminal::Deadlock);
}

#[test]
fn guided_run_completes_the_safe_variants() {
    for f in ["dining_correct.scp", "dining_conditional.scp", "straight_line.scp"] {
        let r = run_strategy(&corpus(f), &Strategy::guided()).unwrap();
        assert!(r.deadlocks.is_empty(), "{f}");
        assert_eq!(r.completed_traces, 1, "{f}");
    }
}

#[test]
fn init_alone_executes_nothing() {
    let r = run_strategy(&corpus("dining_wrong.scp"), &"init".parse().unwrap()).unwrap();
    assert_eq!((r.states_visited, r.deadlocks.len(), r.completed_traces), (1, 0, 0));
}

#[test]
fn exhaustive_exploration_separates_the_variants() {
    let wrong = explore_bounded(&corpus("dining_wrong.scp"), 200, 100_000).unwrap();
    assert!(wrong.found_deadlock());
    assert!(wrong.completed_traces >= 1);
    assert!(!wrong.bound_hit);
    assert!(wrong.deadlocks.iter().all(|d| d.witness.processors == ids(&[5, 6])));
    for f in ["dining_correct.scp", "dining_conditional.scp"] {
        let r = explore_bounded(&corpus(f), 200, 100_000).unwrap();
        assert!(!r.found_deadlock(), "{f}");
        assert!(!r.bound_hit, "{f}");
        assert_eq!(r.completed_traces, 1, "{f}");
    }
}

#[test]
fn zero_bounds_are_rejected() {
    let p = corpus("straight_line.scp");
    assert_eq!(explore_bounded(&p, 0, 10), Err(ExploreError::ZeroBound));
    assert_eq!(explore_bounded(&p, 10, 0), Err(ExploreError::ZeroBound));
}

#[test]
fn bounds_truncate_and_say_so() {
    let r = explore_bounded(&corpus("dining_wrong.scp"), 5, 100_000).unwrap();
    assert!(r.bound_hit);
    let r = explore_bounded(&corpus("dining_wrong.scp"), 200, 50).unwrap();
    assert!(r.bound_hit);
    assert_eq!(r.states_visited, 50);
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let p = corpus("dining_wrong.scp");
    let m = Machine::new(&p);
    let mut seq = Bounds::new(200, 100_000);
    seq.parallel = false;
    let mut par = seq;
    par.parallel = true;
    let a = explore(&m, seq, |_| {}).unwrap();
    let b = explore(&m, par, |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, explore(&m, seq, |_| {}).unwrap());
}

#[test]
fn deadlock_traces_replay() {
    let p = corpus("dining_wrong.scp");
    let r = explore_bounded(&p, 200, 100_000).unwrap();
    for d in &r.deadlocks {
        let c = replay_trace(&p, &d.trace).unwrap();
        assert_eq!(c.terminal, Terminal::Deadlock);
        assert_eq!(scooplock_core::deadlock::detect_deadlock(&c).as_ref(), Some(&d.witness));
    }
}

#[test]
fn trace_files_round_trip() {
    let p = corpus("dining_wrong.scp");
    let m = Machine::new(&p);
    let t = run_strategy(&p, &Strategy::guided()).unwrap().deadlocks.remove(0).trace;
    let text = write_trace(&m, &t).unwrap();
    assert_eq!(text.lines().count(), t.choices.len() + 1);
    assert!(text.lines().nth(1).unwrap().contains("\"rule_name\":\"create_root\""));
    assert_eq!(read_trace(&text).unwrap(), t);
}

#[test]
fn replay_rejects_foreign_and_tampered_traces() {
    let p = corpus("dining_wrong.scp");
    let t = run_strategy(&p, &Strategy::guided()).unwrap().deadlocks.remove(0).trace;
    assert!(matches!(replay_trace(&corpus("dining_correct.scp"), &t), Err(ReplayError::HashMismatch { .. })));

    let mut bad = t.clone();
    bad.choices[0].processor = ProcessorId(3);
    assert_eq!(replay_trace(&p, &bad), Err(ReplayError::Divergence { index: 0, processor: ProcessorId(3) }));

    let mut short = t.clone();
    short.choices.truncate(3);
    assert!(matches!(replay_trace(&p, &short), Err(ReplayError::TerminalMismatch { .. })));

    let mut other = t;
    other.semantics = "abstract".into();
    assert!(matches!(replay_trace(&p, &other), Err(ReplayError::SemanticsMismatch { .. })));
}

#[test]
fn empty_trace_replays_to_the_initial_configuration() {
    let p = corpus("straight_line.scp");
    let m = Machine::new(&p);
    let t = Trace::new(&m, true, Vec::new(), Terminal::Running);
    let c = replay(&m, &t).unwrap();
    assert_eq!(c, scooplock_core::runtime::initial_configuration(&p).unwrap());
}

#[test]
fn malformed_trace_files_name_the_line() {
    assert_eq!(read_trace("").unwrap_err().line, 1);
    let p = corpus("straight_line.scp");
    let m = Machine::new(&p);
    let t = run_strategy(&p, &"run".parse().unwrap()).unwrap();
    assert_eq!(t.completed_traces, 1);
    let trace =
        Trace::new(&m, false, vec![scooplock_core::runtime::Choice { processor: ProcessorId(0) }], Terminal::Running);
    let text = write_trace(&m, &trace).unwrap();
    let broken = text.replace("\"step_index\":0", "\"step_index\":4");
    assert_eq!(read_trace(&broken).unwrap_err().line, 2);
}

/// Fusing local steps keeps the same deadlock witnesses and the same
/// completed runs as plain interleaving.
#[test]
fn fusion_preserves_deadlocks_and_outcomes() {
    let p = fixture("tiny_forks.scp");
    let m = Machine::new(&p);
    let mut fused = Bounds::new(1000, 200_000);
    fused.fuse_local = true;
    let mut plain = fused;
    plain.fuse_local = false;
    let a = explore(&m, fused, |_| {}).unwrap();
    let b = explore(&m, plain, |_| {}).unwrap();
    assert!(!a.bound_hit && !b.bound_hit);
    assert!(a.states_visited < b.states_visited);
    let witnesses = |r: &scooplock_core::explorer::ExplorationReport| -> BTreeSet<Vec<String>> {
        r.deadlocks.iter().map(|d| d.describe()).collect()
    };
    assert!(a.found_deadlock());
    assert_eq!(witnesses(&a), witnesses(&b));
    assert_eq!(a.completed_traces, b.completed_traces);
    assert_eq!(a.stuck_states, b.stuck_states);
}
