//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scooplock_core::alias::{alias_exec, alias_loop_fixpoint, parse_alias_program, AbstractMachine, AliasRelation};
use scooplock_core::deadlock::{build_wait_for_graph, detect_deadlock, detect_deadlock_oracle};
use scooplock_core::explorer::{
    explore, replay_trace, run_strategy, run_strategy_with, Bounds, ExplorationReport, RunOptions, Strategy,
};
use scooplock_core::ir::{parse_program, Instruction, Program};
use scooplock_core::runtime::{
    enabled_choices, step, Call, CallStack, Configuration, FeatureRef, Machine, ObjId, ProcessorId, StackItem, State,
    Terminal,
};

const DEPTH: usize = 200;
const STATES: usize = 100_000;
const RANDOM_CONFIGS: usize = 1000;
const RANDOM_SEED: u64 = 0x5c00_91c4;

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus(name: &str) -> Program {
    parse_program(&std::fs::read_to_string(corpus_dir().join(name)).unwrap()).unwrap()
}

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

/// Exploration of criterion 2, keeping every visited configuration.
struct Explored {
    report: ExplorationReport,
    configs: Vec<Configuration>,
    elapsed: Duration,
}

fn explore_keeping(p: &Program) -> Explored {
    let start = Instant::now();
    let mut configs = Vec::new();
    let report = explore(&Machine::new(p), Bounds::new(DEPTH, STATES), |c| configs.push(c.clone())).unwrap();
    Explored { report, configs, elapsed: start.elapsed() }
}

fn c1_guided(wrong: &Program) -> Outcome {
    let start = Instant::now();
    let r = run_strategy(wrong, &Strategy::guided()).unwrap();
    let elapsed = start.elapsed();
    let [d] = r.deadlocks.as_slice() else { return Err(format!("{} deadlocks, expected 1", r.deadlocks.len())) };
    let c = replay_trace(wrong, &d.trace).unwrap();
    let names: BTreeSet<String> = d.witness.processors.iter().map(|q| c.processor_name(*q)).collect();
    let label = |a: &str, b: &str| {
        let find = |n: &str| d.witness.processors.iter().copied().find(|q| c.processor_name(*q) == n).unwrap();
        let held: Vec<String> = d.witness.labels[&(find(a), find(b))].iter().map(|q| c.processor_name(*q)).collect();
        held
    };
    let ok = c.terminal == Terminal::Deadlock
        && r.completed_traces == 0
        && names == BTreeSet::from(["p1".to_string(), "p2".to_string()])
        && label("p1", "p2") == ["f2"]
        && label("p2", "p1") == ["f1"]
        && elapsed < Duration::from_secs(1);
    check(
        ok,
        format!("witness {names:?}, p1→p2 {:?}, p2→p1 {:?}, {}", label("p1", "p2"), label("p2", "p1"), secs(elapsed)),
    )
}

fn c2_dichotomy(wrong: &Explored, correct: &Explored) -> Outcome {
    let (w, c) = (&wrong.report, &correct.report);
    let ok = !w.deadlocks.is_empty()
        && w.completed_traces >= 1
        && c.deadlocks.is_empty()
        && !c.bound_hit
        && wrong.elapsed < Duration::from_secs(30)
        && correct.elapsed < Duration::from_secs(30);
    check(
        ok,
        format!(
            "wrong: {} deadlocks, {} completed, {} states, {}; correct: {} deadlocks, bound_hit={}, {} states, {}",
            w.deadlocks.len(),
            w.completed_traces,
            w.states_visited,
            secs(wrong.elapsed),
            c.deadlocks.len(),
            c.bound_hit,
            c.states_visited,
            secs(correct.elapsed)
        ),
    )
}

/// Up to five processors with random holdings, some waiting on a lock set
/// in front of a pending call.
fn random_config(rng: &mut ChaCha8Rng) -> Configuration {
    let n = rng.gen_range(1..=5u32);
    let mut state = State { procs: (0..n).map(ProcessorId).collect(), ..State::default() };
    for h in 0..n {
        if rng.gen_bool(0.7) {
            state.rq_locks.entry(ProcessorId(rng.gen_range(0..n))).or_default().insert(ProcessorId(h));
        }
    }
    let mut pool: BTreeMap<ProcessorId, CallStack> = state.procs.iter().map(|p| (*p, CallStack::new())).collect();
    for p in 0..n {
        if rng.gen_bool(0.7) {
            let wanted: BTreeSet<ProcessorId> = (0..n).filter(|_| rng.gen_bool(0.4)).map(ProcessorId).collect();
            if !wanted.is_empty() {
                let call = Call {
                    feature: FeatureRef { class: 0, procedure: 0 },
                    target: ObjId(0),
                    args: Vec::new(),
                    owner: ProcessorId(p),
                    acquired: BTreeSet::new(),
                };
                let stack = pool.get_mut(&ProcessorId(p)).unwrap();
                stack.push_back(StackItem::Lock(wanted));
                stack.push_back(StackItem::Apply(call));
            }
        }
    }
    Configuration { pool, state, terminal: Terminal::Running }
}

fn c3_equivalence(explored: &[&Explored]) -> Outcome {
    let mut disagree = 0;
    let mut reached = 0;
    let mut deadlocked = 0;
    for e in explored {
        for c in &e.configs {
            reached += 1;
            let found = detect_deadlock(c).is_some();
            deadlocked += found as usize;
            if found != detect_deadlock_oracle(c).unwrap().is_some() {
                disagree += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED);
    let mut random_deadlocked = 0;
    for _ in 0..RANDOM_CONFIGS {
        let c = random_config(&mut rng);
        let found = detect_deadlock(&c).is_some();
        random_deadlocked += found as usize;
        if found != detect_deadlock_oracle(&c).unwrap().is_some() {
            disagree += 1;
        }
    }
    check(
        disagree == 0,
        format!(
            "{reached} reached ({deadlocked} deadlocked) + {RANDOM_CONFIGS} random ({random_deadlocked} deadlocked), {disagree} disagreements"
        ),
    )
}

/// Steps every enabled processor outside the witness once and counts the
/// steps after which the witness edges or the deadlock itself disappear.
fn outside_steps(m: &Machine, c: &Configuration) -> (usize, usize) {
    let Some(w) = detect_deadlock(c) else { return (0, 0) };
    let mut c = c.clone();
    c.terminal = Terminal::Running;
    let (mut steps, mut broken) = (0, 0);
    for ch in enabled_choices(&c) {
        if w.processors.contains(&ch.processor) {
            continue;
        }
        steps += 1;
        let next = step(m, &c, ch).unwrap();
        let g = build_wait_for_graph(&next);
        let kept = w.labels.iter().all(|(edge, label)| g.edges.get(edge) == Some(label));
        if !kept || detect_deadlock(&next).is_none() {
            broken += 1;
        }
    }
    (steps, broken)
}

/// The corpus deadlocks leave nothing outside the cycle enabled, so random
/// lock configurations whose idle processors may release their own locks or
/// run `nil` supply the non-trivial cases.
fn c4_stability(wrong: &Program, e: &Explored) -> Outcome {
    let m = Machine::new(wrong);
    let (mut steps, mut broken) = (0, 0);
    for d in &e.report.deadlocks {
        let (s, b) = outside_steps(&m, &replay_trace(wrong, &d.trace).unwrap());
        steps += s;
        broken += b;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED);
    let (mut rsteps, mut rbroken) = (0, 0);
    for _ in 0..RANDOM_CONFIGS {
        let mut c = random_config(&mut rng);
        for (p, stack) in c.pool.iter_mut() {
            if stack.len() != 2 {
                let own = c.state.rq_locks.get(p).cloned().unwrap_or_default();
                stack.push_back(if rng.gen_bool(0.5) {
                    StackItem::Release { owner: *p, handlers: own }
                } else {
                    StackItem::Instr(Arc::new(Instruction::Nil))
                });
            }
        }
        let (s, b) = outside_steps(&m, &c);
        rsteps += s;
        rbroken += b;
    }
    check(
        broken + rbroken == 0 && !e.report.deadlocks.is_empty() && rsteps > 0,
        format!(
            "{} corpus deadlocks with {steps} outside steps, {rsteps} outside steps on random deadlocks, {} lost witnesses",
            e.report.deadlocks.len(),
            broken + rbroken
        ),
    )
}

/// Visited configurations plus one unfused step from each of them. Fused
/// chains only release locks or run local items, so lock sets inside a chain
/// shrink and cannot overlap when the endpoints do not.
fn c5_exclusivity(programs: &[(&Program, &Explored)]) -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    for (p, e) in programs {
        let m = Machine::new(p);
        for c in &e.configs {
            checked += 1;
            violations += !c.state.locks_disjoint() as usize;
            if c.terminal != Terminal::Running {
                continue;
            }
            for ch in enabled_choices(c) {
                checked += 1;
                violations += !step(&m, c, ch).unwrap().state.locks_disjoint() as usize;
            }
        }
    }
    check(violations == 0, format!("{checked} configurations, {violations} violations"))
}

fn c6_closed_form() -> Outcome {
    let init = parse_alias_program("x := y").unwrap();
    let body = parse_alias_program("x := x.next").unwrap();
    let r = alias_exec(&AliasRelation::new(3), &init);
    let fix = alias_loop_fixpoint(&r, &body);
    let got: BTreeSet<String> = fix.pairs().map(|(a, b)| format!("{a}~{b}")).collect();
    let want: BTreeSet<String> =
        ["x~y", "x~y.next", "x~y.next^2", "x~y.next^3", "x~y.next^3.*"].iter().map(|s| s.to_string()).collect();
    check(got == want, format!("{got:?}"))
}

fn c7_soundness() -> Outcome {
    let start = Instant::now();
    let mut files: Vec<String> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f.ends_with(".scp"))
        .collect();
    files.sort();
    let mut lines = Vec::new();
    let mut ok = true;
    for f in &files {
        let p = corpus(f);
        let concrete = explore(&Machine::new(&p), Bounds::new(DEPTH, STATES), |_| {}).unwrap().found_deadlock();
        let abs = explore(&AbstractMachine::new(&p, 3), Bounds::new(DEPTH, STATES), |_| {}).unwrap().found_deadlock();
        ok &= !concrete || abs;
        if f == "dining_conditional.scp" {
            ok &= abs && !concrete;
        }
        lines.push(format!("{f}: concrete={concrete} abstract={abs}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(30);
    check(ok, format!("{}; {}", lines.join(", "), secs(elapsed)))
}

fn assignments(p: &Program) -> usize {
    p.classes
        .iter()
        .flat_map(|c| &c.procedures)
        .flat_map(|f| &f.body)
        .filter(|i| matches!(i, Instruction::Assign { .. }))
        .count()
}

fn c8_step_count() -> Outcome {
    let p = corpus("straight_line.scp");
    let run: Strategy = "run".parse().unwrap();
    let opts = RunOptions::for_program(&p);
    let concrete = run_strategy_with(&Machine::new(&p), &run, opts).unwrap().trace.choices.len();
    let abs = run_strategy_with(&AbstractMachine::new(&p, 3), &run, opts).unwrap().trace.choices.len();
    let n = assignments(&p);
    check(n == 10 && concrete == abs + 20, format!("{n} assignments, concrete {concrete} steps, abstract {abs} steps"))
}

fn main() -> ExitCode {
    let wrong = corpus("dining_wrong.scp");
    let correct = corpus("dining_correct.scp");
    let ew = explore_keeping(&wrong);
    let ec = explore_keeping(&correct);
    let results: Vec<(&str, Outcome)> = vec![
        ("1 guided dining philosophers deadlock", c1_guided(&wrong)),
        ("2 exhaustive exploration dichotomy", c2_dichotomy(&ew, &ec)),
        ("3 detector equals subset oracle", c3_equivalence(&[&ew, &ec])),
        ("4 deadlock stability", c4_stability(&wrong, &ew)),
        ("5 lock exclusivity", c5_exclusivity(&[(&wrong, &ew), (&correct, &ec)])),
        ("6 alias loop closed form", c6_closed_form()),
        ("7 abstraction soundness", c7_soundness()),
        ("8 abstract assignment step count", c8_step_count()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
